"""Differentiable generators mapping parameters to samples."""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels

IDENTITY_VIEW = None  # set below


@dataclass(frozen=True)
class View:
    angle: float = 0.0
    dy: float = 0.0
    dx: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("view scale must be positive")


IDENTITY_VIEW = View()


class IdentityRenderer:
    """render(theta) = theta; used for zero-shot generation and editing."""

    def __init__(self, dim):
        self.n_params = int(dim)
        self.out_dim = int(dim)

    def render(self, theta, view=IDENTITY_VIEW):
        return np.array(theta, dtype=np.float64, copy=True)

    def vjp(self, theta, view, upstream):
        if np.asarray(upstream).shape != (self.out_dim,):
            raise ValueError("upstream shape mismatch")
        return np.array(upstream, dtype=np.float64, copy=True)

    def sample_view(self, rng):
        return IDENTITY_VIEW


class PatchRenderer:
    """Bilinear crop of a flat scene grid under a rotate/scale/shift view.

    Desk-scale stand-in for a multi-view 3D backbone: the scene is the
    optimized parameter vector, each view resamples a patch from it.
    """

    def __init__(self, scene_h, scene_w, patch, scale_range=(0.8, 1.2)):
        if scene_h < patch or scene_w < patch:
            raise ValueError("scene must be at least patch-sized")
        self.scene_h = int(scene_h)
        self.scene_w = int(scene_w)
        self.patch = int(patch)
        self.scale_range = (float(scale_range[0]), float(scale_range[1]))
        self.n_params = self.scene_h * self.scene_w
        self.out_dim = self.patch * self.patch
        # worst-case sampling radius of a rotated, scaled patch corner
        rad = self.scale_range[1] * np.sqrt(2.0) * (self.patch - 1) / 2.0
        if rad > (min(self.scene_h, self.scene_w) - 1) / 2.0:
            raise ValueError("scene too small for the view distribution")

    def _check_view(self, view):
        rad = view.scale * np.sqrt(2.0) * (self.patch - 1) / 2.0
        if (abs(view.dy) + rad > (self.scene_h - 1) / 2.0 + 1e-9
                or abs(view.dx) + rad > (self.scene_w - 1) / 2.0 + 1e-9):
            raise ValueError(f"view {view} samples outside the scene grid")

    def render(self, theta, view):
        self._check_view(view)
        scene = np.asarray(theta, dtype=np.float64).reshape(self.scene_h, self.scene_w)
        return kernels.patch_render(scene, self.patch, view.angle,
                                    view.dy, view.dx, view.scale).ravel()

    def vjp(self, theta, view, upstream):
        if np.asarray(upstream).shape != (self.out_dim,):
            raise ValueError("upstream shape mismatch")
        self._check_view(view)
        up = np.asarray(upstream, dtype=np.float64).reshape(self.patch, self.patch)
        return kernels.patch_vjp(self.scene_h, self.scene_w, self.patch,
                                 view.angle, view.dy, view.dx, view.scale, up).ravel()

    def sample_view(self, rng):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        scale = rng.uniform(*self.scale_range)
        rad = scale * np.sqrt(2.0) * (self.patch - 1) / 2.0
        dymax = (self.scene_h - 1) / 2.0 - rad
        dxmax = (self.scene_w - 1) / 2.0 - rad
        dy = rng.uniform(-dymax, dymax) if dymax > 0 else 0.0
        dx = rng.uniform(-dxmax, dxmax) if dxmax > 0 else 0.0
        return View(angle, dy, dx, scale)


def save_theta(theta, prefix, meta=None):
    """Persist final parameters in the flat blob + JSON sidecar format."""
    np.asarray(theta, dtype="<f8").tofile(f"{prefix}.bin")
    with open(f"{prefix}.json", "w") as fh:
        json.dump({"kind": "theta", "size": int(np.asarray(theta).size),
                   **(meta or {})}, fh, indent=2)


def load_theta(prefix):
    return np.fromfile(f"{prefix}.bin", dtype="<f8").astype(np.float64)
