"""Conditional noise-prediction networks, guidance, and deterministic denoising.

The denoiser is a plain MLP over [x, sinusoidal-time-embedding, learned
class embedding]. A small residual net can be stacked on top of a frozen
base (AdapterDenoiser) for variational distillation.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .nn import Mlp, time_embedding_table
from .schedule import NoiseSchedule, add_noise, make_schedule


@dataclass(frozen=True)
class Condition:
    """Class condition; label None is the null condition used for CFG."""

    label: int | None
    embedding: np.ndarray

    @property
    def is_null(self):
        return self.label is None


def class_condition(label, num_classes):
    emb = np.zeros(num_classes)
    emb[label] = 1.0
    return Condition(int(label), emb)


def null_condition(num_classes):
    return Condition(None, np.zeros(num_classes))


@dataclass(frozen=True)
class GuidanceConfig:
    cfg_scale: float = 1.0

    def __post_init__(self):
        if self.cfg_scale < 0:
            raise ValueError("cfg_scale must be nonnegative")


def loss_weight(sched, t, family="constant"):
    """w(t) factor of the diffusion/distillation losses."""
    if family == "constant":
        return 1.0
    if family == "sigma2":
        return float(sched.sigmas[t] ** 2)
    raise ValueError(f"unknown loss weight family {family!r}")


class MlpDenoiser:
    """MLP noise predictor with learned class embeddings (plus a null row).

    Parameters are one flat vector: the embedding table first, then the MLP
    layers. Forward evaluation is pure and batched row by row.
    """

    def __init__(self, data_dim, num_classes, T, hidden=(128, 128, 128, 128),
                 time_embed_dim=32, cond_embed_dim=16, schedule_family="cosine"):
        self.data_dim = int(data_dim)
        self.num_classes = int(num_classes)
        self.T = int(T)
        self.hidden = tuple(int(h) for h in hidden)
        self.time_embed_dim = int(time_embed_dim)
        self.cond_embed_dim = int(cond_embed_dim)
        self.schedule_family = schedule_family
        self.in_dim = self.data_dim + self.time_embed_dim + self.cond_embed_dim
        self.mlp = Mlp([self.in_dim, *self.hidden, self.data_dim])
        self.table_size = (self.num_classes + 1) * self.cond_embed_dim
        self.n_params = self.table_size + self.mlp.n_params
        self.params = np.zeros(self.n_params)
        self.temb = time_embedding_table(self.T, self.time_embed_dim)

    def init_params(self, rng):
        self.params = np.concatenate([
            rng.standard_normal(self.table_size) * 0.1,
            self.mlp.init_params(rng),
        ])
        return self.params

    # -- parameter views -----------------------------------------------
    def _table(self, params=None):
        p = self.params if params is None else params
        return p[:self.table_size].reshape(self.num_classes + 1, self.cond_embed_dim)

    def _mlp_params(self, params=None):
        p = self.params if params is None else params
        return p[self.table_size:]

    def _row_index(self, cond):
        if cond.label is None:
            return self.num_classes
        if not 0 <= cond.label < self.num_classes:
            raise ValueError(f"label {cond.label} out of range")
        return int(cond.label)

    def assemble(self, X, cond, t):
        """Stack [x, temb(t), cemb(cond)] for every row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        B = X.shape[0]
        out = np.empty((B, self.in_dim))
        out[:, :self.data_dim] = X
        out[:, self.data_dim:self.data_dim + self.time_embed_dim] = self.temb[t]
        out[:, self.data_dim + self.time_embed_dim:] = self._table()[self._row_index(cond)]
        return out

    def epsilon(self, X, cond, t):
        """Predicted noise for a batch (B, D) (or single (D,)) at timestep t."""
        squeeze = np.asarray(X).ndim == 1
        Y = self.mlp.forward(self._mlp_params(), self.assemble(X, cond, t))
        return Y[0] if squeeze else Y

    def epsilon_with_grads(self, X, cond, t, dY):
        """Forward plus backward: returns (eps, full param grad, x grad)."""
        X_in = self.assemble(X, cond, t)
        Y, Z, A = self.mlp.forward_cached(self._mlp_params(), X_in)
        dmlp, dXin = self.mlp.backward(self._mlp_params(), Z, A, np.atleast_2d(dY))
        grad = np.zeros(self.n_params)
        grad[self.table_size:] = dmlp
        row = self._row_index(cond)
        gtab = grad[:self.table_size].reshape(self.num_classes + 1, self.cond_embed_dim)
        gtab[row] += dXin[:, self.data_dim + self.time_embed_dim:].sum(axis=0)
        return Y, grad, dXin[:, :self.data_dim]

    def arch_dict(self):
        return {
            "kind": "mlp_denoiser",
            "layer_sizes": [self.in_dim, *self.hidden, self.data_dim],
            "time_embed_dim": self.time_embed_dim,
            "cond_dim": self.cond_embed_dim,
            "num_classes": self.num_classes,
            "data_dim": self.data_dim,
            "schedule_family": self.schedule_family,
            "T": self.T,
        }


class AdapterDenoiser:
    """Frozen base denoiser plus a small trainable residual network.

    The residual sees the same assembled features as the base (including
    the base's frozen class embeddings); its last layer starts at zero, so
    a fresh adapter reproduces the base exactly.
    """

    def __init__(self, base, hidden=(32, 32), rng=None):
        self.base = base
        self.hidden = tuple(int(h) for h in hidden)
        self.res = Mlp([base.in_dim, *self.hidden, base.data_dim])
        rng = rng or np.random.default_rng(0)
        self.res_params = self.res.init_params(rng)
        w0, b0, nin, nout = self.res.offs[-1]
        self.res_params[w0:w0 + nin * nout] = 0.0
        self.res_params[b0:b0 + nout] = 0.0

    @property
    def data_dim(self):
        return self.base.data_dim

    @property
    def T(self):
        return self.base.T

    @property
    def num_classes(self):
        return self.base.num_classes

    def epsilon(self, X, cond, t):
        squeeze = np.asarray(X).ndim == 1
        X_in = self.base.assemble(X, cond, t)
        Y = self.base.mlp.forward(self.base._mlp_params(), X_in)
        Y = Y + self.res.forward(self.res_params, X_in)
        return Y[0] if squeeze else Y

    def residual_grad(self, X, cond, t, dY):
        """Gradient of <dY, epsilon> with respect to residual weights only."""
        X_in = self.base.assemble(X, cond, t)
        _, Z, A = self.res.forward_cached(self.res_params, X_in)
        dres, _ = self.res.backward(self.res_params, Z, A, np.atleast_2d(dY))
        return dres


def guided_epsilon(d, x, cond, t, guidance, null=None):
    """Classifier-free guided prediction eps_u + s * (eps_c - eps_u).

    The degenerate scales collapse to a single forward pass: s=0 returns
    the unconditional prediction, s=1 the conditional one, exactly.
    """
    if null is None:
        null = null_condition(d.num_classes)
    s = guidance.cfg_scale
    if cond.is_null or s == 0.0:
        return d.epsilon(x, null, t)
    if s == 1.0:
        return d.epsilon(x, cond, t)
    e_u = d.epsilon(x, null, t)
    e_c = d.epsilon(x, cond, t)
    return e_u + s * (e_c - e_u)


def denoise_steps(d, x_t, cond, t, S, guidance, sched):
    """Deterministic S-step clean estimate from x_t.

    Walks an endpoint-inclusive integer ladder from t down to 0; each step
    forms x0_hat = (x - sigma * eps_hat) / alpha and re-noises it to the
    next rung with the same predicted noise (no fresh randomness). S=0
    returns x_t unchanged; S=1 is the single-step clean estimate.
    """
    if not 0 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [0, {sched.T}]")
    x = np.array(x_t, dtype=np.float64, copy=True)
    if S == 0:
        return x
    ladder = np.rint(np.linspace(t, 0, S + 1)).astype(np.int64)
    for k in range(S):
        tau, tau_next = int(ladder[k]), int(ladder[k + 1])
        ehat = guided_epsilon(d, x, cond, tau, guidance)
        alpha = max(float(sched.alphas[tau]), 1e-12)
        x0hat = (x - sched.sigmas[tau] * ehat) / alpha
        if tau_next == 0:
            x = x0hat
        else:
            x = sched.alphas[tau_next] * x0hat + sched.sigmas[tau_next] * ehat
    return x


def diffusion_loss_and_grad(d, x0, cond, rng, sched, weight_family="constant"):
    """One-draw diffusion loss w(t)*||eps_hat - eps||^2 and its exact
    parameter gradient (single sample)."""
    x0 = np.asarray(x0, dtype=np.float64)
    t = int(rng.integers(1, sched.T + 1))
    eps = rng.standard_normal(x0.shape[-1])
    x_t = add_noise(x0, eps, t, sched)
    wt = loss_weight(sched, t, weight_family)
    # two-pass: forward to get residual, then backward with the loss adjoint
    pred = d.epsilon(x_t, cond, t)
    resid = np.atleast_2d(pred)[0] - eps
    loss = wt * float(resid @ resid)
    _, grad, _ = d.epsilon_with_grads(x_t, cond, t, 2.0 * wt * resid)
    return loss, grad


# -- persistence --------------------------------------------------------

def save_denoiser(d, prefix):
    """Flat little-endian weight blob plus a JSON architecture sidecar."""
    np.asarray(d.params, dtype="<f8").tofile(f"{prefix}.bin")
    with open(f"{prefix}.json", "w") as fh:
        json.dump(d.arch_dict(), fh, indent=2)


def load_denoiser(prefix):
    with open(f"{prefix}.json") as fh:
        arch = json.load(fh)
    if arch.get("kind") != "mlp_denoiser":
        raise ValueError(f"unexpected blob kind {arch.get('kind')!r}")
    sizes = arch["layer_sizes"]
    d = MlpDenoiser(
        data_dim=arch["data_dim"],
        num_classes=arch["num_classes"],
        T=arch["T"],
        hidden=tuple(sizes[1:-1]),
        time_embed_dim=arch["time_embed_dim"],
        cond_embed_dim=arch["cond_dim"],
        schedule_family=arch["schedule_family"],
    )
    params = np.fromfile(f"{prefix}.bin", dtype="<f8").astype(np.float64)
    if params.size != d.n_params:
        raise ValueError(f"blob has {params.size} weights, expected {d.n_params}")
    d.params = params
    return d
