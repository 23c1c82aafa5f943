"""Synthetic conditional datasets and denoiser pretraining."""

from dataclasses import dataclass, field

import numpy as np

from .denoiser import MlpDenoiser, loss_weight
from .schedule import add_noise


@dataclass(frozen=True)
class MixtureSpec:
    """Class-conditional Gaussian mixture of isotropic components.

    `labels` maps each component row to its class; None means one
    component per class (row i belongs to class i). Classes with several
    components mix them uniformly.
    """

    means: np.ndarray          # (num_components, D)
    variance: float            # shared isotropic variance, >= 0
    shape: tuple = None        # e.g. (8, 8) for grid data; None for points
    labels: np.ndarray = None  # (num_components,) int64 or None

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("covariance must be nonnegative")
        if self.shape is not None and int(np.prod(self.shape)) != self.means.shape[1]:
            raise ValueError("shape does not match mean dimension")
        if self.labels is not None and len(self.labels) != self.means.shape[0]:
            raise ValueError("labels length does not match component count")

    @property
    def num_components(self):
        return self.means.shape[0]

    @property
    def num_classes(self):
        if self.labels is None:
            return self.means.shape[0]
        return int(np.max(self.labels)) + 1

    @property
    def dim(self):
        return self.means.shape[1]

    def class_components(self, label):
        if self.labels is None:
            return np.array([label], dtype=np.int64)
        return np.flatnonzero(self.labels == label)

    def logpdf(self, x, label):
        """Exact class-conditional log density (evaluation oracle)."""
        d = self.dim
        var = max(self.variance, 1e-12)
        x = np.asarray(x, dtype=np.float64)
        comps = self.class_components(label)
        lps = []
        for c in comps:
            diff = x - self.means[c]
            lps.append(-0.5 * (d * np.log(2 * np.pi * var) + diff @ diff / var))
        return float(np.logaddexp.reduce(lps) - np.log(len(comps)))


def ring_mixture_spec(num_classes=4, radius=3.0, variance=0.15, dim=2):
    """Default point dataset: modes spread on a circle in the first two dims."""
    ang = 2 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((num_classes, dim))
    means[:, 0] = radius * np.cos(ang)
    means[:, 1] = radius * np.sin(ang)
    return MixtureSpec(means, variance)


def bimodal_ring_spec(num_classes=4, inner_radius=0.7, outer_radius=4.0,
                      variance=0.15, dim=2):
    """Each class gets two modes at the same angle: a crowded inner one and
    a well-separated outer one. The inner ring components overlap with their
    neighbors, so a classifier prefers the outer mode of each class while the
    oracle density weights both equally."""
    ang = 2 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((2 * num_classes, dim))
    means[:num_classes, 0] = outer_radius * np.cos(ang)
    means[:num_classes, 1] = outer_radius * np.sin(ang)
    means[num_classes:, 0] = inner_radius * np.cos(ang)
    means[num_classes:, 1] = inner_radius * np.sin(ang)
    labels = np.concatenate([np.arange(num_classes), np.arange(num_classes)])
    return MixtureSpec(means, variance, labels=labels.astype(np.int64))


def bimodal_grid_spec(size=8, variance=0.01):
    """Grid analog of the bimodal ring: each class is a smooth blob at one
    of four positions, mixed equally with a checkerboard-corrupted copy.
    A smoothness reward separates the two variants; a classifier does not."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    q = size / 4.0
    centers = [(q, q), (q, 3 * q), (3 * q, q), (3 * q, 3 * q)]
    blobs = [2.0 * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * (size / 5.0) ** 2))) - 1.0
             for cy, cx in centers]
    checker = np.where((yy.astype(np.int64) + xx.astype(np.int64)) % 2 == 0, 1.0, -1.0)
    means = np.stack([b.ravel() for b in blobs]
                     + [(b * checker).ravel() for b in blobs])
    labels = np.concatenate([np.arange(4), np.arange(4)])
    return MixtureSpec(means, variance, shape=(size, size),
                       labels=labels.astype(np.int64))


def grid_shape_spec(size=8, variance=0.01):
    """Procedural 8x8 shape templates (disk, cross, h-stripes, v-stripes)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    disk = ((yy - c) ** 2 + (xx - c) ** 2 <= (size / 3.2) ** 2)
    cross = (np.abs(yy - c) < 1.1) | (np.abs(xx - c) < 1.1)
    hstripe = (yy.astype(np.int64) % 2 == 0)
    vstripe = (xx.astype(np.int64) % 2 == 0)
    templates = [disk, cross, hstripe, vstripe]
    means = np.stack([np.where(m, 1.0, -1.0).ravel() for m in templates])
    return MixtureSpec(means, variance, shape=(size, size))


@dataclass(frozen=True)
class ToyDataset:
    X: np.ndarray              # (n, D)
    labels: np.ndarray         # (n,) int64
    spec: MixtureSpec

    def __len__(self):
        return self.X.shape[0]

    @property
    def num_classes(self):
        return self.spec.num_classes


def generate_dataset(spec, n, seed):
    """Class-balanced (within one sample) draw from the mixture."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(seed)
    C = spec.num_classes
    counts = np.full(C, n // C)
    counts[: n % C] += 1
    labels = np.repeat(np.arange(C), counts)
    comps = np.array([rng.choice(spec.class_components(int(y))) for y in labels])
    X = spec.means[comps] + np.sqrt(spec.variance) * rng.standard_normal((n, spec.dim))
    return ToyDataset(X, labels.astype(np.int64), spec)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 4000
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("invalid training config")


def train_denoiser(data, cfg, sched, drop_prob=0.1, weight_family="constant",
                   hidden=(128, 128, 128, 128)):
    """Pretrain the conditional MLP denoiser on the toy dataset.

    The condition is dropped to null with probability `drop_prob` per
    example so classifier-free guidance has a meaningful unconditional
    branch. Deterministic for a fixed config seed.
    """
    from .optim import Adam

    if len(data) == 0:
        raise ValueError("dataset is empty")
    D, C = data.spec.dim, data.num_classes
    rng = np.random.default_rng(cfg.seed)
    d = MlpDenoiser(D, C, sched.T, hidden=hidden, schedule_family=sched.family)
    d.init_params(rng)
    adam = Adam(d.n_params, cfg.learning_rate)
    losses = []
    n = len(data)
    null_row = C
    for step in range(cfg.steps):
        idx = rng.integers(0, n, cfg.batch_size)
        ts = rng.integers(1, sched.T + 1, cfg.batch_size)
        eps = rng.standard_normal((cfg.batch_size, D))
        drop = rng.random(cfg.batch_size) < drop_prob
        rows = np.where(drop, null_row, data.labels[idx]).astype(np.int64)
        x0 = data.X[idx]
        alphas = sched.alphas[ts][:, None]
        sigmas = sched.sigmas[ts][:, None]
        x_t = alphas * x0 + sigmas * eps
        wts = np.array([loss_weight(sched, int(t), weight_family) for t in ts])
        pred, grad, _ = _mixed_loss_backward(d, x_t, rows, ts, eps, wts)
        resid = pred - eps
        loss = float(np.mean(wts * np.sum(resid**2, axis=1)))
        if not np.isfinite(loss):
            raise RuntimeError(f"denoiser training diverged at step {step}: loss={loss}")
        losses.append(loss)
        adam.step(d.params, grad)
    d.train_losses = losses
    return d


def adapter_update(a, renders, cond, lr, rng, sched, weight_family="constant"):
    """One Adam step of the diffusion objective on the adapter's residual.

    Each render contributes a single (t, eps) draw; base weights are never
    touched. The adapter keeps its own Adam moments across calls.
    """
    from .optim import Adam

    if len(renders) == 0:
        raise ValueError("need at least one render")
    grad = np.zeros_like(a.res_params)
    total = 0.0
    B = len(renders)
    for x0 in renders:
        x0 = np.asarray(x0, dtype=np.float64)
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(x0.shape[-1])
        x_t = add_noise(x0, eps, t, sched)
        wt = loss_weight(sched, t, weight_family)
        pred = a.epsilon(x_t, cond, t)
        resid = np.atleast_2d(pred)[0] - eps
        total += wt * float(resid @ resid)
        grad += a.residual_grad(x_t, cond, t, (2.0 * wt / B) * resid)
    if not np.all(np.isfinite(grad)):
        raise RuntimeError("non-finite adapter gradient")
    opt = getattr(a, "_opt", None)
    if opt is None:
        opt = a._opt = Adam(a.res_params.size, lr)
    opt.lr = float(lr)
    opt.step(a.res_params, grad)
    a.last_loss = total / B
    return a


def _mixed_loss_backward(d, x_t, rows, ts, eps, wts):
    """Batched forward/backward where every row has its own (t, condition)."""
    B = x_t.shape[0]
    X_in = np.empty((B, d.in_dim))
    X_in[:, :d.data_dim] = x_t
    X_in[:, d.data_dim:d.data_dim + d.time_embed_dim] = d.temb[ts]
    X_in[:, d.data_dim + d.time_embed_dim:] = d._table()[rows]
    Y, Z, A = d.mlp.forward_cached(d._mlp_params(), X_in)
    dY = (2.0 * wts[:, None] / B) * (Y - eps)
    dmlp, dXin = d.mlp.backward(d._mlp_params(), Z, A, dY)
    grad = np.zeros(d.n_params)
    grad[d.table_size:] = dmlp
    gtab = grad[:d.table_size].reshape(d.num_classes + 1, d.cond_embed_dim)
    demb = dXin[:, d.data_dim + d.time_embed_dim:]
    np.add.at(gtab, rows, demb)
    return Y, grad, dXin
