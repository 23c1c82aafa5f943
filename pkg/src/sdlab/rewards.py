"""Black-box reward models and the analytic evaluation oracle.

Rewards map (sample, optional condition) to a scalar, higher is better.
No gradients are ever taken through them; the distillation loop only
consumes the scalar scores.
"""

import json

import numpy as np

from .nn import Mlp
from .optim import Adam


class RewardModel:
    name = "reward"
    differentiable = False

    def score(self, x, cond=None):
        raise NotImplementedError


class ClassifierReward(RewardModel):
    """Log-probability of the condition's class under a small trained MLP.

    Stands in for a pretrained alignment scorer; requires a condition.
    """

    name = "classifier"

    def __init__(self, dim, num_classes, hidden=(64, 64)):
        self.dim = int(dim)
        self.num_classes = int(num_classes)
        self.hidden = tuple(int(h) for h in hidden)
        self.mlp = Mlp([self.dim, *self.hidden, self.num_classes])
        self.params = np.zeros(self.mlp.n_params)
        self.holdout_accuracy = None

    def logits(self, x):
        return self.mlp.forward(self.params, np.asarray(x, dtype=np.float64))

    def score(self, x, cond=None):
        if cond is None or cond.label is None:
            raise ValueError("classifier reward requires a class condition")
        z = self.logits(x)[0]
        z = z - z.max()
        return float(z[cond.label] - np.log(np.exp(z).sum()))

    def save(self, prefix):
        np.asarray(self.params, dtype="<f8").tofile(f"{prefix}.bin")
        with open(f"{prefix}.json", "w") as fh:
            json.dump({"kind": "classifier_reward", "dim": self.dim,
                       "num_classes": self.num_classes,
                       "hidden": list(self.hidden)}, fh, indent=2)

    @classmethod
    def load(cls, prefix):
        with open(f"{prefix}.json") as fh:
            arch = json.load(fh)
        if arch.get("kind") != "classifier_reward":
            raise ValueError(f"unexpected blob kind {arch.get('kind')!r}")
        r = cls(arch["dim"], arch["num_classes"], tuple(arch["hidden"]))
        r.params = np.fromfile(f"{prefix}.bin", dtype="<f8").astype(np.float64)
        return r


class SmoothnessReward(RewardModel):
    """Aesthetic stand-in: penalizes discrete roughness.

    Grid data: negative total squared forward difference. Point data:
    negative squared distance to the unit-norm shell. Always <= 0.
    """

    name = "smoothness"

    def __init__(self, lam=1.0, shape=None):
        if lam < 0:
            raise ValueError("penalty weight must be nonnegative")
        self.lam = float(lam)
        self.shape = tuple(shape) if shape is not None else None

    def score(self, x, cond=None):
        x = np.asarray(x, dtype=np.float64)
        if self.shape is not None:
            img = x.reshape(self.shape)
            tv = np.sum(np.diff(img, axis=0) ** 2) + np.sum(np.diff(img, axis=1) ** 2)
            return float(-self.lam * tv)
        r = np.linalg.norm(x)
        return float(-self.lam * (r - 1.0) ** 2)


class CompositeReward(RewardModel):
    """Convex mix of rewards (alignment + aesthetics stand-in)."""

    name = "composite"

    def __init__(self, components):
        weights = np.array([w for _, w in components], dtype=np.float64)
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("composite weights must sum to 1")
        self.components = [(rm, float(w)) for rm, w in components]

    def score(self, x, cond=None):
        return float(sum(w * rm.score(x, cond) for rm, w in self.components))


class OracleLikelihoodMetric(RewardModel):
    """Exact class-conditional log density of the generator spec.

    Evaluation-only ground truth; never used inside the optimization.
    """

    name = "oracle_loglik"

    def __init__(self, spec):
        self.spec = spec

    def score(self, x, cond=None):
        if cond is None or cond.label is None:
            raise ValueError("oracle metric requires a class condition")
        return self.spec.logpdf(x, cond.label)


def train_classifier_reward(data, cfg, holdout_frac=0.2, hidden=(64, 64),
                            outlier_frac=0.2, outlier_span=3.0):
    """Train the classifier reward on the toy dataset; deterministic per seed.

    A fraction of each batch is replaced by off-manifold points with a
    uniform soft target, so the class log-probability peaks near the data
    instead of growing without bound away from it (outlier exposure).
    """
    C = data.num_classes
    if len(np.unique(data.labels)) < 2:
        raise ValueError("classifier reward needs at least 2 classes")
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    perm = rng.permutation(n)
    n_hold = max(1, int(holdout_frac * n))
    hold, train = perm[:n_hold], perm[n_hold:]
    lo, hi = data.X.min(axis=0), data.X.max(axis=0)
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    r = ClassifierReward(data.spec.dim, C, hidden)
    r.params = r.mlp.init_params(rng)
    adam = Adam(r.mlp.n_params, cfg.learning_rate)
    for _ in range(cfg.steps):
        idx = train[rng.integers(0, len(train), cfg.batch_size)]
        X = data.X[idx].copy()
        target = np.zeros((len(idx), C))
        target[np.arange(len(idx)), data.labels[idx]] = 1.0
        out = rng.random(len(idx)) < outlier_frac
        if out.any():
            X[out] = mid + outlier_span * half * rng.uniform(-1, 1, (int(out.sum()), data.spec.dim))
            target[out] = 1.0 / C
        Z, Zc, Ac = r.mlp.forward_cached(r.params, X)
        Z = Z - Z.max(axis=1, keepdims=True)
        p = np.exp(Z)
        p /= p.sum(axis=1, keepdims=True)
        dY = (p - target) / len(idx)
        grad, _ = r.mlp.backward(r.params, Zc, Ac, dY)
        adam.step(r.params, grad)
    pred = r.logits(data.X[hold]).argmax(axis=1)
    r.holdout_accuracy = float(np.mean(pred == data.labels[hold]))
    return r


def evaluate(metrics, xs, cond):
    """Per-metric mean and standard deviation over a list of samples."""
    if len(xs) == 0:
        raise ValueError("need at least one sample")
    table = {}
    for m in metrics:
        vals = np.array([m.score(x, cond) for x in xs])
        table[m.name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return table
