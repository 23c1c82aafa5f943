"""Score distillation gradients (SDS / VSD / DDS), their reward-weighted
variants, and the outer optimization loop.

All reward variants share one pipeline: draw N noises at a single timestep,
denoise each candidate for S deterministic steps, score the previews with a
black-box reward, map scores to weights, and average the weighted
per-candidate base gradients (1/N sum_i w_i * g_i, applied literally: the
weights are not renormalized even when they sum to 0.8).
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .denoiser import (GuidanceConfig, denoise_steps, guided_epsilon,
                       loss_weight, null_condition)
from .optim import Adam
from .schedule import NoiseSchedule, add_noise
from .weighting import TOP2_MINUS_BOTTOM2, WeightScheme, weights_from_scores

METHODS = ("sds", "vsd", "dds", "r_sds", "r_vsd", "r_dds")

# time-vs-quality presets: (candidates N, reward steps K, denoise steps S)
PRESETS = {
    "baseline": (1, 0, 0),
    "small": (2, 100, 1),
    "medium": (5, 500, 8),
    "large": (10, 1000, 15),
}


@dataclass(frozen=True)
class DistillConfig:
    sched: NoiseSchedule
    total_steps: int = 1000
    reward_steps: int = 1000          # K: leading steps using the weighted gradient
    candidates: int = 10              # N
    denoise_steps: int = 15           # S
    scheme: WeightScheme = WeightScheme(TOP2_MINUS_BOTTOM2)
    guidance: GuidanceConfig = GuidanceConfig(100.0)
    learning_rate: float = 0.01
    t_min: int = None                 # default 0.02*T
    t_max: int = None                 # default 0.98*T
    weight_family: str = "constant"
    seed: int = 0
    n_particles: int = 4              # VSD only
    t_anneal: str = "none"            # "none" | "linear" (shrink t_max over steps)
    lr_schedule: str = "constant"     # "constant" | "linear" (decay to 0)

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("need at least one optimization step")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.reward_steps <= self.total_steps:
            raise ValueError("reward steps K must lie in [0, total_steps]")
        if self.candidates < 1 or self.denoise_steps < 0:
            raise ValueError("need N >= 1 and S >= 0")
        T = self.sched.T
        tmin = self.t_min if self.t_min is not None else max(1, int(round(0.02 * T)))
        tmax = self.t_max if self.t_max is not None else int(round(0.98 * T))
        if not 0 < tmin < tmax <= T:
            raise ValueError(f"bad timestep range [{tmin}, {tmax}]")
        object.__setattr__(self, "t_min", tmin)
        object.__setattr__(self, "t_max", tmax)
        if self.t_anneal not in ("none", "linear"):
            raise ValueError(f"unknown t_anneal {self.t_anneal!r}")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def with_preset(self, name):
        n, k, s = PRESETS[name]
        return replace(self, candidates=n, reward_steps=k, denoise_steps=s)


@dataclass
class CandidateSet:
    t: int
    noises: np.ndarray     # (N, D)
    noisy: np.ndarray      # (N, D)
    previews: np.ndarray   # (N, D)
    scores: np.ndarray     # (N,)
    weights: np.ndarray = None


@dataclass
class GradientEstimate:
    grad: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ParticleSet:
    thetas: list           # list of parameter vectors
    adapter: object        # AdapterDenoiser over the frozen pretrained base


def _draw_t(rng, cfg, step=0, total=None):
    """Uniform timestep draw; with linear annealing the upper end shrinks
    from t_max to t_min over the course of the run (coarse to fine)."""
    hi = cfg.t_max
    if cfg.t_anneal == "linear" and total is not None and total > 1:
        frac = step / (total - 1)
        hi = int(round(cfg.t_max - (cfg.t_max - cfg.t_min) * frac))
        hi = max(hi, cfg.t_min)
    return int(rng.integers(cfg.t_min, hi + 1))


def sds_grad(rend, theta, view, d, cond, t, eps, cfg):
    """Single-noise SDS gradient: vjp of w(t) * (guided eps_hat - eps)."""
    x0 = rend.render(theta, view)
    x_t = add_noise(x0, eps, t, cfg.sched)
    wt = loss_weight(cfg.sched, t, cfg.weight_family)
    ehat = guided_epsilon(d, x_t, cond, t, cfg.guidance)
    if not np.all(np.isfinite(ehat)):
        raise RuntimeError("non-finite denoiser output in sds_grad")
    grad = rend.vjp(theta, view, wt * (ehat - eps))
    return GradientEstimate(grad, {"t": t})


def score_candidates(x0, t, N, S, d, reward, cond, rng, guidance, sched):
    """Noise x0 N times at timestep t, denoise S steps, score the previews."""
    if N < 1:
        raise ValueError("need N >= 1")
    noises = rng.standard_normal((N, x0.shape[-1]))
    noisy = add_noise(x0, noises, t, sched)
    previews = denoise_steps(d, noisy, cond, t, S, guidance, sched)
    scores = np.array([reward.score(previews[i], cond) for i in range(N)])
    return CandidateSet(t, noises, noisy, previews, scores)


def reward_sds_grad(rend, theta, view, d, cond, reward, cfg, rng, t=None):
    """Weighted average of per-candidate SDS gradients."""
    if t is None:
        t = _draw_t(rng, cfg)
    x0 = rend.render(theta, view)
    cs = score_candidates(x0, t, cfg.candidates, cfg.denoise_steps, d,
                          reward, cond, rng, cfg.guidance, cfg.sched)
    cs.weights = weights_from_scores(cs.scores, cfg.scheme, rng)
    wt = loss_weight(cfg.sched, t, cfg.weight_family)
    ehats = guided_epsilon(d, cs.noisy, cond, t, cfg.guidance)
    acc = np.zeros_like(np.asarray(theta, dtype=np.float64))
    for i in range(cfg.candidates):
        g_i = rend.vjp(theta, view, wt * (ehats[i] - cs.noises[i]))
        acc = acc + cs.weights[i] * g_i
    grad = acc / cfg.candidates
    return GradientEstimate(grad, {"t": t, "scores": cs.scores,
                                   "weights": cs.weights, "noises": cs.noises})


def vsd_grad(rend, particles, i, view, cond, t, eps, cfg):
    """Particle gradient: pretrained (guided) minus adapter prediction."""
    adapter = particles.adapter
    theta = particles.thetas[i]
    x0 = rend.render(theta, view)
    x_t = add_noise(x0, eps, t, cfg.sched)
    wt = loss_weight(cfg.sched, t, cfg.weight_family)
    e_pre = guided_epsilon(adapter.base, x_t, cond, t, cfg.guidance)
    e_ad = adapter.epsilon(x_t, cond, t)
    if not (np.all(np.isfinite(e_pre)) and np.all(np.isfinite(e_ad))):
        raise RuntimeError("non-finite denoiser output in vsd_grad")
    grad = rend.vjp(theta, view, wt * (e_pre - e_ad))
    return GradientEstimate(grad, {"t": t, "particle": i})


def reward_vsd_grad(rend, particles, i, view, cond, reward, cfg, rng, t=None):
    """Weighted average of per-candidate VSD gradients for particle i."""
    if t is None:
        t = _draw_t(rng, cfg)
    adapter = particles.adapter
    theta = particles.thetas[i]
    x0 = rend.render(theta, view)
    cs = score_candidates(x0, t, cfg.candidates, cfg.denoise_steps, adapter.base,
                          reward, cond, rng, cfg.guidance, cfg.sched)
    cs.weights = weights_from_scores(cs.scores, cfg.scheme, rng)
    wt = loss_weight(cfg.sched, t, cfg.weight_family)
    e_pre = guided_epsilon(adapter.base, cs.noisy, cond, t, cfg.guidance)
    e_ad = adapter.epsilon(cs.noisy, cond, t)
    acc = np.zeros_like(np.asarray(theta, dtype=np.float64))
    for j in range(cfg.candidates):
        g_j = rend.vjp(theta, view, wt * (e_pre[j] - e_ad[j]))
        acc = acc + cs.weights[j] * g_j
    grad = acc / cfg.candidates
    return GradientEstimate(grad, {"t": t, "particle": i, "scores": cs.scores,
                                   "weights": cs.weights, "noises": cs.noises})


def dds_grad(rend, theta, view, d, cond_src, cond_tgt, x_src, t, eps, cfg):
    """Editing gradient: SDS residual of the edit minus that of the source,
    sharing the same (t, eps)."""
    x0 = rend.render(theta, view)
    if x0.shape != np.asarray(x_src).shape:
        raise ValueError("source sample shape does not match the render")
    x_t_edit = add_noise(x0, eps, t, cfg.sched)
    x_t_src = add_noise(np.asarray(x_src, dtype=np.float64), eps, t, cfg.sched)
    wt = loss_weight(cfg.sched, t, cfg.weight_family)
    e_tgt = guided_epsilon(d, x_t_edit, cond_tgt, t, cfg.guidance)
    e_src = guided_epsilon(d, x_t_src, cond_src, t, cfg.guidance)
    grad = rend.vjp(theta, view, wt * (e_tgt - e_src))
    return GradientEstimate(grad, {"t": t})


def reward_dds_grad(rend, theta, view, d, cond_src, cond_tgt, x_src, reward,
                    cfg, rng, t=None):
    """Weighted average of per-candidate DDS gradients.

    Candidate noises are drawn once and shared between the edit and source
    branches; previews are scored on the edit (target) branch.
    """
    if t is None:
        t = _draw_t(rng, cfg)
    x0 = rend.render(theta, view)
    if x0.shape != np.asarray(x_src).shape:
        raise ValueError("source sample shape does not match the render")
    cs = score_candidates(x0, t, cfg.candidates, cfg.denoise_steps, d,
                          reward, cond_tgt, rng, cfg.guidance, cfg.sched)
    cs.weights = weights_from_scores(cs.scores, cfg.scheme, rng)
    wt = loss_weight(cfg.sched, t, cfg.weight_family)
    x_t_src = add_noise(np.asarray(x_src, dtype=np.float64), cs.noises, t, cfg.sched)
    e_tgt = guided_epsilon(d, cs.noisy, cond_tgt, t, cfg.guidance)
    e_src = guided_epsilon(d, x_t_src, cond_src, t, cfg.guidance)
    acc = np.zeros_like(np.asarray(theta, dtype=np.float64))
    for i in range(cfg.candidates):
        g_i = rend.vjp(theta, view, wt * (e_tgt[i] - e_src[i]))
        acc = acc + cs.weights[i] * g_i
    grad = acc / cfg.candidates
    return GradientEstimate(grad, {"t": t, "scores": cs.scores,
                                   "weights": cs.weights, "noises": cs.noises})


def optimize(rend, theta_init, d, cond, reward, cfg, method, extras=None):
    """Run the full distillation loop; returns (final theta, trajectory).

    The first K = cfg.reward_steps steps of a reward method use the
    weighted gradient, the rest fall back to the base method, so K=0
    reproduces the base method exactly under the same seed. For VSD
    methods, theta is a list of particles and one adapter update runs
    per step after the particle updates.
    """
    from .data import adapter_update

    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    extras = extras or {}
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0]))
    log = []
    base = method[2:] if method.startswith("r_") else method
    is_reward = method.startswith("r_")
    if is_reward and reward is None:
        raise ValueError("reward methods need a reward model")

    if base == "vsd":
        particles = extras.get("particles")
        if particles is None:
            raise ValueError("VSD methods need extras['particles']")
        adams = [Adam(len(th), cfg.learning_rate) for th in particles.thetas]
    else:
        theta = np.array(theta_init, dtype=np.float64, copy=True)
        adam = Adam(theta.size, cfg.learning_rate)
    if base == "dds":
        x_src = extras["x_src"]
        cond_src = extras["cond_src"]

    for step in range(cfg.total_steps):
        t0 = time.perf_counter()
        use_reward = is_reward and step < cfg.reward_steps
        lr_now = cfg.learning_rate
        if cfg.lr_schedule == "linear":
            lr_now = cfg.learning_rate * (1.0 - step / cfg.total_steps)
        if base == "vsd":
            for a in adams:
                a.lr = lr_now
        else:
            adam.lr = lr_now
        rec = {"step": step}

        if base == "vsd":
            for i in range(len(particles.thetas)):
                view = rend.sample_view(rng)
                t = _draw_t(rng, cfg, step, cfg.total_steps)
                if use_reward:
                    ge = reward_vsd_grad(rend, particles, i, view, cond,
                                         reward, cfg, rng, t=t)
                else:
                    eps = rng.standard_normal((1, rend.out_dim))[0]
                    ge = vsd_grad(rend, particles, i, view, cond, t, eps, cfg)
                adams[i].step(particles.thetas[i], ge.grad)
                if i == 0:
                    rec.update(t=ge.diagnostics["t"],
                               grad_norm=float(np.linalg.norm(ge.grad)),
                               scores=_aslist(ge.diagnostics.get("scores")),
                               weights=_aslist(ge.diagnostics.get("weights")))
            renders = [rend.render(th, rend.sample_view(rng))
                       for th in particles.thetas]
            adapter_update(particles.adapter, renders, cond, cfg.learning_rate,
                           rng, cfg.sched, weight_family=cfg.weight_family)
            rec["adapter_loss"] = particles.adapter.last_loss
            theta_now = [th.copy() for th in particles.thetas]
            finite = all(np.all(np.isfinite(th)) for th in particles.thetas)
        else:
            view = rend.sample_view(rng)
            t = _draw_t(rng, cfg, step, cfg.total_steps)
            if use_reward:
                if base == "sds":
                    ge = reward_sds_grad(rend, theta, view, d, cond, reward,
                                         cfg, rng, t=t)
                else:
                    ge = reward_dds_grad(rend, theta, view, d, cond_src, cond,
                                         x_src, reward, cfg, rng, t=t)
            else:
                eps = rng.standard_normal((1, rend.out_dim))[0]
                if base == "sds":
                    ge = sds_grad(rend, theta, view, d, cond, t, eps, cfg)
                else:
                    ge = dds_grad(rend, theta, view, d, cond_src, cond,
                                  x_src, t, eps, cfg)
            adam.step(theta, ge.grad)
            rec.update(t=ge.diagnostics["t"],
                       grad_norm=float(np.linalg.norm(ge.grad)),
                       scores=_aslist(ge.diagnostics.get("scores")),
                       weights=_aslist(ge.diagnostics.get("weights")))
            theta_now = theta.copy()
            finite = np.all(np.isfinite(theta))

        if not finite:
            raise RuntimeError(f"non-finite parameters at step {step}")
        rec["elapsed_ms"] = (time.perf_counter() - t0) * 1e3
        rec["theta"] = theta_now
        log.append(rec)

    final = particles.thetas if base == "vsd" else theta
    return final, log


def _aslist(x):
    return None if x is None else np.asarray(x).tolist()
