"""Experiment orchestration: seeded runs, ablation sweeps, reports."""

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .configio import get, load_config
from .data import bimodal_ring_spec, grid_shape_spec, ring_mixture_spec
from .denoiser import AdapterDenoiser, GuidanceConfig, class_condition, load_denoiser
from .distill import PRESETS, DistillConfig, ParticleSet, optimize
from .render import IdentityRenderer, PatchRenderer, load_theta, save_theta
from .rewards import (ClassifierReward, CompositeReward, OracleLikelihoodMetric,
                      SmoothnessReward)
from .schedule import make_schedule
from .weighting import BEST_MINUS_WORST, WeightScheme


@dataclass
class RunConfig:
    """Fully resolved description of one experiment (before seeding)."""

    dataset: dict
    denoiser_path: str
    classifier_path: str
    method: str
    distill: dict               # DistillConfig fields except sched/seed
    reward: str                 # classifier | smoothness | composite
    metrics: list
    repetitions: int = 20
    seed_base: int = 0
    label: int = 0
    renderer: dict = field(default_factory=lambda: {"kind": "identity"})
    results_dir: str = "results"
    source_path: str = None     # DDS methods: theta blob prefix of the source
    source_label: int = None
    eval_views: int = 10

    def resolved(self):
        d = asdict(self)
        d.pop("results_dir")
        return d

    def fingerprint(self):
        blob = json.dumps(self.resolved(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ResultRecord:
    fingerprint: str
    config: dict
    metrics: dict               # name -> {"mean": .., "std": ..}
    rep_values: dict            # name -> [per-repetition value]
    wall_time_mean: float
    cpu_time_mean: float
    failures: list
    artifacts: list
    sweep_param: str = None
    sweep_value: object = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def dataset_spec_from_dict(d):
    if d["kind"] == "ring":
        return ring_mixture_spec(int(d.get("classes", 4)),
                                 float(d.get("radius", 3.0)),
                                 float(d.get("variance", 0.15)),
                                 int(d.get("dim", 2)))
    if d["kind"] == "bimodal_ring":
        return bimodal_ring_spec(int(d.get("classes", 4)),
                                 float(d.get("inner_radius", 0.7)),
                                 float(d.get("outer_radius", 4.0)),
                                 float(d.get("variance", 0.15)),
                                 int(d.get("dim", 2)))
    if d["kind"] == "grid":
        return grid_shape_spec(int(d.get("size", 8)),
                               float(d.get("variance", 0.01)))
    raise ValueError(f"unknown dataset kind {d['kind']!r}")


def runconfig_from_file(path, seed_override=None):
    cfg = load_config(path)
    dataset = dict(cfg.get("dataset", {"kind": "ring"}))
    dataset.setdefault("kind", "ring")
    distill = {
        "total_steps": get(cfg, "distill", "total_steps", 1000, int),
        "reward_steps": get(cfg, "distill", "reward_steps", 1000, int),
        "candidates": get(cfg, "distill", "candidates", 10, int),
        "denoise_steps": get(cfg, "distill", "denoise_steps", 15, int),
        "scheme": get(cfg, "distill", "scheme", "top2_minus_bottom2"),
        "temperature": get(cfg, "distill", "temperature", 1.0, float),
        "cfg_scale": get(cfg, "distill", "cfg_scale", 100.0, float),
        "learning_rate": get(cfg, "distill", "learning_rate", 0.01, float),
        "t_min": get(cfg, "distill", "t_min", None, int),
        "t_max": get(cfg, "distill", "t_max", None, int),
        "t_anneal": get(cfg, "distill", "t_anneal", "none"),
        "lr_schedule": get(cfg, "distill", "lr_schedule", "constant"),
        "weight_family": get(cfg, "distill", "weight_family", "constant"),
        "n_particles": get(cfg, "distill", "n_particles", 4, int),
    }
    renderer = {"kind": get(cfg, "run", "renderer", "identity")}
    if renderer["kind"] == "patch":
        renderer.update(scene_h=get(cfg, "run", "scene_h", 16, int),
                        scene_w=get(cfg, "run", "scene_w", 16, int),
                        patch=get(cfg, "run", "patch", 8, int))
    rc = RunConfig(
        dataset=dataset,
        denoiser_path=get(cfg, "run", "denoiser"),
        classifier_path=get(cfg, "run", "classifier"),
        method=get(cfg, "run", "method", "r_sds"),
        distill=distill,
        reward=get(cfg, "run", "reward", "classifier"),
        metrics=get(cfg, "run", "metrics", ["classifier", "smoothness", "oracle_loglik"], list),
        repetitions=get(cfg, "run", "repetitions", 20, int),
        seed_base=get(cfg, "run", "seed_base", 0, int),
        label=get(cfg, "run", "label", 0, int),
        renderer=renderer,
        results_dir=get(cfg, "run", "results", "results"),
        source_path=get(cfg, "run", "source"),
        source_label=get(cfg, "run", "source_label", None, int),
        eval_views=get(cfg, "run", "eval_views", 10, int),
    )
    if seed_override is not None:
        rc.seed_base = int(seed_override)
    return rc


def _build_scheme(distill, n_candidates):
    kind = distill["scheme"]
    temp = float(distill.get("temperature", 1.0))
    # difference schemes need enough candidates; degrade gracefully in sweeps
    if kind == "top2_minus_bottom2" and n_candidates < 4:
        kind = BEST_MINUS_WORST if n_candidates >= 2 else "winner_takes_all"
    if kind in ("two_winners", "best_minus_worst") and n_candidates < 2:
        kind = "winner_takes_all"
    return WeightScheme(kind, temp)


def _build_reward(rc, spec):
    clf = None
    if rc.classifier_path:
        clf = ClassifierReward.load(rc.classifier_path)
    smooth = SmoothnessReward(1.0, spec.shape)
    if rc.reward == "classifier":
        if clf is None:
            raise ValueError("classifier reward requested but no classifier path set")
        return clf
    if rc.reward == "smoothness":
        return smooth
    if rc.reward == "composite":
        if clf is None:
            raise ValueError("composite reward needs a classifier path")
        return CompositeReward([(clf, 0.7), (smooth, 0.3)])
    raise ValueError(f"unknown reward {rc.reward!r}")


def _build_metrics(rc, spec):
    out = []
    for name in rc.metrics:
        if name == "classifier":
            out.append(ClassifierReward.load(rc.classifier_path))
        elif name == "smoothness":
            out.append(SmoothnessReward(1.0, spec.shape))
        elif name == "oracle_loglik":
            out.append(OracleLikelihoodMetric(spec))
        else:
            raise ValueError(f"unknown metric {name!r}")
    return out


def _build_renderer(rc, spec):
    if rc.renderer["kind"] == "identity":
        return IdentityRenderer(spec.dim)
    if rc.renderer["kind"] == "patch":
        return PatchRenderer(int(rc.renderer["scene_h"]), int(rc.renderer["scene_w"]),
                             int(rc.renderer["patch"]))
    raise ValueError(f"unknown renderer {rc.renderer['kind']!r}")


def final_samples(rend, theta, seed, eval_views):
    """Samples to evaluate: the render itself, or several random views."""
    thetas = theta if isinstance(theta, list) else [theta]
    if isinstance(rend, IdentityRenderer):
        return [rend.render(th) for th in thetas]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    out = []
    for th in thetas:
        out.extend(rend.render(th, rend.sample_view(rng)) for _ in range(eval_views))
    return out


def run(rc):
    """Execute `repetitions` seeded runs of the config; persist record + artifacts."""
    for p in (rc.denoiser_path, rc.classifier_path, rc.source_path):
        if p and not os.path.exists(f"{p}.bin"):
            raise FileNotFoundError(f"referenced artifact {p}.bin not found")
    d = load_denoiser(rc.denoiser_path)
    sched = make_schedule(d.T, d.schedule_family)
    spec = dataset_spec_from_dict(rc.dataset)
    rend = _build_renderer(rc, spec)
    reward = _build_reward(rc, spec) if rc.method.startswith("r_") else None
    metrics = _build_metrics(rc, spec)
    cond = class_condition(rc.label, d.num_classes)

    fp = rc.fingerprint()
    outdir = os.path.join(rc.results_dir, fp)
    os.makedirs(outdir, exist_ok=True)
    traj_path = os.path.join(outdir, "trajectory.jsonl")
    rep_values = {m.name: [] for m in metrics}
    walls, cpus, failures, artifacts = [], [], [], []

    with open(traj_path, "w") as traj:
        for rep in range(rc.repetitions):
            seed = rc.seed_base + rep
            try:
                dcfg = _distill_config(rc, sched, seed)
                extras, theta0 = _setup_method(rc, rend, d, spec, seed, dcfg)
                w0, c0 = time.perf_counter(), time.process_time()
                theta, log = optimize(rend, theta0, d, cond, reward, dcfg,
                                      rc.method, extras)
                walls.append(time.perf_counter() - w0)
                cpus.append(time.process_time() - c0)
                for recd in log:
                    slim = {k: v for k, v in recd.items() if k != "theta"}
                    slim["rep"] = rep
                    traj.write(json.dumps(slim) + "\n")
                samples = final_samples(rend, theta, seed, rc.eval_views)
                for m in metrics:
                    vals = [m.score(x, cond) for x in samples]
                    rep_values[m.name].append(float(np.mean(vals)))
                prefix = os.path.join(outdir, f"theta_rep{rep:03d}")
                save_theta(theta[0] if isinstance(theta, list) else theta,
                           prefix, {"seed": seed, "method": rc.method})
                artifacts.append(prefix)
            except Exception as exc:  # failures recorded, never dropped
                failures.append({"rep": rep, "seed": seed, "error": repr(exc)})

    metric_stats = {
        name: {"mean": float(np.mean(v)) if v else None,
               "std": float(np.std(v)) if v else None}
        for name, v in rep_values.items()
    }
    record = ResultRecord(
        fingerprint=fp,
        config=rc.resolved(),
        metrics=metric_stats,
        rep_values=rep_values,
        wall_time_mean=float(np.mean(walls)) if walls else None,
        cpu_time_mean=float(np.mean(cpus)) if cpus else None,
        failures=failures,
        artifacts=artifacts,
    )
    record.save(os.path.join(outdir, "record.json"))
    return record


def _distill_config(rc, sched, seed):
    dd = rc.distill
    n = int(dd["candidates"])
    return DistillConfig(
        sched=sched,
        total_steps=int(dd["total_steps"]),
        reward_steps=int(dd["reward_steps"]),
        candidates=n,
        denoise_steps=int(dd["denoise_steps"]),
        scheme=_build_scheme(dd, n),
        guidance=GuidanceConfig(float(dd["cfg_scale"])),
        learning_rate=float(dd["learning_rate"]),
        t_min=dd.get("t_min"),
        t_max=dd.get("t_max"),
        weight_family=dd.get("weight_family", "constant"),
        seed=seed,
        n_particles=int(dd.get("n_particles", 4)),
        t_anneal=dd.get("t_anneal", "none"),
        lr_schedule=dd.get("lr_schedule", "constant"),
    )


def _setup_method(rc, rend, d, spec, seed, dcfg):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    theta0 = rng.standard_normal(rend.n_params) * 0.1
    extras = {}
    base = rc.method[2:] if rc.method.startswith("r_") else rc.method
    if base == "vsd":
        thetas = [rng.standard_normal(rend.n_params) * 0.1
                  for _ in range(dcfg.n_particles)]
        adapter = AdapterDenoiser(d, rng=np.random.default_rng(
            np.random.SeedSequence([int(seed), 3])))
        extras["particles"] = ParticleSet(thetas, adapter)
    elif base == "dds":
        if rc.source_path is None or rc.source_label is None:
            raise ValueError("DDS methods need source and source_label")
        extras["x_src"] = load_theta(rc.source_path)
        extras["cond_src"] = class_condition(rc.source_label, d.num_classes)
        theta0 = extras["x_src"].copy()
    return extras, theta0


# -- sweeps --------------------------------------------------------------

SWEEP_PARAMS = ("N", "K", "S", "scheme", "preset")


@dataclass
class SweepSpec:
    param: str
    values: list
    base: RunConfig

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}")
        if not self.values:
            raise ValueError("sweep needs at least one value")


def _apply_sweep_value(rc, param, value):
    import copy

    rc = copy.deepcopy(rc)
    dd = rc.distill
    if param == "N":
        n = int(value)
        dd["candidates"] = n
        if n == 1:
            # N=1 is the no-reward baseline
            dd["reward_steps"] = 0
    elif param == "K":
        dd["reward_steps"] = int(value)
    elif param == "S":
        dd["denoise_steps"] = int(value)
    elif param == "scheme":
        dd["scheme"] = str(value)
    else:  # preset
        n, k, s = PRESETS[str(value)]
        dd["candidates"], dd["reward_steps"], dd["denoise_steps"] = n, k, s
    return rc


def sweep(spec):
    """Run one ResultRecord per swept value plus a trend summary."""
    records = []
    for value in spec.values:
        rc = _apply_sweep_value(spec.base, spec.param, value)
        try:
            rec = run(rc)
        except Exception as exc:
            rec = ResultRecord(fingerprint="failed", config=rc.resolved(),
                               metrics={}, rep_values={}, wall_time_mean=None,
                               cpu_time_mean=None,
                               failures=[{"error": repr(exc)}], artifacts=[])
        rec.sweep_param = spec.param
        rec.sweep_value = value
        records.append(rec)
    summary = trend_summary(records, spec.base.metrics[0])
    return records, summary


def trend_summary(records, metric):
    """Per-value means and a nondecreasing-within-one-pooled-SE verdict."""
    rows = []
    for rec in records:
        vals = rec.rep_values.get(metric, [])
        n = len(vals)
        rows.append({
            "value": rec.sweep_value,
            "mean": float(np.mean(vals)) if n else None,
            "se": float(np.std(vals) / np.sqrt(n)) if n else None,
            "n": n,
        })
    verdicts = []
    for lo, hi in zip(rows[:-1], rows[1:]):
        if lo["mean"] is None or hi["mean"] is None:
            verdicts.append(False)
            continue
        pooled = float(np.sqrt(lo["se"] ** 2 + hi["se"] ** 2))
        verdicts.append(hi["mean"] >= lo["mean"] - pooled)
    return {"metric": metric, "rows": rows, "pair_verdicts": verdicts,
            "nondecreasing": all(verdicts) if verdicts else True}


# -- reports -------------------------------------------------------------

def report(records, kind, out_prefix, metric=None):
    """Emit report.csv and report.svg for a set of records."""
    import csv

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not records:
        raise ValueError("need at least one record")
    if kind not in ("table", "trend_plot", "time_quality_plot"):
        raise ValueError(f"unknown report kind {kind!r}")
    params = {r.sweep_param for r in records}
    if kind == "trend_plot" and len(params) != 1:
        raise ValueError("trend report needs records from a single sweep")
    metric = metric or next(iter(records[0].metrics))

    csv_path, svg_path = f"{out_prefix}.csv", f"{out_prefix}.svg"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep_param", "sweep_value", "metric", "mean", "std",
                    "n_reps", "wall_time_mean_s", "cpu_time_mean_s", "fingerprint"])
        for r in records:
            for name, st in r.metrics.items():
                w.writerow([r.sweep_param, r.sweep_value, name,
                            st["mean"], st["std"], len(r.rep_values.get(name, [])),
                            r.wall_time_mean, r.cpu_time_mean, r.fingerprint])

    fig, ax = plt.subplots(figsize=(6, 4))
    means = [r.metrics[metric]["mean"] for r in records]
    errs = [r.metrics[metric]["std"] / max(1, np.sqrt(len(r.rep_values.get(metric, [1]))))
            for r in records]
    if kind == "time_quality_plot":
        xs = [r.wall_time_mean for r in records]
        ax.errorbar(xs, means, yerr=errs, fmt="o")
        for r, x, m in zip(records, xs, means):
            ax.annotate(str(r.sweep_value), (x, m))
        ax.set_xlabel("wall time per run (s)")
    else:
        xs = [r.sweep_value if r.sweep_value is not None else i
              for i, r in enumerate(records)]
        numeric = all(isinstance(x, (int, float)) for x in xs)
        pos = xs if numeric else range(len(xs))
        ax.errorbar(pos, means, yerr=errs, fmt="o-")
        if not numeric:
            ax.set_xticks(range(len(xs)))
            ax.set_xticklabels([str(x) for x in xs], rotation=30)
        elif kind == "trend_plot":
            ax.set_xticks(xs)
        ax.set_xlabel(records[0].sweep_param or "record")
    ax.set_ylabel(f"{metric} (mean ± se)")
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)
    return csv_path, svg_path
