"""Command-line entry points: sdlab <subcommand> --config run.cfg"""

import argparse
import glob
import json
import os
import sys

import numpy as np

from .configio import get, load_config
from .data import TrainConfig, generate_dataset, train_denoiser
from .denoiser import save_denoiser
from .harness import (ResultRecord, SweepSpec, dataset_spec_from_dict,
                      report, run, runconfig_from_file, sweep)
from .rewards import train_classifier_reward
from .schedule import make_schedule


def _train_cfg(cfg, section):
    return TrainConfig(
        steps=get(cfg, section, "steps", 3000, int),
        batch_size=get(cfg, section, "batch_size", 128, int),
        learning_rate=get(cfg, section, "learning_rate", 1e-3, float),
        seed=get(cfg, section, "seed", 0, int),
    )


def _dataset(cfg):
    spec = dataset_spec_from_dict(dict(cfg.get("dataset", {"kind": "ring"})))
    n = get(cfg, "dataset", "n", 4000, int)
    seed = get(cfg, "dataset", "seed", 0, int)
    return generate_dataset(spec, n, seed)


def cmd_train_diffusion(args):
    cfg = load_config(args.config)
    data = _dataset(cfg)
    sched = make_schedule(get(cfg, "train", "timesteps", 1000, int),
                          get(cfg, "train", "schedule", "cosine"))
    tc = _train_cfg(cfg, "train")
    if args.seed is not None:
        tc = TrainConfig(tc.steps, tc.batch_size, tc.learning_rate, args.seed)
    d = train_denoiser(data, tc, sched,
                       weight_family=get(cfg, "train", "weight_family", "constant"))
    out = get(cfg, "train", "out", "artifacts/denoiser")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_denoiser(d, out)
    print(f"denoiser -> {out}.bin  final loss "
          f"{float(np.mean(d.train_losses[-100:])):.4f}")


def cmd_train_reward(args):
    cfg = load_config(args.config)
    data = _dataset(cfg)
    tc = _train_cfg(cfg, "reward_train")
    if args.seed is not None:
        tc = TrainConfig(tc.steps, tc.batch_size, tc.learning_rate, args.seed)
    clf = train_classifier_reward(
        data, tc,
        outlier_frac=get(cfg, "reward_train", "outlier_frac", 0.2, float))
    out = get(cfg, "reward_train", "out", "artifacts/classifier")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    clf.save(out)
    print(f"classifier -> {out}.bin  holdout acc {clf.holdout_accuracy:.3f}")


def cmd_distill(args):
    rc = runconfig_from_file(args.config, seed_override=args.seed)
    rec = run(rc)
    _print_record(rec)


def cmd_edit(args):
    rc = runconfig_from_file(args.config, seed_override=args.seed)
    rc.source_path = args.source
    if args.source_label is not None:
        rc.source_label = args.source_label
    if not rc.method.endswith("dds"):
        rc.method = "r_dds"
    rec = run(rc)
    _print_record(rec)


def cmd_sweep(args):
    base = runconfig_from_file(args.config, seed_override=args.seed)
    values = []
    for v in args.values.split(","):
        v = v.strip()
        values.append(int(v) if v.lstrip("-").isdigit() else v)
    records, summary = sweep(SweepSpec(args.param, values, base))
    outdir = base.results_dir
    os.makedirs(outdir, exist_ok=True)
    spath = os.path.join(outdir, f"sweep_{args.param}_summary.json")
    with open(spath, "w") as fh:
        json.dump(summary, fh, indent=2)
    for rec in records:
        _print_record(rec)
    print(f"trend ({summary['metric']}): nondecreasing="
          f"{summary['nondecreasing']}  -> {spath}")


def cmd_report(args):
    paths = sorted(glob.glob(os.path.join(args.records, "*", "record.json")))
    if not paths:
        paths = sorted(glob.glob(args.records))
    records = [ResultRecord.load(p) for p in paths]
    csv_path, svg_path = report(records, args.kind, args.out, metric=args.metric)
    print(f"report -> {csv_path}, {svg_path}")


def _print_record(rec):
    parts = [f"{k}={v['mean']:.4f}" for k, v in rec.metrics.items()
             if v["mean"] is not None]
    extra = f"  failures={len(rec.failures)}" if rec.failures else ""
    print(f"[{rec.fingerprint}] " + "  ".join(parts) + extra)


def main(argv=None):
    p = argparse.ArgumentParser(prog="sdlab",
                                description="score distillation laboratory")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add(name, fn, **extra_args):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "report")
        sp.add_argument("--seed", type=int, default=None)
        for flag, kw in extra_args.items():
            sp.add_argument(flag, **kw)
        sp.set_defaults(fn=fn)
        return sp

    add("train-diffusion", cmd_train_diffusion)
    add("train-reward", cmd_train_reward)
    add("distill", cmd_distill)
    add("edit", cmd_edit,
        **{"--source": {"required": True},
           "--source-label": {"type": int, "dest": "source_label"}})
    add("sweep", cmd_sweep,
        **{"--param": {"required": True,
                       "choices": ["N", "K", "S", "scheme", "preset"]},
           "--values": {"required": True}})
    rp = sub.add_parser("report")
    rp.add_argument("--records", required=True,
                    help="results dir or glob of record.json files")
    rp.add_argument("--kind", required=True,
                    choices=["table", "trend_plot", "time_quality_plot"])
    rp.add_argument("--out", default="report")
    rp.add_argument("--metric", default=None)
    rp.set_defaults(fn=cmd_report)

    args = p.parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
