"""Compare the numba kernels against the pure-numpy fallback.

Runs the same workload in two subprocesses (the backend is chosen at import
time via SDLAB_BACKEND) and prints per-op timings plus speedups.

    python benchmarks/bench_backends.py
"""

import argparse
import json
import os
import subprocess
import sys
import time


def workload():
    import numpy as np

    import sdlab as S

    rng = np.random.default_rng(0)
    spec = S.ring_mixture_spec()
    data = S.generate_dataset(spec, 2000, 0)
    sched = S.make_schedule(1000, "cosine")
    d = S.train_denoiser(data, S.TrainConfig(steps=50, seed=0), sched)
    cond = S.class_condition(0, 4)

    out = {}

    def bench(name, fn, repeat=5):
        fn()  # warmup (includes jit compile on the numba path)
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        out[name] = (time.perf_counter() - t0) / repeat * 1e3  # ms

    X = rng.standard_normal((512, 2))
    ts = np.full(512, 500)
    bench("epsilon_batch512", lambda: d.epsilon(X, cond, ts))

    x_t = rng.standard_normal((64, 2))
    dY = rng.standard_normal(2)
    bench("epsilon_with_grads_64",
          lambda: [d.epsilon_with_grads(x, cond, 500, dY) for x in x_t])

    pr = S.PatchRenderer(16, 16, 8)
    theta = rng.standard_normal(pr.n_params)
    view = S.View(0.3, 1.0, -0.5, 1.1)
    up = rng.standard_normal(64)
    bench("patch_render_x100", lambda: [pr.render(theta, view) for _ in range(100)])
    bench("patch_vjp_x100", lambda: [pr.vjp(theta, view, up) for _ in range(100)])

    cfg = S.DistillConfig(sched=sched, total_steps=50, reward_steps=50,
                          candidates=10, denoise_steps=8,
                          guidance=S.GuidanceConfig(7.5), seed=0)
    clf = S.train_classifier_reward(data, S.TrainConfig(steps=200, seed=1))
    rend = S.IdentityRenderer(2)
    th0 = rng.standard_normal(2) * 0.1
    bench("r_sds_50_steps",
          lambda: S.optimize(rend, th0, d, cond, clf, cfg, "r_sds"), repeat=2)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        print(json.dumps(workload()))
        return

    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, SDLAB_BACKEND=backend)
        proc = subprocess.run([sys.executable, os.path.abspath(__file__), "--worker"],
                              env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            raise SystemExit(f"{backend} worker failed")
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    names = results["numpy"].keys()
    w = max(len(n) for n in names)
    print(f"{'op':<{w}}  {'numpy (ms)':>12}  {'numba (ms)':>12}  {'speedup':>8}")
    for n in names:
        a, b = results["numpy"][n], results["numba"][n]
        print(f"{n:<{w}}  {a:12.3f}  {b:12.3f}  {a / b:7.2f}x")


if __name__ == "__main__":
    main()
