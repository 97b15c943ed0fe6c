"""Run built-in benchmark experiments and print their log-log slopes.

Each experiment writes ``<name>.csv`` into the output directory. The slope
of log mean error against log of the swept variable is printed per
estimator.
"""

import argparse
import os
import time

from lowrank_tv.bench import (
    EXPERIMENTS,
    builtin_experiment,
    log_slope_summary,
    mean_errors,
    run_experiment,
    with_output,
)

DEFAULT = ("fig1-desk", "fig3-dirichlet", "fig5-desk")
SWEPT = {"fig1-desk": "d", "fig1-literal": "d", "fig3-dirichlet": "K",
         "fig5-desk": "n", "adaptive-desk": "n"}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("experiments", nargs="*", default=list(DEFAULT),
                    choices=sorted(EXPERIMENTS))
    ap.add_argument("--outdir", default="bench_out")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--replicates", type=int, default=None)
    args = ap.parse_args(argv)

    os.makedirs(args.outdir, exist_ok=True)
    for name in args.experiments:
        cfg = builtin_experiment(name, replicates=args.replicates)
        path = os.path.join(args.outdir, f"{name}.csv")
        t0 = time.perf_counter()
        recs = run_experiment(with_output(cfg, path), jobs=args.jobs)
        print(f"{name}: {len(recs)} records in {time.perf_counter() - t0:.1f} s -> {path}")
        key = SWEPT[name]
        for est in cfg.estimators:
            means = mean_errors(recs, est, key)
            pts = ", ".join(f"{key}={k}: {v:.4f}" for k, v in means.items())
            if len(means) >= 3:
                fit, _ = log_slope_summary(recs, est, key)
                print(f"  {est:<14} slope {fit.slope:+.3f} (r2 {fit.r2:.3f})  {pts}")
            else:
                print(f"  {est:<14} {pts}")


if __name__ == "__main__":
    main()
