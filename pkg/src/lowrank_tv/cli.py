"""Command-line entry point.

Exit codes: 0 success, 2 usage or parse error, 3 input that violates a data
invariant (e.g. a frequency matrix that does not sum to one, or too few
points for the density estimator).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from lowrank_tv import bench, verify
from lowrank_tv.adaptive import CandidateGrid, adaptive_density
from lowrank_tv.density import DensityParams, alg2_density_2d, truncate_to_multiple_of_4
from lowrank_tv.discrete import (
    Alg1Params,
    FrequencyMatrix,
    drop_to_even,
    histogram_estimate,
    localized_svd_estimate,
    split_and_histogram,
)
from lowrank_tv.io import (
    ParseError,
    read_matrix,
    read_samples,
    write_density,
    write_matrix,
    write_samples,
)
from lowrank_tv.metrics import matrix_l1_error
from lowrank_tv.models import (
    AssouadMatrixSpec,
    assouad_matrix,
    check_prob_matrix,
    low_rank_dirichlet_matrix,
    sample_from_density,
    sample_multinomial,
)

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 2, 3
log = logging.getLogger("lowrank_tv")


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    output: str | None = None
    params: dict = field(default_factory=dict)
    base_seed: int | None = None
    verbosity: int = 0
    options: dict = field(default_factory=dict)


# ---------------------------------------------------------------- estimate-discrete

def _frequency(path, n):
    m = read_matrix(path)
    if np.allclose(m, np.round(m)) and m.sum() >= 1 and n is None:
        return FrequencyMatrix(np.round(m).astype(np.int64))
    if n is None:
        raise UsageError(f"{path} holds frequencies; pass --n (observations per half)")
    return FrequencyMatrix.from_values(m, n)


def cmd_estimate_discrete(cfg: CliConfig) -> int:
    ins, p = cfg.inputs, cfg.params
    if ins.get("counts"):
        counts = read_matrix(ins["counts"])
        if np.any(counts < 0) or not np.allclose(counts, np.round(counts)):
            raise ValueError("counts must be nonnegative integers")
        c = np.round(counts).astype(np.int64)
        if c.sum() % 2:
            log.warning("dropping one observation to make the total even")
            c = drop_to_even(c)
        h1, h2 = split_and_histogram(c, seed=cfg.base_seed)
    elif ins.get("h1") and ins.get("h2"):
        h1, h2 = _frequency(ins["h1"], p.get("n")), _frequency(ins["h2"], p.get("n"))
    else:
        raise UsageError("pass --counts or both --h1 and --h2")
    if cfg.options.get("histogram"):
        est = histogram_estimate(h1, h2)
    else:
        d = p.get("d") or max(h1.shape)
        params = Alg1Params(p["alpha"], d, p.get("N") or h1.n,
                            threshold_scale=p["threshold_scale"])
        est = localized_svd_estimate(params, h1, h2)
    check_prob_matrix(est)
    write_matrix(cfg.output, est)
    if ins.get("truth"):
        truth = check_prob_matrix(read_matrix(ins["truth"]))
        print(f"l1_error {matrix_l1_error(est, truth)!r}")
    return EXIT_OK


# ---------------------------------------------------------------- estimate-density

def _parse_k_values(text: str) -> tuple:
    try:
        ks = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"--k-values expects comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1 or len(set(ks)) != len(ks):
        raise UsageError(f"--k-values must be distinct positive integers, got {text!r}")
    return ks


def cmd_estimate_density(cfg: CliConfig) -> int:
    x = read_samples(cfg.inputs["samples"])
    if len(x) < 8:
        raise ValueError(f"constraint n >= 8 violated: sample has {len(x)} points")
    x, dropped = truncate_to_multiple_of_4(x)
    if dropped:
        log.warning("dropped %d trailing points so n is a multiple of 4", dropped)
    p = cfg.params
    params = DensityParams(alpha=p["alpha"], K=p["K"], beta=p["beta"], N=p.get("N"),
                           guard_log_exponent=p["guard_log_exponent"],
                           threshold_scale=p["threshold_scale"])
    if cfg.options.get("adaptive"):
        grid = CandidateGrid.default(len(x), full_k=cfg.options.get("full_k_grid", False))
        if cfg.options.get("k_values"):
            ks = _parse_k_values(cfg.options["k_values"])
            grid = CandidateGrid(len(x), ks, grid.betas)
        f_hat, trace = adaptive_density(x, grid, params)
        trace_path = cfg.options.get("trace") or f"{cfg.output}.selection.csv"
        trace.to_csv(trace_path)
        print(f"selection trace written to {trace_path}")
    else:
        f_hat = alg2_density_2d(x, params)
    write_density(cfg.output, f_hat)
    print(f"branch {f_hat.branch} estimator {f_hat.trace.get('estimator', '-')}")
    return EXIT_OK


# ---------------------------------------------------------------- bench / verify

def cmd_bench(cfg: CliConfig) -> int:
    o = cfg.options
    if o.get("config"):
        try:
            exp = bench.ExperimentConfig.from_json(o["config"])
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise UsageError(f"cannot load config: {exc}") from exc
    elif o.get("experiment"):
        try:
            exp = bench.builtin_experiment(o["experiment"])
        except KeyError:
            raise UsageError(f"unknown experiment {o['experiment']!r}; valid names: "
                             f"{', '.join(sorted(bench.EXPERIMENTS))}") from None
    else:
        raise UsageError("pass --experiment NAME or --config FILE")
    changes = {}
    if cfg.base_seed is not None:
        changes["base_seed"] = cfg.base_seed
    if o.get("replicates"):
        changes["replicates"] = o["replicates"]
    if o.get("timing"):
        changes["timing"] = True
    if cfg.output:
        changes["output_path"] = cfg.output
    exp = replace(exp, **changes)
    if not exp.output_path:
        raise UsageError("no output path: pass --output or set output_path in the config")
    records = bench.run_experiment(exp, jobs=o.get("jobs") or 1)
    print(f"{len(records)} records written to {exp.output_path}")
    return EXIT_OK


def cmd_verify(cfg: CliConfig) -> int:
    o, p, seed = cfg.options, cfg.params, cfg.base_seed
    lemma = o["lemma"]
    if lemma == "noise":
        d = o.get("d") or 10
        rep = verify.verify_noise_bound(np.full((d, d), 1.0 / d ** 2), None, p["alpha"],
                                        p["N"], o["n"], o["trials"], seed)
    elif lemma == "row":
        d = o.get("d") or 10
        rep = verify.verify_row_concentration(np.full((d, d), 1.0 / d ** 2), p["alpha"],
                                              p["N"], o["n"], o["trials"], seed)
    elif lemma == "poisson":
        rep = verify.verify_poisson_tails(o["lam"], o["x"], o["trials"], seed)
    else:
        rep = verify.verify_histogram_deviation(o["ell"], o["m"], o["delta"],
                                                o["trials"], seed)
    if cfg.output:
        rep.to_csv(cfg.output)
    print(rep.summary() + (" (flagged: within 2-3 sigma)" if rep.flagged else ""))
    return EXIT_OK


# ---------------------------------------------------------------- generate

def cmd_generate(cfg: CliConfig) -> int:
    o, seed = cfg.options, cfg.base_seed
    what = o["what"]
    if what == "dirichlet":
        write_matrix(cfg.output, low_rank_dirichlet_matrix(o["d"], o["K"],
                                                           o["concentration"], seed))
    elif what == "assouad":
        spec = AssouadMatrixSpec.random(o["d"], o["d"], o["K"], o["n"], seed)
        write_matrix(cfg.output, assouad_matrix(spec))
    elif what == "counts":
        if not o.get("matrix"):
            raise UsageError("generate counts needs --matrix")
        p = check_prob_matrix(read_matrix(o["matrix"]))
        write_matrix(cfg.output, sample_multinomial(p, o["n"], seed))
    else:
        f, bound = bench.density_truth(o["truth"], np.random.default_rng(seed), o["K"],
                                       o["n"])
        write_samples(cfg.output, sample_from_density(f, bound, o["n"], seed))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lowrank-tv", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def alg_flags(p, alpha=1.01):
        p.add_argument("--alpha", type=float, default=alpha)
        p.add_argument("--N", type=float, default=None,
                       help="log-factor base (default: sample size)")
        p.add_argument("--threshold-scale", type=float, default=1.0)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("estimate-discrete", help="localized SVD on histogram files")
    p.add_argument("--h1")
    p.add_argument("--h2")
    p.add_argument("--counts", help="count matrix of 2n draws, split at random "
                   "(an odd total loses one observation)")
    p.add_argument("--n", type=int, default=None, help="observations per half when "
                   "--h1/--h2 hold frequencies")
    p.add_argument("--d", type=int, default=None, help="partition dimension "
                   "(default: max(d1, d2))")
    p.add_argument("--truth")
    p.add_argument("--histogram", action="store_true", help="plain histogram baseline")
    p.add_argument("--output", required=True)
    alg_flags(p)

    p = sub.add_parser("estimate-density", help="two-dimensional density estimator")
    p.add_argument("--samples", required=True)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--guard-log-exponent", type=float, default=1.5)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--full-k-grid", action="store_true")
    p.add_argument("--k-values", help="comma-separated K grid for --adaptive, e.g. 1,2,4")
    p.add_argument("--trace", help="selection trace CSV path (with --adaptive)")
    p.add_argument("--output", required=True)
    alg_flags(p)

    p = sub.add_parser("bench", help="run a Monte-Carlo experiment")
    p.add_argument("--experiment")
    p.add_argument("--config")
    p.add_argument("--output")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--timing", action="store_true", help="fill runtime_ms "
                   "(the CSV is then no longer reproducible byte for byte)")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("verify", help="check a concentration bound by simulation")
    p.add_argument("--lemma", required=True, choices=["noise", "row", "poisson", "histogram"])
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--N", type=float, default=10.0)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--lam", type=float, default=100.0)
    p.add_argument("--x", type=float, nargs="+", default=[10.0, 30.0, 50.0])
    p.add_argument("--ell", type=int, default=20)
    p.add_argument("--m", type=int, default=10_000)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--output")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("generate", help="write random instances")
    p.add_argument("what", choices=["dirichlet", "assouad", "counts", "sample"])
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--matrix")
    p.add_argument("--truth", default="separable-lipschitz", choices=bench.DENSITY_TRUTHS)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    return ap


def config_from_args(ns: argparse.Namespace) -> CliConfig:
    v = vars(ns).copy()
    sub = v.pop("subcommand")
    inputs = {k: v.pop(k) for k in ("h1", "h2", "counts", "truth", "samples")
              if k in v and sub != "generate"}
    params = {k: v.pop(k) for k in ("alpha", "N", "n", "d", "K", "beta", "threshold_scale",
                                    "guard_log_exponent") if k in v and sub not in
              ("generate", "verify")}
    if sub == "verify":
        params = {"alpha": v.pop("alpha"), "N": v.pop("N")}
    return CliConfig(sub, inputs, v.pop("output", None), params, v.pop("seed", None),
                     v.pop("verbose", 0), v)


COMMANDS = {
    "estimate-discrete": cmd_estimate_discrete,
    "estimate-density": cmd_estimate_density,
    "bench": cmd_bench,
    "verify": cmd_verify,
    "generate": cmd_generate,
}


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = config_from_args(ns)
    logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbosity, 2),
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (ParseError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
