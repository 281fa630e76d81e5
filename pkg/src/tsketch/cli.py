"""Command-line entry point: ``tsketch <command> [flags]``.

Exit codes: 0 success, 2 usage, 3 I/O, 4 dimension or validation error,
5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import bench as bench_mod
from .hashing import DEFAULT_SEED, SeedPath
from .kernels import (
    GaussianFeatureMap,
    KernelJob,
    RadiusError,
    SolverError,
    gram_gaussian,
    gram_polynomial,
    sketch_ridge_regression,
    statistical_dimension_of,
)
from .kmat import MatrixFormatError, read_matrix, write_matrix
from .recursive import CONST_PROB, RecursiveSketch, high_prob, target_dim_const_prob, target_dim_high_prob
from .suites import SUITES, run_suite
from .tensor_core import SizeGuardError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_VERIFY = 0, 2, 3, 4, 5
MANIFEST_TAG = "kmat_manifest_v1"
MANIFEST_KEYS = (
    "tag", "command", "seed", "variant", "p", "m", "s", "d", "n", "nnz", "lambda", "eps", "delta",
    "constants", "q_taylor", "dims", "taylor_tail", "output", "format", "timing_log",
)

log = logging.getLogger("tsketch")


class UsageError(Exception):
    pass


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from exc
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="d x n data matrix (KMAT1, or CSV when the name ends in .csv)")
    parser.add_argument("--output", help="output matrix path; a JSON manifest is written next to it")
    parser.add_argument("--b", help="target vector file (krr)")
    parser.add_argument("--p", type=_positive_int, default=2, help="polynomial degree (default 2)")
    parser.add_argument("--m", type=_positive_int, help="target dimension (default: sized from s_lambda)")
    parser.add_argument("--sparsity", type=_positive_int, help="OSNAP nonzeros per column (high-prob)")
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0, help="ridge parameter (default 1)")
    parser.add_argument("--eps", type=float, default=0.5, help="accuracy (default 0.5)")
    parser.add_argument("--delta", type=float, default=0.1, help="failure probability (default 0.1)")
    parser.add_argument("--variant", choices=("const-prob", "high-prob"), default="const-prob")
    parser.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED:#x})")
    parser.add_argument("--trials", type=_positive_int, help="Monte-Carlo trials (verify)")
    parser.add_argument("--threads", type=_positive_int, default=1, help="worker threads (default 1)")
    parser.add_argument("--format", choices=("kmat", "csv"), help="output format (default: from extension)")
    parser.add_argument("--const-c", type=float, default=8.0, help="const-prob sizing constant")
    parser.add_argument("--const-c1", type=float, default=0.25, help="high-prob target-dimension constant")
    parser.add_argument("--const-c2", type=float, default=0.25, help="high-prob sparsity constant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsketch", description="Oblivious sketching of polynomial and Gaussian kernels")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("sketch", "sketch the p-fold tensor power of every column"),
        ("gaussian-features", "Gaussian-kernel feature map S_g(X)"),
        ("krr", "sketch-and-solve polynomial kernel ridge regression"),
        ("verify", "run a statistical verification suite"),
        ("bench", "timing table"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        if name == "verify":
            p.add_argument("suite", choices=sorted(SUITES))
        if name == "gaussian-features":
            p.add_argument("--radius", type=float, help="squared-radius bound r (default: max squared column norm)")
            p.add_argument("--s-lambda", type=float, help="statistical dimension estimate (default: exact)")
        if name == "bench":
            p.add_argument("--repeats", type=_positive_int, default=5)
    return parser


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required for {args.command}")


def _load(path) -> np.ndarray:
    return read_matrix(path)


def _nnz(X) -> int:
    return int(X.nnz) if sp.issparse(X) else int(np.count_nonzero(X))


def _manifest(args, **fields) -> dict:
    out = dict.fromkeys(MANIFEST_KEYS)
    out.update(
        tag=MANIFEST_TAG,
        command=args.command,
        seed=args.seed,
        variant=args.variant,
        p=args.p,
        eps=args.eps,
        delta=args.delta,
        constants={"c": args.const_c, "c1": args.const_c1, "c2": args.const_c2},
        output=Path(args.output).name if args.output else None,
        format=_out_format(args),
    )
    out["lambda"] = args.lam
    out.update(fields)
    if args.output:
        out["timing_log"] = Path(args.output).name + ".timing.json"
    return {k: out[k] for k in MANIFEST_KEYS}


def _out_format(args) -> str | None:
    if not args.output:
        return None
    return args.format or ("csv" if args.output.lower().endswith(".csv") else "kmat")


def _write_outputs(args, matrix, manifest: dict, timing: dict) -> None:
    write_matrix(args.output, matrix, _out_format(args))
    Path(args.output + ".json").write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n")
    # wall-clock numbers live apart from the manifest so reruns stay byte-identical
    Path(args.output + ".timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    log.info("timing %s", json.dumps(timing))


def _variant_and_m(args, X) -> tuple:
    d, n = X.shape
    if args.variant == "const-prob":
        m = args.m
        if m is None:
            s_lam = statistical_dimension_of(gram_polynomial(_dense(X), args.p), args.lam)
            m = target_dim_const_prob(args.p, max(1.0, s_lam), args.eps, args.const_c)
        return CONST_PROB, m
    m, s = args.m, args.sparsity
    if m is None or s is None:
        s_lam = statistical_dimension_of(gram_polynomial(_dense(X), args.p), args.lam)
        m_auto, s_auto = target_dim_high_prob(
            args.p, max(1.0, s_lam), args.eps, n, d, args.delta, args.const_c1, args.const_c2
        )
        m = m if m is not None else m_auto
        s = s if s is not None else min(s_auto, m)
    return high_prob(s), m


def _dense(X) -> np.ndarray:
    return X.toarray() if sp.issparse(X) else X


def cmd_sketch(args) -> int:
    _require(args, "input", "output")
    X = _load(args.input)
    if args.p < 2:
        raise ValueError("sketch needs --p >= 2")
    variant, m = _variant_and_m(args, X)
    sk = RecursiveSketch(X.shape[0], args.p, m, variant, SeedPath(args.seed))
    timings: dict = {}
    t0 = time.perf_counter()
    out = sk.apply_matrix(X, threads=args.threads, timings=timings)
    timings["total"] = time.perf_counter() - t0
    manifest = _manifest(
        args, m=sk.m, s=variant.sparsity if variant.name == "high-prob" else None,
        d=X.shape[0], n=X.shape[1], nnz=_nnz(X),
    )
    _write_outputs(args, out.data, manifest, timings)
    return EXIT_OK


def cmd_gaussian_features(args) -> int:
    _require(args, "input", "output")
    X = _load(args.input)
    d, n = X.shape
    sq = np.sum(X * X, axis=0)
    r = args.radius if args.radius is not None else float(sq.max(initial=0.0))
    job = KernelJob(args.lam, args.eps, args.delta, r)
    s_lam = args.s_lambda
    if s_lam is None:
        s_lam = statistical_dimension_of(gram_gaussian(X), args.lam)
    variant = CONST_PROB if args.variant == "const-prob" else high_prob(args.sparsity or 1)
    dims = None
    if args.m is not None:
        dims = [1] + [args.m] * 64
    gfm = GaussianFeatureMap(d, job, n, s_lam, variant, SeedPath(args.seed), args.const_c, args.const_c1, args.const_c2, dims)
    t0 = time.perf_counter()
    out = gfm.apply(X, threads=args.threads)
    timings = {"total": time.perf_counter() - t0}
    manifest = _manifest(
        args, m=gfm.m, s=args.sparsity, d=d, n=n, nnz=_nnz(X),
        q_taylor=gfm.q_taylor, dims=gfm.dims, taylor_tail=gfm.tail,
    )
    _write_outputs(args, out.data, manifest, timings)
    return EXIT_OK


def cmd_krr(args) -> int:
    _require(args, "input", "b")
    X = _load(args.input)
    b = np.asarray(_load(args.b), dtype=np.float64).ravel()
    variant = CONST_PROB if args.variant == "const-prob" else high_prob(args.sparsity or 1)
    m = args.m if args.m is not None else "auto"
    if args.variant == "high-prob" and args.m is not None and args.sparsity is None:
        raise UsageError("--sparsity is required with --m for the high-prob variant")
    t0 = time.perf_counter()
    res = sketch_ridge_regression(
        X, b, args.p, args.lam, m, variant, SeedPath(args.seed), args.eps, args.delta,
        args.const_c, args.const_c1, args.const_c2, args.threads,
    )
    timings = {"total": time.perf_counter() - t0}
    report = {
        "objective_exact_opt": res.objective_optimal,
        "objective_sketched_solution": res.objective_sketched,
        "ratio": res.ratio,
        "m": res.m,
    }
    print(json.dumps(report, indent=2))
    if args.output:
        manifest = _manifest(args, m=res.m, s=res.provenance.get("sparsity"), d=X.shape[0], n=X.shape[1], nnz=_nnz(X))
        _write_outputs(args, res.coef[:, None], manifest, timings)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suite(args.suite, args.trials, SeedPath(args.seed))
    text = json.dumps(report, indent=2, default=float)
    print(text)
    if args.output:
        Path(args.output).write_text(text + "\n")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_bench(args) -> int:
    rows = bench_mod.run_bench(
        p=args.p, m=args.m or 256, variant=args.variant if args.variant == "const-prob" else high_prob(args.sparsity or 4),
        seed=SeedPath(args.seed), repeats=args.repeats, threads=args.threads,
    )
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].as_dict()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_dict())
    sys.stdout.write(buf.getvalue())
    if args.output:
        Path(args.output).write_text(buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "sketch": cmd_sketch,
    "gaussian-features": cmd_gaussian_features,
    "krr": cmd_krr,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tsketch: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MatrixFormatError) as exc:
        print(f"tsketch: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RadiusError as exc:
        print(f"tsketch: radius violation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, SizeGuardError, SolverError) as exc:
        print(f"tsketch: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
