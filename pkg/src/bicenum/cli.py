"""Command-line entry point: ``bicenum generate | enumerate | bench``.

Exit codes: 0 success, 2 bad input, 3 numerical failure (e.g. every
candidate invalid).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import criteria as crit
from .enumeration import CLUSTERERS, COV_SOURCES, CandidateFamily, EnumConfig, enumerate_clusters
from .errors import InputError, NumericalError
from .harness import (
    GENERATORS,
    NORMALIZATIONS,
    McConfig,
    ingest_csv,
    report,
    run_monte_carlo,
    trial_dataset,
    write_dataset_csv,
    write_enumeration,
)
from .seeding import DATA_KEY, stream
from .synthdata import data1_spec, data2_spec, gen_data1, gen_data2

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("bicenum")


def _criteria(text: str) -> tuple[str, ...]:
    try:
        return tuple(crit.criterion_id(c) for c in text.split(",") if c.strip())
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_fit_flags(p: argparse.ArgumentParser, need_range: bool) -> None:
    p.add_argument("--lmin", type=int, default=1, help="smallest candidate number of clusters")
    p.add_argument("--lmax", type=int, default=None, required=need_range,
                   help="largest candidate" + ("" if need_range else " (default 2K)"))
    p.add_argument("--clusterer", choices=CLUSTERERS, default="em")
    p.add_argument("--criteria", type=_criteria, default=(crit.BIC_N, crit.BIC_O),
                   help="comma list of bic-n, bic-o, bic-os, bic-ns, bic-g")
    p.add_argument("--knee", action="store_true", help="also locate the knee of every curve")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6, help="EM convergence tolerance")
    p.add_argument("--max-iter", type=int, default=200, help="EM iteration cap")
    p.add_argument("--reg-eps", type=float, default=None, help="relative covariance ridge (default 1e-8)")
    p.add_argument("--n-init", type=int, default=1, help="K-means++ restarts per candidate")
    p.add_argument("--swaps", type=int, default=20, help="swap attempts for rs-em / rs-kmeans")
    p.add_argument("--cov-source", choices=COV_SOURCES, default="em",
                   help="covariances scored by the Gaussian criteria")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="default: from the --out suffix")


def _enum_config(a) -> EnumConfig:
    return EnumConfig(max_iter=a.max_iter, tol=a.tol, reg_eps=a.reg_eps, n_swaps=a.swaps, n_init=a.n_init,
                      cov_source=a.cov_source)


def _format(a) -> str:
    return a.format or ("json" if str(a.out).lower().endswith(".json") else "csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bicenum", description="Estimate the number of clusters with BIC variants.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic benchmark dataset")
    g.add_argument("--dataset", choices=GENERATORS, required=True)
    size = g.add_mutually_exclusive_group()
    size.add_argument("--gamma", type=int, default=None, help="data1 size multiplier")
    size.add_argument("--nk", type=int, default=None, help="data2 points per cluster")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)

    e = sub.add_parser("enumerate", help="estimate K for one dataset")
    e.add_argument("--input", type=Path, required=True)
    e.add_argument("--labels", action="store_true", help="last column holds labels")
    e.add_argument("--normalize", choices=NORMALIZATIONS, default="none")
    _add_fit_flags(e, need_range=True)
    e.add_argument("--out", type=Path, required=True)

    b = sub.add_parser("bench", help="Monte Carlo detection rates")
    b.add_argument("--dataset", choices=GENERATORS + ("file",), required=True)
    b.add_argument("--mc", type=int, required=True)
    b.add_argument("--gamma", type=int, default=1)
    b.add_argument("--nk", type=int, default=100)
    b.add_argument("--input", type=Path, default=None)
    b.add_argument("--labels", action="store_true")
    b.add_argument("--normalize", choices=NORMALIZATIONS, default="none")
    b.add_argument("--true-k", type=int, default=None, help="needed for unlabeled files")
    b.add_argument("--workers", type=int, default=1)
    _add_fit_flags(b, need_range=False)
    b.add_argument("--out", type=Path, required=True)
    return ap


def cmd_generate(a) -> int:
    if a.dataset == "data1":
        if a.nk is not None:
            raise InputError("--nk applies to data2")
        size = a.gamma if a.gamma is not None else 1
        spec, draw = data1_spec(size), gen_data1(size, stream(a.seed, 0, DATA_KEY))
    else:
        if a.gamma is not None:
            raise InputError("--gamma applies to data1")
        size = a.nk if a.nk is not None else 100
        spec, draw = data2_spec(size), gen_data2(size, stream(a.seed, 0, DATA_KEY))
    write_dataset_csv(a.out, draw.data.x, draw.labels)
    side = a.out.with_suffix(a.out.suffix + ".json")
    side.write_text(json.dumps({"dataset": a.dataset, "seed": a.seed, "spec": spec.to_dict()}, indent=2) + "\n")
    print(f"wrote {draw.data.n} points to {a.out} (mixture parameters in {side})")
    return EXIT_OK


def cmd_enumerate(a) -> int:
    data = ingest_csv(a.input, a.labels, a.normalize)
    rep = enumerate_clusters(
        data, CandidateFamily(a.lmin, a.lmax), a.clusterer, a.criteria, _enum_config(a), a.seed, knee=a.knee,
    )
    write_enumeration(rep, a.out, _format(a))
    for key, curve in rep.curves.items():
        print(f"{key}: K_hat = {curve.k_hat}")
    return EXIT_OK


def cmd_bench(a) -> int:
    cfg = McConfig(
        mc=a.mc, seed=a.seed, dataset=a.dataset, gamma=a.gamma, nk=a.nk,
        input=str(a.input) if a.input else None, has_labels=a.labels, normalize=a.normalize,
        true_k=a.true_k, l_min=a.lmin, l_max=a.lmax, clusterer=a.clusterer, criteria=a.criteria,
        knee=a.knee, enum=_enum_config(a), workers=a.workers,
    )
    if cfg.dataset != "file":
        trial_dataset(cfg, 0)  # fail fast on bad generator sizes
    res = run_monte_carlo(cfg)
    report(res, a.out, _format(a))
    for key, m in res.summary().items():
        print(f"{key}: p_det={m['p_det']:.3f} p_under={m['p_under']:.3f} mae={m['mae']:.3f}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "enumerate": cmd_enumerate, "bench": cmd_bench}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
