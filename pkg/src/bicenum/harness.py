"""Dataset ingestion, Monte Carlo driver, detection metrics and report files."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike

from . import criteria as crit
from .clustering import DataSet
from .enumeration import CLUSTERERS, CandidateFamily, EnumConfig, EnumerationReport, enumerate_clusters, knee_point
from .errors import CurveTooShort, InputError, ParseError, ZeroMeanColumn
from .seeding import DATA_KEY, stream
from .synthdata import gen_data1, gen_data2

log = logging.getLogger(__name__)

NORMALIZATIONS = ("none", "mean")
GENERATORS = ("data1", "data2")
KNEE_SUFFIX = ":knee"


# ---------------------------------------------------------------- ingestion


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def normalize_mean(x: ArrayLike) -> np.ndarray:
    """Divide every column by its mean.

    Raises
    ------
    ZeroMeanColumn
        If some column mean is zero (or not finite).
    """
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=0)
    bad = np.flatnonzero(~np.isfinite(mu) | (mu == 0.0))
    if bad.size:
        raise ZeroMeanColumn(f"column {int(bad[0]) + 1} has zero mean; cannot mean-normalize")
    return x / mu


def ingest_csv(path: str | os.PathLike, has_labels: bool = False, normalize: str = "none") -> DataSet:
    """Read a rectangular numeric CSV into a :class:`DataSet`.

    A first row that is not fully numeric is taken as a header. With
    ``has_labels`` the last column holds class labels (any strings); they are
    stripped from the features and mapped to ``0 .. K-1`` in order of first
    appearance.

    Raises
    ------
    ParseError
        On ragged rows or a non-numeric feature cell; ``row`` and ``col`` are
        1-based file coordinates.
    ZeroMeanColumn
        With ``normalize="mean"`` when a column averages to zero.
    """
    if normalize not in NORMALIZATIONS:
        raise InputError(f"normalize must be one of {', '.join(NORMALIZATIONS)}")
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in row)]
    if not rows:
        raise ParseError(f"{path}: no data rows", row=None, col=None)
    n_feat_cells = len(rows[0][1]) - (1 if has_labels else 0)
    if rows and not all(_is_number(c) for c in rows[0][1][:n_feat_cells]):
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: header but no data rows", row=None, col=None)
    width = len(rows[0][1])
    r = width - (1 if has_labels else 0)
    if r < 1:
        raise ParseError(f"{path}: no feature columns", row=rows[0][0], col=None)
    x = np.empty((len(rows), r))
    raw_labels = []
    for k, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {width}", row=lineno, col=None)
        for j in range(r):
            try:
                x[k, j] = float(row[j])
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {row[j]!r} at row {lineno}, column {j + 1}", row=lineno, col=j + 1
                ) from None
            if not math.isfinite(x[k, j]):
                raise ParseError(f"{path}: non-finite value at row {lineno}, column {j + 1}", row=lineno, col=j + 1)
        if has_labels:
            raw_labels.append(row[-1].strip())
    labels = None
    if has_labels:
        codes: dict[str, int] = {}
        labels = np.array([codes.setdefault(v, len(codes)) for v in raw_labels], dtype=np.int64)
    if normalize == "mean":
        x = normalize_mean(x)
    return DataSet(x, labels, path.stem)


def write_dataset_csv(path: str | os.PathLike, x: ArrayLike, labels: ArrayLike | None = None) -> None:
    """Write ``f1,...,fr[,label]`` rows with full float precision."""
    x = np.asarray(x, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j + 1}" for j in range(x.shape[1])] + (["label"] if labels is not None else []))
        for i, row in enumerate(x):
            w.writerow([repr(float(v)) for v in row] + ([int(labels[i])] if labels is not None else []))


# ------------------------------------------------------------------ metrics


def _khats(khats) -> list:
    khats = list(khats)
    if not khats:
        raise InputError("need at least one estimate")
    return khats


def metric_p_det(khats, k: int) -> float:
    """Share of trials that selected exactly ``k``; ``None`` entries count as misses."""
    khats = _khats(khats)
    return sum(1 for v in khats if v is not None and v == k) / len(khats)


def metric_p_under(khats, k: int) -> float:
    khats = _khats(khats)
    return sum(1 for v in khats if v is not None and v < k) / len(khats)


def metric_p_over(khats, k: int) -> float:
    khats = _khats(khats)
    return sum(1 for v in khats if v is not None and v > k) / len(khats)


def metric_mae(khats, k: int) -> float:
    """Mean ``|k - khat|`` over the trials that produced an estimate (NaN if none did)."""
    khats = _khats(khats)
    valid = [v for v in khats if v is not None]
    if not valid:
        return float("nan")
    return sum(abs(k - v) for v in valid) / len(valid)


# ------------------------------------------------------------ configuration


@dataclass(frozen=True)
class McConfig:
    """Everything that determines a Monte Carlo run.

    ``dataset`` is a generator name (``data1``, ``data2``) or ``file``. For
    generators every trial draws a fresh dataset; for files the data stay fixed
    and only the initialization varies between trials. ``l_max=None`` uses
    ``2K`` (capped at ``N - 1``).
    """

    mc: int
    seed: int = 0
    dataset: str = "data1"
    gamma: int = 1
    nk: int = 100
    input: str | None = None
    has_labels: bool = True
    normalize: str = "none"
    true_k: int | None = None
    l_min: int = 1
    l_max: int | None = None
    clusterer: str = "em"
    criteria: tuple[str, ...] = (crit.BIC_N, crit.BIC_O)
    knee: bool = False
    enum: EnumConfig = field(default_factory=EnumConfig)
    workers: int = 1

    def __post_init__(self):
        if self.mc < 1:
            raise InputError("mc must be >= 1")
        if self.dataset not in GENERATORS + ("file",):
            raise InputError(f"dataset must be data1, data2 or file, got {self.dataset!r}")
        if self.dataset == "file" and not self.input:
            raise InputError("dataset 'file' needs an input path")
        if self.clusterer not in CLUSTERERS:
            raise InputError(f"unknown clusterer {self.clusterer!r}")
        if self.normalize not in NORMALIZATIONS:
            raise InputError(f"normalize must be one of {', '.join(NORMALIZATIONS)}")
        object.__setattr__(self, "criteria", tuple(crit.criterion_id(c) for c in self.criteria))
        if not self.criteria:
            raise InputError("no criteria requested")
        if self.workers < 1:
            raise InputError("workers must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["criteria"] = list(self.criteria)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        d = dict(d)
        d["criteria"] = tuple(d["criteria"])
        d["enum"] = EnumConfig(**d["enum"])
        return cls(**d)


@dataclass
class McResult:
    """Aggregated outcome; ``khats[key][i]`` is trial ``i``'s estimate or ``None``.

    Keys are criterion ids, plus ``<id>:knee`` for knee-point selections.
    """

    config: dict
    true_k: int
    l_range: tuple[int, int]
    khats: dict[str, list]
    wall_clock: float = 0.0

    @property
    def keys(self) -> list[str]:
        return list(self.khats)

    def histogram(self, key: str) -> dict[int, int]:
        lo, hi = self.l_range
        counts = {l: 0 for l in range(lo, hi + 1)}
        for v in self.khats[key]:
            if v is not None:
                counts[v] = counts.get(v, 0) + 1
        return counts

    def invalid(self, key: str) -> int:
        return sum(1 for v in self.khats[key] if v is None)

    def p_det(self, key: str) -> float:
        return metric_p_det(self.khats[key], self.true_k)

    def p_under(self, key: str) -> float:
        return metric_p_under(self.khats[key], self.true_k)

    def p_over(self, key: str) -> float:
        return metric_p_over(self.khats[key], self.true_k)

    def mae(self, key: str) -> float:
        return metric_mae(self.khats[key], self.true_k)

    def summary(self) -> dict[str, dict[str, float]]:
        return {
            k: {"p_det": self.p_det(k), "p_under": self.p_under(k), "p_over": self.p_over(k), "mae": self.mae(k)}
            for k in self.keys
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "true_k": self.true_k,
            "l_range": list(self.l_range),
            "khats": self.khats,
            "wall_clock": self.wall_clock,
            "histograms": {k: {str(l): c for l, c in self.histogram(k).items()} for k in self.keys},
            "invalid": {k: self.invalid(k) for k in self.keys},
            "summary": self.summary(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "McResult":
        return cls(d["config"], int(d["true_k"]), tuple(d["l_range"]), {k: list(v) for k, v in d["khats"].items()},
                   float(d["wall_clock"]))

    def __eq__(self, other):
        if not isinstance(other, McResult):
            return NotImplemented
        return (self.config == other.config and self.true_k == other.true_k
                and tuple(self.l_range) == tuple(other.l_range) and self.khats == other.khats
                and self.wall_clock == other.wall_clock)


# ------------------------------------------------------------------ driver


def _load_fixed(cfg: McConfig) -> DataSet:
    return ingest_csv(cfg.input, cfg.has_labels, cfg.normalize)


def trial_dataset(cfg: McConfig, i: int, fixed: DataSet | None = None) -> DataSet:
    """Dataset for trial ``i``: a fresh draw from stream ``(seed, i, 0)`` or the fixed file."""
    if cfg.dataset == "file":
        return fixed if fixed is not None else _load_fixed(cfg)
    rng = stream(cfg.seed, i, DATA_KEY)
    draw = gen_data1(cfg.gamma, rng) if cfg.dataset == "data1" else gen_data2(cfg.nk, rng)
    return draw.data


def _true_k(cfg: McConfig, fixed: DataSet | None) -> int:
    if cfg.true_k is not None:
        return cfg.true_k
    if cfg.dataset == "data1":
        return 3
    if cfg.dataset == "data2":
        return 10
    if fixed is not None and fixed.true_k is not None:
        return fixed.true_k
    raise InputError("true K unknown: pass labels or an explicit true_k")


def _family(cfg: McConfig, k: int, n: int) -> CandidateFamily:
    hi = cfg.l_max if cfg.l_max is not None else CandidateFamily.around(k, n).l_max
    return CandidateFamily(cfg.l_min, hi)


def run_trial(cfg: McConfig, i: int, k: int, fixed: DataSet | None = None) -> dict[str, int | None]:
    """Estimates of one trial for every criterion (and knee key)."""
    data = trial_dataset(cfg, i, fixed)
    report = enumerate_clusters(
        data, _family(cfg, k, data.n), cfg.clusterer, cfg.criteria, cfg.enum, cfg.seed,
        knee=False, strict=False, key=(i,),
    )
    out: dict[str, int | None] = {}
    for c in cfg.criteria:
        curve = report.curves[c]
        out[c] = curve.k_argmax
        if cfg.knee:
            try:
                out[c + KNEE_SUFFIX] = knee_point(curve)
            except CurveTooShort:
                out[c + KNEE_SUFFIX] = None
    return out


def _run_chunk(args):
    cfg, idx, k = args
    fixed = _load_fixed(cfg) if cfg.dataset == "file" else None
    return [(i, run_trial(cfg, i, k, fixed)) for i in idx]


def run_monte_carlo(cfg: McConfig) -> McResult:
    """Run ``cfg.mc`` independent trials and collect their estimates.

    Trial ``i`` depends only on ``(cfg, i)``, so results are identical for any
    worker count; aggregation happens in trial order.
    """
    t0 = time.perf_counter()
    fixed = _load_fixed(cfg) if cfg.dataset == "file" else None
    k = _true_k(cfg, fixed)
    n = fixed.n if fixed is not None else trial_dataset(cfg, 0).n
    fam = _family(cfg, k, n)
    if cfg.workers == 1:
        rows = [(i, run_trial(cfg, i, k, fixed)) for i in range(cfg.mc)]
    else:
        chunks = [list(range(w, cfg.mc, cfg.workers)) for w in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = [r for part in pool.map(_run_chunk, [(cfg, c, k) for c in chunks if c]) for r in part]
    rows.sort(key=lambda t: t[0])
    keys = list(rows[0][1])
    khats = {key: [row[key] for _, row in rows] for key in keys}
    return McResult(cfg.to_dict(), k, (fam.l_min, fam.l_max), khats, time.perf_counter() - t0)


# ------------------------------------------------------------------ reports


def _fmt(v: float) -> str:
    return repr(float(v))


def report(result: McResult, path: str | os.PathLike, fmt: str = "csv") -> None:
    """Write a Monte Carlo result.

    CSV holds two blocks: ``criterion,l,selection_count`` (including an
    ``invalid`` row per criterion), then ``criterion,p_det,p_under,mae``. JSON
    holds the full result and round-trips through :func:`load_result`.
    """
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(result.to_dict(), indent=2) + "\n")
        return
    if fmt != "csv":
        raise InputError(f"unknown format {fmt!r}")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "l", "selection_count"])
        for key in result.keys:
            for l, c in result.histogram(key).items():
                w.writerow([key, l, c])
            w.writerow([key, "invalid", result.invalid(key)])
        w.writerow([])
        w.writerow(["criterion", "p_det", "p_under", "mae"])
        for key in result.keys:
            w.writerow([key, _fmt(result.p_det(key)), _fmt(result.p_under(key)), _fmt(result.mae(key))])


def load_result(path: str | os.PathLike) -> McResult:
    return McResult.from_dict(json.loads(Path(path).read_text()))


def curve_rows(rep: EnumerationReport) -> list[dict]:
    """One row per (criterion, l) with total, fidelity and penalty."""
    rows = []
    for key, curve in rep.curves.items():
        for s in curve.scores:
            rows.append({
                "criterion": key, "l": s.l, "total": s.total, "data_fidelity": s.data_fidelity,
                "penalty": s.penalty, "valid": s.valid, "counts": list(s.counts), "reason": s.reason,
            })
    return rows


def write_enumeration(rep: EnumerationReport, path: str | os.PathLike, fmt: str = "csv") -> None:
    """Write a single enumeration run: per-l curve values and the selections."""
    path = Path(path)
    rows = curve_rows(rep)
    selected = {k: {"k_hat": c.k_hat, "k_argmax": c.k_argmax, "k_knee": c.k_knee, "rule": c.rule}
                for k, c in rep.curves.items()}
    if fmt == "json":
        doc = {
            "dataset": rep.dataset, "seed": rep.seed, "clusterer": rep.clusterer,
            "l_min": rep.family.l_min, "l_max": rep.family.l_max,
            "selected": selected, "curves": rows,
        }
        path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
        return
    if fmt != "csv":
        raise InputError(f"unknown format {fmt!r}")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "l", "total", "data_fidelity", "penalty", "valid"])
        for row in rows:
            w.writerow([row["criterion"], row["l"], _fmt(row["total"]), _fmt(row["data_fidelity"]),
                        _fmt(row["penalty"]), int(row["valid"])])
        w.writerow([])
        w.writerow(["criterion", "k_hat", "rule"])
        for k, s in selected.items():
            w.writerow([k, "" if s["k_hat"] is None else s["k_hat"], s["rule"]])


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not serializable: {type(o).__name__}")
