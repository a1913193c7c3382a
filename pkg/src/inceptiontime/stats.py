"""Multi-classifier comparison over many datasets.

Friedman omnibus test, pairwise Wilcoxon signed-rank tests with Holm's
step-down correction, average ranks, cliques of mutually indistinguishable
classifiers and win/tie/loss counts. All functions are pure.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import chdtrc

from .errors import ConfigError, DataFormatError

REPORT_SCHEMA_VERSION = 1
EXACT_MAX_N = 25


# --------------------------------------------------------------------------- inputs


@dataclass(frozen=True)
class AccuracyMatrix:
    """Rows are datasets, columns are classifiers."""

    classifiers: tuple[str, ...]
    datasets: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape != (len(self.datasets), len(self.classifiers)):
            raise ConfigError(f"values of shape {values.shape} do not match "
                              f"{len(self.datasets)} datasets x {len(self.classifiers)} classifiers")
        if len(self.classifiers) < 2:
            raise ConfigError("at least two classifiers are needed for a comparison")
        if len(self.datasets) < 1:
            raise ConfigError("at least one dataset is needed")
        if len(set(self.classifiers)) != len(self.classifiers):
            raise ConfigError(f"duplicate classifier names in {self.classifiers}")
        bad = np.argwhere(~((values >= 0) & (values <= 1)))
        if len(bad):
            r, c = bad[0]
            raise ConfigError(f"accuracy {values[r, c]} for {self.classifiers[c]} on "
                              f"{self.datasets[r]} is outside [0, 1]")

    @property
    def k(self) -> int:
        return len(self.classifiers)

    @property
    def n_datasets(self) -> int:
        return len(self.datasets)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.classifiers.index(name)]

    @classmethod
    def from_csv(cls, path) -> "AccuracyMatrix":
        """Header row of classifier names (first cell ignored), then one row per dataset.

        Errors report 1-based file coordinates, counting the header as row 1.
        """
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        rows = [r for r in rows if any(cell.strip() for cell in r)]
        if not rows:
            raise DataFormatError(f"{path} is empty")
        header = [c.strip() for c in rows[0]]
        names = header[1:]
        if len(names) < 2:
            raise DataFormatError(f"{path}: need at least two classifier columns", row=1)
        for j, name in enumerate(names, start=2):
            if not name:
                raise DataFormatError(f"{path}: empty classifier name", row=1, column=j)
            if names.index(name) != j - 2:
                raise DataFormatError(f"{path}: duplicate classifier {name!r}", row=1, column=j)
        datasets, values = [], []
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise DataFormatError(f"{path}: expected {len(header)} cells, found {len(row)}",
                                      row=i, column=min(len(row), len(header)) + 1)
            datasets.append(row[0].strip())
            parsed = []
            for j, cell in enumerate(row[1:], start=2):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(f"{path}: {cell!r} is not a number",
                                          row=i, column=j) from None
                if not 0 <= v <= 1:
                    raise DataFormatError(f"{path}: accuracy {v} outside [0, 1]",
                                          row=i, column=j)
                parsed.append(v)
            values.append(parsed)
        if not datasets:
            raise DataFormatError(f"{path}: no dataset rows", row=2)
        return cls(tuple(names), tuple(datasets), np.array(values))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", *self.classifiers])
            for name, row in zip(self.datasets, self.values):
                w.writerow([name, *(repr(float(v)) for v in row)])
        return path


def _values(m) -> np.ndarray:
    if isinstance(m, AccuracyMatrix):
        return m.values
    v = np.asarray(m, dtype=np.float64)
    if v.ndim != 2:
        raise ConfigError(f"expected a (datasets, classifiers) matrix, got shape {v.shape}")
    return v


# --------------------------------------------------------------------------- ranks


def _midranks(x: np.ndarray) -> np.ndarray:
    """Ascending ranks starting at 1; tied values share the mean of their ranks."""
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _tie_sizes(x: np.ndarray) -> np.ndarray:
    _, counts = np.unique(x, return_counts=True)
    return counts


def rank_matrix(m) -> np.ndarray:
    """Per-dataset ranks, 1 for the most accurate classifier."""
    v = _values(m)
    return np.vstack([_midranks(-row) for row in v])


def average_ranks(m) -> np.ndarray:
    return rank_matrix(m).mean(axis=0)


# --------------------------------------------------------------------------- tests


class FriedmanResult(NamedTuple):
    statistic: float
    pvalue: float
    method: str


def friedman_test(m) -> FriedmanResult:
    """Friedman chi-square with the tie correction, k-1 degrees of freedom.

    With two classifiers the chi-square approximation is not used: the
    p-value is the Wilcoxon signed-rank p of the two columns.
    """
    v = _values(m)
    n, k = v.shape
    if k < 2:
        raise ConfigError(f"Friedman test needs at least 2 classifiers, got {k}")
    if n < 1:
        raise ConfigError("Friedman test needs at least one dataset")
    ranks = rank_matrix(v)
    rank_sums = ranks.sum(axis=0)
    ties = sum(float(np.sum(t ** 3 - t)) for t in map(_tie_sizes, v))
    correction = 1.0 - ties / (n * k * (k * k - 1))
    if correction <= 0:
        statistic = 0.0
    else:
        raw = 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums ** 2)) - 3.0 * n * (k + 1)
        statistic = max(raw / correction, 0.0)
    if k == 2:
        return FriedmanResult(statistic, wilcoxon_signed_rank(v[:, 0], v[:, 1]).pvalue,
                              "wilcoxon")
    pvalue = 1.0 if statistic == 0 else float(chdtrc(k - 1, statistic))
    return FriedmanResult(statistic, pvalue, "chi2")


class WilcoxonResult(NamedTuple):
    statistic: float  # sum of ranks of positive differences
    pvalue: float
    n: int  # non-zero differences used
    method: str  # "exact", "normal" or "all-zero"
    all_zero: bool


def signed_rank_null(doubled_ranks: Sequence[int]) -> np.ndarray:
    """Exact null distribution of the doubled positive-rank sum.

    Entry ``s`` is the probability that the positive ranks sum to ``s / 2``
    when every sign is an independent fair coin. Built by convolving one
    two-point distribution per rank, so ties (half-integer midranks) are exact.
    """
    total = int(sum(doubled_ranks))
    dist = np.zeros(total + 1, dtype=np.float64)
    dist[0] = 1.0
    reach = 0
    for r in doubled_ranks:
        r = int(r)
        shifted = dist[:reach + 1].copy()
        dist[:reach + 1] *= 0.5
        dist[r:r + reach + 1] += 0.5 * shifted
        reach += r
    return dist


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Two-sided signed-rank test of ``a - b`` with zero differences dropped.

    Exact up to ``exact_max_n`` non-zero differences, otherwise the normal
    approximation with tie-corrected variance and a 0.5 continuity correction.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ConfigError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "all-zero", True)
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(np.int64)
        dist = signed_rank_null(doubled)
        s = int(round(2 * w_plus))
        lower = dist[:s + 1].sum()
        upper = dist[s:].sum()
        p = min(1.0, 2.0 * min(lower, upper))
        return WilcoxonResult(w_plus, float(p), n, "exact", False)
    mean = n * (n + 1) / 4.0
    ties = _tie_sizes(np.abs(d))
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties ** 3 - ties)) / 48.0
    if var <= 0:
        return WilcoxonResult(w_plus, 1.0, n, "normal", False)
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return WilcoxonResult(w_plus, float(math.erfc(z / math.sqrt(2))), n, "normal", False)


def holm_correction(pvalues: Sequence[float], alpha: float = 0.05) -> np.ndarray:
    """Step-down decisions, True where the hypothesis is rejected, in input order."""
    p = np.asarray(pvalues, dtype=np.float64).ravel()
    if np.any((p < 0) | (p > 1) | np.isnan(p)):
        raise ConfigError("p-values must lie in [0, 1]")
    m = len(p)
    decisions = np.zeros(m, dtype=bool)
    for i, idx in enumerate(np.argsort(p, kind="mergesort")):
        if p[idx] > alpha / (m - i):
            break
        decisions[idx] = True
    return decisions


def cliques(significant) -> list[tuple[int, ...]]:
    """Maximal sets of classifiers that are pairwise not significantly different.

    ``significant`` is a symmetric boolean (k, k) matrix; the diagonal is
    ignored. Returns sorted index tuples, ordered lexicographically.
    """
    s = np.asarray(significant, dtype=bool)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ConfigError(f"decision matrix must be square, got {s.shape}")
    if not np.array_equal(s, s.T):
        raise ConfigError("decision matrix must be symmetric")
    k = s.shape[0]
    adjacent = [{j for j in range(k) if j != i and not s[i, j]} for i in range(k)]
    found: list[tuple[int, ...]] = []

    def expand(r: set, p: set, x: set) -> None:
        if not p and not x:
            found.append(tuple(sorted(r)))
            return
        pivot = max(p | x, key=lambda u: len(adjacent[u] & p))
        for v in sorted(p - adjacent[pivot]):
            expand(r | {v}, p & adjacent[v], x & adjacent[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(range(k)), set())
    return sorted(found)


def win_tie_loss(a, b, tol: float = 0.0) -> tuple[int, int, int]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ConfigError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    d = a - b
    ties = np.abs(d) <= tol
    wins = int(np.sum((d > 0) & ~ties))
    losses = int(np.sum((d < 0) & ~ties))
    return wins, int(np.sum(ties)), losses


# --------------------------------------------------------------------------- report


@dataclass
class PairwiseResult:
    a: str
    b: str
    statistic: float
    pvalue: float
    method: str
    significant: bool
    wins: int
    ties: int
    losses: int


@dataclass
class ComparisonReport:
    classifiers: list[str]
    n_datasets: int
    alpha: float
    friedman_statistic: float
    friedman_pvalue: float
    friedman_method: str
    differences_found: bool
    average_ranks: dict[str, float]
    pairwise: list[PairwiseResult] = field(default_factory=list)
    cliques: list[list[str]] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA_VERSION

    @property
    def summary(self) -> str:
        if not self.differences_found:
            return "no significant differences"
        return f"{len(self.cliques)} cliques"

    def pair(self, a: str, b: str) -> PairwiseResult:
        for p in self.pairwise:
            if {p.a, p.b} == {a, b}:
                return p
        raise KeyError((a, b))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise DataFormatError(f"unsupported report schema {d.get('schema_version')}")
        d = dict(d)
        d["pairwise"] = [PairwiseResult(**p) for p in d.get("pairwise", [])]
        return cls(**d)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "ComparisonReport":
        text = source if isinstance(source, str) and source.lstrip().startswith("{") \
            else Path(source).read_text()
        return cls.from_dict(json.loads(text))

    def ranks_csv(self, path) -> Path:
        """One row per classifier: average rank and the cliques it belongs to.

        Clique ids index ``cliques`` in this report (0-based, ';'-separated).
        """
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["classifier", "average_rank", "cliques"])
            for name in sorted(self.classifiers, key=lambda c: self.average_ranks[c]):
                ids = [str(i) for i, cl in enumerate(self.cliques) if name in cl]
                w.writerow([name, repr(self.average_ranks[name]), ";".join(ids)])
        return path

    def pairwise_csv(self, path) -> Path:
        path = Path(path)
        names = list(PairwiseResult.__dataclass_fields__)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for p in self.pairwise:
                w.writerow([getattr(p, n) for n in names])
        return path


def cd_report(m: AccuracyMatrix, alpha: float = 0.05, tie_tol: float = 0.0) -> ComparisonReport:
    """Full comparison protocol.

    Pairwise Wilcoxon p-values are always reported; they only count as
    significant when the Friedman test rejects at ``alpha`` and the pair
    survives Holm's correction over all k(k-1)/2 pairs.
    """
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    v, names, k = m.values, list(m.classifiers), m.k
    fr = friedman_test(m)
    gate = fr.pvalue < alpha
    pairs = list(combinations(range(k), 2))
    tests = [wilcoxon_signed_rank(v[:, i], v[:, j]) for i, j in pairs]
    decisions = holm_correction([t.pvalue for t in tests], alpha) if gate \
        else np.zeros(len(pairs), dtype=bool)
    significant = np.zeros((k, k), dtype=bool)
    pairwise = []
    for (i, j), t, dec in zip(pairs, tests, decisions):
        significant[i, j] = significant[j, i] = bool(dec)
        w, ti, lo = win_tie_loss(v[:, i], v[:, j], tie_tol)
        pairwise.append(PairwiseResult(names[i], names[j], t.statistic, t.pvalue, t.method,
                                       bool(dec), w, ti, lo))
    ranks = average_ranks(v)
    groups = [[names[i] for i in c] for c in cliques(significant)]
    return ComparisonReport(
        classifiers=names, n_datasets=m.n_datasets, alpha=alpha,
        friedman_statistic=fr.statistic, friedman_pvalue=fr.pvalue, friedman_method=fr.method,
        differences_found=bool(significant.any()),
        average_ranks={n: float(r) for n, r in zip(names, ranks)},
        pairwise=pairwise, cliques=groups)
