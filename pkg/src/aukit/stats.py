"""Group-level intensity statistics: per-timepoint mean curves, the overall
mean-intensity comparison table, and two-sample significance tests.

Recordings have different lengths, so curves are averaged on a normalized
time axis after linear resampling. Aggregation always iterates participants
in sorted-id order so results do not depend on manifest ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import stdtr

from .emotions import EmotionDefinition, default_definitions, emotion_series
from .errors import (
    EmptyGroup,
    EmptyInput,
    InsufficientSamples,
    UnknownSignal,
)
from .ingest import DEPRESSED, HEALTHY, AUFrameSeries, Cohort, normalize_au_id

WELCH_T = "welch_t"
MANN_WHITNEY_U = "mann_whitney_u"


def resample_series(values, T: int) -> np.ndarray:
    """Linearly resample a series to length T on normalized time [0, 1].

    Endpoints are preserved; a length-1 input yields a constant series.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("expected a 1-D series")
    if values.size == 0:
        raise EmptyInput("cannot resample an empty series")
    if T < 1:
        raise ValueError("target length must be >= 1")
    if values.size == 1:
        return np.full(T, values[0])
    src = np.linspace(0.0, 1.0, values.size)
    dst = np.linspace(0.0, 1.0, T)
    return np.interp(dst, src, values)


def participant_mean(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("mean of an empty series")
    return float(values.mean())


def signal_values(
    series: AUFrameSeries,
    signal: str,
    definitions: dict[str, EmotionDefinition] | None = None,
) -> np.ndarray:
    """Resolve a signal name to a per-frame 1-D series.

    Signals are either AU identifiers (any spelling normalize_au_id accepts)
    or emotion names from the registry. A directly requested AU that the
    recording does not carry is an error, unlike emotion components, which
    zero-fill.
    """
    definitions = definitions if definitions is not None else default_definitions()
    try:
        au = normalize_au_id(signal)
    except ValueError:
        au = None
    if au is not None:
        if not series.has_au(au):
            raise UnknownSignal(
                f"AU {au!r} not present in recording {series.participant_id!r}"
            )
        return series.column(au)
    if signal in definitions:
        return emotion_series(series, definitions[signal]).values
    raise UnknownSignal(f"{signal!r} is neither an AU id nor a defined emotion")


@dataclass(eq=False)
class GroupCurve:
    signal_name: str
    t: np.ndarray
    mean_a: np.ndarray
    sd_a: np.ndarray
    mean_b: np.ndarray
    sd_b: np.ndarray
    overall_mean_a: float
    overall_mean_b: float
    n_a: int
    n_b: int
    standardized: bool


@dataclass(frozen=True)
class MeanIntensityRow:
    signal: str
    depressed_mean: float
    healthy_mean: float
    difference: float
    p_welch: float
    p_mwu: float


@dataclass(eq=False)
class MeanIntensityTable:
    rows: list[MeanIntensityRow]
    standardized: bool

    def row(self, signal: str) -> MeanIntensityRow:
        for r in self.rows:
            if r.signal == signal:
                return r
        raise KeyError(signal)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    n_a: int
    n_b: int
    df: float | None = None
    degenerate: bool = False


def _group_signals(cohort, signal, definitions):
    """Per-group raw signal arrays, participants sorted by id."""
    groups = {}
    for label in (DEPRESSED, HEALTHY):
        members = sorted(cohort.members(label), key=lambda s: s.participant_id)
        if not members:
            raise EmptyGroup(f"no {label} participants in cohort")
        groups[label] = [
            (s.participant_id, signal_values(s, signal, definitions))
            for s in members
        ]
    return groups[DEPRESSED], groups[HEALTHY]


def _pooled_standardizer(signal_arrays):
    pooled = np.concatenate(signal_arrays)
    mean = float(pooled.mean())
    sd = float(pooled.std())
    return mean, sd


def _standardize(values, mean, sd):
    # sd == 0 means a globally constant signal; center only.
    if sd == 0.0:
        return values - mean
    return (values - mean) / sd


def group_mean_curve(
    cohort: Cohort,
    signal: str,
    T: int = 900,
    standardize: bool = False,
    definitions: dict[str, EmotionDefinition] | None = None,
) -> GroupCurve:
    """Per-timepoint mean and sd of a signal for each group.

    Group a is Depressed, group b Healthy; SubClinical participants are
    ignored unless merged. With ``standardize`` each series is z-scored by
    the pooled all-participant mean/sd before resampling and aggregation.
    """
    dep, healthy = _group_signals(cohort, signal, definitions)
    if standardize:
        mean, sd = _pooled_standardizer([v for _, v in dep + healthy])
        dep = [(pid, _standardize(v, mean, sd)) for pid, v in dep]
        healthy = [(pid, _standardize(v, mean, sd)) for pid, v in healthy]

    def aggregate(group):
        resampled = np.stack([resample_series(v, T) for _, v in group])
        mean = resampled.mean(axis=0)
        if resampled.shape[0] > 1:
            sd = resampled.std(axis=0, ddof=1)
        else:
            sd = np.zeros(T)
        overall = float(np.mean([v.mean() for v in resampled]))
        return mean, sd, overall

    mean_a, sd_a, overall_a = aggregate(dep)
    mean_b, sd_b, overall_b = aggregate(healthy)
    return GroupCurve(
        signal_name=signal,
        t=np.linspace(0.0, 1.0, T),
        mean_a=mean_a,
        sd_a=sd_a,
        mean_b=mean_b,
        sd_b=sd_b,
        overall_mean_a=overall_a,
        overall_mean_b=overall_b,
        n_a=len(dep),
        n_b=len(healthy),
        standardized=standardize,
    )


def group_participant_means(
    cohort: Cohort,
    signal: str,
    standardize: bool = False,
    definitions: dict[str, EmotionDefinition] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-participant mean intensity samples (depressed, healthy)."""
    dep, healthy = _group_signals(cohort, signal, definitions)
    if standardize:
        mean, sd = _pooled_standardizer([v for _, v in dep + healthy])
        dep = [(pid, _standardize(v, mean, sd)) for pid, v in dep]
        healthy = [(pid, _standardize(v, mean, sd)) for pid, v in healthy]
    a = np.array([participant_mean(v) for _, v in dep])
    b = np.array([participant_mean(v) for _, v in healthy])
    return a, b


def mean_intensity_table(
    cohort: Cohort,
    signals: list[str],
    standardize: bool = False,
    definitions: dict[str, EmotionDefinition] | None = None,
) -> MeanIntensityTable:
    """Overall mean intensity per group with difference and test p-values.

    Group means weight participants equally (mean of per-participant means);
    difference is depressed - healthy. Welch and Mann-Whitney p-values
    compare the per-participant mean samples.
    """
    rows = []
    for signal in signals:
        a, b = group_participant_means(cohort, signal, standardize, definitions)
        dep_mean = float(a.mean())
        healthy_mean = float(b.mean())
        p_welch = (
            two_sample_test(a, b, WELCH_T).p_value
            if min(a.size, b.size) >= 2
            else float("nan")
        )
        p_mwu = two_sample_test(a, b, MANN_WHITNEY_U).p_value
        rows.append(
            MeanIntensityRow(
                signal=signal,
                depressed_mean=dep_mean,
                healthy_mean=healthy_mean,
                difference=dep_mean - healthy_mean,
                p_welch=p_welch,
                p_mwu=p_mwu,
            )
        )
    return MeanIntensityTable(rows=rows, standardized=standardize)


# --- two-sample tests -------------------------------------------------------


def _welch(a: np.ndarray, b: np.ndarray) -> TestResult:
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise InsufficientSamples("welch_t needs at least 2 samples per group")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    se2 = va / na + vb / nb
    if se2 == 0.0:
        # Both samples constant. Equal means -> no evidence (p = 1, flagged);
        # different constant means -> infinitely strong evidence.
        if diff == 0.0:
            return TestResult(0.0, 1.0, WELCH_T, na, nb, df=float(na + nb - 2),
                              degenerate=True)
        return TestResult(math.copysign(math.inf, diff), 0.0, WELCH_T, na, nb,
                          df=float(na + nb - 2))
    t = diff / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TestResult(float(t), min(p, 1.0), WELCH_T, na, nb, df=float(df))


@lru_cache(maxsize=128)
def _u_counts(n: int, m: int) -> np.ndarray:
    """Exact null distribution of the Mann-Whitney U statistic.

    counts[u] = number of rank arrangements with U = u; total is C(n+m, n).
    Counts stay well below 2**53 for n*m <= 400, so float64 is exact.
    """
    counts = np.zeros(1)
    counts[0] = 1.0
    window = np.ones(m + 1)
    for _ in range(n):
        counts = np.convolve(counts, window)
    assert counts.size == n * m + 1
    return counts


def _mann_whitney(a: np.ndarray, b: np.ndarray) -> TestResult:
    na, nb = a.size, b.size
    if na < 1 or nb < 1:
        raise InsufficientSamples("mann_whitney_u needs non-empty samples")
    # U for sample a, counting ties as half.
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    u_a = float(gt) + 0.5 * float(eq)
    u_b = na * nb - u_a

    pooled = np.concatenate([a, b])
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool((tie_counts > 1).any())

    if not has_ties and na * nb <= 400:
        counts = _u_counts(na, nb)
        total = counts.sum()
        u_min = int(round(min(u_a, u_b)))
        p = 2.0 * counts[: u_min + 1].sum() / total
        return TestResult(u_a, min(p, 1.0), MANN_WHITNEY_U, na, nb)

    n = na + nb
    mu = na * nb / 2.0
    tie_term = float(((tie_counts**3 - tie_counts).sum())) / (n * (n - 1))
    sigma2 = na * nb / 12.0 * ((n + 1) - tie_term)
    if sigma2 <= 0.0:
        # All pooled values identical.
        return TestResult(u_a, 1.0, MANN_WHITNEY_U, na, nb, degenerate=True)
    z = (u_a - mu) / math.sqrt(sigma2)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return TestResult(u_a, min(p, 1.0), MANN_WHITNEY_U, na, nb)


def two_sample_test(a, b, method: str = WELCH_T) -> TestResult:
    """Two-sided comparison of two independent samples.

    welch_t: unequal-variance t statistic with Welch-Satterthwaite degrees of
    freedom. mann_whitney_u: exact null distribution when n*m <= 400 and the
    pooled sample is tie-free, otherwise the normal approximation with tie
    correction. Both are invariant under swapping the samples.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if method == WELCH_T:
        return _welch(a, b)
    if method == MANN_WHITNEY_U:
        return _mann_whitney(a, b)
    raise ValueError(f"unknown method {method!r}")


# --- CSV emission -----------------------------------------------------------


def mean_intensity_csv(table: MeanIntensityTable) -> str:
    lines = ["signal,depressed,healthy,difference,p_welch,p_mwu"]
    for r in table.rows:
        lines.append(
            f"{r.signal},{r.depressed_mean!r},{r.healthy_mean!r},"
            f"{r.difference!r},{r.p_welch!r},{r.p_mwu!r}"
        )
    return "\n".join(lines) + "\n"


def group_curve_csv(curve: GroupCurve) -> str:
    lines = ["t,mean_a,sd_a,mean_b,sd_b"]
    for i in range(curve.t.size):
        lines.append(
            f"{curve.t[i]!r},{curve.mean_a[i]!r},{curve.sd_a[i]!r},"
            f"{curve.mean_b[i]!r},{curve.sd_b[i]!r}"
        )
    return "\n".join(lines) + "\n"
