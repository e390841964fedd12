"""Permutation clustering tests: does a trait cluster across network distance
beyond what chance alone would produce?

The observed statistic at geodesic distance d compares trait-observed nodes
in ordered (ego, alter) pairs exactly d steps apart: a risk ratio
P(ego has trait | alter has it) / P(ego has trait | alter lacks it), or a
Pearson correlation for continuous traits. The null distribution comes from
uniformly shuffling the trait assignment across observed nodes, which keeps
the topology and the trait prevalence exactly fixed. Inference is based on
the percentiles of observed-minus-null; an alternative convention (the null
percentile range itself) is available behind a flag and yields the same
significance calls.

Nodes without an observed trait stay in the graph, so distances may pass
through them, but they never enter pair counts.
"""

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
import scipy.linalg

from .errors import CollinearityError, DataError
from .panel import NetworkSnapshot, Panel, geodesic_distances
from .seeds import spawn_rng

DEFAULT_REPLICATES = 1000

# Replicate blocks are sized so the pair-value matrices stay near this many
# elements; large graphs fall back to more, smaller blocks.
_BLOCK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class RiskRatioResult:
    """Observed association at one distance, with the pair counts behind it."""

    rr: Optional[float]
    n_has: int
    n_lacks: int
    defined: bool


@dataclass
class DistanceResult:
    """Test outcome at one geodesic distance.

    ``null_values`` always has exactly ``replicates`` entries; replicates
    where the statistic was undefined hold NaN and are counted in
    ``n_undefined_null`` rather than silently dropped.
    """

    distance: int
    n_pairs: int
    n_pairs_alter_has: int
    n_pairs_alter_lacks: int
    observed: Optional[float]
    pct_increase: Optional[float]
    null_values: np.ndarray
    n_undefined_null: int
    ci_low: Optional[float]
    ci_high: Optional[float]
    significant: bool
    positive: bool

    @property
    def defined(self) -> bool:
        return self.observed is not None


@dataclass
class ClusterTestResult:
    trait: str
    wave: int
    statistic: str
    ci_mode: str
    replicates: int
    seed: int
    distances: tuple = ()

    def at(self, d: int) -> DistanceResult:
        for entry in self.distances:
            if entry.distance == d:
                return entry
        raise KeyError(d)

    def to_dict(self) -> dict:
        return {
            "trait": self.trait,
            "wave": self.wave,
            "statistic": self.statistic,
            "ci_mode": self.ci_mode,
            "replicates": self.replicates,
            "seed": self.seed,
            "reach": reach(self),
            "distances": [
                {
                    "distance": e.distance,
                    "n_pairs": e.n_pairs,
                    "n_pairs_alter_has": e.n_pairs_alter_has,
                    "n_pairs_alter_lacks": e.n_pairs_alter_lacks,
                    "observed": e.observed,
                    "pct_increase": e.pct_increase,
                    "ci_low": e.ci_low,
                    "ci_high": e.ci_high,
                    "significant": e.significant,
                    "positive": e.positive,
                    "n_undefined_null": e.n_undefined_null,
                    "null_values": [
                        None if math.isnan(v) else v for v in e.null_values
                    ],
                }
                for e in self.distances
            ],
        }

    def summary_rows(self):
        """One flat row per distance, for the CSV summary."""
        rows = []
        for e in self.distances:
            rows.append(
                {
                    "distance": e.distance,
                    "observed": "" if e.observed is None else e.observed,
                    "pct_increase": "" if e.pct_increase is None else e.pct_increase,
                    "ci_low": "" if e.ci_low is None else e.ci_low,
                    "ci_high": "" if e.ci_high is None else e.ci_high,
                    "significant": int(e.significant),
                    "positive": int(e.positive),
                    "n_pairs": e.n_pairs,
                    "n_pairs_alter_has": e.n_pairs_alter_has,
                    "n_pairs_alter_lacks": e.n_pairs_alter_lacks,
                    "n_undefined_null": e.n_undefined_null,
                }
            )
        return rows


def _observed_vector(snap: NetworkSnapshot, trait_values: Mapping):
    if not isinstance(trait_values, Mapping):
        raise TypeError(
            "trait_values must be a node -> value mapping; smoothed "
            "visualization traits are not valid test inputs"
        )
    nodes = sorted(trait_values)
    for n in nodes:
        if n not in snap.neighbors:
            raise DataError(f"trait observed for node {n!r} absent from snapshot")
    values = np.array([float(trait_values[n]) for n in nodes], dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("trait values must be finite")
    return nodes, values


def _require_binary(values: np.ndarray):
    if not np.all((values == 0.0) | (values == 1.0)):
        raise DataError(
            "risk-ratio statistic requires a binary 0/1 trait; "
            "dichotomize or use statistic='correlation'"
        )


def _pair_indices(snap: NetworkSnapshot, nodes, max_d: int) -> dict:
    """Ordered (ego, alter) index pairs at each exact distance 1..max_d.

    Distances run over the full snapshot, so paths may pass through nodes
    without trait observations.
    """
    index = {n: i for i, n in enumerate(nodes)}
    pairs = {d: ([], []) for d in range(1, max_d + 1)}
    for n in nodes:
        dist = geodesic_distances(snap, n, max_d=max_d)
        i = index[n]
        for m, d in dist.items():
            if d >= 1 and m in index:
                egos, alters = pairs[d]
                egos.append(i)
                alters.append(index[m])
    return {
        d: (np.asarray(e, dtype=np.intp), np.asarray(a, dtype=np.intp))
        for d, (e, a) in pairs.items()
    }


def _risk_ratio_rows(values_matrix, egos, alters):
    """Risk ratio per row of a (replicates x nodes) value matrix. NaN = undefined."""
    ego_vals = values_matrix[:, egos]
    alt_vals = values_matrix[:, alters]
    m = egos.shape[0]
    n_has = alt_vals.sum(axis=1)
    s_has = (ego_vals * alt_vals).sum(axis=1)
    n_lacks = m - n_has
    s_lacks = ego_vals.sum(axis=1) - s_has
    with np.errstate(divide="ignore", invalid="ignore"):
        p_has = s_has / n_has
        p_lacks = s_lacks / n_lacks
        rr = p_has / p_lacks
    defined = (n_has > 0) & (n_lacks > 0) & (p_lacks > 0)
    return np.where(defined, rr, np.nan)


def _correlation_rows(values_matrix, egos, alters):
    """Pearson correlation per row over the ordered pairs. NaN = undefined."""
    x = values_matrix[:, egos]
    y = values_matrix[:, alters]
    m = egos.shape[0]
    sx = x.sum(axis=1)
    sy = y.sum(axis=1)
    sxy = (x * y).sum(axis=1)
    vx = m * (x * x).sum(axis=1) - sx * sx
    vy = m * (y * y).sum(axis=1) - sy * sy
    den = vx * vy
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (m * sxy - sx * sy) / np.sqrt(den)
    defined = (m >= 2) & (vx > 0) & (vy > 0)
    return np.where(defined, np.clip(r, -1.0, 1.0), np.nan)


_STATISTICS = {"risk_ratio": _risk_ratio_rows, "correlation": _correlation_rows}


def _null_matrix(values, pair_idx, replicates, seed, statistic):
    """Null statistic per (distance, replicate) under uniform trait shuffles.

    Replicate r draws its permutation from a seed derived from (seed, r),
    and the same shuffled assignment feeds every distance, so results are
    identical under any execution order or chunking.
    """
    stat_rows = _STATISTICS[statistic]
    n = values.shape[0]
    out = {d: np.full(replicates, np.nan) for d in pair_idx}
    is_binary = bool(np.all((values == 0.0) | (values == 1.0)))
    n_positive = int(values.sum()) if is_binary else None
    max_pairs = max((e.shape[0] for e, _ in pair_idx.values()), default=0)
    block = max(1, min(replicates, _BLOCK_ELEMENTS // max(1, max_pairs, n)))
    for start in range(0, replicates, block):
        stop = min(start + block, replicates)
        shuffled = np.empty((stop - start, n))
        for i, r in enumerate(range(start, stop)):
            perm = spawn_rng(seed, "perm", r).permutation(n)
            shuffled[i] = values[perm]
        if is_binary:
            # every shuffle must preserve prevalence exactly
            assert np.all(shuffled.sum(axis=1) == n_positive)
        for d, (egos, alters) in pair_idx.items():
            if egos.shape[0] == 0:
                continue
            out[d][start:stop] = stat_rows(shuffled, egos, alters)
    return out


def risk_ratio_at_distance(snap: NetworkSnapshot, trait_values: Mapping, d: int) -> RiskRatioResult:
    """Observed risk ratio over ordered trait-observed pairs at exact distance d.

    Undefined (flagged, not numeric) when either conditioning set is empty
    or the alter-lacks probability is zero.
    """
    if d < 1:
        raise DataError("distance must be >= 1")
    nodes, values = _observed_vector(snap, trait_values)
    _require_binary(values)
    egos, alters = _pair_indices(snap, nodes, d)[d]
    n_has = int(values[alters].sum()) if egos.shape[0] else 0
    n_lacks = int(egos.shape[0]) - n_has
    rr = _risk_ratio_rows(values[None, :], egos, alters)[0] if egos.shape[0] else np.nan
    if math.isnan(rr):
        return RiskRatioResult(rr=None, n_has=n_has, n_lacks=n_lacks, defined=False)
    return RiskRatioResult(rr=float(rr), n_has=n_has, n_lacks=n_lacks, defined=True)


def permutation_null(
    snap: NetworkSnapshot,
    trait_values: Mapping,
    d: int,
    replicates: int,
    seed: int,
    statistic: str = "risk_ratio",
) -> np.ndarray:
    """Null statistic at distance d for each of ``replicates`` trait shuffles.

    Entries are NaN where the shuffled statistic was undefined. The same
    (seed, r) derivation is used by :func:`cluster_test`, so its per-distance
    null arrays match this function exactly.
    """
    if replicates < 1:
        raise DataError("replicates must be >= 1")
    if d < 1:
        raise DataError("distance must be >= 1")
    if statistic not in _STATISTICS:
        raise DataError(f"unknown statistic {statistic!r}")
    nodes, values = _observed_vector(snap, trait_values)
    if statistic == "risk_ratio":
        _require_binary(values)
    pair_idx = {d: _pair_indices(snap, nodes, d)[d]}
    return _null_matrix(values, pair_idx, replicates, seed, statistic)[d]


def cluster_test(
    snap: NetworkSnapshot,
    trait_values: Mapping,
    max_d: int,
    replicates: int = DEFAULT_REPLICATES,
    seed: int = 0,
    trait: str = "trait",
    statistic: str = "risk_ratio",
    ci_mode: str = "observed_minus_null",
) -> ClusterTestResult:
    """Permutation clustering test at every distance 1..max_d.

    Parameters
    ----------
    snap : NetworkSnapshot
    trait_values : mapping NodeId -> value
        Binary 0/1 for the risk-ratio statistic; any real values for the
        correlation statistic.
    max_d : int
    replicates : int
        Null shuffles per distance (one shared shuffle stream).
    seed : int
    trait : str
        Name recorded in the result.
    statistic : {'risk_ratio', 'correlation'}
    ci_mode : {'observed_minus_null', 'null_range'}
        Default: 2.5/97.5 percentiles of (observed - null replicate);
        significant iff the interval excludes 0. 'null_range' reports the
        null percentile band instead; significant iff the observed value
        falls outside it. The two conventions make identical calls.

    Returns
    -------
    ClusterTestResult
        Per-distance observed statistic, full null arrays, CI, and
        significance flags. Undefined entries are flagged, never dropped.
    """
    if max_d < 1:
        raise DataError("max_d must be >= 1")
    if replicates < 1:
        raise DataError("replicates must be >= 1")
    if statistic not in _STATISTICS:
        raise DataError(f"unknown statistic {statistic!r}")
    if ci_mode not in ("observed_minus_null", "null_range"):
        raise DataError(f"unknown ci_mode {ci_mode!r}")
    nodes, values = _observed_vector(snap, trait_values)
    if len(nodes) < 2:
        raise DataError("need at least 2 trait-observed nodes")
    if statistic == "risk_ratio":
        _require_binary(values)
        if values.min() == values.max():
            raise DataError(
                "degenerate prevalence: trait must take both values 0 and 1"
            )
    elif values.min() == values.max():
        raise DataError("trait is constant; correlation undefined everywhere")

    pair_idx = _pair_indices(snap, nodes, max_d)
    stat_rows = _STATISTICS[statistic]
    nulls = _null_matrix(values, pair_idx, replicates, seed, statistic)

    entries = []
    for d in range(1, max_d + 1):
        egos, alters = pair_idx[d]
        n_pairs = int(egos.shape[0])
        if n_pairs:
            observed = float(stat_rows(values[None, :], egos, alters)[0])
            n_has = int(values[alters].sum()) if statistic == "risk_ratio" else 0
        else:
            observed = float("nan")
            n_has = 0
        null = nulls[d]
        defined_null = null[~np.isnan(null)]
        n_undef = replicates - defined_null.shape[0]

        ci_low = ci_high = None
        significant = positive = False
        obs_defined = not math.isnan(observed)
        if obs_defined and defined_null.shape[0] > 0:
            if ci_mode == "observed_minus_null":
                lo, hi = np.percentile(observed - defined_null, (2.5, 97.5))
                ci_low, ci_high = float(lo), float(hi)
                significant = ci_low > 0 or ci_high < 0
                positive = ci_low > 0
            else:
                lo, hi = np.percentile(defined_null, (2.5, 97.5))
                ci_low, ci_high = float(lo), float(hi)
                significant = observed < ci_low or observed > ci_high
                positive = observed > ci_high

        pct = None
        if obs_defined and statistic == "risk_ratio":
            pct = 100.0 * (observed - 1.0)
        entries.append(
            DistanceResult(
                distance=d,
                n_pairs=n_pairs,
                n_pairs_alter_has=n_has if statistic == "risk_ratio" else 0,
                n_pairs_alter_lacks=(n_pairs - n_has) if statistic == "risk_ratio" else 0,
                observed=observed if obs_defined else None,
                pct_increase=pct,
                null_values=null,
                n_undefined_null=n_undef,
                ci_low=ci_low,
                ci_high=ci_high,
                significant=significant,
                positive=positive,
            )
        )
    return ClusterTestResult(
        trait=trait,
        wave=snap.wave,
        statistic=statistic,
        ci_mode=ci_mode,
        replicates=replicates,
        seed=seed,
        distances=tuple(entries),
    )


def reach(result: ClusterTestResult) -> int:
    """Largest d with significant positive association at every distance 1..d.

    Contiguity is required: a gap at any distance stops the count. 0 when
    distance 1 is not significant positive.
    """
    r = 0
    for entry in result.distances:
        if entry.distance != r + 1:
            break
        if entry.significant and entry.positive:
            r = entry.distance
        else:
            break
    return r


def decay_profile(result: ClusterTestResult):
    """Observed association vs. the multiplicative compounding benchmark.

    The benchmark at distance d is rr(1)**d, the distance-1 ratio compounded
    once per step (for a small per-step influence probability p this mirrors
    the chain argument that two 20% steps compound to 4%: p**d). The reported
    ratio is benchmark / observed, so values above 1 mean the observed
    association falls short of per-step compounding. A descriptive report,
    not a test.
    """
    if result.statistic != "risk_ratio":
        raise DataError("decay profile is defined for the risk-ratio statistic")
    first = result.at(1)
    if not first.defined:
        raise DataError("decay profile undefined: rr at distance 1 is undefined")
    rr1 = first.observed
    rows = []
    for entry in result.distances:
        benchmark = rr1 ** entry.distance
        ratio = None
        if entry.defined and entry.observed > 0:
            ratio = benchmark / entry.observed
        rows.append(
            {
                "distance": entry.distance,
                "observed_rr": entry.observed,
                "benchmark": benchmark,
                "ratio": ratio,
            }
        )
    return rows


def residualize_trait(panel: Panel, trait: str, covariates, wave: int) -> dict:
    """Least-squares residuals of a trait on covariates plus an intercept.

    The residuals can be dichotomized (:func:`dichotomize`) for the
    risk-ratio statistic or fed to the correlation variant directly.
    Covariates must be observed for every trait-observed node at the wave.
    """
    observed = panel.trait_values(trait, wave)
    if not observed:
        raise DataError(f"trait {trait!r} has no observations at wave {wave}")
    nodes = sorted(observed)
    names = ["intercept"] + list(covariates)
    design = np.ones((len(nodes), len(names)))
    for j, cov in enumerate(covariates, start=1):
        for i, node in enumerate(nodes):
            value = panel.covariate_at(node, wave, cov)
            if value is None:
                raise DataError(
                    f"covariate {cov!r} missing for node {node!r} at wave {wave}"
                )
            design[i, j] = value
    y = np.array([observed[n] for n in nodes], dtype=float)

    _, upper, pivots = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diagonal(upper))
    tol = diag.max() * max(design.shape) * np.finfo(float).eps if diag.size else 0.0
    dependent = [names[pivots[k]] for k in range(len(names)) if diag[k] <= tol]
    if dependent:
        raise CollinearityError(sorted(dependent))

    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ beta
    return {node: float(residuals[i]) for i, node in enumerate(nodes)}


def dichotomize(values: Mapping, threshold: float = 0.0) -> dict:
    """Binary recode: 1 where value > threshold, else 0."""
    return {node: (1.0 if v > threshold else 0.0) for node, v in sorted(values.items())}
