"""Dyadic longitudinal regression with clustered sandwich inference.

The core model regresses an ego's next-wave outcome on the ego's current
outcome, the alter's contemporaneous and lagged outcomes, and ego-side
covariates, over ordered dyad-wave rows where the tie existed at both
waves. Estimation solves the independence-working-correlation estimating
equations (identity link: least squares; logit link: logistic score
equations) by iteratively reweighted least squares, and inference uses the
cluster-robust sandwich covariance, clustered on ego by default.

Also here: the Lagrange-multiplier check for serially correlated residuals,
simulation-based first differences, the directional-friendship contrast,
the geographic-distance interaction, and the lagged-change variant.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.stats

from .errors import (
    CollinearityError,
    ConvergenceError,
    DataError,
    SeparationError,
)
from .panel import Panel, classify_friendship, geographic_distance, snapshot
from .seeds import spawn_rng

BASE_TERMS = ("const", "y_ego_t", "y_alter_t1", "y_alter_t")

#: friendship classes eligible for the directional contrast, strongest
#: expected first; 'mutual' serves as the reference when present
DIRECTION_CLASSES = ("mutual", "ego_perceived", "alter_perceived")

_SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class DyadRow:
    """One ordered ego-alter observation spanning waves t and t+1."""

    ego: object
    alter: object
    wave_t: int
    y_ego_t: float
    y_ego_t1: float
    y_alter_t: float
    y_alter_t1: float
    x: dict = field(default_factory=dict)
    tie_type: str = "friend"
    directionality: Optional[str] = None
    geo_distance_t: Optional[float] = None


@dataclass
class ModelSpec:
    """What to fit and how.

    ``terms`` defaults to the four base regressors plus every covariate
    present on the rows. ``cluster`` is 'ego' (default) or 'dyad'
    (unordered pair). ``small_sample_correction`` applies the G/(G-1)
    factor to the meat matrix; off by default. ``standardize`` z-scores
    non-binary, non-constant regressor columns before fitting.
    """

    link: str = "identity"
    terms: Optional[Sequence[str]] = None
    cluster: str = "ego"
    small_sample_correction: bool = False
    standardize: bool = False
    max_iter: int = 100
    tol: float = 1e-10

    def __post_init__(self):
        if self.link not in ("identity", "logit"):
            raise DataError(f"unknown link {self.link!r}")
        if self.cluster not in ("ego", "dyad"):
            raise DataError(f"unknown cluster key {self.cluster!r}")
        if self.terms is not None:
            terms = tuple(self.terms)
            if len(set(terms)) != len(terms):
                raise DataError("duplicate term names in model spec")
            self.terms = terms


@dataclass
class FitResult:
    """Coefficients with cluster-robust covariance and fit diagnostics."""

    terms: tuple
    coefficients: np.ndarray
    robust_covariance: np.ndarray
    n_rows: int
    n_clusters: int
    iterations: int
    converged: bool
    link: str
    cluster_key: str
    dispersion: float
    diagnostics: dict = field(default_factory=dict)

    def coef(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def se(self, term: str) -> float:
        i = self.terms.index(term)
        return float(math.sqrt(self.robust_covariance[i, i]))

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.robust_covariance))

    def z_value(self, term: str) -> float:
        return self.coef(term) / self.se(term)

    def p_value(self, term: str) -> float:
        return float(2.0 * scipy.stats.norm.sf(abs(self.z_value(term))))

    def summary(self) -> str:
        lines = [
            f"link={self.link} rows={self.n_rows} clusters={self.n_clusters} "
            f"(key={self.cluster_key}) iterations={self.iterations} "
            f"converged={self.converged}",
            f"{'term':<28}{'coef':>12}{'robust se':>12}{'z':>9}{'p':>9}",
        ]
        for i, term in enumerate(self.terms):
            se = math.sqrt(self.robust_covariance[i, i])
            z = self.coefficients[i] / se if se > 0 else float("inf")
            p = 2.0 * scipy.stats.norm.sf(abs(z))
            lines.append(
                f"{term:<28}{self.coefficients[i]:>12.6f}{se:>12.6f}"
                f"{z:>9.3f}{p:>9.4f}"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "coefficients": [float(c) for c in self.coefficients],
            "robust_covariance": [
                [float(v) for v in row] for row in self.robust_covariance
            ],
            "standard_errors": [float(s) for s in self.standard_errors],
            "p_values": [self.p_value(t) for t in self.terms],
            "n_rows": self.n_rows,
            "n_clusters": self.n_clusters,
            "iterations": self.iterations,
            "converged": self.converged,
            "link": self.link,
            "cluster_key": self.cluster_key,
            "dispersion": self.dispersion,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class FirstDifferenceResult:
    """Simulated outcome-scale change when y_alter_t1 switches 0 to 1."""

    point: float
    ci_low: float
    ci_high: float
    n_draws: int
    seed: int
    nearest_psd: bool = False


@dataclass
class DropReport:
    """Accounting of candidate rows removed during dyad-row construction."""

    n_candidates: int = 0
    n_kept: int = 0
    dropped: dict = field(default_factory=dict)

    def drop(self, reason: str):
        self.dropped[reason] = self.dropped.get(reason, 0) + 1

    def to_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "n_kept": self.n_kept,
            "dropped": dict(sorted(self.dropped.items())),
        }


# ---------------------------------------------------------------------------
# Row construction
# ---------------------------------------------------------------------------


def build_dyad_rows(panel: Panel, trait: str, tie_filter, covariates=()):
    """One row per ordered dyad and wave with the tie active at t and t+1.

    Both orientations of each tied pair are emitted. Rows missing any of
    the four outcome values or any covariate are dropped and counted in
    the returned DropReport. Friendship directionality comes from the
    nominations at wave t; geographic distance is attached when both
    nodes are located at wave t.

    Returns (rows, drop_report).
    """
    n_waves = panel.n_waves
    if n_waves < 2:
        raise DataError("need at least 2 waves")
    tie_filter = frozenset(tie_filter) if tie_filter is not None else None

    # wave coverage per (unordered pair, type): active at w iff any record
    # of that type covers w
    coverage = {}
    for t in panel.ties:
        if tie_filter is not None and t.tie_type not in tie_filter:
            continue
        key = ((min(t.ego, t.alter), max(t.ego, t.alter)), t.tie_type)
        coverage.setdefault(key, set()).update(
            range(t.wave_first, min(t.wave_last, n_waves) + 1)
        )

    snapshots = {}
    report = DropReport()
    rows = []
    for (pair, tie_type), waves in sorted(coverage.items()):
        a, b = pair
        for t in sorted(waves):
            if t + 1 not in waves or t + 1 > n_waves:
                continue
            for ego, alter in ((a, b), (b, a)):
                report.n_candidates += 1
                ys = {
                    "y_ego_t": panel.trait_at(ego, t, trait),
                    "y_ego_t1": panel.trait_at(ego, t + 1, trait),
                    "y_alter_t": panel.trait_at(alter, t, trait),
                    "y_alter_t1": panel.trait_at(alter, t + 1, trait),
                }
                missing = [k for k, v in ys.items() if v is None]
                if missing:
                    report.drop(f"missing_{missing[0]}")
                    continue
                x = {}
                missing_cov = None
                for cov in covariates:
                    value = panel.covariate_at(ego, t, cov)
                    if value is None:
                        missing_cov = cov
                        break
                    x[cov] = float(value)
                if missing_cov is not None:
                    report.drop(f"missing_covariate_{missing_cov}")
                    continue
                directionality = None
                if tie_type == "friend":
                    if t not in snapshots:
                        snapshots[t] = snapshot(panel, t, tie_filter=["friend"])
                    directionality = classify_friendship(snapshots[t], ego, alter)
                geo = None
                if (ego, t) in panel.geo and (alter, t) in panel.geo:
                    geo = geographic_distance(panel, ego, alter, t)
                rows.append(
                    DyadRow(
                        ego=ego,
                        alter=alter,
                        wave_t=t,
                        y_ego_t=float(ys["y_ego_t"]),
                        y_ego_t1=float(ys["y_ego_t1"]),
                        y_alter_t=float(ys["y_alter_t"]),
                        y_alter_t1=float(ys["y_alter_t1"]),
                        x=x,
                        tie_type=tie_type,
                        directionality=directionality,
                        geo_distance_t=geo,
                    )
                )
                report.n_kept += 1
    if not rows:
        raise DataError("no eligible dyad rows (see drop report)")
    return rows, report


# ---------------------------------------------------------------------------
# Design matrix
# ---------------------------------------------------------------------------


def _atom_values(rows, atom) -> np.ndarray:
    if atom == "const":
        return np.ones(len(rows))
    if atom in ("y_ego_t", "y_ego_t1", "y_alter_t", "y_alter_t1"):
        return np.array([getattr(r, atom) for r in rows], dtype=float)
    if atom == "geo_distance":
        vals = [r.geo_distance_t for r in rows]
        if any(v is None for v in vals):
            raise DataError("geo_distance requested but some rows lack distances")
        return np.array(vals, dtype=float)
    if atom.startswith("dir="):
        cls = atom[4:]
        return np.array(
            [1.0 if r.directionality == cls else 0.0 for r in rows], dtype=float
        )
    try:
        return np.array([float(r.x[atom]) for r in rows], dtype=float)
    except KeyError:
        raise DataError(f"unknown model term {atom!r}") from None


def term_column(rows, term: str) -> np.ndarray:
    """Column values for a term; 'a:b' is the elementwise product."""
    parts = term.split(":")
    col = _atom_values(rows, parts[0])
    for atom in parts[1:]:
        col = col * _atom_values(rows, atom)
    return col


def default_terms(rows) -> tuple:
    covs = list(rows[0].x) if rows else []
    return BASE_TERMS + tuple(covs)


def design_matrix(rows, terms) -> np.ndarray:
    return np.column_stack([term_column(rows, t) for t in terms])


def regressor_means(rows, terms) -> dict:
    """Mean of every term column and of every interaction atom."""
    means = {}
    atoms = set()
    for term in terms:
        means[term] = float(term_column(rows, term).mean())
        atoms.update(term.split(":"))
    for atom in atoms:
        if atom not in means:
            means[atom] = float(_atom_values(rows, atom).mean())
    return means


def _dependent_terms(X: np.ndarray, names) -> list:
    """Columns linearly dependent on earlier ones, by greedy projection.

    Checking in term order keeps the error pointed at the later, redundant
    term (e.g. a constant regressor is blamed, not the intercept).
    """
    n, k = X.shape
    dependent = []
    kept = []
    for j in range(k):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            dependent.append(names[j])
            continue
        if kept:
            basis = np.column_stack(kept)
            resid = col - basis @ np.linalg.lstsq(basis, col, rcond=None)[0]
            if np.linalg.norm(resid) <= 1e-8 * norm:
                dependent.append(names[j])
                continue
        kept.append(col)
    return dependent


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def _cluster_labels(rows, key: str):
    if key == "ego":
        return [r.ego for r in rows]
    return [(r.ego, r.alter) if r.ego <= r.alter else (r.alter, r.ego) for r in rows]


def _wls_solve(X, z, w):
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
    return beta


def _irls(X, y, link: str, max_iter: int, tol: float):
    n, k = X.shape
    if link == "identity":
        beta = _wls_solve(X, y, np.ones(n))
        mu = X @ beta
        return beta, mu, np.ones(n), 1
    beta = np.zeros(k)
    for it in range(1, max_iter + 1):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = mu * (1.0 - mu)
        w = np.maximum(w, 1e-12)
        z = eta + (y - mu) / w
        new = _wls_solve(X, z, w)
        if np.max(np.abs(new)) > _SEPARATION_BOUND:
            raise SeparationError(
                "logit coefficients diverged (|beta| > %g); data are likely "
                "perfectly separated" % _SEPARATION_BOUND
            )
        delta = np.max(np.abs(new - beta))
        scale = max(np.max(np.abs(new)), 1.0)
        beta = new
        if delta < tol * scale:
            eta = X @ beta
            mu = 1.0 / (1.0 + np.exp(-eta))
            return beta, mu, np.maximum(mu * (1.0 - mu), 1e-12), it
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")


def _sandwich(X, y, mu, w, clusters, correction: bool):
    """Cluster-robust covariance: bread^-1 meat bread^-1."""
    bread = X.T @ (X * w[:, None])
    resid = y - mu
    groups = {}
    for i, g in enumerate(clusters):
        groups.setdefault(g, []).append(i)
    k = X.shape[1]
    meat = np.zeros((k, k))
    for idx in groups.values():
        s = X[idx].T @ resid[idx]
        meat += np.outer(s, s)
    if correction:
        G = len(groups)
        meat *= G / (G - 1)
    bread_inv = np.linalg.inv(bread)
    cov = bread_inv @ meat @ bread_inv
    return (cov + cov.T) / 2.0, len(groups)


def _fit_core(X, y, terms, clusters, spec: ModelSpec, diagnostics=None) -> FitResult:
    n, k = X.shape
    if n < k:
        raise DataError(f"{n} rows cannot identify {k} terms")
    dependent = _dependent_terms(X, terms)
    if dependent:
        raise CollinearityError(dependent)
    if spec.link == "logit" and not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("logit link requires a binary 0/1 outcome")
    labels = list(clusters)
    if len(set(labels)) < 2:
        raise DataError("need at least 2 clusters for robust inference")

    diagnostics = dict(diagnostics or {})
    if spec.standardize:
        X = X.copy()
        scaled = {}
        for j, term in enumerate(terms):
            col = X[:, j]
            values = set(np.unique(col))
            if term == "const" or values <= {0.0, 1.0} or col.std() == 0:
                continue
            scaled[term] = {"mean": float(col.mean()), "sd": float(col.std())}
            X[:, j] = (col - col.mean()) / col.std()
        diagnostics["standardized"] = scaled

    beta, mu, w, iterations = _irls(X, y, spec.link, spec.max_iter, spec.tol)
    cov, n_clusters = _sandwich(X, y, mu, w, labels, spec.small_sample_correction)
    resid = y - mu
    dof = max(n - k, 1)
    dispersion = float((resid * resid / np.maximum(w, 1e-12)).sum() / dof)
    return FitResult(
        terms=tuple(terms),
        coefficients=beta,
        robust_covariance=cov,
        n_rows=n,
        n_clusters=n_clusters,
        iterations=iterations,
        converged=True,
        link=spec.link,
        cluster_key=spec.cluster,
        dispersion=dispersion,
        diagnostics=diagnostics,
    )


def fit_gee(rows, spec: ModelSpec) -> FitResult:
    """Fit the dyadic model on prepared rows.

    Identity link solves least squares; logit solves the logistic score
    equations by IRLS. The robust covariance is the clustered sandwich on
    the configured key. Raises CollinearityError naming redundant terms,
    SeparationError on diverging logit coefficients, ConvergenceError past
    the iteration budget.
    """
    if not rows:
        raise DataError("no rows to fit")
    terms = tuple(spec.terms) if spec.terms is not None else default_terms(rows)
    X = design_matrix(rows, terms)
    y = np.array([r.y_ego_t1 for r in rows], dtype=float)
    return _fit_core(X, y, terms, _cluster_labels(rows, spec.cluster), spec)


def lm_serial_test(fit: FitResult, rows) -> dict:
    """Lagrange-multiplier check for first-order serial correlation.

    Response residuals are regressed on their one-wave-lagged values
    (within the same ordered dyad, consecutive waves only) plus the
    original regressors; n*R^2 is referred to chi-square(1). Rows without
    a predecessor contribute a zero lagged residual, which keeps the
    residuals exactly orthogonal to the original regressors so the
    statistic reflects the lag term alone.
    """
    X = design_matrix(rows, fit.terms)
    y = np.array([r.y_ego_t1 for r in rows], dtype=float)
    eta = X @ fit.coefficients
    mu = 1.0 / (1.0 + np.exp(-eta)) if fit.link == "logit" else eta
    resid = y - mu

    by_key = {(r.ego, r.alter, r.wave_t): i for i, r in enumerate(rows)}
    lagged = np.zeros(len(rows))
    n_used = 0
    for i, r in enumerate(rows):
        j = by_key.get((r.ego, r.alter, r.wave_t - 1))
        if j is not None:
            lagged[i] = resid[j]
            n_used += 1
    if n_used == 0:
        raise DataError(
            "no consecutive-wave residual pairs; serial test needs dyads "
            "observed at adjacent waves"
        )
    aux_X = np.column_stack([X, lagged])
    beta, *_ = np.linalg.lstsq(aux_X, resid, rcond=None)
    fitted = aux_X @ beta
    sst = float(((resid - resid.mean()) ** 2).sum())
    ssr = float(((resid - fitted) ** 2).sum())
    n = len(rows)
    r2 = 0.0 if sst == 0 else 1.0 - ssr / sst
    statistic = n * r2
    return {
        "statistic": float(statistic),
        "p_value": float(scipy.stats.chi2.sf(statistic, df=1)),
        "n_used": n_used,
    }


def _scenario_vector(terms, means, alter_value: float) -> np.ndarray:
    values = np.empty(len(terms))
    for i, term in enumerate(terms):
        atoms = term.split(":")
        if "y_alter_t1" in atoms:
            prod = alter_value
            for atom in atoms:
                if atom != "y_alter_t1":
                    prod *= means[atom]
            values[i] = prod
        elif term == "const":
            values[i] = 1.0
        else:
            values[i] = means[term]
    return values


def first_difference(
    fit: FitResult,
    row_means: dict,
    n_draws: int = 1000,
    seed: int = 0,
) -> FirstDifferenceResult:
    """Outcome-scale effect of switching y_alter_t1 from 0 to 1.

    Coefficient vectors are drawn from a multivariate normal centered at
    the estimates with the robust covariance (via its symmetric square
    root); for each draw the inverse-link difference is evaluated with the
    other regressors at the supplied means. Numerically indefinite
    covariances fall back to the nearest PSD matrix, with a warning and a
    flag on the result.
    """
    if n_draws < 1:
        raise DataError("n_draws must be >= 1")
    if not fit.converged:
        raise DataError("first difference requires a converged fit")
    eigvals, eigvecs = np.linalg.eigh(fit.robust_covariance)
    nearest_psd = False
    floor = -1e-12 * max(float(eigvals.max()), 1.0)
    if eigvals.min() < floor:
        nearest_psd = True
        warnings.warn(
            "robust covariance is numerically indefinite; projecting to the "
            "nearest positive semi-definite matrix for simulation"
        )
    clipped = np.maximum(eigvals, 0.0)
    root = (eigvecs * np.sqrt(clipped)) @ eigvecs.T

    x1 = _scenario_vector(fit.terms, row_means, 1.0)
    x0 = _scenario_vector(fit.terms, row_means, 0.0)
    rng = spawn_rng(seed, "first_difference")
    draws = fit.coefficients + rng.standard_normal((n_draws, len(fit.terms))) @ root
    eta1 = draws @ x1
    eta0 = draws @ x0
    if fit.link == "logit":
        diff = 1.0 / (1.0 + np.exp(-eta1)) - 1.0 / (1.0 + np.exp(-eta0))
    else:
        diff = eta1 - eta0
    point = float(diff.mean())
    if n_draws >= 2:
        lo, hi = np.percentile(diff, (2.5, 97.5))
    else:
        lo = hi = point
    return FirstDifferenceResult(
        point=point,
        ci_low=float(lo),
        ci_high=float(hi),
        n_draws=n_draws,
        seed=seed,
        nearest_psd=nearest_psd,
    )


@dataclass
class DirectionalContrastResult:
    fit: FitResult
    reference: str
    per_class: dict
    pairwise: list
    excluded_classes: tuple

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "per_class": self.per_class,
            "pairwise": self.pairwise,
            "excluded_classes": list(self.excluded_classes),
            "fit": self.fit.to_dict(),
        }


def directional_contrast(rows, spec: ModelSpec) -> DirectionalContrastResult:
    """Class-specific alter effects from one model with interaction slopes.

    Fits a single model whose y_alter_t1 slope varies by friendship class
    (per-class interaction terms, no common slope), plus class intercept
    dummies against the reference class. Pairwise slope differences are
    tested with z statistics from the joint sandwich covariance.
    """
    rows = [r for r in rows if r.directionality in DIRECTION_CLASSES]
    present = [c for c in DIRECTION_CLASSES if any(r.directionality == c for r in rows)]
    missing = [c for c in DIRECTION_CLASSES if c not in present]
    if len(present) < 2:
        raise DataError(
            "directional contrast needs at least 2 friendship classes; "
            f"missing: {', '.join(missing) or 'none'}"
        )
    reference = present[0]
    covs = list(rows[0].x)
    terms = ["const", "y_ego_t", "y_alter_t"]
    terms += [f"dir={c}" for c in present if c != reference]
    terms += [f"y_alter_t1:dir={c}" for c in present]
    terms += covs
    fit = _fit_core(
        design_matrix(rows, terms),
        np.array([r.y_ego_t1 for r in rows], dtype=float),
        terms,
        _cluster_labels(rows, spec.cluster),
        spec,
        diagnostics={"class_counts": {c: sum(1 for r in rows if r.directionality == c)
                                      for c in present}},
    )
    per_class = {}
    for c in present:
        term = f"y_alter_t1:dir={c}"
        per_class[c] = {
            "estimate": fit.coef(term),
            "se": fit.se(term),
            "p_value": fit.p_value(term),
        }
    pairwise = []
    for i in range(len(present)):
        for j in range(i + 1, len(present)):
            a, b = present[i], present[j]
            ia = fit.terms.index(f"y_alter_t1:dir={a}")
            ib = fit.terms.index(f"y_alter_t1:dir={b}")
            contrast = np.zeros(len(fit.terms))
            contrast[ia] = 1.0
            contrast[ib] = -1.0
            diff = float(contrast @ fit.coefficients)
            var = float(contrast @ fit.robust_covariance @ contrast)
            se = math.sqrt(max(var, 0.0))
            z = diff / se if se > 0 else float("inf")
            pairwise.append(
                {
                    "class_a": a,
                    "class_b": b,
                    "difference": diff,
                    "se": se,
                    "z": z,
                    "p_value": float(2.0 * scipy.stats.norm.sf(abs(z))),
                }
            )
    return DirectionalContrastResult(
        fit=fit,
        reference=reference,
        per_class=per_class,
        pairwise=pairwise,
        excluded_classes=tuple(missing),
    )


def distance_interaction(rows, spec: ModelSpec) -> FitResult:
    """Base model plus geographic distance and its alter interaction.

    Rows without a distance are dropped; the count is recorded in the
    result diagnostics.
    """
    usable = [r for r in rows if r.geo_distance_t is not None]
    n_dropped = len(rows) - len(usable)
    if not usable:
        raise DataError("no rows carry geographic distances")
    covs = list(usable[0].x)
    terms = list(BASE_TERMS) + covs + ["geo_distance", "geo_distance:y_alter_t1"]
    fit = _fit_core(
        design_matrix(usable, terms),
        np.array([r.y_ego_t1 for r in usable], dtype=float),
        terms,
        _cluster_labels(usable, spec.cluster),
        spec,
        diagnostics={"n_rows_dropped_missing_distance": n_dropped},
    )
    return fit


def lagged_change_model(panel: Panel, trait: str, tie_filter, covariates=(),
                        spec: Optional[ModelSpec] = None) -> FitResult:
    """Change-on-change variant: ego's t to t+1 change on alter's t-1 to t change.

    Needs at least 3 waves and dyads active across t-1, t, t+1. Documented
    as lower-powered than the levels model; provided for sign comparison.
    """
    if panel.n_waves < 3:
        raise DataError("lagged change model needs at least 3 waves")
    spec = spec or ModelSpec()
    if spec.link != "identity":
        raise DataError("lagged change model uses the identity link")
    rows, _ = build_dyad_rows(panel, trait, tie_filter, covariates)
    by_key = {(r.ego, r.alter, r.wave_t): r for r in rows}
    d_ego, d_alter, xs, keep = [], [], [], []
    for r in rows:
        prev = by_key.get((r.ego, r.alter, r.wave_t - 1))
        if prev is None:
            continue
        d_ego.append(r.y_ego_t1 - r.y_ego_t)
        d_alter.append(prev.y_alter_t1 - prev.y_alter_t)
        xs.append(r.x)
        keep.append(r)
    if not keep:
        raise DataError(
            "no dyads active across three consecutive waves; lagged change "
            "model not estimable"
        )
    covs = list(covariates)
    terms = ["const", "d_y_alter"] + covs
    X = np.column_stack(
        [np.ones(len(keep)), np.array(d_alter, dtype=float)]
        + [np.array([x[c] for x in xs], dtype=float) for c in covs]
    )
    return _fit_core(
        X,
        np.array(d_ego, dtype=float),
        terms,
        _cluster_labels(keep, spec.cluster),
        spec,
        diagnostics={"model": "lagged_change"},
    )
