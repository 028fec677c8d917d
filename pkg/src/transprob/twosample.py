"""Two-sample tests for the transition probability ``P_hj(s, .)``: a linear
(area) test with a plug-in variance, and L2-norm and Kolmogorov-Smirnov-type
tests calibrated by a Gaussian multiplier resampling of the influence curves.

All step functions are handled exactly. The comparison interval
``(t1, t2]`` is cut at breakpoints ``b_0 = t1 < b_1 < ... < b_K = t2`` that
include every event time of both groups (and, for the at-risk weight, every
time the risk sets change). On each open piece ``(b_{k-1}, b_k)`` all
processes are constant, so integrals are finite sums; the supremum is the
largest absolute value over the open pieces and the breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ComparisonError, DegenerateVarianceError
from .estimation import (MissingnessModel, TransitionProbabilityCurve,
                         aalen_johansen, fit_logistic_missingness,
                         landmark_intensities, nelson_aalen, npmple_intensities)
from .history import (CountingProcessSet, EventGrid, EventHistorySample,
                      build_counting_processes)
from .influence import InfluenceCurveSet, influence_curves

WEIGHTS = ("unit", "atrisk")
METHODS = ("linear", "l2", "ks")
VARIANTS = ("standard", "landmark", "npmple")


@dataclass(frozen=True)
class WeightSpec:
    """``unit`` (``W = 1``) or ``atrisk``
    (``W = Ybar1 Ybar2 / (Ybar1 + Ybar2)``, zero where both risk sets are empty)."""

    kind: str = "unit"

    def __post_init__(self):
        if self.kind not in WEIGHTS:
            raise ValueError(f"unknown weight {self.kind!r}; choose from {WEIGHTS}")


def _weight(weight) -> WeightSpec:
    return weight if isinstance(weight, WeightSpec) else WeightSpec(weight)


@dataclass(frozen=True, eq=False)
class GroupFit:
    """Estimator, influence curves and processes of one group for ``h -> j``."""

    h: int
    j: int
    s: float
    processes: CountingProcessSet
    curve: TransitionProbabilityCurve
    influence: InfluenceCurveSet | None
    variant: str = "standard"

    @property
    def n(self) -> int:
        return self.processes.n

    @property
    def tau(self) -> float:
        return self.processes.max_time

    @property
    def estimate(self) -> np.ndarray:
        """``P_hj(s, t)`` at ``curve.times``."""
        return self.curve.entry(self.h, self.j)


def fit_group(sample, h: int, j: int, s: float = 0.0, variant: str = "standard",
              model: MissingnessModel | None = None, influence: bool = True) -> GroupFit:
    """Fit one group.

    ``variant`` selects the Aalen-Johansen estimator (``standard``), the
    landmark estimator conditioning on ``X(s) = h`` (``landmark``), or the
    estimator with fractional allocation of unascertained absorptions
    (``npmple``; a logistic model is fitted when ``model`` is None).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown estimator variant {variant!r}")
    cps = sample if isinstance(sample, CountingProcessSet) else build_counting_processes(sample)
    if variant == "landmark":
        A = landmark_intensities(cps, s, h)
    elif variant == "npmple":
        absorbing = tuple(sorted(cps.state_space.absorbing))
        if model is None and len(absorbing) == 1:
            model = MissingnessModel.supplied(default=(1.0,), absorbing=absorbing)
        elif model is None:
            src = sample if isinstance(sample, EventHistorySample) else cps.to_sample()
            model = fit_logistic_missingness(src)
        A = npmple_intensities(cps, model)
    else:
        A = nelson_aalen(cps)
    curve = aalen_johansen(A, s)
    infl = influence_curves(A, h, j, s) if influence else None
    return GroupFit(h, j, float(s), A.processes, curve, infl, variant)


@dataclass(frozen=True, eq=False)
class DifferenceProcess:
    """Weighted difference ``D(t) = W(t) [P1_hj(s, t) - P2_hj(s, t)]`` on
    ``(t1, t2]`` in piecewise form.

    ``interior[k]`` is the value on the open piece ``(breaks[k], breaks[k+1])``
    and ``points[k]`` the value at ``breaks[k+1]``.
    """

    breaks: np.ndarray
    interior: np.ndarray
    points: np.ndarray
    grid: EventGrid
    n1: int = 1
    n2: int = 1
    # indices into each group's curve times, and the weight per piece
    idx1_open: np.ndarray | None = None
    idx1_point: np.ndarray | None = None
    idx2_open: np.ndarray | None = None
    idx2_point: np.ndarray | None = None
    weight_values: np.ndarray | None = None

    @classmethod
    def from_steps(cls, breaks, values, n1: int = 1, n2: int = 1) -> "DifferenceProcess":
        """Step function equal to ``values[k]`` on ``(breaks[k], breaks[k+1]]``."""
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (breaks.size - 1,):
            raise ValueError("need one value per piece")
        return cls(breaks, values, values.copy(), EventGrid(breaks[1:-1], breaks[-1]), n1, n2)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breaks)

    @property
    def scale(self) -> float:
        """``sqrt(n1 n2 / (n1 + n2))``."""
        return math.sqrt(self.n1 * self.n2 / (self.n1 + self.n2))

    @property
    def lam(self) -> float:
        return self.n1 / (self.n1 + self.n2)


def _breaks(fit1: GroupFit, fit2: GroupFit, weight: WeightSpec, interval):
    s = fit1.s
    if fit2.s != s:
        raise ValueError("both groups must share the start time s")
    if interval is None:
        t1, t2 = s, min(fit1.tau, fit2.tau)
    else:
        t1, t2 = (float(x) for x in interval)
    if not t1 < t2:
        raise ValueError(f"comparison interval needs t1 < t2, got ({t1}, {t2}]")
    if t1 < s:
        raise ValueError(f"comparison interval starts before s={s}")
    events = np.union1d(fit1.curve.grid, fit2.curve.grid)
    grid = EventGrid(events[(events > t1) & (events <= t2)], t2)
    if len(grid) == 0:
        raise ComparisonError("no events in comparison interval")
    cuts = [events]
    if weight.kind == "atrisk":
        for fit in (fit1, fit2):
            p = fit.processes
            m = p.ep_state == fit.h
            cuts += [p.ep_start[m], p.ep_stop[m]]
    inner = np.unique(np.concatenate(cuts))
    inner = inner[(inner > t1) & (inner < t2)]
    return np.concatenate([[t1], inner, [t2]]), grid


def _weight_at(fit1: GroupFit, fit2: GroupFit, weight: WeightSpec, t) -> np.ndarray:
    if weight.kind == "unit":
        return np.ones(len(t))
    y1 = fit1.processes.at_risk(t)[:, fit1.h - 1] / fit1.n
    y2 = fit2.processes.at_risk(t)[:, fit2.h - 1] / fit2.n
    tot = y1 + y2
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, y1 * y2 / tot, 0.0)


def weighted_difference(fit1: GroupFit, fit2: GroupFit, weight="unit",
                        interval=None) -> DifferenceProcess:
    """Weighted difference process of two fitted groups.

    The default interval is ``(s, tau]`` with ``tau`` the smaller of the
    groups' largest observed times.
    """
    weight = _weight(weight)
    breaks, grid = _breaks(fit1, fit2, weight, interval)
    idx = []
    for fit in (fit1, fit2):
        t = fit.curve.times
        idx.append(np.searchsorted(t, breaks[:-1], side="right") - 1)
        idx.append(np.searchsorted(t, breaks[1:], side="right") - 1)
    # the at-risk weight is left-continuous, constant on (b_{k-1}, b_k]
    w = _weight_at(fit1, fit2, weight, breaks[1:])
    e1, e2 = fit1.estimate, fit2.estimate
    interior = w * (e1[idx[0]] - e2[idx[2]])
    points = w * (e1[idx[1]] - e2[idx[3]])
    return DifferenceProcess(breaks, interior, points, grid, fit1.n, fit2.n,
                             idx[0], idx[1], idx[2], idx[3], w)


def linear_statistic(D: DifferenceProcess) -> float:
    """Area under the weighted difference curve."""
    return float(np.dot(D.interior, D.widths))


def l2_statistic(D: DifferenceProcess) -> float:
    return float(math.sqrt(np.dot(D.interior ** 2, D.widths)))


def ks_statistic(D: DifferenceProcess) -> float:
    return float(max(np.abs(D.interior).max(), np.abs(D.points).max()))


def _integrals(D: DifferenceProcess, gamma: InfluenceCurveSet, idx_open) -> np.ndarray:
    if gamma.values.shape[1] <= idx_open.max():
        raise ValueError("influence curves do not match the difference process")
    return gamma.values[:, idx_open] @ (D.weight_values * D.widths)


def variance_estimate(D: DifferenceProcess, influence1: InfluenceCurveSet,
                      influence2: InfluenceCurveSet) -> float:
    """Plug-in variance of ``sqrt(n1 n2 / (n1 + n2)) Z``.

    Weighted sums of squared per-subject integrals ``int W gamma_i dm``, with
    factors ``n2 / ((n1 + n2) n1)`` and ``n1 / ((n1 + n2) n2)``.
    """
    n1, n2 = D.n1, D.n2
    i1 = _integrals(D, influence1, D.idx1_open)
    i2 = _integrals(D, influence2, D.idx2_open)
    return float(n2 / ((n1 + n2) * n1) * np.dot(i1, i1)
                 + n1 / ((n1 + n2) * n2) * np.dot(i2, i2))


@dataclass(frozen=True, eq=False)
class NullSample:
    """Multiplier realizations of the limiting null process and statistics.

    ``interior`` and ``points`` (shape ``(K, R)``) hold the realizations of
    ``B_r`` in the piecewise layout of the difference process; they are
    ``None`` unless requested.
    """

    l2: np.ndarray
    ks: np.ndarray
    interior: np.ndarray | None = None
    points: np.ndarray | None = None


def multiplier_null_sample(D: DifferenceProcess, influence1: InfluenceCurveSet,
                           influence2: InfluenceCurveSet, R: int = 1000, seed=None,
                           keep_process: bool = False) -> NullSample:
    """Simulate ``R`` realizations of

        B_r(t) = W(t) [ sqrt(1 - lam) n1^{-1/2} sum_i gamma1_i(t) xi1_ir
                        - sqrt(lam) n2^{-1/2} sum_i gamma2_i(t) xi2_ir ]

    with standard normal multipliers, and the matching null draws of the
    scaled L2 and sup statistics.

    ``seed`` feeds :func:`numpy.random.default_rng`; the ``(n1, R)`` then
    ``(n2, R)`` multiplier matrices are drawn in that fixed order.
    """
    if int(R) != R or R < 1:
        raise ValueError(f"R must be a positive integer, got {R!r}")
    R = int(R)
    rng = np.random.default_rng(seed)
    lam = D.lam
    xi1 = rng.standard_normal((D.n1, R))
    xi2 = rng.standard_normal((D.n2, R))
    c1 = math.sqrt(1 - lam) / math.sqrt(D.n1)
    c2 = math.sqrt(lam) / math.sqrt(D.n2)
    S1 = influence1.values.T @ xi1
    S2 = influence2.values.T @ xi2
    w = D.weight_values[:, None]
    interior = w * (c1 * S1[D.idx1_open] - c2 * S2[D.idx2_open])
    points = w * (c1 * S1[D.idx1_point] - c2 * S2[D.idx2_point])
    l2 = np.sqrt(D.widths @ interior ** 2)
    ks = np.maximum(np.abs(interior).max(axis=0), np.abs(points).max(axis=0))
    if keep_process:
        return NullSample(l2, ks, interior, points)
    return NullSample(l2, ks)


def monte_carlo_p_value(observed: float, null: np.ndarray) -> float:
    """Proportion of null realizations greater than or equal to ``observed``.

    No ``+1`` correction: ``p = 0`` is possible and means ``p < 1/R``.
    """
    return float(np.mean(np.asarray(null) >= observed))


@dataclass
class TestResult:
    """Outcome of one test.

    ``statistic`` is the raw ``Z``, ``Q1`` or ``Q2``. For the linear test
    ``scaled_statistic`` is the standardized ``sqrt(n1 n2/(n1+n2)) Z / omega``;
    for the omnibus tests it is ``sqrt(n1 n2/(n1+n2)) Q``.
    """

    __test__ = False  # not a pytest class

    method: str
    statistic: float
    scaled_statistic: float
    p_value: float
    variance_estimate: float | None = None
    resampling: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _summary(null: np.ndarray) -> dict:
    q = np.quantile(null, [0.5, 0.9, 0.95, 0.99])
    return {"mean": float(null.mean()), "sd": float(null.std(ddof=1)) if null.size > 1 else 0.0,
            "median": float(q[0]), "q90": float(q[1]), "q95": float(q[2]), "q99": float(q[3])}


def _seed_repr(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def linear_result(D: DifferenceProcess, fit1: GroupFit, fit2: GroupFit, meta=None) -> TestResult:
    Z = linear_statistic(D)
    omega2 = variance_estimate(D, fit1.influence, fit2.influence)
    omega = math.sqrt(omega2)
    if omega == 0.0:
        if Z != 0.0:
            raise DegenerateVarianceError(f"zero variance estimate with Z={Z}")
        z, p = 0.0, 1.0
    else:
        z = D.scale * Z / omega
        p = float(min(1.0, 2.0 * norm.sf(abs(z))))
    return TestResult("linear", Z, z, p, variance_estimate=omega2, meta=dict(meta or {}))


def omnibus_results(D: DifferenceProcess, fit1: GroupFit, fit2: GroupFit, methods=("l2", "ks"),
                    R: int = 1000, seed=None, meta=None, null: NullSample | None = None):
    """L2 and/or KS results sharing one multiplier null sample."""
    if null is None:
        null = multiplier_null_sample(D, fit1.influence, fit2.influence, R, seed)
    out = {}
    for method in methods:
        stat = l2_statistic(D) if method == "l2" else ks_statistic(D)
        draws = null.l2 if method == "l2" else null.ks
        scaled = D.scale * stat
        out[method] = TestResult(
            method, stat, scaled, monte_carlo_p_value(scaled, draws),
            resampling={"R": int(draws.size), "seed": _seed_repr(seed), "null": _summary(draws)},
            meta=dict(meta or {}))
    return out


def _fits(sample1, sample2, h, j, s, variant, models):
    models = models if models is not None else (None, None)
    return (fit_group(sample1, h, j, s, variant, models[0]),
            fit_group(sample2, h, j, s, variant, models[1]))


def _meta(D, h, j, s, weight, variant):
    return {"transition": [int(h), int(j)], "s": float(s), "n1": D.n1, "n2": D.n2,
            "interval": [float(D.breaks[0]), float(D.breaks[-1])], "weight": weight.kind,
            "estimator": variant, "grid_size": len(D.grid)}


def compare(sample1, sample2, h: int, j: int, methods=METHODS, weight="unit", interval=None,
            R: int = 1000, seed=None, s: float = 0.0, variant: str = "standard",
            models=None, null_out: list | None = None) -> dict:
    """Run several tests on the same pair of samples, sharing the fits and
    the multiplier null sample. Returns ``{method: TestResult}``."""
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown test method {m!r}; choose from {METHODS}")
    weight = _weight(weight)
    fit1, fit2 = _fits(sample1, sample2, h, j, s, variant, models)
    D = weighted_difference(fit1, fit2, weight, interval)
    meta = _meta(D, h, j, s, weight, variant)
    if variant == "npmple":
        meta["missingness_coefficients_fixed"] = True
    out = {}
    if "linear" in methods:
        out["linear"] = linear_result(D, fit1, fit2, meta)
    omni = [m for m in methods if m != "linear"]
    if omni:
        null = multiplier_null_sample(D, fit1.influence, fit2.influence, R, seed)
        if null_out is not None:
            null_out.append(null)
        out.update(omnibus_results(D, fit1, fit2, omni, R, seed, meta, null))
    return {m: out[m] for m in methods}


def linear_test(sample1, sample2, h: int, j: int, weight="unit", interval=None,
                s: float = 0.0, variant: str = "standard", models=None) -> TestResult:
    """Linear (area) test with a two-sided standard normal p-value."""
    return compare(sample1, sample2, h, j, ("linear",), weight, interval, s=s,
                   variant=variant, models=models)["linear"]


def omnibus_test(sample1, sample2, h: int, j: int, weight="unit", interval=None,
                 method: str = "l2", R: int = 1000, seed=None, s: float = 0.0,
                 variant: str = "standard", models=None) -> TestResult:
    """L2-norm (``method="l2"``) or KS-type (``method="ks"``) test."""
    if method not in ("l2", "ks"):
        raise ValueError(f"omnibus method must be 'l2' or 'ks', got {method!r}")
    return compare(sample1, sample2, h, j, (method,), weight, interval, R, seed, s,
                   variant, models)[method]
