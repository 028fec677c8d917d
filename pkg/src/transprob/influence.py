"""Martingale residuals and estimated influence curves of the Aalen-Johansen
estimator (standard, landmark and missing-absorbing-state variants)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .estimation import CumulativeIntensityMatrix, product_integral
from .history import CountingProcessSet


@dataclass(frozen=True, eq=False)
class MartingaleResidualSet:
    """Residual increments ``dM_ilm(u_k) = dN_ilm(u_k) - Y_il(u_k) dA_lm(u_k)``.

    ``increments`` has shape ``(n, k, q, q)``; the diagonal holds
    ``dM_ill = -sum_{m != l} dM_ilm``.
    """

    times: np.ndarray
    increments: np.ndarray

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=1)


@dataclass(frozen=True, eq=False)
class InfluenceCurveSet:
    """Per-subject influence curves ``gamma_ihj(s, t)``.

    ``times[0] == s`` and ``values[:, 0] == 0``; ``values[i, k]`` holds on
    ``[times[k], times[k + 1])``.
    """

    h: int
    j: int
    s: float
    times: np.ndarray
    values: np.ndarray
    variant: str = "standard"
    # the NPMPLE curves treat the missingness coefficients as known
    beta_fixed: bool = False

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _check_processes(cps: CountingProcessSet, A: CumulativeIntensityMatrix):
    if cps is A.processes:
        return
    if cps.n != A.n:
        raise ValueError("processes and intensities come from different samples")
    jt = cps.jumps().time
    if not np.isin(jt, A.grid.times).all():
        raise ValueError("intensity grid does not match the processes")


def martingale_residuals(cps: CountingProcessSet, A: CumulativeIntensityMatrix) -> MartingaleResidualSet:
    """Dense residual increments on the grid of ``A`` (diagnostic sizes)."""
    _check_processes(cps, A)
    proc = A.processes
    times = A.grid.times
    q = proc.state_space.q
    state = proc.state_matrix(times)
    comp = np.zeros((times.size, q + 1, q))
    comp[:, 1:, :] = -A.increments
    n, k = state.shape
    # dM[i, k, l, :] = -dA[k, l, :] when subject i is at risk in l
    dM = np.zeros((n, k, q, q))
    ii, kk = np.nonzero(state)
    ll = state[ii, kk] - 1
    dM[ii, kk, ll, :] = comp[kk, ll + 1, :]
    jp = A.jumps
    if jp.time.size:
        ki = np.searchsorted(times, jp.time)
        np.add.at(dM, (jp.subject, ki, jp.source - 1, jp.target - 1), jp.weight)
        np.add.at(dM, (jp.subject, ki, jp.source - 1, jp.source - 1), -jp.weight)
    return MartingaleResidualSet(times, dM)


def influence_curves(A: CumulativeIntensityMatrix, h: int, j: int, s: float = 0.0) -> InfluenceCurveSet:
    """Estimated influence curves of ``P_hj(s, .)`` for every subject.

    Evaluates

        gamma_i(s, t) = sum_{u in (s, t]} sum_{l, m} P_hl(s, u-) dM_ilm(u) P_mj(u, t) / Ybar_l(u)

    with ``Ybar_l = n^{-1} sum_i Y_il`` by the forward recursion
    ``V(t_k) = V(t_{k-1}) (I + dA(t_k)) + c(t_k)`` on the row vectors
    ``V_i(t) = gamma_i(s, t)[h, .]``, so no ``P(u, t)`` is ever formed.
    Absorbing rows of ``dA`` vanish, so restricting ``l`` to transient states
    is automatic.
    """
    proc = A.processes
    space = proc.state_space
    h, j = space.check_state(h), space.check_state(j)
    q, n = space.q, A.n
    sel = A.grid.times > s
    times = A.grid.times[sel]
    dA = A.increments[sel]
    ybar = A.at_risk[sel] / n if n else A.at_risk[sel]
    K = times.size
    state = proc.state_matrix(times)

    # row h of P(s, u_k-) for every k
    left = product_integral(dA)[:-1, h - 1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(ybar > 0, left / ybar, 0.0)

    jp = A.jumps
    m = jp.time > s
    jsub, jsrc, jtgt, jw = jp.subject[m], jp.source[m] - 1, jp.target[m] - 1, jp.weight[m]
    jk = np.searchsorted(times, jp.time[m])
    if np.any(ybar[jk, jsrc] == 0):
        raise EstimationError("jump from a state with an empty risk set")
    order = np.argsort(jk, kind="stable")
    jsub, jsrc, jtgt, jw, jk = jsub[order], jsrc[order], jtgt[order], jw[order], jk[order]
    bounds = np.searchsorted(jk, np.arange(K + 1))
    contrib = jw * a[jk, jsrc]

    out = np.zeros((n, K + 1))
    V = np.zeros((n, q))
    comp = np.zeros((q + 1, q))
    eye = np.eye(q)
    for k in range(K):
        comp[1:] = -a[k][:, None] * dA[k]
        c = comp[state[:, k]]
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            np.add.at(c, (jsub[lo:hi], jtgt[lo:hi]), contrib[lo:hi])
            np.add.at(c, (jsub[lo:hi], jsrc[lo:hi]), -contrib[lo:hi])
        V = V @ (eye + dA[k]) + c
        out[:, k + 1] = V[:, j - 1]
    return InfluenceCurveSet(h, j, float(s), np.concatenate([[float(s)], times]), out,
                             variant=A.variant, beta_fixed=A.variant == "npmple")
