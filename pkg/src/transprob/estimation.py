"""Nelson-Aalen cumulative intensities and Aalen-Johansen transition
probabilities, with the landmark and missing-absorbing-state variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, ValidationError
from .history import (ABSORBED_UNKNOWN, CountingProcessSet, EventGrid,
                      EventHistorySample, JumpTable, build_counting_processes,
                      event_grid)


@dataclass(frozen=True, eq=False)
class CumulativeIntensityMatrix:
    """Nelson-Aalen increments on an event grid.

    ``increments[k]`` is the ``q x q`` matrix ``dA(u_k)``; its off-diagonal
    entries are (weighted) jump counts over at-risk counts and each row sums
    to zero. ``at_risk[k, h - 1]`` is the number at risk in ``h`` at ``u_k``.
    """

    grid: EventGrid
    increments: np.ndarray
    at_risk: np.ndarray
    processes: CountingProcessSet
    jumps: JumpTable
    variant: str = "standard"

    @property
    def n(self) -> int:
        return self.processes.n

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=0)

    def value(self, h: int, j: int, t: float) -> float:
        """``A_hj(t)``."""
        k = np.searchsorted(self.grid.times, t, side="right")
        return float(self.increments[:k, h - 1, j - 1].sum())


@dataclass(frozen=True, eq=False)
class TransitionProbabilityCurve:
    """Matrix-valued step function ``t -> P(s, t)``.

    ``times[0] == s`` and ``values[0]`` is the identity; ``values[k]`` holds
    on ``[times[k], times[k + 1])``.
    """

    s: float
    times: np.ndarray
    values: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return self.times[1:]

    def at(self, t: float) -> np.ndarray:
        if t < self.s:
            raise ValueError(f"t={t} precedes the start time s={self.s}")
        return self.values[np.searchsorted(self.times, t, side="right") - 1]

    def entry(self, h: int, j: int) -> np.ndarray:
        return self.values[:, h - 1, j - 1]


def _increments(cps: CountingProcessSet, times: np.ndarray, jumps: JumpTable):
    q = cps.state_space.q
    k = times.size
    dN = np.zeros((k, q, q))
    if jumps.time.size:
        idx = np.searchsorted(times, jumps.time)
        inside = idx < k
        inside[inside] = times[idx[inside]] == jumps.time[inside]
        if not inside.all():
            raise ValueError("event grid does not cover every jump of the processes")
        np.add.at(dN, (idx, jumps.source - 1, jumps.target - 1), jumps.weight)
    Y = cps.at_risk(times)
    with np.errstate(invalid="ignore", divide="ignore"):
        dA = np.where(Y[:, :, None] > 0, dN / Y[:, :, None], 0.0)
    idx = np.arange(q)
    dA[:, idx, idx] = 0.0
    dA[:, idx, idx] = -dA.sum(axis=2)
    return dA, Y


def _standard_jumps(cps: CountingProcessSet) -> JumpTable:
    jumps = cps.jumps()
    absorbing = sorted(cps.state_space.absorbing)
    if len(absorbing) == 1:
        # a single absorbing state leaves nothing unascertained
        m = cps.ep_target == ABSORBED_UNKNOWN
        if m.any():
            jumps = JumpTable(
                np.concatenate([jumps.subject, cps.ep_subject[m]]),
                np.concatenate([jumps.time, cps.ep_stop[m]]),
                np.concatenate([jumps.source, cps.ep_state[m]]),
                np.concatenate([jumps.target, np.full(int(m.sum()), absorbing[0])]),
                np.concatenate([jumps.weight, np.ones(int(m.sum()))]))
    return jumps


def nelson_aalen(cps: CountingProcessSet, grid: EventGrid | None = None) -> CumulativeIntensityMatrix:
    """Nelson-Aalen estimator of all cumulative transition intensities.

    Increments at times with nobody at risk are zero. Unascertained
    absorptions are treated as censoring (unless there is a single absorbing
    state, in which case they are unambiguous).
    """
    if grid is None:
        grid = event_grid(cps)
    jumps = _standard_jumps(cps)
    dA, Y = _increments(cps, grid.times, jumps)
    return CumulativeIntensityMatrix(grid, dA, Y, cps, jumps)


def product_integral(increments: np.ndarray) -> np.ndarray:
    """Cumulative ordered products ``(I + dA_1)(I + dA_2)...``.

    Returns ``k + 1`` matrices, the first being the identity.
    """
    k, q, _ = increments.shape
    out = np.empty((k + 1, q, q))
    P = np.eye(q)
    out[0] = P
    eye = np.eye(q)
    for i in range(k):
        P = P @ (eye + increments[i])
        out[i + 1] = P
    return out


def aalen_johansen(A: CumulativeIntensityMatrix, s: float = 0.0) -> TransitionProbabilityCurve:
    """Aalen-Johansen estimator ``P(s, t)`` for ``t`` in ``(s, tau]``."""
    if s >= A.grid.tau:
        raise ValueError(f"start time s={s} must be below tau={A.grid.tau}")
    m = A.grid.times > s
    times = np.concatenate([[float(s)], A.grid.times[m]])
    return TransitionProbabilityCurve(float(s), times, product_integral(A.increments[m]))


def landmark_set(cps: CountingProcessSet, s: float, h: int) -> np.ndarray:
    """Boolean mask of subjects observed in state ``h`` at time ``s``."""
    m = (cps.ep_state == h) & (cps.ep_start <= s) & (s < cps.ep_stop)
    keep = np.zeros(cps.n, dtype=bool)
    keep[cps.ep_subject[m]] = True
    return keep


def landmark_intensities(data, s: float, h: int) -> CumulativeIntensityMatrix:
    """Nelson-Aalen increments after ``s`` from the processes of the subjects
    in state ``h`` at ``s``; the other subjects keep zero processes."""
    cps = data if isinstance(data, CountingProcessSet) else build_counting_processes(data)
    h = cps.state_space.check_state(h)
    if h in cps.state_space.absorbing:
        raise ValueError(f"landmark state {h} is absorbing")
    keep = landmark_set(cps, s, h)
    if not keep.any():
        raise EstimationError(f"empty landmark set: no subject in state {h} at s={s}")
    sub = cps.restrict(keep)
    times = sub.event_times()
    grid = EventGrid(times[times > s], cps.max_time)
    jumps = _standard_jumps(sub)
    m = jumps.time > s
    jumps = JumpTable(jumps.subject[m], jumps.time[m], jumps.source[m],
                      jumps.target[m], jumps.weight[m])
    dA, Y = _increments(sub, grid.times, jumps)
    return CumulativeIntensityMatrix(grid, dA, Y, sub, jumps, variant="landmark")


def landmark_aalen_johansen(data, s: float, h: int) -> TransitionProbabilityCurve:
    """Landmark Aalen-Johansen estimator; row ``h`` estimates
    ``Pr(X(t) = j | X(s) = h)`` without the Markov assumption."""
    return aalen_johansen(landmark_intensities(data, s, h), s)


@dataclass(frozen=True, eq=False)
class MissingnessModel:
    """Probabilities ``pi_j(O_i)`` of each absorbing state for subjects whose
    absorbing state was not ascertained.

    ``kind="logistic"`` uses a multinomial logit with coefficient matrix
    ``coef`` of shape ``(1 + n_covariates, len(absorbing) - 1)``; the first
    absorbing state is the reference category. ``kind="supplied"`` uses
    per-subject probabilities from ``probabilities`` (subject id -> vector)
    or the shared ``default`` vector.
    """

    kind: str
    absorbing: tuple
    coef: np.ndarray | None = None
    probabilities: dict | None = None
    default: tuple | None = None
    iterations: int = 0

    @classmethod
    def supplied(cls, default=None, probabilities=None, absorbing=None):
        """Build a supplied-probability model.

        ``default`` and the values of ``probabilities`` may be mappings
        ``state -> probability`` or sequences ordered like ``absorbing``.
        """
        if absorbing is None:
            src = default if default is not None else next(iter((probabilities or {}).values()))
            if not isinstance(src, dict):
                raise ValueError("absorbing states must be given with sequence probabilities")
            absorbing = sorted(src)
        absorbing = tuple(int(a) for a in absorbing)

        def as_vec(p):
            v = np.array([p[a] for a in absorbing] if isinstance(p, dict) else p, dtype=float)
            if v.shape != (len(absorbing),) or np.any(v < 0) or np.any(v > 1) \
                    or abs(v.sum() - 1.0) > 1e-9:
                raise ValueError(f"invalid absorbing-state probabilities {p!r}")
            return tuple(v)

        return cls("supplied", absorbing,
                   probabilities={k: as_vec(v) for k, v in (probabilities or {}).items()},
                   default=None if default is None else as_vec(default))

    def probs(self, subject_id, covariates=None) -> np.ndarray:
        if len(self.absorbing) == 1:
            return np.ones(1)
        if self.kind == "supplied":
            if self.probabilities and subject_id in self.probabilities:
                return np.array(self.probabilities[subject_id])
            if self.default is None:
                raise ValidationError(f"subject {subject_id!r}: no supplied probabilities")
            return np.array(self.default)
        p = self.coef.shape[0]
        if p > 1 and covariates is None:
            raise ValidationError(f"subject {subject_id!r}: missingness covariates required")
        x = np.concatenate([[1.0], np.asarray(covariates if p > 1 else (), dtype=float)])
        if x.size != p:
            raise ValidationError(
                f"subject {subject_id!r}: expected {p - 1} covariates, got {x.size - 1}")
        eta = np.concatenate([[0.0], x @ self.coef])
        e = np.exp(eta - eta.max())
        return e / e.sum()


def npmple_intensities(sample, model: MissingnessModel,
                       grid: EventGrid | None = None) -> CumulativeIntensityMatrix:
    """Cumulative intensities with unascertained absorptions allocated
    fractionally across the absorbing states.

    A subject absorbed from ``h`` with ``R_i = 0`` contributes ``pi_j(O_i)``
    to the ``h -> j`` numerator for each absorbing ``j``; ascertained
    absorptions and transient transitions count as usual.
    """
    cps = sample if isinstance(sample, CountingProcessSet) else build_counting_processes(sample)
    absorbing = tuple(sorted(cps.state_space.absorbing))
    if set(model.absorbing) != set(absorbing):
        raise ValueError(f"model states {model.absorbing} differ from absorbing {absorbing}")
    if grid is None:
        grid = event_grid(cps)
    base = cps.jumps()
    m = np.flatnonzero(cps.ep_target == ABSORBED_UNKNOWN)
    if m.size == 0:
        jumps = base
    else:
        sub, tim, src, tgt, w = [], [], [], [], []
        for e in m:
            i = int(cps.ep_subject[e])
            cov = cps.covariates[i] if cps.covariates else None
            pi = model.probs(cps.subject_ids[i], cov)
            for a, p in zip(model.absorbing, pi):
                sub.append(i); tim.append(cps.ep_stop[e]); src.append(cps.ep_state[e])
                tgt.append(a); w.append(p)
        jumps = JumpTable(np.concatenate([base.subject, np.array(sub, dtype=np.int64)]),
                          np.concatenate([base.time, tim]),
                          np.concatenate([base.source, np.array(src, dtype=np.int64)]),
                          np.concatenate([base.target, np.array(tgt, dtype=np.int64)]),
                          np.concatenate([base.weight, w]))
    dA, Y = _increments(cps, grid.times, jumps)
    return CumulativeIntensityMatrix(grid, dA, Y, cps, jumps, variant="npmple")


def fit_logistic_missingness(sample: EventHistorySample, max_iter: int = 100,
                             tol: float = 1e-9, max_coef: float = 30.0) -> MissingnessModel:
    """Multinomial-logit maximum likelihood fit of the ascertained absorbing
    state on the subjects' covariates, by Newton-Raphson.

    Complete cases are the subjects with an ascertained absorption. Iterates
    until the score norm is at most ``tol``. Coefficients exceeding
    ``max_coef`` in absolute value are reported as separation.
    """
    absorbing = tuple(sorted(sample.state_space.absorbing))
    K = len(absorbing)
    if K < 2:
        raise ValueError("a missingness model needs at least two absorbing states")
    recs = [r for r in sample.subjects if r.absorb_observed and r.final_state in absorbing]
    counts = np.zeros(K, dtype=int)
    for r in recs:
        counts[absorbing.index(r.final_state)] += 1
    if np.any(counts == 0):
        raise EstimationError(
            f"separation: complete cases per absorbing state {dict(zip(absorbing, counts))}")
    has_cov = [r.absorb_covariates is not None for r in recs]
    if any(has_cov) and not all(has_cov):
        raise ValidationError("covariates missing for some complete cases")
    cov = [r.absorb_covariates for r in recs] if all(has_cov) else [() for _ in recs]
    X = np.column_stack([np.ones(len(recs)), np.array(cov, dtype=float).reshape(len(recs), -1)])
    p = X.shape[1]
    Y = np.zeros((len(recs), K - 1))
    for row, r in enumerate(recs):
        c = absorbing.index(r.final_state)
        if c > 0:
            Y[row, c - 1] = 1.0
    theta = np.zeros((p, K - 1))
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        eta = np.column_stack([np.zeros(len(recs)), X @ theta])
        e = np.exp(eta - eta.max(axis=1, keepdims=True))
        prob = (e / e.sum(axis=1, keepdims=True))[:, 1:]
        grad = X.T @ (Y - prob)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            break
        # Hessian of the log-likelihood, blocks indexed by (class, class)
        W = np.einsum("ia,ab->iab", prob, np.eye(K - 1)) - np.einsum("ia,ib->iab", prob, prob)
        H = np.einsum("iab,ir,is->arbs", W, X, X).reshape((K - 1) * p, (K - 1) * p)
        g = grad.T.reshape(-1)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"singular information matrix at iteration {it}") from exc
        theta = theta + step.reshape(K - 1, p).T
        if np.abs(theta).max() > max_coef:
            raise EstimationError(
                f"separation: coefficients diverging at iteration {it} "
                f"(max |coef| {np.abs(theta).max():.3g}, score norm {grad_norm:.3g})")
    else:
        raise EstimationError(
            f"no convergence after {max_iter} iterations (score norm {grad_norm:.3g})")
    return MissingnessModel("logistic", absorbing, coef=theta, iterations=it)


def state_occupation(curve: TransitionProbabilityCurve, initial) -> np.ndarray:
    """State occupation probabilities ``P_j(t) = sum_h initial_h P_hj(0, t)``
    at each of ``curve.times``; shape ``(len(curve.times), q)``."""
    initial = np.asarray(initial, dtype=float)
    q = curve.values.shape[1]
    if initial.shape != (q,) or np.any(initial < 0) or abs(initial.sum() - 1.0) > 1e-12:
        raise ValueError(f"initial must be a probability vector over {q} states")
    if curve.s != 0:
        raise ValueError("state occupation needs a curve starting at s=0")
    return np.einsum("h,khj->kj", initial, curve.values)
