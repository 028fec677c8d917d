"""Event-history data model: state spaces, subject paths, counting and
at-risk processes, and the event-time grids that carry all step functions.

States are labelled ``1..q``. The label :data:`ABSORBED_UNKNOWN` (``0``) is
reserved for a final transition into an absorbing state whose identity was
not ascertained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

ABSORBED_UNKNOWN = 0

# target code used in episode tables for a sojourn that ends without a jump
_NO_JUMP = -1


@dataclass(frozen=True)
class StateSpace:
    """Finite state space ``{1, ..., q}`` with a set of absorbing states."""

    q: int
    absorbing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(f"state space needs q >= 2 states, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))
        absorbing = frozenset(int(s) for s in self.absorbing)
        bad = [s for s in absorbing if not 1 <= s <= self.q]
        if bad:
            raise ValueError(f"absorbing states {sorted(bad)} outside 1..{self.q}")
        object.__setattr__(self, "absorbing", absorbing)

    @property
    def labels(self) -> tuple:
        return tuple(range(1, self.q + 1))

    @property
    def transient(self) -> tuple:
        return tuple(s for s in self.labels if s not in self.absorbing)

    def check_state(self, state) -> int:
        if isinstance(state, (bool, np.bool_)) or int(state) != state \
                or not 1 <= int(state) <= self.q:
            raise ValueError(f"unknown state {state!r} (states are 1..{self.q})")
        return int(state)


@dataclass(frozen=True)
class SubjectRecord:
    """Observed path of one subject.

    Parameters
    ----------
    subject_id : hashable
        Opaque identifier.
    entry_state : int
        State occupied at ``entry_time``.
    transitions : sequence of (time, from_state, to_state)
        Strictly time-ordered direct transitions.
    censor_time : float or None
        End of follow-up. May be ``None`` only when the path ends in an
        absorbing state.
    entry_time : float
        Left-truncation time; the subject is at risk only after it.
    absorb_observed : bool
        ``False`` when the final transition is into :data:`ABSORBED_UNKNOWN`.
    absorb_covariates : sequence of float or None
        Covariates for the missingness model.
    """

    subject_id: object
    entry_state: int
    transitions: tuple = ()
    censor_time: float | None = None
    entry_time: float = 0.0
    absorb_observed: bool = True
    absorb_covariates: tuple | None = None

    def __post_init__(self):
        trans = tuple((float(t), int(a), int(b)) for t, a, b in self.transitions)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "entry_time", float(self.entry_time))
        if self.censor_time is not None:
            object.__setattr__(self, "censor_time", float(self.censor_time))
        if self.absorb_covariates is not None:
            object.__setattr__(self, "absorb_covariates",
                               tuple(float(x) for x in self.absorb_covariates))
        object.__setattr__(self, "absorb_observed", bool(self.absorb_observed))

    @property
    def final_state(self) -> int:
        return self.transitions[-1][2] if self.transitions else self.entry_state

    @property
    def end_time(self) -> float:
        """Largest observed (event or censoring) time."""
        last = self.transitions[-1][0] if self.transitions else self.entry_time
        if self.censor_time is not None:
            return max(last, self.censor_time)
        return last

    def validate(self, space: StateSpace) -> None:
        sid = self.subject_id

        def fail(msg):
            raise ValidationError(f"subject {sid!r}: {msg}")

        if not math.isfinite(self.entry_time) or self.entry_time < 0:
            fail(f"entry_time must be finite and >= 0, got {self.entry_time}")
        try:
            space.check_state(self.entry_state)
        except ValueError as exc:
            fail(f"entry state: {exc}")
        current, last_time = self.entry_state, self.entry_time
        for k, (t, a, b) in enumerate(self.transitions):
            where = f"transition #{k + 1} ({t}, {a}->{b})"
            if not math.isfinite(t):
                fail(f"{where}: non-finite time")
            if t <= last_time:
                if k == 0:
                    fail(f"{where}: time must exceed entry_time {self.entry_time}")
                fail(f"{where}: times must be strictly increasing")
            if a != current:
                fail(f"{where}: non-contiguous path, subject is in state {current}")
            if a in space.absorbing:
                fail(f"{where}: transition out of absorbing state {a}")
            if b == ABSORBED_UNKNOWN:
                if not space.absorbing:
                    fail(f"{where}: absorbed-unknown without absorbing states")
                if k != len(self.transitions) - 1:
                    fail(f"{where}: absorbed-unknown must be the final transition")
            else:
                try:
                    space.check_state(b)
                except ValueError as exc:
                    fail(f"{where}: {exc}")
                if a == b:
                    fail(f"{where}: self-transition")
            current, last_time = b, t
        if self.censor_time is not None:
            if not math.isfinite(self.censor_time):
                fail("non-finite censor_time")
            if self.censor_time < last_time:
                fail(f"censor_time {self.censor_time} precedes last observed time {last_time}")
        unknown = self.final_state == ABSORBED_UNKNOWN
        if unknown and self.absorb_observed:
            fail("absorbed-unknown final state requires absorb_observed=False")
        if not unknown and not self.absorb_observed:
            fail("absorb_observed=False but the final transition is not absorbed-unknown")
        if (self.censor_time is None and not unknown
                and self.final_state not in space.absorbing):
            fail(f"path ends in transient state {self.final_state} without a censor_time")


@dataclass(frozen=True)
class EventHistorySample:
    """Validated collection of subject paths over one state space."""

    state_space: StateSpace
    subjects: tuple
    group_label: str | None = None

    def __post_init__(self):
        subjects = tuple(self.subjects)
        object.__setattr__(self, "subjects", subjects)
        seen = set()
        for rec in subjects:
            rec.validate(self.state_space)
            if rec.subject_id in seen:
                raise ValidationError(f"duplicate subject id {rec.subject_id!r}")
            seen.add(rec.subject_id)
        if subjects and not any(r.entry_state not in self.state_space.absorbing
                                for r in subjects):
            raise ValidationError("no subject enters in a transient state")

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def max_time(self) -> float:
        """Largest observed event or censoring time (0 for an empty sample)."""
        return max((r.end_time for r in self.subjects), default=0.0)

    def event_times(self) -> np.ndarray:
        return np.array([t for r in self.subjects for t, _, _ in r.transitions], dtype=float)


@dataclass(frozen=True, eq=False)
class EventGrid:
    """Sorted distinct event times in ``(0, tau]``."""

    times: np.ndarray
    tau: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("grid times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "tau", float(self.tau))

    def __len__(self):
        return self.times.size


@dataclass(frozen=True, eq=False)
class JumpTable:
    """Weighted jumps ``subject, time, source -> target``.

    Standard data carry unit weights; the fractional counting processes of
    the missing-absorbing-state estimator carry probabilities.
    """

    subject: np.ndarray
    time: np.ndarray
    source: np.ndarray
    target: np.ndarray
    weight: np.ndarray


@dataclass(frozen=True, eq=False)
class CountingProcessSet:
    """Counting and at-risk processes of a sample in episode (sojourn) form.

    Each episode is a sojourn of subject ``ep_subject`` in state ``ep_state``
    over ``(ep_start, ep_stop]``; it ends with a jump to ``ep_target``, to
    :data:`ABSORBED_UNKNOWN`, or with no jump (target ``-1``). The at-risk
    indicator ``Y_ih(t)`` is one exactly when ``t`` lies in such an interval
    for state ``h``; ``N_ihj`` jumps at ``ep_stop`` of an episode with target
    ``j``.
    """

    state_space: StateSpace
    subject_ids: tuple
    ep_subject: np.ndarray
    ep_state: np.ndarray
    ep_start: np.ndarray
    ep_stop: np.ndarray
    ep_target: np.ndarray
    entry_state: np.ndarray
    entry_time: np.ndarray
    censor_time: np.ndarray
    covariates: tuple = ()

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def absorb_observed(self) -> np.ndarray:
        out = np.ones(self.n, dtype=bool)
        out[self.ep_subject[self.ep_target == ABSORBED_UNKNOWN]] = False
        return out

    @property
    def max_time(self) -> float:
        vals = [0.0]
        if self.ep_stop.size:
            vals.append(float(self.ep_stop.max()))
        cens = self.censor_time[np.isfinite(self.censor_time)]
        if cens.size:
            vals.append(float(cens.max()))
        return max(vals)

    def jumps(self) -> JumpTable:
        """Observed jumps into known states, unit weights."""
        m = self.ep_target > 0
        return JumpTable(self.ep_subject[m], self.ep_stop[m], self.ep_state[m],
                         self.ep_target[m], np.ones(int(m.sum())))

    def event_times(self) -> np.ndarray:
        """Distinct times of any transition, including unascertained absorptions."""
        return np.unique(self.ep_stop[self.ep_target != _NO_JUMP])

    def at_risk(self, times) -> np.ndarray:
        """Number at risk ``sum_i Y_ih(t)`` for each ``t`` in ``times``.

        Returns an array of shape ``(len(times), q)``; column ``h - 1`` is
        state ``h``. Left-continuous in ``t``.
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((times.size, self.state_space.q))
        for h in range(1, self.state_space.q + 1):
            m = self.ep_state == h
            if not m.any():
                continue
            starts = np.sort(self.ep_start[m])
            stops = np.sort(self.ep_stop[m])
            # start < t <= stop  <=>  #(start < t) - #(stop < t)
            out[:, h - 1] = (np.searchsorted(starts, times, side="left")
                             - np.searchsorted(stops, times, side="left"))
        return out

    def state_matrix(self, times) -> np.ndarray:
        """``(n, len(times))`` matrix of the state each subject is at risk in
        just before each time (0 when not at risk)."""
        times = np.asarray(times, dtype=float)
        k = times.size
        diff = np.zeros((self.n, k + 1), dtype=np.int64)
        lo = np.searchsorted(times, self.ep_start, side="right")
        hi = np.searchsorted(times, self.ep_stop, side="right")
        np.add.at(diff, (self.ep_subject, lo), self.ep_state)
        np.add.at(diff, (self.ep_subject, hi), -self.ep_state)
        return np.cumsum(diff, axis=1)[:, :k].astype(np.int8)

    def counting(self, i: int, h: int, j: int, t: float) -> int:
        """``N_ihj(t)``: number of ``h -> j`` jumps of subject ``i`` in ``[0, t]``."""
        m = ((self.ep_subject == i) & (self.ep_state == h) & (self.ep_target == j)
             & (self.ep_stop <= t))
        return int(m.sum())

    def indicator(self, i: int, h: int, t: float) -> int:
        """``Y_ih(t)``."""
        m = ((self.ep_subject == i) & (self.ep_state == h)
             & (self.ep_start < t) & (t <= self.ep_stop))
        return int(m.any())

    def restrict(self, keep) -> "CountingProcessSet":
        """Zero the processes of subjects outside ``keep`` (boolean, length n).

        The subject count is unchanged, matching the indicator-modified
        processes ``N * 1{keep}`` and ``Y * 1{keep}``.
        """
        keep = np.asarray(keep, dtype=bool)
        m = keep[self.ep_subject]
        return CountingProcessSet(
            self.state_space, self.subject_ids, self.ep_subject[m], self.ep_state[m],
            self.ep_start[m], self.ep_stop[m], self.ep_target[m], self.entry_state,
            self.entry_time, self.censor_time, self.covariates)

    def to_sample(self, group_label=None) -> EventHistorySample:
        """Reconstruct the subject records (inverse of :func:`build_counting_processes`)."""
        per = [[] for _ in range(self.n)]
        for i, h, t, b in zip(self.ep_subject, self.ep_state, self.ep_stop, self.ep_target):
            if b != _NO_JUMP:
                per[i].append((float(t), int(h), int(b)))
        records = []
        for i in range(self.n):
            trans = sorted(per[i])
            cens = self.censor_time[i]
            records.append(SubjectRecord(
                subject_id=self.subject_ids[i], entry_state=int(self.entry_state[i]),
                transitions=tuple(trans),
                censor_time=None if np.isnan(cens) else float(cens),
                entry_time=float(self.entry_time[i]),
                absorb_observed=not (trans and trans[-1][2] == ABSORBED_UNKNOWN),
                absorb_covariates=self.covariates[i] if self.covariates else None))
        return EventHistorySample(self.state_space, tuple(records), group_label)


def build_counting_processes(sample: EventHistorySample) -> CountingProcessSet:
    """Counting and at-risk processes of a validated sample."""
    space = sample.state_space
    sub, state, start, stop, target = [], [], [], [], []
    n = sample.n
    entry_state = np.empty(n, dtype=np.int64)
    entry_time = np.empty(n)
    censor = np.full(n, np.nan)
    for i, rec in enumerate(sample.subjects):
        entry_state[i] = rec.entry_state
        entry_time[i] = rec.entry_time
        if rec.censor_time is not None:
            censor[i] = rec.censor_time
        cur, t0 = rec.entry_state, rec.entry_time
        for t, a, b in rec.transitions:
            sub.append(i); state.append(a); start.append(t0); stop.append(t); target.append(b)
            cur, t0 = b, t
        if (cur != ABSORBED_UNKNOWN and cur not in space.absorbing
                and rec.censor_time is not None and rec.censor_time > t0):
            sub.append(i); state.append(cur); start.append(t0)
            stop.append(rec.censor_time); target.append(_NO_JUMP)
    covs = ()
    if any(r.absorb_covariates is not None for r in sample.subjects):
        covs = tuple(r.absorb_covariates for r in sample.subjects)
    return CountingProcessSet(
        space, tuple(r.subject_id for r in sample.subjects),
        np.array(sub, dtype=np.int64), np.array(state, dtype=np.int64),
        np.array(start, dtype=float), np.array(stop, dtype=float),
        np.array(target, dtype=np.int64), entry_state, entry_time, censor, covs)


def event_grid(cps: CountingProcessSet) -> EventGrid:
    """All transition times of one sample; ``tau`` is its largest observed time."""
    return EventGrid(cps.event_times(), cps.max_time)


def pooled_event_grid(samples: Sequence[EventHistorySample],
                      interval: Iterable[float] | None = None) -> EventGrid:
    """Union of the samples' transition times, optionally restricted to
    ``(t1, t2]``.

    Without an interval ``tau`` is the smallest of the samples' largest
    observed times and the grid is cut at ``tau``.
    """
    if interval is not None:
        t1, t2 = (float(x) for x in interval)
        if not t1 < t2:
            raise ValueError(f"interval needs t1 < t2, got [{t1}, {t2}]")
        lo, tau = t1, t2
    else:
        lo = 0.0
        tau = min((s.max_time for s in samples), default=0.0)
    parts = [s.event_times() for s in samples]
    times = np.unique(np.concatenate(parts)) if parts else np.empty(0)
    times = times[(times > lo) & (times <= tau)]
    return EventGrid(times, tau)


def at_risk_total(cps: CountingProcessSet, h: int, t: float) -> int:
    """``sum_i Y_ih(t)``, left-continuous in ``t``."""
    h = cps.state_space.check_state(h)
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    return int(cps.at_risk([t])[0, h - 1])
