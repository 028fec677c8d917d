import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

from transprob import EventHistorySample, StateSpace, SubjectRecord

sys.path.insert(0, str(Path(__file__).parent))

ILLNESS_DEATH = StateSpace(3, frozenset({3}))


def three_subject_records():
    """s1: 1->2 at 1, censored at 3; s2: 1->3 at 2; s3: censored at 3."""
    return (
        SubjectRecord(1, 1, ((1.0, 1, 2),), censor_time=3.0),
        SubjectRecord(2, 1, ((2.0, 1, 3),)),
        SubjectRecord(3, 1, (), censor_time=3.0),
    )


@pytest.fixture
def three_subject():
    return EventHistorySample(ILLNESS_DEATH, three_subject_records())


@pytest.fixture
def second_group():
    """s1: 1->2 at 1.5; s2: 1->2 at 2.5; s3 censored at 3 (all censored at 3)."""
    return EventHistorySample(ILLNESS_DEATH, (
        SubjectRecord(1, 1, ((1.5, 1, 2),), censor_time=3.0),
        SubjectRecord(2, 1, ((2.5, 1, 2),), censor_time=3.0),
        SubjectRecord(3, 1, (), censor_time=3.0),
    ))


@st.composite
def small_samples(draw, max_subjects=5, allow_unknown=True):
    """Random valid samples on a 4-state space (transient 1, 2; absorbing
    3, 4) with ties on a coarse time lattice and possible left truncation."""
    space = StateSpace(4, frozenset({3, 4}))
    n = draw(st.integers(1, max_subjects))
    records = []
    for i in range(n):
        entry_time = draw(st.sampled_from([0.0, 0.0, 0.5]))
        state = draw(st.sampled_from([1, 2]))
        rec_entry = state
        t = entry_time
        trans = []
        for _ in range(draw(st.integers(0, 3))):
            t = t + draw(st.sampled_from([0.5, 1.0, 1.5]))
            nxt = draw(st.sampled_from([1, 2, 3, 4] + ([0] if allow_unknown else [])))
            if nxt == state:
                continue
            trans.append((t, state, nxt))
            state = nxt
            if nxt in (0, 3, 4):
                break
        censor = None
        if state in (1, 2):
            censor = t + draw(st.sampled_from([0.0, 0.5, 1.0] if trans else [0.5, 1.0]))
        records.append(SubjectRecord(i + 1, rec_entry, tuple(trans), censor_time=censor,
                                     entry_time=entry_time,
                                     absorb_observed=not (trans and trans[-1][2] == 0)))
    return EventHistorySample(space, tuple(records))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
