import io
import json
import time

import numpy as np
import pytest

from transprob import (IllnessDeathConfig, ValidationError, at_risk_total,
                       build_counting_processes, simulate_illness_death)
from transprob.cli import main
from transprob.io import read_event_csv, write_event_csv

HAND_CSV = """\
# three subjects, illness-death
subject_id,group,entry_state,time,from_state,to_state
1,a,1,1.0,1,2
1,a,1,3.0,2,censored
2,a,1,2.0,1,3
3,a,1,3.0,1,censored
"""


def _two_group_csv(tmp_path, n1=60, n2=60, seed=0, name="data.csv"):
    s1 = simulate_illness_death(IllnessDeathConfig(0.6, 0.5, n=n1), seed)
    s2 = simulate_illness_death(IllnessDeathConfig(1.2, 0.5, n=n2), seed + 1)
    path = tmp_path / name
    write_event_csv({"A": s1, "B": s2}, path)
    return path


def test_hand_csv_counting_processes():
    ing = read_event_csv(io.StringIO(HAND_CSV))
    (sample,) = ing.samples.values()
    assert sample.state_space.absorbing == {3}
    cps = build_counting_processes(sample)
    assert at_risk_total(cps, 1, 1.0) == 3
    assert at_risk_total(cps, 1, 2.0) == 2
    assert cps.counting(0, 1, 2, 1.0) == 1 and cps.counting(1, 1, 3, 2.0) == 1


def test_round_trip(tmp_path):
    s = simulate_illness_death(IllnessDeathConfig(0.6, 0.5, n=200), 3)
    path = tmp_path / "x.csv"
    write_event_csv({"g": s}, path)
    back = read_event_csv(path, n_states=3, absorbing={3}).samples["g"]
    assert back.n == s.n
    for a, b in zip(s.subjects, back.subjects):
        assert b.subject_id == str(a.subject_id)
        assert (b.entry_state, b.transitions, b.censor_time, b.entry_time) == \
            (a.entry_state, a.transitions, a.censor_time, a.entry_time)


def test_row_after_censoring_is_contiguity_error():
    text = HAND_CSV + "3,a,1,4.0,1,2\n"
    with pytest.raises(ValidationError, match=r"line \d+: subject '3'.*non-contiguous"):
        read_event_csv(io.StringIO(text))


def test_malformed_row_reports_line():
    text = HAND_CSV.replace("2,a,1,2.0,1,3", "2,a,1,two,1,3")
    with pytest.raises(ValidationError, match="line 5"):
        read_event_csv(io.StringIO(text))


def test_unknown_state_label_rejected():
    with pytest.raises(ValidationError, match="unknown state"):
        read_event_csv(io.StringIO(HAND_CSV.replace("2,a,1,2.0,1,3", "2,a,1,2.0,1,7")),
                       n_states=3, absorbing={3})


def test_lenient_mode_drops_and_bounds():
    good = "".join(f"{k},a,1,{k}.5,1,censored\n" for k in range(10, 60))
    text = HAND_CSV + good + "99,a,1,oops,1,3\n"
    ing = read_event_csv(io.StringIO(text), lenient=True)
    assert len(ing.dropped) == 1 and "line" in ing.dropped[0]
    with pytest.raises(ValidationError, match="dropped"):
        read_event_csv(io.StringIO(HAND_CSV + "99,a,1,oops,1,3\n"), lenient=True)


def test_cli_estimate(tmp_path):
    data = _two_group_csv(tmp_path)
    out = tmp_path / "est"
    assert main(["estimate", str(data), "--from-state", "1", "--out", str(out)]) == 0
    payload = json.loads((out / "curves.json").read_text())
    assert payload["schema_version"] == 1 and set(payload["groups"]) == {"A", "B"}
    for vals in (payload["curves"]["A"]["values"], payload["curves"]["B"]["values"]):
        assert np.allclose(np.sum(vals, axis=1), 1.0)
    lines = (out / "curves.csv").read_text().splitlines()
    assert lines[0] == "# schema_version: 1" and lines[1] == "group,time,from,to,estimate"
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"config_digest", "seed", "software_version", "input_digest", "wall_clock"} <= set(manifest)


def test_cli_landmark_empty_set(tmp_path, capsys):
    data = _two_group_csv(tmp_path)
    code = main(["estimate", str(data), "--from-state", "1", "--landmark",
                 "--start-time", "1000", "--out", str(tmp_path / "o")])
    assert code == 4
    assert "empty landmark set" in capsys.readouterr().err


def test_cli_npmple_requires_r_indicator(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text(HAND_CSV)
    assert main(["estimate", str(p), "--from-state", "1", "--npmple", "--out", str(tmp_path / "o")]) == 2


def test_cli_one_group(tmp_path, capsys):
    p = tmp_path / "h.csv"
    p.write_text(HAND_CSV)
    assert main(["test", str(p), "--transition", "1", "2"]) == 2
    assert "two groups required" in capsys.readouterr().err


def test_cli_exit_codes(tmp_path):
    assert main(["test", str(tmp_path / "missing.csv"), "--transition", "1", "2"]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text(HAND_CSV + "3,a,1,4.0,1,2\n")
    assert main(["test", str(bad), "--transition", "1", "2"]) == 3
    assert main(["test", str(bad), "--transition", "1", "2", "--reps", "0"]) == 2
    assert main(["test"]) == 2


def test_cli_test_is_byte_identical(tmp_path):
    data = _two_group_csv(tmp_path)
    outs = []
    for k in range(2):
        o = tmp_path / f"r{k}.json"
        assert main(["test", str(data), "--transition", "1", "2", "--reps", "200",
                     "--seed", "17", "--out", str(o)]) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1]
    res = json.loads(outs[0])["results"]
    assert set(res) == {"linear", "l2", "ks"}
    assert res["l2"]["resampling"]["R"] == 200 and res["l2"]["resampling"]["seed"] == 17


def test_cli_dumps(tmp_path):
    data = _two_group_csv(tmp_path, n1=20, n2=20)
    null = tmp_path / "null.csv"
    infl = tmp_path / "infl"
    assert main(["test", str(data), "--transition", "1", "2", "--reps", "30",
                 "--out", str(tmp_path / "r.json"), "--dump-null", str(null),
                 "--dump-influence", str(infl)]) == 0
    assert len(null.read_text().splitlines()) == 2 + 30
    assert (infl / "influence_A.csv").exists() and (infl / "influence_B.csv").exists()


def _config(tmp_path, **kw):
    cfg = {"schema_version": 1, "group1": [0.6, 0.5], "group2": [0.6, 0.5],
           "sizes": [[20, 20]], "replications": 8, "R": 40, "seed": 5}
    cfg.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_cli_simulate_is_deterministic_across_threads(tmp_path):
    cfg = _config(tmp_path)
    outs = []
    for k, threads in enumerate(("1", "1", "2")):
        o = tmp_path / f"sim{k}"
        assert main(["simulate", str(cfg), "--out", str(o), "--threads", threads]) == 0
        outs.append(((o / "rejection_rates.json").read_bytes(), (o / "rejection_rates.csv").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_cli_simulate_rejects_zero_replications(tmp_path):
    assert main(["simulate", str(_config(tmp_path, replications=0)),
                 "--out", str(tmp_path / "o")]) == 2


def test_cli_large_cohort_runtime(tmp_path):
    data = _two_group_csv(tmp_path, n1=1619, n2=1559, seed=100)
    start = time.perf_counter()
    assert main(["test", str(data), "--transition", "1", "2", "--reps", "1000",
                 "--out", str(tmp_path / "big.json")]) == 0
    assert time.perf_counter() - start < 300
