"""Illness-death simulation lab: data generator, closed-form ``P_12`` and a
scenario runner that tabulates empirical rejection rates.

Model: states 1 (healthy), 2 (ill), 3 (dead, absorbing); cumulative
intensities ``A_12(t) = alpha1 t``, ``A_13(t) = t / 2``, ``A_23(t) = alpha2 t``;
independent ``Exp(censor_rate)`` right censoring.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ComparisonError
from .history import EventHistorySample, StateSpace, SubjectRecord
from .twosample import METHODS, compare

DEATH_RATE = 0.5
ILLNESS_DEATH = StateSpace(3, frozenset({3}))
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class IllnessDeathConfig:
    alpha1: float
    alpha2: float
    n: int = 100
    censor_rate: float = 0.25

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "censor_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.censor_rate == 0 and self.alpha2 == 0:
            raise ValueError("without censoring alpha2 must be positive")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"n must be a nonnegative integer, got {self.n}")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _exp(rng, rate, n):
    draws = rng.standard_exponential(n)
    return draws / rate if rate > 0 else np.full(n, np.inf)


def simulate_paths(config: IllnessDeathConfig, seed=None) -> dict:
    """Raw path arrays: times of 1->2, 1->3, 2->3 (``inf`` if not observed)
    and the censoring time of each subject."""
    rng = _rng(seed)
    n = int(config.n)
    t12 = _exp(rng, config.alpha1, n)
    t13 = _exp(rng, DEATH_RATE, n)
    # 2->3 intensity is constant, so the sojourn in 2 is Exp(alpha2)
    s23 = _exp(rng, config.alpha2, n)
    cens = _exp(rng, config.censor_rate, n)
    first = np.minimum(t12, t13)
    ill = t12 < t13
    death2 = np.where(ill, t12 + s23, np.inf)
    obs_first = first <= cens
    return {
        "t12": np.where(obs_first & ill, t12, np.inf),
        "t13": np.where(obs_first & ~ill, t13, np.inf),
        "t23": np.where(obs_first & ill & (death2 <= cens), death2, np.inf),
        "censor": cens,
    }


def simulate_illness_death(config: IllnessDeathConfig, seed=None) -> EventHistorySample:
    """Simulate ``config.n`` independent illness-death paths, all starting in
    state 1 at time 0, by exact inverse-transform sampling."""
    p = simulate_paths(config, seed)
    records = []
    for i in range(int(config.n)):
        t12, t13, t23, c = p["t12"][i], p["t13"][i], p["t23"][i], p["censor"][i]
        if np.isfinite(t13):
            rec = SubjectRecord(i + 1, 1, ((t13, 1, 3),))
        elif np.isfinite(t23):
            rec = SubjectRecord(i + 1, 1, ((t12, 1, 2), (t23, 2, 3)))
        elif np.isfinite(t12):
            rec = SubjectRecord(i + 1, 1, ((t12, 1, 2),), censor_time=c)
        else:
            rec = SubjectRecord(i + 1, 1, (), censor_time=c)
        records.append(rec)
    return EventHistorySample(ILLNESS_DEATH, tuple(records))


def true_p12(alpha1: float, alpha2: float, s: float, t):
    """Closed-form ``P_12(s, t)`` of the simulation model.

    ``alpha1 (exp(-alpha2 d) - exp(-(alpha1 + 0.5) d)) / (alpha1 - alpha2 + 0.5)``
    with ``d = t - s``; at ``alpha1 - alpha2 + 0.5 = 0`` the limit
    ``alpha1 d exp(-(alpha1 + 0.5) d)`` is used.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < s):
        raise ValueError(f"t must be >= s={s}")
    d = t_arr - s
    c = alpha1 - alpha2 + DEATH_RATE
    if abs(c) < 1e-12:
        out = alpha1 * d * np.exp(-(alpha1 + DEATH_RATE) * d)
    else:
        # exp(-a2 d) - exp(-(a1 + .5) d) = -exp(-a2 d) expm1(-c d), no cancellation near c = 0
        out = -alpha1 * np.exp(-alpha2 * d) * np.expm1(-c * d) / c
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario.

    ``group1`` and ``group2`` are ``(alpha1, alpha2)`` pairs; ``sizes`` lists
    ``(n1, n2)`` pairs. Each replication draws its data and multipliers from
    a stream keyed by ``(seed, size index, replication index)``.
    """

    group1: tuple
    group2: tuple
    sizes: tuple = ((50, 50), (100, 50), (100, 100), (200, 100), (200, 200))
    replications: int = 1000
    R: int = 1000
    alphas: tuple = (0.01, 0.05)
    weight: str = "unit"
    seed: int = 0
    censor_rate: float = 0.25
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "group1", tuple(float(x) for x in self.group1))
        object.__setattr__(self, "group2", tuple(float(x) for x in self.group2))
        object.__setattr__(self, "sizes", tuple((int(a), int(b)) for a, b in self.sizes))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if len(self.group1) != 2 or len(self.group2) != 2:
            raise ValueError("group parameters must be (alpha1, alpha2) pairs")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if int(self.R) != self.R or self.R < 1:
            raise ValueError(f"R must be >= 1, got {self.R}")
        if not self.sizes:
            raise ValueError("at least one sample-size pair is required")
        if any(not 0 < a < 1 for a in self.alphas):
            raise ValueError("alpha levels must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema_version {version}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = [list(x) for x in self.sizes]
        d["group1"], d["group2"] = list(self.group1), list(self.group2)
        d["alphas"] = list(self.alphas)
        return {"schema_version": SCHEMA_VERSION, **d}


@dataclass
class RejectionRateTable:
    """Empirical rejection proportions keyed by sample sizes, test and level."""

    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    COLUMNS = ("n1", "n2", "test", "alpha", "rejections", "valid", "failed", "rate", "mc_se")

    def rate(self, n1, n2, test, alpha) -> float:
        return self._row(n1, n2, test, alpha)["rate"]

    def mc_se(self, n1, n2, test, alpha) -> float:
        return self._row(n1, n2, test, alpha)["mc_se"]

    def _row(self, n1, n2, test, alpha):
        for r in self.rows:
            if (r["n1"], r["n2"], r["test"]) == (n1, n2, test) and math.isclose(r["alpha"], alpha):
                return r
        raise KeyError((n1, n2, test, alpha))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"schema_version": SCHEMA_VERSION, "config": self.config,
                           "rows": self.rows}, indent=2, sort_keys=True) + "\n"


def _replicate(config: ScenarioConfig, size_index: int, rep: int):
    """p-values of all tests for one replication, or None if it failed."""
    n1, n2 = config.sizes[size_index]
    ss = np.random.SeedSequence(config.seed, spawn_key=(size_index, rep))
    s1, s2, sm = ss.spawn(3)
    g1 = IllnessDeathConfig(*config.group1, n=n1, censor_rate=config.censor_rate)
    g2 = IllnessDeathConfig(*config.group2, n=n2, censor_rate=config.censor_rate)
    d1 = simulate_illness_death(g1, s1)
    d2 = simulate_illness_death(g2, s2)
    try:
        res = compare(d1, d2, 1, 2, METHODS, config.weight, R=config.R,
                      seed=np.random.default_rng(sm))
    except ComparisonError:
        return None
    return tuple(res[m].p_value for m in METHODS)


def _run_chunk(args):
    config, size_index, reps = args
    return [_replicate(config, size_index, r) for r in reps]


def default_workers() -> int:
    """Worker count from ``TRANSPROB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("TRANSPROB_THREADS", "1")))
    except ValueError:
        return 1


def replicate_p_values(config: ScenarioConfig, size_index: int, workers: int | None = None) -> list:
    """Per-replication p-value triples (linear, l2, ks) for one size pair,
    in replication order regardless of ``workers``."""
    workers = default_workers() if workers is None else workers
    reps = list(range(config.replications))
    if workers <= 1:
        return _run_chunk((config, size_index, reps))
    chunks = [reps[i::workers] for i in range(workers)]
    out = [None] * config.replications
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for chunk, res in zip(chunks, ex.map(_run_chunk, [(config, size_index, c) for c in chunks])):
            for r, v in zip(chunk, res):
                out[r] = v
    return out


def run_scenario(config: ScenarioConfig, workers: int | None = None) -> RejectionRateTable:
    """Simulate every replication at every size pair, run the three tests on
    ``1 -> 2`` and tabulate rejections (``p <= alpha``).

    Replications whose comparison interval holds no events are excluded and
    counted in the ``failed`` column.
    """
    rows = []
    for a, (n1, n2) in enumerate(config.sizes):
        pvals = replicate_p_values(config, a, workers)
        ok = np.array([p for p in pvals if p is not None]).reshape(-1, len(METHODS))
        failed = len(pvals) - ok.shape[0]
        for t, method in enumerate(METHODS):
            for alpha in config.alphas:
                valid = ok.shape[0]
                rej = int(np.sum(ok[:, t] <= alpha))
                rate = rej / valid if valid else float("nan")
                se = math.sqrt(rate * (1 - rate) / valid) if valid else float("nan")
                rows.append({"n1": n1, "n2": n2, "test": method, "alpha": alpha,
                             "rejections": rej, "valid": valid, "failed": failed,
                             "rate": rate, "mc_se": se})
    return RejectionRateTable(rows, config.to_dict())
