"""Long-format CSV ingestion and export of event histories, and tidy CSV
export of estimated curves.

Input columns (one row per transition or censoring event)::

    subject_id, group, entry_time, entry_state, time, from_state, to_state,
    r_indicator, cov_<name>...

``group``, ``entry_time``, ``r_indicator`` and covariate columns are
optional. ``to_state`` is a state label or one of the tokens ``censored``
and ``absorbed-unknown``. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .history import ABSORBED_UNKNOWN, EventHistorySample, StateSpace, SubjectRecord

CENSORED = "censored"
UNKNOWN = "absorbed-unknown"
REQUIRED = ("subject_id", "entry_state", "time", "from_state", "to_state")
COV_PREFIX = "cov_"
SCHEMA_VERSION = 1


@dataclass
class Ingested:
    samples: "OrderedDict[str, EventHistorySample]"
    columns: tuple
    dropped: list = field(default_factory=list)

    @property
    def has_r_indicator(self) -> bool:
        return "r_indicator" in self.columns

    @property
    def covariates(self) -> tuple:
        return tuple(c for c in self.columns if c.startswith(COV_PREFIX))


def _state(tok: str, tokens=()):
    tok = tok.strip()
    if tok in tokens:
        return tok
    v = int(tok)
    if v < 1:
        raise ValueError(f"state labels start at 1, got {v}")
    return v


def _float(tok: str, name: str) -> float:
    v = float(tok)
    if not math.isfinite(v):
        raise ValueError(f"{name} must be finite")
    return v


def _parse_row(row: dict, covs) -> dict:
    sid = (row.get("subject_id") or "").strip()
    if not sid:
        raise ValueError("empty subject_id")
    entry = (row.get("entry_time") or "").strip()
    r = (row.get("r_indicator") or "").strip()
    out = {
        "subject_id": sid,
        "group": (row.get("group") or "").strip(),
        "entry_time": _float(entry, "entry_time") if entry else 0.0,
        "entry_state": _state(row["entry_state"]),
        "time": _float(row["time"], "time"),
        "from_state": _state(row["from_state"], (UNKNOWN,)),
        "to_state": _state(row["to_state"], (CENSORED, UNKNOWN)),
        "r": None if not r else int(r),
        "cov": None,
    }
    if out["r"] not in (None, 0, 1):
        raise ValueError(f"r_indicator must be 0 or 1, got {r!r}")
    if covs:
        vals = [(row.get(c) or "").strip() for c in covs]
        if all(vals):
            out["cov"] = tuple(_float(v, c) for v, c in zip(vals, covs))
        elif any(vals):
            raise ValueError("partially missing covariates")
    return out


def _build_subject(rows) -> tuple:
    """``(group, SubjectRecord, first line)`` from the parsed rows of one subject."""
    line0, r0 = rows[0]
    sid = r0["subject_id"]

    def fail(line, msg):
        raise ValidationError(f"line {line}: subject {sid!r}: {msg}")

    trans, censor, cov = [], None, None
    current = r0["entry_state"]
    ordered = sorted(rows, key=lambda lr: (lr[1]["time"], lr[1]["to_state"] == CENSORED))
    for line, r in ordered:
        for key in ("entry_state", "entry_time", "group"):
            if r[key] != r0[key]:
                fail(line, f"inconsistent {key} across rows")
        if r["cov"] is not None:
            if cov is not None and r["cov"] != cov:
                fail(line, "inconsistent covariates across rows")
            cov = r["cov"]
        if censor is not None:
            fail(line, "row after the censoring row (non-contiguous path)")
        cur_tok = UNKNOWN if current == ABSORBED_UNKNOWN else current
        if r["from_state"] != cur_tok:
            fail(line, f"non-contiguous path: row leaves {r['from_state']} "
                       f"but subject is in {cur_tok}")
        if r["to_state"] == CENSORED:
            censor = r["time"]
            continue
        to = ABSORBED_UNKNOWN if r["to_state"] == UNKNOWN else r["to_state"]
        if to == ABSORBED_UNKNOWN and r["r"] == 1:
            fail(line, "absorbed-unknown row with r_indicator=1")
        if to != ABSORBED_UNKNOWN and r["r"] == 0:
            fail(line, "r_indicator=0 on a row that is not absorbed-unknown")
        trans.append((r["time"], r["from_state"], to))
        current = to
    unknown = bool(trans) and trans[-1][2] == ABSORBED_UNKNOWN
    rec = SubjectRecord(sid, r0["entry_state"], tuple(trans), censor_time=censor,
                        entry_time=r0["entry_time"], absorb_observed=not unknown,
                        absorb_covariates=cov)
    return r0["group"], rec, line0


def read_event_csv(source, n_states: int | None = None, absorbing=None,
                   lenient: bool = False, max_drop: float = 0.05) -> Ingested:
    """Read a long-format event-history CSV into one sample per group.

    ``source`` is a path or a text stream. By default the number of states is
    the largest label seen and the absorbing states are those entered but
    never left nor censored in. Strict mode raises :class:`ValidationError` (with the line
    number) on the first bad row or subject; lenient mode skips them and
    records them in ``dropped``, failing if more than ``max_drop`` of the rows
    are dropped.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            text = fh.read()
    else:
        text = source.read()
    lines = text.splitlines(keepends=True)
    # keep physical line numbers while skipping comments
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not numbered:
        raise ValidationError("empty input")
    reader = csv.DictReader(io.StringIO("".join(ln for _, ln in numbered)))
    columns = tuple(c.strip() for c in (reader.fieldnames or ()))
    missing = [c for c in REQUIRED if c not in columns]
    if missing:
        raise ValidationError(f"line {numbered[0][0]}: header lacks columns {missing}")
    reader.fieldnames = list(columns)
    covs = [c for c in columns if c.startswith(COV_PREFIX)]
    dropped = []
    parsed = []
    for (line, _), row in zip(numbered[1:], reader):
        if None in row:
            msg = f"line {line}: too many fields"
            if not lenient:
                raise ValidationError(msg)
            dropped.append(msg)
            continue
        try:
            parsed.append((line, _parse_row(row, covs)))
        except (ValueError, KeyError, TypeError) as exc:
            msg = f"line {line}: {exc}"
            if not lenient:
                raise ValidationError(msg) from None
            dropped.append(msg)
    n_rows = len(numbered) - 1

    by_subject = OrderedDict()
    for line, r in parsed:
        by_subject.setdefault((r["group"], r["subject_id"]), []).append((line, r))

    labels = set()
    sources, targets = set(), set()
    for line, r in parsed:
        labels.add(r["entry_state"])
        if isinstance(r["from_state"], int):
            labels.add(r["from_state"])
            # leaving a state or being censored in it both mark it transient
            sources.add(r["from_state"])
        if isinstance(r["to_state"], int):
            labels.add(r["to_state"])
            targets.add(r["to_state"])
    q = n_states if n_states is not None else max(labels, default=2)
    if absorbing is None:
        absorbing = targets - sources
    space = StateSpace(max(q, 2), frozenset(absorbing))

    groups = OrderedDict()
    n_dropped_rows = len(dropped)
    for key, rows in by_subject.items():
        try:
            group, rec, line = _build_subject(rows)
            rec.validate(space)
        except (ValidationError, ValueError) as exc:
            msg = str(exc) if str(exc).startswith("line") else f"line {rows[0][0]}: {exc}"
            if not lenient:
                raise ValidationError(msg) from None
            dropped.append(msg)
            n_dropped_rows += len(rows)
            continue
        groups.setdefault(group, []).append(rec)
    if lenient and n_rows and n_dropped_rows / n_rows > max_drop:
        raise ValidationError(
            f"lenient ingestion dropped {n_dropped_rows} of {n_rows} rows (> {max_drop:.0%})")
    samples = OrderedDict(
        (g, EventHistorySample(space, tuple(recs), g or None)) for g, recs in groups.items())
    return Ingested(samples, columns, dropped)


def _fmt(x) -> str:
    return repr(float(x))


def write_event_csv(samples, dest=None) -> str:
    """Write samples (a sample or a mapping ``group -> sample``) in the
    ingestion schema. Returns the CSV text and writes it to ``dest`` if given."""
    if isinstance(samples, EventHistorySample):
        samples = {samples.group_label or "": samples}
    any_cov = [r.absorb_covariates for s in samples.values() for r in s.subjects
               if r.absorb_covariates is not None]
    ncov = len(any_cov[0]) if any_cov else 0
    cols = ["subject_id", "group", "entry_time", "entry_state", "time", "from_state",
            "to_state", "r_indicator"] + [f"{COV_PREFIX}{k + 1}" for k in range(ncov)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for group, sample in samples.items():
        for rec in sample.subjects:
            cov = [_fmt(x) for x in rec.absorb_covariates] if rec.absorb_covariates else [""] * ncov
            base = [rec.subject_id, group, _fmt(rec.entry_time), rec.entry_state]
            for t, a, b in rec.transitions:
                unk = b == ABSORBED_UNKNOWN
                w.writerow(base + [_fmt(t), a, UNKNOWN if unk else b, "0" if unk else ""] + cov)
            if rec.censor_time is not None:
                cur = rec.final_state
                w.writerow(base + [_fmt(rec.censor_time), UNKNOWN if cur == ABSORBED_UNKNOWN else cur,
                                   CENSORED, ""] + cov)
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text


def curves_csv(curves: dict, h: int) -> str:
    """Tidy CSV ``group,time,from,to,estimate`` of row ``h`` of each
    ``TransitionProbabilityCurve`` in ``curves`` (group -> curve)."""
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "time", "from", "to", "estimate"])
    for group, curve in curves.items():
        q = curve.values.shape[1]
        for k, t in enumerate(curve.times):
            for j in range(1, q + 1):
                w.writerow([group, _fmt(t), h, j, _fmt(curve.values[k, h - 1, j - 1])])
    return buf.getvalue()


def matrix_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()
