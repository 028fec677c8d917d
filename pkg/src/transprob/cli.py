"""Command-line interface: ``transprob estimate | test | simulate``.

Exit codes: 0 success, 1 I/O error, 2 argument or configuration error,
3 data validation error, 4 estimation or test error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import EstimationError, ValidationError
from .estimation import (aalen_johansen, fit_logistic_missingness, landmark_intensities,
                         nelson_aalen, npmple_intensities)
from .history import build_counting_processes
from .io import curves_csv, matrix_csv, read_event_csv
from .simulation import ScenarioConfig, default_workers, run_scenario
from .twosample import METHODS, compare, fit_group

EXIT_OK, EXIT_IO, EXIT_ARGS, EXIT_DATA, EXIT_ESTIMATION = 0, 1, 2, 3, 4
SCHEMA_VERSION = 1


class ArgumentError(Exception):
    pass


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _digest_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _manifest(command, config, seed, input_digest, started) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command,
            "config_digest": _digest_obj(config), "seed": seed,
            "software_version": __version__, "input_digest": input_digest,
            "wall_clock": {"started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
                           "seconds": round(time.time() - started, 3)}}


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _ingest(args):
    absorbing = None if args.absorbing is None else set(args.absorbing)
    return read_event_csv(args.input, n_states=args.n_states, absorbing=absorbing,
                          lenient=args.lenient)


def _variant(args, ingested):
    if args.landmark and args.npmple:
        raise ArgumentError("--landmark and --npmple are mutually exclusive")
    if args.npmple and not ingested.has_r_indicator:
        raise ArgumentError("--npmple needs an r_indicator column in the input")
    return "landmark" if args.landmark else "npmple" if args.npmple else "standard"


def _model(sample, space):
    if len(space.absorbing) < 2:
        return None
    return fit_logistic_missingness(sample)


def cmd_estimate(args) -> int:
    ingested = _ingest(args)
    variant = _variant(args, ingested)
    h, s = args.from_state, args.start_time
    curves, meta = {}, {}
    for group, sample in ingested.samples.items():
        cps = build_counting_processes(sample)
        if variant == "landmark":
            A = landmark_intensities(cps, s, h)
        elif variant == "npmple":
            model = _model(sample, sample.state_space)
            A = npmple_intensities(cps, model) if model else nelson_aalen(cps)
        else:
            A = nelson_aalen(cps)
        curves[group] = aalen_johansen(A, s)
        meta[group] = {"n": sample.n, "events": len(A.grid), "tau": A.grid.tau}
    out = Path(args.out)
    _write(out / "curves.csv", curves_csv(curves, h))
    _write(out / "curves.json", _dumps({
        "schema_version": SCHEMA_VERSION, "from_state": h, "start_time": s,
        "estimator": variant, "groups": meta,
        "curves": {g: {"times": c.times.tolist(), "values": c.values[:, h - 1, :].tolist()}
                   for g, c in curves.items()}}))
    _write(out / "manifest.json", _dumps(_manifest(
        "estimate", vars_clean(args), None, _digest_file(args.input), args._started)))
    return EXIT_OK


def vars_clean(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())
            if not k.startswith("_") and k not in ("func", "out", "threads")}


def cmd_test(args) -> int:
    ingested = _ingest(args)
    variant = _variant(args, ingested)
    groups = list(ingested.samples)
    if args.groups:
        missing = [g for g in args.groups if g not in ingested.samples]
        if missing:
            raise ArgumentError(f"groups {missing} not in the input")
        groups = list(args.groups)
    if len(groups) != 2:
        raise ArgumentError(f"two groups required, found {len(groups)}: {groups}")
    s1, s2 = (ingested.samples[g] for g in groups)
    methods = METHODS if args.method == "all" else (args.method,)
    h, j = args.transition
    models = None
    if variant == "npmple":
        models = (_model(s1, s1.state_space), _model(s2, s2.state_space))
        if models == (None, None):
            variant = "standard"
    nulls = []
    results = compare(s1, s2, h, j, methods, args.weight, args.interval, args.reps,
                      args.seed, args.start_time, variant, models, null_out=nulls)
    payload = {"schema_version": SCHEMA_VERSION, "groups": groups,
               "input_digest": _digest_file(args.input),
               "results": {m: r.to_dict() for m, r in results.items()}}
    text = _dumps(payload)
    if args.out:
        _write(args.out, text)
        _write(str(args.out) + ".manifest.json", _dumps(_manifest(
            "test", vars_clean(args), args.seed, payload["input_digest"], args._started)))
    else:
        sys.stdout.write(text)
    if args.dump_null and nulls:
        rows = zip(range(1, args.reps + 1), nulls[0].l2, nulls[0].ks)
        _write(args.dump_null, matrix_csv(["r", "l2_null", "ks_null"], rows))
    if args.dump_influence:
        d = Path(args.dump_influence)
        for g, sample in zip(groups, (s1, s2)):
            fit = fit_group(sample, h, j, args.start_time, variant,
                            None if models is None else models[groups.index(g)])
            ids = fit.processes.subject_ids
            rows = ([ids[i], t, fit.influence.values[i, k]]
                    for i in range(fit.n) for k, t in enumerate(fit.influence.times))
            _write(d / f"influence_{g}.csv", matrix_csv(["subject_id", "time", "gamma"], rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        config = ScenarioConfig.from_file(args.config)
    except (TypeError, ValueError) as exc:
        raise ArgumentError(f"invalid scenario config: {exc}") from None
    table = run_scenario(config, workers=args.threads)
    out = Path(args.out)
    _write(out / "rejection_rates.csv", table.to_csv())
    _write(out / "rejection_rates.json", table.to_json())
    _write(out / "manifest.json", _dumps(_manifest(
        "simulate", config.to_dict(), config.seed, _digest_file(args.config), args._started)))
    return EXIT_OK


def _add_input(p):
    p.add_argument("input", help="long-format event-history CSV")
    p.add_argument("--n-states", type=int, default=None)
    p.add_argument("--absorbing", type=int, nargs="+", default=None)
    p.add_argument("--lenient", action="store_true",
                   help="skip bad rows (fails if more than 5%% are dropped)")
    p.add_argument("--start-time", type=float, default=0.0)
    p.add_argument("--landmark", action="store_true")
    p.add_argument("--npmple", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transprob", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="Aalen-Johansen curves per group")
    _add_input(p)
    p.add_argument("--from-state", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", help="two-sample tests for one transition")
    _add_input(p)
    p.add_argument("--transition", type=int, nargs=2, required=True, metavar=("H", "J"))
    p.add_argument("--method", choices=METHODS + ("all",), default="all")
    p.add_argument("--weight", choices=("unit", "atrisk"), default="unit")
    p.add_argument("--interval", type=float, nargs=2, default=None, metavar=("T1", "T2"))
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--groups", nargs=2, default=None)
    p.add_argument("--out", default=None, help="result JSON path (stdout if omitted)")
    p.add_argument("--dump-null", default=None, help="CSV of the multiplier null statistics")
    p.add_argument("--dump-influence", default=None, help="directory for influence-curve CSVs")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="illness-death rejection-rate study")
    p.add_argument("config", help="scenario JSON config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $TRANSPROB_THREADS or 1)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._started = time.time()
    if getattr(args, "reps", 1) < 1:
        print("error: --reps must be >= 1", file=sys.stderr)
        return EXIT_ARGS
    if getattr(args, "threads", None) is None and args.command == "simulate":
        args.threads = default_workers()
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except ValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
