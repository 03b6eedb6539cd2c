"""Command line entry point: run, sweep, oracle, plot-data."""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .ansatz import AnsatzError, SingularGateError
from .experiments import (ConfigError, config_from_dict, load_config, plot_data, run, run_oracle,
                          with_override)
from .liouvillian import ModelError
from .oracle import SizeCapError
from .tdva import InvalidStateError, SingularSystemError
from .vtc import ExpansionTooLargeError, NearPureStateError, StepTooLargeError

EXIT_OK, EXIT_CONFIG, EXIT_SIZE, EXIT_EVOLVER = 0, 2, 3, 4
THREADS_ENV = "LINDBLAD_VQA_THREADS"

_EVOLVER_ERRORS = (SingularSystemError, InvalidStateError, StepTooLargeError, NearPureStateError,
                   ExpansionTooLargeError, SingularGateError, AnsatzError, ArithmeticError)


def _error_record(code: int, exc: Exception) -> dict:
    kind = {EXIT_CONFIG: "config", EXIT_SIZE: "size_cap", EXIT_EVOLVER: "evolver"}[code]
    return {"status": "error", "kind": kind, "exit_code": code, "type": type(exc).__name__,
            "message": str(exc)}


def _guarded(fn, out_dir=None) -> int:
    try:
        fn()
        return EXIT_OK
    except SizeCapError as exc:
        rec = _error_record(EXIT_SIZE, exc)
    except (ConfigError, ModelError, json.JSONDecodeError) as exc:
        rec = _error_record(EXIT_CONFIG, exc)
    except _EVOLVER_ERRORS as exc:
        rec = _error_record(EXIT_EVOLVER, exc)
    code = rec["exit_code"]
    print(json.dumps(rec), file=sys.stderr)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "error.json").write_text(json.dumps(rec, indent=1))
    return code


def _load(path, out: str | None):
    cfg = load_config(path)
    if out:
        cfg.outputs.directory = out
    return cfg


def _summary(traj) -> dict:
    last = traj.records[-1]
    return {"status": "ok", "t_final": last.t, "metrics": last.metrics}


def cmd_run(args) -> int:
    def go():
        traj = run(_load(args.config, args.out))
        print(json.dumps(_summary(traj)))

    return _guarded(go, args.out)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args) -> int:
    try:
        base = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        rec = _error_record(EXIT_CONFIG, exc)
        print(json.dumps(rec), file=sys.stderr)
        return EXIT_CONFIG
    jobs = []
    for spec in args.vary:
        if "=" not in spec:
            print(json.dumps(_error_record(EXIT_CONFIG, ConfigError(f"bad --vary {spec!r}"))), file=sys.stderr)
            return EXIT_CONFIG
        key, values = spec.split("=", 1)
        jobs.append((key, [_parse_value(v) for v in values.split(",")]))
    combos = [base]
    labels = [""]
    for key, values in jobs:
        combos = [with_override(c, key, v) for c in combos for v in values]
        labels = [f"{lab}{'_' if lab else ''}{key.split('.')[-1]}={v}" for lab in labels for v in values]
    root = args.out or base.get("outputs", {}).get("directory") or "sweep"

    def one(item):
        data, lab = item
        data = with_override(data, "outputs.directory", str(Path(root) / lab))
        data = with_override(data, "outputs.label", lab)

        def go():
            traj = run(config_from_dict(data))
            print(json.dumps({"label": lab, **_summary(traj)}))

        return _guarded(go, str(Path(root) / lab))

    threads = max(1, int(os.environ.get(THREADS_ENV, "1")))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        codes = list(pool.map(one, zip(combos, labels)))
    return max(codes, default=EXIT_OK)


def cmd_oracle(args) -> int:
    def go():
        cfg = _load(args.config, args.out)
        traj = run_oracle(cfg)
        print(json.dumps(_summary(traj)))

    return _guarded(go, args.out)


def cmd_plot_data(args) -> int:
    panels = plot_data(args.directory)
    print(json.dumps({"status": "ok", "panels": sorted(panels)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lindblad-vqa", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="override the output directory")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="run a config over a grid of overrides")
    s.add_argument("config")
    s.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2",
                   help="dotted config key and comma-separated values; repeatable")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    o = sub.add_parser("oracle", help="exact dynamics only")
    o.add_argument("config")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    d = sub.add_parser("plot-data", help="aggregate trajectories into per-figure series")
    d.add_argument("directory")
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get(THREADS_ENV)
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
