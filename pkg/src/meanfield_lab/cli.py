"""meanfield-lab <subcommand> --config path.json [--out dir] [--seed n] [--threads n]

Exit codes: 0 all verdicts hold, 2 a verdict failed, 3 infrastructure or config error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .experiments import EXPERIMENTS, ConfigError, RunReport, run

log = logging.getLogger("meanfield_lab")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    lines = [",".join(columns)] + [",".join(_fmt(x) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_outputs(report: RunReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = _jsonable(report.to_json_dict())
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for name, (cols, rows) in report.tables.items():
        write_csv(out / f"{name}.csv", cols, rows)
    for name, (header, arr) in report.blobs.items():
        np.asarray(arr, dtype=np.complex64).tofile(out / f"{name}.bin")
        (out / f"{name}.bin.json").write_text(json.dumps(_jsonable(header), sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="meanfield-lab", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        doc = json.loads(args.config.read_text())
        if doc.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"config is for {doc['experiment']!r}, not {args.experiment!r}")
        doc["experiment"] = args.experiment
        out = args.out or Path("runs") / args.experiment
        from threadpoolctl import threadpool_limits

        start = time.perf_counter()
        with threadpool_limits(limits=max(1, args.threads)):
            report = run(doc, seed=args.seed)
        elapsed = time.perf_counter() - start
        write_outputs(report, out)
        # wall time lives apart from the report so reports stay byte-identical
        (out / "timing.json").write_text(json.dumps({"wall_time_s": elapsed}) + "\n")
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"meanfield-lab: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # infrastructure failure inside a module
        log.exception("run failed")
        print(f"meanfield-lab: {args.experiment} failed: {exc}", file=sys.stderr)
        return 3
    for name, ok in report.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if report.ok else 2


if __name__ == "__main__":
    sys.exit(main())
