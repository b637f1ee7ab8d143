"""Command-line front end.

Usage::

    dfee <command> [--config FILE] [--key value ...] [--output-dir DIR]

Exit codes: 0 success, 2 configuration error, 3 too many failed
realizations, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._accel import BACKEND
from .config import COMMANDS, KEYS, ExperimentConfig, config_help, parse_config, read_config_file
from .errors import ConfigurationError, DfeeError, EnsembleAbortError
from .experiments import RunResult, run

EXIT_OK, EXIT_CONFIG, EXIT_DEGRADED, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("dfee")

_DESCRIPTIONS = {
    "variance-scan": "block-entropy variance per M, 2 Var{S_-}, and the HCR bound A",
    "shift-decay": "mean cut entropy under origin shifts t",
    "hcr-bound": "variance lower bound A(t) over t_list with measured eps(t)",
    "splitting": "median |splitting residual| per M",
    "projection-decay": "ensemble mean |P(0, r)| and exponential fit",
    "resolvent-check": "rank-one, Weyl and decoupling identities on random cases",
    "fractional-moments": "E|G|^s: spatial decay, eta halving, shift scaling",
    "area-law-2d": "S/L statistics for centred squares in two dimensions",
    "density-check": "F(t), Jensen bound and HCR toy inequality for the density",
}


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_format(v) for v in row])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_outputs(cfg: ExperimentConfig, result: RunResult, started: str, status: str) -> list:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    tables = {result.csv_name: (result.header, result.rows), **result.extra_tables}
    for name, (header, rows) in tables.items():
        _atomic_write(out / name, render_csv(header, rows))
        written.append(name)
    manifest = {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "version": __version__,
        "backend": BACKEND,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "master_seed": cfg.master_seed,
        "status": status,
        "failures": result.failures,
        "files": written,
        "summary": result.summary,
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, default=_json_default) + "\n")
    return written


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(type(obj).__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfee",
        description="Disordered free-fermion entanglement experiments.",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name],
                           epilog=config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="FILE", help="key = value configuration file")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for key, (_, default, text) in KEYS.items():
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            p.add_argument(*flags, dest=f"key_{key}", metavar="VALUE", default=None,
                           help=f"{text} (default: {_default_text(default)})")
    return parser


def _default_text(default):
    if isinstance(default, tuple):
        if default and isinstance(default[0], tuple):
            return ",".join(f"{x}:{y}" for x, y in default)
        return ",".join(str(v) for v in default)
    return str(default)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports unknown flags with exit 2
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k[4:]: v for k, v in vars(args).items() if k.startswith("key_") and v is not None}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = parse_config(args.command, file_values, flags)
    except ConfigurationError as exc:
        print(f"dfee: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        result = run(cfg)
    except EnsembleAbortError as exc:
        print(f"dfee: run degraded: {exc}", file=sys.stderr)
        return EXIT_DEGRADED
    except ConfigurationError as exc:
        print(f"dfee: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DfeeError as exc:
        print(f"dfee: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    status = "numerical_failure" if result.numerical_failure else "ok"
    files = write_outputs(cfg, result, started, status)
    log.info("%s finished in %.1f s", cfg.command, time.perf_counter() - t0)
    print(f"wrote {', '.join(files)} and manifest.json to {cfg.output_dir}")
    if result.numerical_failure:
        print(f"dfee: numerical error: {result.numerical_failure}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
