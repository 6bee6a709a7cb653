"""Command line: ``viscolab run <cfg>``, ``viscolab verify <cfg>``, ``viscolab --version``.

Exit codes: 0 all checks pass, 1 bad config or arguments, 2 numerical failure
or failed check, 3 I/O error. The output directory is ``--out``, else
``$VISCOLAB_OUT``, else the current directory.

numba reads its thread limit once at import, so ``--threads`` is applied to
the environment before any kernel module is loaded.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__

OUT_ENV = "VISCOLAB_OUT"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="viscolab", description="Viscoelastic free-energy laboratory.")
    ap.add_argument("--version", action="version", version=f"viscolab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configuration and write CSV artifacts")
    run.add_argument("config", type=Path)
    run.add_argument("--threads", type=int, default=1, metavar="k")
    run.add_argument("--out", type=Path, default=None, metavar="dir")
    run.add_argument("--seed", type=int, default=None, metavar="s")
    ver = sub.add_parser("verify", help="parse and validate a configuration, print it in canonical form")
    ver.add_argument("config", type=Path)
    return ap


def _reserve_threads(k: int):
    if k < 1:
        raise ValueError("--threads must be >= 1")
    if "numba" not in sys.modules:
        current = int(os.environ.get("NUMBA_NUM_THREADS", "0") or 0)
        if current < k:
            os.environ["NUMBA_NUM_THREADS"] = str(k)


def _load(path: Path):
    from .config import ParseError, ValidationError, parse_config

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return None, 3
    try:
        return parse_config(text, str(path)), 0
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, 1


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    if args.command == "verify":
        cfg, status = _load(args.config)
        if cfg is not None:
            sys.stdout.write(cfg.to_text())
        return status

    try:
        _reserve_threads(args.threads)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cfg, status = _load(args.config)
    if cfg is None:
        return status
    if args.seed is not None:
        if args.seed < 0:
            print("error: --seed must be >= 0", file=sys.stderr)
            return 1
        cfg = cfg.with_seed(args.seed)

    from . import _accel
    from .runner import execute

    _accel.set_num_threads(args.threads)
    out = args.out or Path(os.environ.get(OUT_ENV) or ".")
    result = execute(cfg, out)
    sys.stdout.write(result.summary.text())
    for path in result.artifacts:
        print(f"wrote {path}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
