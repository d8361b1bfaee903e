"""Command-line entry point: ``pescert run | reference | selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
from pathlib import Path

from .pipeline import ExperimentConfig, run_pipeline, run_reference


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        return ExperimentConfig.from_file(path)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise SystemExit(f"invalid config {path}: {exc}") from exc


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = Path(args.output_dir or config.output_dir)
    rows = run_pipeline(config, out)
    for r in rows:
        if r.status == "ok":
            print(
                f"theta={r.theta_target:.5f} C={r.concurrence:.4f} alpha={r.alpha:.4f} "
                f"B={r.bell_value:.4f}+/-{r.bell_sigma:.2g} bits={r.randomness_bits:.4f}+/-{r.randomness_sigma:.2g} "
                f"F*={r.certified_fidelity:.4f} {','.join(r.flags)}"
            )
        else:
            print(f"theta={r.theta_target:.5f} FAILED {r.reason}")
    print(f"wrote {out}")
    return 0 if all(r.status == "ok" for r in rows) else 1


def _cmd_reference(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = Path(args.output_dir or config.output_dir)
    for r in run_reference(config, out):
        print(f"theta={r['theta']:.5f} C={r['concurrence']:.4f} bits={r['bits']:.6f}")
    print(f"wrote {out / 'fig4_reference.csv'}")
    return 0


def _find_acceptance_suite() -> Path | None:
    for base in (Path.cwd(), *Path(__file__).resolve().parents):
        candidate = base / "tests" / "test_acceptance.py"
        if candidate.is_file():
            return candidate
    return None


def _cmd_selftest(args: argparse.Namespace) -> int:
    suite = _find_acceptance_suite()
    if suite is None:
        print("tests/test_acceptance.py not found; run from the source checkout", file=sys.stderr)
        return 2
    return subprocess.call([sys.executable, "-m", "pytest", "-q", "-s", str(suite), *args.pytest_args])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pescert", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging (solver traces)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate the experiment and write table/figure CSVs")
    p.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("reference", help="write the noisy-PES randomness reference curve")
    p.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.set_defaults(func=_cmd_reference)

    p = sub.add_parser("selftest", help="run the acceptance suite")
    p.add_argument("pytest_args", nargs=argparse.REMAINDER, help="extra arguments passed to pytest")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)
