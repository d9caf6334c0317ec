"""Command line front end.

    dynrwre <experiment> --config FILE [--workers N] [--seed S] [--out DIR]
    dynrwre corpus [--out DIR]

Exit codes: 0 on a completed run, 1 on usage or configuration errors (no
partial outputs are written in that case), 2 when a deterministic property
failed or a pinned corpus output changed.
"""

from __future__ import annotations

import argparse
import difflib
import json
import os
import sys
import tempfile
from pathlib import Path

from .environment import WindowError
from .experiments import EXPERIMENTS, ConfigError, run_experiment


def _default_workers() -> int:
    envv = os.environ.get("DYNRWRE_WORKERS")
    if envv:
        try:
            return max(1, int(envv))
        except ValueError:
            pass
    return max(1, min(os.cpu_count() or 1, 8))


def _corpus_dir() -> Path:
    return Path(__file__).parent / "corpus"


def run_corpus(out_dir: Path) -> int:
    """Regenerate every pinned case and compare its CSVs byte for byte."""
    cdir = _corpus_dir()
    cases = sorted((cdir / "cases").glob("*.json"))
    if not cases:
        print("no corpus cases found", file=sys.stderr)
        return 1
    failures = 0
    for case in cases:
        name = case.stem
        with open(case) as f:
            config = json.load(f)
        case_out = out_dir / name
        run_experiment(config, outdir=case_out, workers=1)
        expected_dir = cdir / "expected" / name
        for exp_file in sorted(expected_dir.glob("*.csv")):
            got_file = case_out / exp_file.name
            expected = exp_file.read_bytes()
            got = got_file.read_bytes() if got_file.exists() else b""
            if got != expected:
                failures += 1
                diff = difflib.unified_diff(
                    expected.decode().splitlines(keepends=True),
                    got.decode().splitlines(keepends=True),
                    fromfile=f"expected/{name}/{exp_file.name}",
                    tofile=f"regenerated/{name}/{exp_file.name}",
                )
                diff_path = out_dir / f"{name}.{exp_file.name}.diff"
                diff_path.write_text("".join(diff))
                print(f"corpus case {name}: {exp_file.name} CHANGED "
                      f"(diff at {diff_path})", file=sys.stderr)
            else:
                print(f"corpus case {name}: {exp_file.name} ok")
    return 2 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dynrwre",
        description="deterministic Monte Carlo lab for walkers on dynamic "
                    "particle systems",
    )
    parser.add_argument("experiment", choices=list(EXPERIMENTS) + ["corpus"])
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel replica workers (default: cpu count, "
                             "or DYNRWRE_WORKERS)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    workers = args.workers if args.workers is not None else _default_workers()

    if args.experiment == "corpus":
        out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="dynrwre-corpus-"))
        out.mkdir(parents=True, exist_ok=True)
        return run_corpus(out)

    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 1
    try:
        with open(args.config) as f:
            config = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 1
    if isinstance(config, dict) and "experiment" not in config:
        config["experiment"] = args.experiment
    elif isinstance(config, dict) and config.get("experiment") != args.experiment:
        print(f"error: config is for {config.get('experiment')!r}, "
              f"not {args.experiment!r}", file=sys.stderr)
        return 1
    try:
        rows, summary, code = run_experiment(
            config, outdir=args.out, workers=workers, seed_override=args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except WindowError as e:
        print(f"window error: {e}", file=sys.stderr)
        return 2
    for line in summary:
        print(line)
    if code != 0:
        print("PROPERTY VIOLATION detected (exit 2)", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
