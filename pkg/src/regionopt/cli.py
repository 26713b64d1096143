"""Command line entry point: ``regionopt PATH [options]``.

``PATH`` is an instance file (``.tsp``, ``.vrp``, ``.json``), a bundled
instance (``bundled:eil51``) or a benchmark manifest (a JSON document with an
``"entries"`` list). Command line options override the manifest's ``config``
block.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path

from .bench import (Entry, Manifest, generate_mkp, load_manifest, run_benchmark,
                    write_outputs)
from .errors import RegionOptError
from .instance import serialize_json

_FLAG_TO_CONFIG = {
    "decomposer": "decomposer",
    "reconstructor": "reconstructor",
    "time_limit": "time_limit",
    "reject_threshold": "rejection_threshold",
    "active_cap": "active_cap",
    "temperature": "temperature",
    "seed": "seed",
    "revision_rounds": "revision_rounds",
    "reset_on": "reset_on",
    "exact_threshold": "exact_threshold",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="regionopt",
        description="Improve routing and packing solutions by repeatedly re-solving a small "
                    "region of the current solution.")
    p.add_argument("path", nargs="?", help="instance file, bundled:NAME, or manifest JSON")
    p.add_argument("--problem", choices=["tsp", "cvrp", "bpp", "mkp"],
                   help="expected problem type (checked against the file)")
    p.add_argument("--format", choices=["json", "tsplib", "cvrplib"],
                   help="instance format (default: from the file suffix)")
    p.add_argument("--decomposer", choices=["random", "heuristic", "llm"])
    p.add_argument("--reconstructor", choices=["heuristic", "exact", "llm"])
    p.add_argument("--time-limit", type=float, help="seconds per run (default 3600)")
    p.add_argument("--reject-threshold", type=int,
                   help="consecutive non-improving iterations before stopping (default 5)")
    p.add_argument("--active-cap", type=int, help="max active elements per iteration (default 20)")
    p.add_argument("--temperature", type=float,
                   help="acceptance temperature (default max(1, 1%% of the initial objective))")
    p.add_argument("--seed", type=int)
    p.add_argument("--model", help="chat model name for llm strategies")
    p.add_argument("--mock-script", help="JSON list of scripted agent replies")
    p.add_argument("--workers", type=int, help="entries run in parallel (default 1)")
    p.add_argument("--out", help="directory for report.txt and runs.jsonl")
    p.add_argument("--optimum", type=float, help="known optimum or bound for a single instance")
    p.add_argument("--revision-rounds", type=int, help="llm revision rounds (default 3)")
    p.add_argument("--exact-threshold", type=int, help="max active elements for exact (default 50)")
    p.add_argument("--reset-on", choices=["improvement", "accept"],
                   help="what resets the rejection counter (default improvement)")
    p.add_argument("--generate-mkp", nargs=2, type=int, metavar=("ITEMS", "KNAPSACKS"),
                   help="write a random mkp instance as JSON (to --out or stdout) and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _is_manifest(path: str) -> bool:
    if path.startswith("bundled:") or not path.lower().endswith(".json"):
        return False
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError):
        return False
    return isinstance(doc, dict) and "entries" in doc


def manifest_from_args(args) -> Manifest:
    overrides = {key: getattr(args, flag) for flag, key in _FLAG_TO_CONFIG.items()
                 if getattr(args, flag) is not None}
    if _is_manifest(args.path):
        base = load_manifest(args.path)
        return Manifest(entries=base.entries, config={**base.config, **overrides},
                        output=args.out or base.output,
                        workers=args.workers or base.workers,
                        model=args.model or base.model,
                        mock_script=args.mock_script or base.mock_script)
    entry = Entry(path=args.path, format=args.format, problem=args.problem,
                  optimum=args.optimum)
    return Manifest(entries=(entry,), config=overrides, output=args.out,
                    workers=args.workers or 1, model=args.model, mock_script=args.mock_script)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.generate_mkp:
        n_items, n_knap = args.generate_mkp
        m = generate_mkp(n_items, n_knap, args.seed or 0)
        text = serialize_json(m, indent=2) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    if not args.path:
        build_parser().error("an instance or manifest path is required")
    try:
        manifest = manifest_from_args(args)
        stream = io.StringIO()
        report = run_benchmark(manifest, log_stream=stream)
    except (RegionOptError, OSError, ValueError) as exc:
        print(f"regionopt: {exc}", file=sys.stderr)
        return 2
    print(report.table())
    for row in report.rows:
        if row.error:
            print(f"{row.name}: {row.error}", file=sys.stderr)
    if manifest.output:
        write_outputs(report, stream.getvalue(), manifest.output)
    return 1 if any(r.error for r in report.rows) else 0


if __name__ == "__main__":
    sys.exit(main())
