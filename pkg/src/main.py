"""
Main entry point for the elastic Calderón lab.

    python -m src.main run <config.json> [--out DIR] [--threads N]
    python -m src.main validate <config.json>
    python -m src.main show <run-dir | run-id>

Exit codes: 0 success, 2 validation or configuration failure, 3 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from src.config.settings import collect_violations, load_config, read_config
from src.core.database import get_run_by_dir, get_run_by_id, init_db
from src.core.errors import ConfigurationError, ExperimentError, ValidationError
from src.experiments.runner import run_experiment
from src.services.exporters import load_result_json, load_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elastic-calderon",
                                     description="Elastic Calderón numerical experiments")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings only, no progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write its result bundle")
    run.add_argument("config", help="path to the JSON configuration")
    run.add_argument("--out", default=None, help="run directory (default: <output root>/<experiment>-<digest>)")
    run.add_argument("--threads", type=int, default=None, help="worker threads (overrides the config)")

    validate = sub.add_parser("validate", help="list every violated precondition without computing")
    validate.add_argument("config", help="path to the JSON configuration")

    show = sub.add_parser("show", help="pretty-print a result bundle")
    show.add_argument("target", help="run directory or registry run id")
    return parser


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# ──────────────────────── COMMANDS ────────────────────────

def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigurationError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.threads is not None and args.threads < 1:
        print("Validation error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID

    try:
        outputs = run_experiment(config, out=args.out, threads=args.threads,
                                 progress=not args.quiet and sys.stderr.isatty())
    except ExperimentError as e:
        print(f"Error: {e.cause}", file=sys.stderr)
        return e.exit_code
    print(f"Run {outputs.run_id} written to {outputs.run_dir}")
    print(f"result.json sha256 {outputs.result_digest}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        raw = read_config(args.config)
    except ConfigurationError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_INVALID
    violations = collect_violations(raw)
    if violations:
        for v in violations:
            print(f"  - {v}")
        print(f"{len(violations)} violation(s) in {args.config}")
        return EXIT_INVALID
    print(f"{args.config}: configuration is valid")
    return EXIT_OK


def _resolve_run_dir(target: str) -> Optional[Path]:
    path = Path(target)
    if path.is_dir():
        return path
    if target.isdigit():
        init_db()
        run = get_run_by_id(int(target))
        if run:
            return Path(run["run_dir"])
    return None


def _format_value(value) -> str:
    if isinstance(value, dict) and set(value) == {"value", "provenance"}:
        return f"{_format_value(value['value'])}  [{value['provenance']}]"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, dict)):
        text = json.dumps(value)
        return text if len(text) <= 100 else text[:97] + "..."
    return str(value)


def render_bundle(run_dir: Path, result: Dict, registry: Optional[Dict]) -> List[str]:
    lines = [
        f"📁 {run_dir}",
        f"   experiment : {result.get('experiment')}",
        f"   schema     : {result.get('schema')}",
        f"   config     : {result.get('config_digest', '')[:12]}",
    ]
    if registry:
        lines.append(f"   registry   : run {registry['id']} ({registry['status']}, finished {registry['finished_at']})")
    lines.append("")
    lines.append("📊 Results")
    for key in sorted(result.get("result", {})):
        lines.append(f"   {key}: {_format_value(result['result'][key])}")
    tables = result.get("tables", [])
    if tables:
        lines.append("")
        lines.append("📈 Tables")
        for name in tables:
            path = run_dir / name
            rows = len(load_table(path)) if path.exists() else 0
            lines.append(f"   {name} ({rows} rows)")
    return lines


def cmd_show(args: argparse.Namespace) -> int:
    run_dir = _resolve_run_dir(args.target)
    if run_dir is None or not (run_dir / "result.json").exists():
        print(f"No result bundle found for '{args.target}'", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = load_result_json(run_dir / "result.json")
    except ValidationError as e:
        print(f"Validation error: {e}", file=sys.stderr)
        return EXIT_INVALID
    init_db()
    print("\n".join(render_bundle(run_dir, result, get_run_by_dir(str(run_dir)))))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "show": cmd_show}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    return COMMANDS[args.command](args)


if __name__ == '__main__':
    sys.exit(main())
