"""Command-line entry point: ``edgemesh {node,sim,plan,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .core import ContractError
from .node.daemon import ConfigInvalid, NodeDaemon, load_config
from .planner import PlannerError, load_instance, solve_exact, write_plan
from .sim import ScenarioInvalid, export_results, load_scenario, report, run_scenario

log = logging.getLogger("edgemesh.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCENARIO = 3
EXIT_PLAN = 4
EXIT_IO = 5


class PlanInfeasible(Exception):
    pass


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        if record.exc_info:
            entry["exc"] = self.formatException(record.exc_info)
        return json.dumps(entry)


def configure_logging(level_name: Optional[str] = None) -> None:
    name = (level_name or os.environ.get("EDGEMESH_LOG", "error")).lower()
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(name, logging.ERROR)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgemesh",
        description="Energy-aware workload placement for solar-powered edge nodes.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("node", help="run a node daemon until terminated")
    p.add_argument("--config", required=True, metavar="PATH", help="node config file (JSON)")

    p = sub.add_parser("sim", help="run a scenario and write its artifacts")
    p.add_argument("--scenario", required=True, metavar="PATH", help="scenario file (JSON)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, default=None, metavar="N", help="override the scenario seed")

    p = sub.add_parser("plan", help="solve a placement instance exactly")
    p.add_argument("--instance", required=True, metavar="PATH", help="instance file (JSON)")
    p.add_argument("--out", default=None, metavar="PATH", help="plan file (JSON); a CSV is written beside it")

    p = sub.add_parser("report", help="redraw plots and print the summary of a sim output directory")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR", help="directory written by `sim`")
    return parser


def _fail(category: str, code: int, message: str) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def _cmd_node(args) -> int:
    config = load_config(args.config)
    NodeDaemon(config).serve_forever()
    return EXIT_OK


def _cmd_sim(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    record = run_scenario(scenario)
    paths = export_results(record, args.out)
    print(json.dumps({"out": str(Path(args.out)), "files": sorted(p.name for p in paths.values())}))
    return EXIT_OK


def _cmd_plan(args) -> int:
    path = Path(args.instance)
    if not path.is_file():
        raise FileNotFoundError(f"instance file {path} not found")
    try:
        instance = load_instance(path)
        plan = solve_exact(instance)
    except (PlannerError, ContractError, KeyError, TypeError, ValueError) as exc:
        raise PlanInfeasible(f"{type(exc).__name__}: {exc}") from exc
    if args.out:
        write_plan(plan, Path(args.out))
    print(json.dumps(plan.to_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_report(args) -> int:
    src = Path(args.in_dir)
    if not (src / "metrics.csv").is_file():
        raise FileNotFoundError(f"{src / 'metrics.csv'} not found")
    print(json.dumps(report(src), sort_keys=True))
    return EXIT_OK


COMMANDS = {"node": _cmd_node, "sim": _cmd_sim, "plan": _cmd_plan, "report": _cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        return _fail("ConfigInvalid", EXIT_CONFIG, str(exc))
    except ScenarioInvalid as exc:
        return _fail("ScenarioInvalid", EXIT_SCENARIO, str(exc))
    except PlanInfeasible as exc:
        return _fail("PlanInfeasible", EXIT_PLAN, str(exc))
    except OSError as exc:
        return _fail("IoError", EXIT_IO, str(exc))


if __name__ == "__main__":
    sys.exit(main())
