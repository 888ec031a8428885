#!/usr/bin/env python3
"""
iacc - compile .camp topologies into IaC bundles and execution plans

Commands:
    validate   check a model against the deployability rules
    generate   write the IaC bundle (playbooks, provision scripts, inventory)
    plan       print the deployment / migration / delta plan as JSON or DOT
    simulate   rehearse a plan on simulated hosts and print the event trace
    kb         show what the knowledge base resolves for an application type
    config     print the active configuration

Exit codes:
    0   success
    1   model parse errors or validation errors
    2   knowledge base, template, generation or planning errors
    3   simulated run failed or its trace broke the plan's ordering
    64  usage error (bad flags, missing input files)
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from core import config
from core.errors import (IacError, ModelParseError, RuleParseError,
                         SimConfigError, TopologyError)
from core.generator import generate_bundle, generate_migration_bundle
from core.knowledge_base import KnowledgeBase, load, os_variants
from core.log import setup_logging
from core.parser import parse_file
from core.planner import Plan, plan_delta, plan_deploy, plan_migrate
from core.simulator import PlanStatus, SimConfig, check_trace, load_sim_config, simulate
from core.templates import TemplateLibrary
from core.topology import Topology
from core.validator import RuleSet, has_errors, rule_set_from_file, validate

logger = logging.getLogger("iacc")

SCRIPT_DIR = Path(__file__).resolve().parent
SHIPPED_RULES = SCRIPT_DIR / config.DEFAULT_RULES_FILE


class UsageError(Exception):
    """Bad command line input detected after argument parsing"""


class IaccArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(config.EXIT_USAGE)


# =============================================================================
# Pipeline stages
# =============================================================================

def _existing_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _existing_dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} directory not found: {path}")
    return p


def load_rules(path: Optional[str]) -> RuleSet:
    if path is None:
        return rule_set_from_file(SHIPPED_RULES) if SHIPPED_RULES.is_file() else RuleSet()
    return rule_set_from_file(_existing_file(path, "rules file"))


def load_checked_model(path: str, rules: RuleSet) -> Optional[Topology]:
    """Parse and validate; prints diagnostics and returns None when there are errors"""
    topology = parse_file(_existing_file(path, "model file"))
    diagnostics = validate(topology, rules)
    for d in diagnostics:
        print(str(d), file=sys.stderr)
    if has_errors(diagnostics):
        return None
    return topology


def load_inputs(args):
    kb = load(_existing_dir(args.kb, "knowledge base"))
    templates = TemplateLibrary.load(_existing_dir(args.templates, "templates"))
    return kb, templates


def build_plan(args, topology: Topology, kb: KnowledgeBase, templates: TemplateLibrary,
               rules: RuleSet) -> Optional[Plan]:
    if args.delta:
        old = load_checked_model(args.delta, rules)
        if old is None:
            return None
        return plan_delta(old, topology, kb, templates)
    if args.migrate:
        return plan_migrate(topology, kb, templates)
    return plan_deploy(topology, generate_bundle(topology, kb, templates))


# =============================================================================
# Commands
# =============================================================================

def cmd_validate(args) -> int:
    topology = load_checked_model(args.model, load_rules(args.rules))
    return config.EXIT_OK if topology is not None else config.EXIT_VALIDATION


def cmd_generate(args) -> int:
    topology = load_checked_model(args.model, load_rules(args.rules))
    if topology is None:
        return config.EXIT_VALIDATION
    kb, templates = load_inputs(args)
    if args.migrate:
        bundle = generate_migration_bundle(topology, kb, templates)
    else:
        bundle = generate_bundle(topology, kb, templates)
    tree = bundle.to_file_tree()
    bundle.write(args.out)
    for rel_path in tree:
        print(f"{Path(args.out) / rel_path} ({len(tree[rel_path])} bytes)")
    return config.EXIT_OK


def cmd_plan(args) -> int:
    rules = load_rules(args.rules)
    topology = load_checked_model(args.model, rules)
    if topology is None:
        return config.EXIT_VALIDATION
    kb, templates = load_inputs(args)
    plan = build_plan(args, topology, kb, templates, rules)
    if plan is None:
        return config.EXIT_VALIDATION
    sys.stdout.write(plan.to_dot() if args.dot else plan.to_json())
    return config.EXIT_OK


def cmd_simulate(args) -> int:
    if args.plan:
        plan = Plan.from_json(_existing_file(args.plan, "plan file").read_text(encoding="utf-8"))
    else:
        if not args.model:
            raise UsageError("simulate needs --model or --plan")
        rules = load_rules(args.rules)
        topology = load_checked_model(args.model, rules)
        if topology is None:
            return config.EXIT_VALIDATION
        kb, templates = load_inputs(args)
        plan = build_plan(args, topology, kb, templates, rules)
        if plan is None:
            return config.EXIT_VALIDATION

    sim_config = load_sim_config(_existing_file(args.sim_config, "simulator config")) if args.sim_config else SimConfig()
    trace = simulate(plan, sim_config.with_seed(args.seed))
    sys.stdout.write(trace.to_text())

    violations = check_trace(trace, plan)
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    if trace.status != PlanStatus.SUCCEEDED or violations:
        return config.EXIT_SIM_FAILED
    return config.EXIT_OK


def cmd_kb(args) -> int:
    kb = load(_existing_dir(args.kb, "knowledge base"))
    if not args.app:
        for name in kb.app_names():
            print(name)
        return config.EXIT_OK
    variants = os_variants(kb, args.app, args.apptype)
    print(f"{args.app}: {len(variants)} supported OS variant(s)")
    for (os_type, os_version), resolution in variants.items():
        steps = ", ".join(f"{mgr}:{name}" for mgr, name in resolution.steps)
        print(f"  {os_type} {os_version}: {steps}")
    return config.EXIT_OK


def cmd_config(args) -> int:
    config.print_config_summary()
    return config.EXIT_OK


# =============================================================================
# Argument parsing
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = IaccArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="Log progress (-v) or debug detail (-vv) to stderr")
    common.add_argument("-q", "--quiet", action="store_true", help="Only log errors")

    model = IaccArgumentParser(add_help=False)
    model.add_argument("--model", required=True, help="Topology model (.camp)")
    model.add_argument("--rules", default=None,
                       help=f"Compatibility rules file (default: shipped {config.DEFAULT_RULES_FILE})")

    inputs = IaccArgumentParser(add_help=False)
    inputs.add_argument("--kb", default=config.DEFAULT_KB_DIR,
                        help=f"Knowledge base directory (default: {config.DEFAULT_KB_DIR})")
    inputs.add_argument("--templates", default=config.DEFAULT_TEMPLATES_DIR,
                        help=f"Template library directory (default: {config.DEFAULT_TEMPLATES_DIR})")

    planning = IaccArgumentParser(add_help=False)
    mode = planning.add_mutually_exclusive_group()
    mode.add_argument("--migrate", action="store_true", help="Plan the model's deleteFrom/migrateTo relationships")
    mode.add_argument("--delta", metavar="OLD_MODEL", help="Plan only what the model adds to OLD_MODEL")

    parser = IaccArgumentParser(
        prog="iacc",
        description="Compile .camp topologies into IaC bundles and execution plans",
        epilog="exit codes: 0 ok, 1 validation, 2 generation, 3 simulation failed, 64 usage",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common, model], help="Check a model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", parents=[common, model, inputs], help="Write the IaC bundle")
    p.add_argument("--out", required=True, help="Output directory (replaced atomically)")
    p.add_argument("--migrate", action="store_true", help="Write the migration bundle instead")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("plan", parents=[common, model, inputs, planning], help="Print the execution plan")
    p.add_argument("--dot", action="store_true", help="Emit a DOT digraph instead of JSON")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common, inputs, planning], help="Rehearse a plan")
    p.add_argument("--model", help="Topology model (.camp)")
    p.add_argument("--rules", default=None, help="Compatibility rules file")
    p.add_argument("--plan", help="Simulate a plan JSON file instead of planning a model")
    p.add_argument("--sim-config", help="Simulator configuration (TOML)")
    p.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kb", parents=[common], help="Inspect the knowledge base")
    p.add_argument("--kb", default=config.DEFAULT_KB_DIR,
                   help=f"Knowledge base directory (default: {config.DEFAULT_KB_DIR})")
    p.add_argument("--app", help="Application type to resolve on every OS")
    p.add_argument("--apptype", help="apptype qualifier when the application has several")
    p.set_defaults(func=cmd_kb)

    p = sub.add_parser("config", parents=[common], help="Print the configuration")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else config.EXIT_USAGE

    setup_logging(args.verbose, args.quiet)

    try:
        return args.func(args)
    except UsageError as e:
        print(f"iacc: error: {e}", file=sys.stderr)
        return config.EXIT_USAGE
    except SimConfigError as e:
        print(f"iacc: error: {e}", file=sys.stderr)
        return config.EXIT_USAGE
    except (ModelParseError, TopologyError, RuleParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return config.EXIT_VALIDATION
    except IacError as e:
        print(f"error: {e}", file=sys.stderr)
        return config.EXIT_GENERATION


if __name__ == "__main__":
    sys.exit(main())
