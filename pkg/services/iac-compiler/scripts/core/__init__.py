"""
Core modules for compiling .camp topologies into IaC bundles and execution plans
"""

from .topology import (ComponentKind, ComponentNode, MigrationType, OsType, PlatformNode,
                       Provider, Relationship, RelationshipKind, Topology)
from .parser import parse, parse_file, serialize
from .validator import Diagnostic, RuleSet, Severity, has_errors, rule_set_from_file, validate
from .knowledge_base import KnowledgeBase, PackageResolution, load, os_variants, resolve
from .templates import TemplateLibrary
from .generator import (IacBundle, generate_bundle, generate_config, generate_migration_bundle,
                        generate_provision)
from .planner import Plan, Step, StepAction, plan_delta, plan_deploy, plan_migrate
from .simulator import EventTrace, SimConfig, check_trace, load_sim_config, simulate

__all__ = [
    'ComponentKind', 'ComponentNode', 'MigrationType', 'OsType', 'PlatformNode',
    'Provider', 'Relationship', 'RelationshipKind', 'Topology',
    'parse', 'parse_file', 'serialize',
    'Diagnostic', 'RuleSet', 'Severity', 'has_errors', 'rule_set_from_file', 'validate',
    'KnowledgeBase', 'PackageResolution', 'load', 'os_variants', 'resolve',
    'TemplateLibrary',
    'IacBundle', 'generate_bundle', 'generate_config', 'generate_migration_bundle', 'generate_provision',
    'Plan', 'Step', 'StepAction', 'plan_delta', 'plan_deploy', 'plan_migrate',
    'EventTrace', 'SimConfig', 'check_trace', 'load_sim_config', 'simulate',
]
