"""
Topology validation

Checks a parsed Topology against the deployability constraints and returns
every violation found. Nothing here raises on a bad model; the diagnostics
are the result.

Diagnostic codes:
    E_UNIQUE_WEBENGINE      web component without a webengine
    E_UNIQUE_DBENGINE       database component without a dbengine
    E_UNIQUE_IMAGENAME      openstack platform without an image_name
    E_PROCESS_ENGINE        dataanalytics component without a process_engine
    E_MIGRATE_NEEDS_DELETE  migrateTo without a deleteFrom on the same component
    E_ENDPOINT_KIND         relationship endpoints of the wrong node kind
    E_HOSTING               component with zero or several hostedOn edges
    E_CONNECTS_CYCLE        connectsTo cycle (one per simple cycle)
    E_PROVIDER_BINDING      provider-bound component connects off-provider

A platform nothing refers to is only logged; it does not make a model
undeployable.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Set, Tuple, Union

import networkx as nx
import pyparsing as pp

from .errors import RuleParseError
from .topology import (PLATFORM_TARGETED, ComponentKind, Provider,
                       RelationshipKind, Topology)

logger = logging.getLogger(__name__)

__all__ = ["Severity", "Diagnostic", "Binding", "RuleSet", "validate",
           "rule_set_from_file", "rule_set_from_text", "has_errors", "DIAGNOSTIC_CODES"]

DIAGNOSTIC_CODES = (
    "E_UNIQUE_WEBENGINE",
    "E_UNIQUE_DBENGINE",
    "E_UNIQUE_IMAGENAME",
    "E_PROCESS_ENGINE",
    "E_MIGRATE_NEEDS_DELETE",
    "E_ENDPOINT_KIND",
    "E_HOSTING",
    "E_CONNECTS_CYCLE",
    "E_PROVIDER_BINDING",
)


class Severity(str, Enum):
    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True, order=True)
class Diagnostic:
    subject: str
    code: str
    severity: Severity
    message: str

    def __str__(self) -> str:
        return f"{self.severity.value} {self.code} {self.subject}: {self.message}"


def has_errors(diagnostics: List[Diagnostic]) -> bool:
    return any(d.severity == Severity.ERROR for d in diagnostics)


# =============================================================================
# Rule sets
# =============================================================================

@dataclass(frozen=True)
class Binding:
    """Components carrying `value` as an attribute value may only connect to `provider`"""
    value: str
    provider: Provider


@dataclass(frozen=True)
class RuleSet:
    bindings: Tuple[Binding, ...] = ()

    @classmethod
    def builtin(cls) -> "RuleSet":
        """Structural rules only, no compatibility bindings"""
        return cls()


_WORD = pp.Regex(r"[^\s#]+")
_BIND_LINE = (pp.Keyword("bind") - _WORD("value") - pp.Keyword("to") - _WORD("provider")
              + pp.Optional(pp.Regex(r"#.*")).suppress() + pp.StringEnd())


def rule_set_from_text(text: str, path: str = "<rules>") -> RuleSet:
    bindings: List[Binding] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            parsed = _BIND_LINE.parse_string(line, parse_all=True)
        except pp.ParseBaseException as e:
            raise RuleParseError(path, lineno, f"expected 'bind <value> to <provider>': {e.msg}") from None
        try:
            provider = Provider(parsed.provider)
        except ValueError:
            raise RuleParseError(path, lineno, f"unknown provider '{parsed.provider}'") from None
        bindings.append(Binding(parsed.value, provider))
    return RuleSet(tuple(bindings))


def rule_set_from_file(path: Union[str, Path]) -> RuleSet:
    """
    Load compatibility rules

    Args:
        path: Rules file, one `bind <attribute-value> to <provider>` per line

    Returns:
        RuleSet with the file's bindings; built-in rules are always applied

    Raises:
        RuleParseError: malformed line or unknown provider
    """
    path = Path(path)
    rules = rule_set_from_text(path.read_text(encoding="utf-8"), str(path))
    logger.debug(f"Loaded {len(rules.bindings)} binding(s) from {path}")
    return rules


# =============================================================================
# Checks
# =============================================================================

_REQUIRED_ENGINE = {
    ComponentKind.WEB: ("webengine", "E_UNIQUE_WEBENGINE"),
    ComponentKind.DATABASE: ("dbengine", "E_UNIQUE_DBENGINE"),
}


def _error(subject: str, code: str, message: str) -> Diagnostic:
    return Diagnostic(subject, code, Severity.ERROR, message)


def _check_attributes(topology: Topology) -> List[Diagnostic]:
    out = []
    for comp in topology.components.values():
        if comp.kind in _REQUIRED_ENGINE:
            attr, code = _REQUIRED_ENGINE[comp.kind]
            if not comp.attr(attr):
                out.append(_error(comp.id, code, f"{comp.kind.value} component needs exactly one '{attr}'"))
        elif comp.kind == ComponentKind.DATA_ANALYTICS and not comp.process_engines:
            out.append(_error(comp.id, "E_PROCESS_ENGINE", "dataanalytics component needs at least one 'process_engine'"))
    for plat in topology.platforms.values():
        if plat.provider == Provider.OPENSTACK and not plat.image_name:
            out.append(_error(plat.id, "E_UNIQUE_IMAGENAME", "openstack platform needs exactly one 'image_name'"))
    return out


def _check_migrations(topology: Topology) -> List[Diagnostic]:
    out = []
    migrating = sorted({rel.source for rel in topology.relationships_of(RelationshipKind.MIGRATE_TO)})
    for comp_id in migrating:
        if not topology.outgoing(comp_id, RelationshipKind.DELETE_FROM):
            out.append(_error(comp_id, "E_MIGRATE_NEEDS_DELETE", "migrateTo cannot be declared without a deleteFrom"))
    return out


def _check_endpoints(topology: Topology) -> List[Diagnostic]:
    out = []
    for rel in topology.relationships:
        if rel.source not in topology.components:
            out.append(_error(rel.id, "E_ENDPOINT_KIND", f"{rel.kind.value} source '{rel.source}' must be a component"))
        elif rel.kind in PLATFORM_TARGETED and rel.target not in topology.platforms:
            out.append(_error(rel.id, "E_ENDPOINT_KIND", f"{rel.kind.value} target '{rel.target}' must be a platform"))
        elif rel.kind == RelationshipKind.CONNECTS_TO and rel.target not in topology.components:
            out.append(_error(rel.id, "E_ENDPOINT_KIND", f"connectsTo target '{rel.target}' must be a component"))
    return out


def _check_hosting(topology: Topology) -> List[Diagnostic]:
    out = []
    for comp_id in topology.components:
        hosts = [rel.target for rel in topology.outgoing(comp_id, RelationshipKind.HOSTED_ON)]
        if len(hosts) == 1:
            continue
        if not hosts and _removed_from_predeployed(topology, comp_id):
            continue
        if hosts:
            message = f"hosted on {len(hosts)} platforms ({', '.join(hosts)}), expected exactly one"
        else:
            message = "no hostedOn relationship"
        out.append(_error(comp_id, "E_HOSTING", message))
    return out


def _removed_from_predeployed(topology: Topology, comp_id: str) -> bool:
    for rel in topology.outgoing(comp_id, RelationshipKind.DELETE_FROM):
        plat = topology.platforms.get(rel.target)
        if plat is not None and plat.is_predeployed:
            return True
    return False


def _connects_graph(topology: Topology) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(topology.components)
    for rel in topology.relationships_of(RelationshipKind.CONNECTS_TO):
        if rel.source in topology.components and rel.target in topology.components:
            graph.add_edge(rel.source, rel.target)
    return graph


def _check_cycles(topology: Topology) -> List[Diagnostic]:
    out = []
    for cycle in nx.simple_cycles(_connects_graph(topology)):
        start = cycle.index(min(cycle))
        cycle = cycle[start:] + cycle[:start]
        path = " -> ".join(cycle + [cycle[0]])
        out.append(_error(cycle[0], "E_CONNECTS_CYCLE", f"connectsTo cycle: {path}"))
    return out


def _bound_providers(topology: Topology, comp_id: str, rules: RuleSet) -> Set[Provider]:
    comp = topology.components[comp_id]
    bound: Set[Provider] = set()
    for binding in rules.bindings:
        if binding.value in comp.attributes.values():
            bound.add(binding.provider)
    explicit = comp.attr("provider_bound")
    if explicit:
        try:
            bound.add(Provider(explicit))
        except ValueError:
            logger.warning(f"{comp_id}: ignoring unknown provider_bound '{explicit}'")
    return bound


def _check_bindings(topology: Topology, rules: RuleSet) -> List[Diagnostic]:
    out = []
    for rel in topology.relationships_of(RelationshipKind.CONNECTS_TO):
        if rel.source not in topology.components or rel.target not in topology.components:
            continue
        required = _bound_providers(topology, rel.source, rules)
        if not required:
            continue
        hosts = [topology.platforms[h.target] for h in topology.outgoing(rel.target, RelationshipKind.HOSTED_ON)
                 if h.target in topology.platforms]
        for provider in sorted(required, key=lambda p: p.value):
            wrong = [p.id for p in hosts if p.provider != provider]
            if wrong:
                out.append(_error(
                    rel.id, "E_PROVIDER_BINDING",
                    f"'{rel.source}' is bound to {provider.value} but '{rel.target}' is hosted on {', '.join(wrong)}",
                ))
    return out


def _log_unused(topology: Topology):
    referenced = {rel.target for rel in topology.relationships} | {rel.source for rel in topology.relationships}
    for plat_id in sorted(topology.platforms):
        if plat_id not in referenced:
            logger.warning(f"{plat_id}: no relationship refers to this platform")


def validate(topology: Topology, rules: RuleSet = RuleSet()) -> List[Diagnostic]:
    """
    Run every check and return all diagnostics

    Returns:
        Diagnostics sorted by subject then code; empty means deployable
    """
    diagnostics: List[Diagnostic] = []
    diagnostics += _check_attributes(topology)
    diagnostics += _check_migrations(topology)
    diagnostics += _check_endpoints(topology)
    diagnostics += _check_hosting(topology)
    diagnostics += _check_cycles(topology)
    diagnostics += _check_bindings(topology, rules)
    _log_unused(topology)

    counts: Dict[Severity, int] = {s: 0 for s in Severity}
    for d in diagnostics:
        counts[d.severity] += 1
    logger.info(f"Validation: {counts[Severity.ERROR]} error(s), {counts[Severity.WARNING]} warning(s)")
    return sorted(diagnostics)
