#!/usr/bin/env python3
"""
Plan Enactor

Builds execution DAGs from a topology:

- plan_deploy:  Provision -> WaitSsh -> Configure -> Start per hosted component,
                Start(b) -> Start(a) for every `a connectsTo b`
- plan_migrate: stateless moves run the new-host chain alongside Terminate(old);
                stateful moves go through a load balancer cutover with
                checkpoint/restore
- plan_delta:   only the steps an added node or edge needs, wired to
                already-satisfied markers for the steps that exist

Unordered steps may run concurrently; the edge set is the whole contract.
"""

import json
import logging
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple

import jsonschema
import networkx as nx

from . import config
from .errors import CyclicPlan, NoMigrationPair, PlanningError, UnsupportedDelta
from .generator import (CONFIGURE_TAG, INVENTORY_FILE, START_TAG, IacBundle,
                        generate_bundle, generate_migration_bundle, hook_path,
                        playbook_path, provision_path, teardown_path)
from .knowledge_base import KnowledgeBase
from .templates import TemplateLibrary
from .topology import MigrationType, PlatformNode, RelationshipKind, Topology

logger = logging.getLogger(__name__)


class StepAction(str, Enum):
    PROVISION = "Provision"
    WAIT_SSH = "WaitSsh"
    CONFIGURE = "Configure"
    START = "Start"
    TERMINATE = "Terminate"
    CHECKPOINT = "Checkpoint"
    RESTORE = "Restore"
    ATTACH_LB = "AttachLb"
    DETACH_LB = "DetachLb"
    REDIRECT = "Redirect"


PLAN_KINDS = ("deploy", "migrate", "delta")


def step_id(action: StepAction, subject: str, replica: Optional[int] = None) -> str:
    suffix = f"#{replica}" if replica is not None else ""
    return f"{action.value}({subject}{suffix})"


@dataclass(frozen=True)
class Step:
    id: str
    action: StepAction
    subject: str
    payload: str
    host: Optional[str] = None
    satisfied: bool = False

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["action"] = self.action.value
        return data


PLAN_SCHEMA = {
    "type": "object",
    "required": ["kind", "steps", "edges"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(PLAN_KINDS)},
        "steps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "action", "subject", "payload"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "action": {"enum": [a.value for a in StepAction]},
                    "subject": {"type": "string", "minLength": 1},
                    "payload": {"type": "string"},
                    "host": {"type": ["string", "null"]},
                    "satisfied": {"type": "boolean"},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
    },
}


@dataclass(frozen=True)
class Plan:
    """Steps plus precedence edges (before, after); always acyclic"""
    kind: str
    steps: Tuple[Step, ...]
    edges: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        ids = [s.id for s in self.steps]
        if len(ids) != len(set(ids)):
            raise PlanningError("duplicate step ids in plan")
        known = set(ids)
        for before, after in self.edges:
            if before not in known or after not in known:
                raise PlanningError(f"edge {before} -> {after} refers to an unknown step")
        try:
            cycle = nx.find_cycle(self.graph())
        except nx.NetworkXNoCycle:
            return
        raise CyclicPlan([u for u, _ in cycle] + [cycle[0][0]])

    @classmethod
    def build(cls, kind: str, steps: Iterable[Step], edges: Iterable[Tuple[str, str]]) -> "Plan":
        return cls(kind, tuple(sorted(steps, key=lambda s: s.id)), tuple(sorted(set(edges))))

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        for s in self.steps:
            g.add_node(s.id, step=s)
        g.add_edges_from(self.edges)
        return g

    def step(self, sid: str) -> Step:
        for s in self.steps:
            if s.id == sid:
                return s
        raise KeyError(sid)

    @property
    def step_ids(self) -> List[str]:
        return [s.id for s in self.steps]

    def is_empty(self) -> bool:
        return not self.steps

    def linearize(self) -> List[str]:
        """Deterministic execution order: lexicographically smallest topological order"""
        return list(nx.lexicographical_topological_sort(self.graph()))

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "steps": [s.to_dict() for s in self.steps],
            "edges": [list(e) for e in self.edges],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Plan":
        try:
            doc = json.loads(text)
            jsonschema.validate(doc, PLAN_SCHEMA)
        except json.JSONDecodeError as e:
            raise PlanningError(f"plan is not valid JSON: {e}") from None
        except jsonschema.ValidationError as e:
            raise PlanningError(f"plan does not match schema: {e.message}") from None
        steps = [Step(id=s["id"], action=StepAction(s["action"]), subject=s["subject"],
                      payload=s["payload"], host=s.get("host"), satisfied=s.get("satisfied", False))
                 for s in doc["steps"]]
        return cls.build(doc["kind"], steps, [tuple(e) for e in doc["edges"]])

    def to_dot(self) -> str:
        lines = [f"digraph {self.kind}_plan {{", "  rankdir=LR;", "  node [shape=box, fontname=Helvetica];"]
        for s in self.steps:
            style = ', style=dashed, color=gray' if s.satisfied else ""
            lines.append(f'  "{s.id}" [label="{s.action.value}\\n{s.subject}"{style}];')
        for before, after in self.edges:
            lines.append(f'  "{before}" -> "{after}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


class _PlanBuilder:
    def __init__(self):
        self.steps: Dict[str, Step] = {}
        self.edges: Set[Tuple[str, str]] = set()

    def add(self, action: StepAction, subject: str, payload: str, host: Optional[str] = None,
            replica: Optional[int] = None, satisfied: bool = False) -> str:
        sid = step_id(action, subject, replica)
        existing = self.steps.get(sid)
        # a real step supersedes an already-satisfied marker with the same id
        if existing is None or (existing.satisfied and not satisfied):
            self.steps[sid] = Step(sid, action, subject, payload, host, satisfied)
        return sid

    def put(self, step: Step):
        existing = self.steps.get(step.id)
        if existing is None or (existing.satisfied and not step.satisfied):
            self.steps[step.id] = step

    def edge(self, before: str, after: str):
        self.edges.add((before, after))

    def build(self, kind: str) -> Plan:
        return Plan.build(kind, self.steps.values(), self.edges)


# =============================================================================
# Deployment
# =============================================================================

def _platform_chain(b: _PlanBuilder, platform: PlatformNode, after: Optional[str] = None) -> str:
    """Provision (cloud only) then WaitSsh; returns the WaitSsh step id"""
    wait = b.add(StepAction.WAIT_SSH, platform.id, f"{INVENTORY_FILE}#{platform.id}")
    if platform.is_predeployed:
        if after:
            b.edge(after, wait)
        return wait
    provision = b.add(StepAction.PROVISION, platform.id, provision_path(platform.id))
    b.edge(provision, wait)
    if after:
        b.edge(after, provision)
    return wait


def _replica_chain(b: _PlanBuilder, component_id: str, platform: PlatformNode, wait: str) -> Tuple[List[str], List[str]]:
    """Configure -> Start per host; returns (configure ids, start ids)"""
    hosts = platform.host_names()
    replicas: List[Optional[int]] = [None] if len(hosts) == 1 else list(range(len(hosts)))
    configures, starts = [], []
    for replica, host in zip(replicas, hosts):
        conf = b.add(StepAction.CONFIGURE, component_id, f"{playbook_path(component_id)}#{CONFIGURE_TAG}", host, replica)
        start = b.add(StepAction.START, component_id, f"{playbook_path(component_id)}#{START_TAG}", host, replica)
        b.edge(wait, conf)
        b.edge(conf, start)
        configures.append(conf)
        starts.append(start)
    return configures, starts


def _check_bundle(topology: Topology, bundle: IacBundle):
    for comp, plat in topology.hosted_pairs():
        if comp.id not in bundle.playbooks:
            raise PlanningError(f"bundle has no playbook for '{comp.id}'")
        if not plat.is_predeployed and plat.id not in bundle.provision_scripts:
            raise PlanningError(f"bundle has no provision script for '{plat.id}'")


def _check_payloads(plan: Plan, bundles: Iterable[IacBundle]):
    """Every step that will run must point at a document some bundle holds"""
    paths: Set[str] = set()
    for bundle in bundles:
        paths.update(bundle.to_file_tree())
    for step in plan.steps:
        if step.satisfied or not step.payload:
            continue
        path = step.payload.split("#", 1)[0]
        if path not in paths:
            raise PlanningError(f"{step.id}: bundle has no '{path}'")


def _deploy_steps(b: _PlanBuilder, topology: Topology):
    starts: Dict[str, List[str]] = {}
    for comp, plat in topology.hosted_pairs():
        wait = _platform_chain(b, plat)
        _, starts[comp.id] = _replica_chain(b, comp.id, plat, wait)

    for rel in topology.relationships_of(RelationshipKind.CONNECTS_TO):
        for first in starts.get(rel.target, []):
            for then in starts.get(rel.source, []):
                b.edge(first, then)


def plan_deploy(topology: Topology, bundle: Optional[IacBundle] = None) -> Plan:
    """
    Deployment DAG for every hosted component

    Args:
        topology: Validated topology
        bundle: Bundle generated from the topology; when given, every step
                payload is checked against it
    """
    if bundle is not None:
        _check_bundle(topology, bundle)
    b = _PlanBuilder()
    _deploy_steps(b, topology)
    plan = b.build("deploy")
    if bundle is not None:
        _check_payloads(plan, [bundle])
    logger.info(f"Deploy plan: {len(plan.steps)} steps, {len(plan.edges)} edges")
    return plan


# =============================================================================
# Migration
# =============================================================================

def _migration_steps(b: _PlanBuilder, topology: Topology, only: Optional[Set[Tuple]] = None):
    """Add migration and removal steps; `only` restricts to these relationship triples"""
    def wanted(rel) -> bool:
        return only is None or rel.triple in only

    moves = [rel for rel in topology.relationships_of(RelationshipKind.MIGRATE_TO) if wanted(rel)]
    for rel in moves:
        if not topology.outgoing(rel.source, RelationshipKind.DELETE_FROM):
            raise NoMigrationPair(rel.source)

    post = topology.after_migration()
    restored: Dict[str, str] = {}

    for rel in sorted(moves, key=lambda r: r.source):
        comp_id = rel.source
        old = topology.migration_source(comp_id)
        new = topology.platform(rel.target)

        if rel.migration_type == MigrationType.STATEFUL:
            lb = comp_id + config.LB_NODE_SUFFIX
            attach = b.add(StepAction.ATTACH_LB, lb, hook_path(comp_id, "lb_attach"))
            wait = _platform_chain(b, new, after=attach)
            _, starts = _replica_chain(b, comp_id, new, wait)
            redirect = b.add(StepAction.REDIRECT, lb, hook_path(comp_id, "redirect"))
            for start in starts:
                b.edge(start, redirect)
            checkpoint = b.add(StepAction.CHECKPOINT, comp_id, hook_path(comp_id, "checkpoint"), old.host_names()[0])
            restore = b.add(StepAction.RESTORE, comp_id, hook_path(comp_id, "restore"), new.host_names()[0])
            detach = b.add(StepAction.DETACH_LB, lb, hook_path(comp_id, "lb_detach"))
            b.edge(redirect, checkpoint)
            b.edge(checkpoint, restore)
            b.edge(restore, detach)
            restored[comp_id] = restore
            ready, before = [restore], [detach]
        else:
            wait = _platform_chain(b, new)
            _, starts = _replica_chain(b, comp_id, new, wait)
            ready, before = starts, []

        # consumers reconnect once the component answers at its new address
        for consumer in sorted(r.source for r in topology.incoming(comp_id, RelationshipKind.CONNECTS_TO)):
            if consumer not in post.components:
                continue
            host = post.hosting_platform(consumer)
            if host is None:
                continue
            hosts = host.host_names()
            replicas: List[Optional[int]] = [None] if len(hosts) == 1 else list(range(len(hosts)))
            for replica, host_name in zip(replicas, hosts):
                conf = b.add(StepAction.CONFIGURE, consumer,
                             f"{playbook_path(consumer)}#{CONFIGURE_TAG}", host_name, replica)
                for r in ready:
                    b.edge(r, conf)
                for d in before:
                    b.edge(conf, d)

    removals = [rel for rel in topology.relationships_of(RelationshipKind.DELETE_FROM) if wanted(rel)]
    for plat_id in sorted({rel.target for rel in removals}):
        platform = topology.platform(plat_id)
        leaving = sorted({rel.source for rel in removals if rel.target == plat_id})
        if platform.is_predeployed or not post.hosts_anything(plat_id):
            scoped = [(plat_id, teardown_path(plat_id), leaving)]
        else:
            # the machine keeps serving other components: stop only the leaving ones
            logger.info(f"Keeping {plat_id}: other components remain hosted on it")
            scoped = [(comp_id, f"{teardown_path(plat_id)}#{comp_id}", [comp_id]) for comp_id in leaving]
        for subject, payload, comps in scoped:
            terminate = b.add(StepAction.TERMINATE, subject, payload)
            for comp_id in comps:
                if comp_id in restored:
                    b.edge(restored[comp_id], terminate)


def plan_migrate(topology: Topology, kb: Optional[KnowledgeBase] = None,
                 templates: Optional[TemplateLibrary] = None) -> Plan:
    """
    Migration DAG for every deleteFrom/migrateTo in the topology

    When kb and templates are given, the migration bundle is generated first
    so generation errors surface before a plan is returned, and every step
    payload is checked against it.

    Raises:
        NoMigrationPair: migrateTo without deleteFrom on the same component
    """
    bundle: Optional[IacBundle] = None
    if kb is not None and templates is not None:
        bundle = generate_migration_bundle(topology, kb, templates)
    b = _PlanBuilder()
    _migration_steps(b, topology)
    plan = b.build("migrate")
    if bundle is not None:
        _check_payloads(plan, [bundle])
    logger.info(f"Migration plan: {len(plan.steps)} steps, {len(plan.edges)} edges")
    return plan


# =============================================================================
# Continuous delivery
# =============================================================================

def _check_delta(old: Topology, new: Topology):
    for old_nodes, new_nodes in ((old.components, new.components), (old.platforms, new.platforms)):
        for node_id, node in sorted(old_nodes.items()):
            if node_id not in new_nodes:
                raise UnsupportedDelta(node_id, "node removed; express removals with deleteFrom")
            if new_nodes[node_id] != node:
                raise UnsupportedDelta(node_id, "attributes changed in place")
    new_rels = set(new.relationships)
    for rel in old.relationships:
        if rel not in new_rels:
            raise UnsupportedDelta(rel.source, f"relationship {rel.id} removed")


def plan_delta(old: Topology, new: Topology, kb: Optional[KnowledgeBase] = None,
               templates: Optional[TemplateLibrary] = None) -> Plan:
    """
    Plan for the nodes and edges `new` adds to `old`

    Steps of pre-existing nodes that border the added steps are kept as
    satisfied markers so ordering into running services stays visible.
    With kb and templates, the bundles are generated and every step that
    will run is checked to have its payload in them.

    Raises:
        UnsupportedDelta: a node was removed or changed in place, or an
                          existing component was re-hosted without migrateTo
        PlanningError: a step payload is missing from the generated bundles
    """
    _check_delta(old, new)
    old_ids = set(old.components) | set(old.platforms)
    added = (set(new.components) | set(new.platforms)) - old_ids
    old_rels = set(old.relationships)
    added_rels = [rel for rel in new.relationships if rel not in old_rels]

    for rel in added_rels:
        if rel.kind == RelationshipKind.HOSTED_ON and rel.source not in added:
            raise UnsupportedDelta(rel.source, "re-hosting an existing component needs deleteFrom/migrateTo")

    bundles: List[IacBundle] = []
    if kb is not None and templates is not None:
        bundles.append(generate_bundle(new, kb, templates))

    full_builder = _PlanBuilder()
    _deploy_steps(full_builder, new)
    full = full_builder.build("deploy")
    graph = full.graph()

    included = {s.id for s in full.steps if s.subject in added}
    markers = set()
    for sid in included:
        markers |= (set(graph.predecessors(sid)) | set(graph.successors(sid))) - included

    b = _PlanBuilder()
    for s in full.steps:
        if s.id in included:
            b.put(s)
        elif s.id in markers:
            b.put(replace(s, satisfied=True))
    for before, after in full.edges:
        if (before in included or after in included) and before in b.steps and after in b.steps:
            b.edge(before, after)

    migration_rels = {rel.triple for rel in added_rels
                      if rel.kind in (RelationshipKind.MIGRATE_TO, RelationshipKind.DELETE_FROM)}
    if migration_rels:
        if kb is not None and templates is not None:
            bundles.append(generate_migration_bundle(new, kb, templates))
        _migration_steps(b, new, only=migration_rels)

    plan = b.build("delta")
    if bundles:
        _check_payloads(plan, bundles)
    logger.info(f"Delta plan: {len(plan.steps)} steps ({len(markers)} satisfied markers)")
    return plan
