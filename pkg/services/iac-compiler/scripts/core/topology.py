"""
Topology Model

In-memory topology graph used by every later stage:

Nodes:
- ComponentNode: {id, kind (web|database|dataanalytics), attributes, source_ref}
- PlatformNode: {id, provider, os_type, os_version, image/flavor/network/..., instance_count, address}

Edges:
- HOSTED_ON (Component → Platform): placement
- CONNECTS_TO (Component → Component): start ordering, target first
- DELETE_FROM (Component → Platform): removal
- MIGRATE_TO (Component → Platform): relocation, with migration type

A Topology is immutable once built.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Set, Tuple

from .errors import AmbiguousHosting, TopologyError


# =============================================================================
# Enumerations
# =============================================================================

class ComponentKind(str, Enum):
    """Application component node types"""
    WEB = "web"
    DATABASE = "database"
    DATA_ANALYTICS = "dataanalytics"


class Provider(str, Enum):
    """Platforms a component can be hosted on"""
    OPENSTACK = "openstack"
    AMAZON = "amazon"
    AZURE = "azure"
    PREDEPLOYED = "predeployed"


class OsType(str, Enum):
    UBUNTU = "ubuntu"
    REDHAT = "redhat"
    WINDOWS = "windows"


class RelationshipKind(str, Enum):
    HOSTED_ON = "hostedOn"
    CONNECTS_TO = "connectsTo"
    DELETE_FROM = "deleteFrom"
    MIGRATE_TO = "migrateTo"


class MigrationType(str, Enum):
    STATELESS = "stateless"
    STATEFUL = "stateful"


# Relationship kinds whose target must be a platform
PLATFORM_TARGETED = (RelationshipKind.HOSTED_ON, RelationshipKind.DELETE_FROM, RelationshipKind.MIGRATE_TO)


# =============================================================================
# Nodes and edges
# =============================================================================

@dataclass(frozen=True)
class ComponentNode:
    """One application building block"""
    id: str
    kind: ComponentKind
    attributes: Dict[str, str] = field(default_factory=dict)
    source_ref: Optional[str] = None

    def attr(self, name: str) -> Optional[str]:
        return self.attributes.get(name)

    @property
    def engine(self) -> Optional[str]:
        """Engine attribute that selects this component's template"""
        if self.kind == ComponentKind.WEB:
            return self.attr("webengine")
        if self.kind == ComponentKind.DATABASE:
            return self.attr("dbengine")
        engines = self.process_engines
        return engines[0] if engines else None

    @property
    def process_engines(self) -> List[str]:
        raw = self.attr("process_engine") or ""
        return [e.strip() for e in raw.split(",") if e.strip()]


@dataclass(frozen=True)
class PlatformNode:
    """A cloud platform or a pre-deployed machine"""
    id: str
    provider: Provider
    os_type: OsType
    os_version: str
    image_name: Optional[str] = None
    flavor: Optional[str] = None
    network: Optional[str] = None
    security_group: Optional[str] = None
    key_name: Optional[str] = None
    instance_count: int = 1
    address: Optional[str] = None
    attributes: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.instance_count < 1:
            raise TopologyError(f"platform '{self.id}': instance_count must be >= 1")
        if self.provider == Provider.PREDEPLOYED and not self.address:
            raise TopologyError(f"platform '{self.id}': predeployed platforms need an address")
        if self.provider != Provider.PREDEPLOYED and self.address:
            raise TopologyError(f"platform '{self.id}': only predeployed platforms take an address")

    @property
    def os_key(self) -> Tuple[str, str]:
        return (self.os_type.value, self.os_version)

    @property
    def is_predeployed(self) -> bool:
        return self.provider == Provider.PREDEPLOYED

    def host_names(self) -> List[str]:
        """Inventory host names; pre-deployed machines use their address"""
        if self.is_predeployed:
            return [self.address]
        return [f"{self.id}-{i}" for i in range(self.instance_count)]


@dataclass(frozen=True)
class Relationship:
    kind: RelationshipKind
    source: str
    target: str
    migration_type: Optional[MigrationType] = None

    def __post_init__(self):
        if self.kind == RelationshipKind.MIGRATE_TO and self.migration_type is None:
            raise TopologyError(f"{self.source} migrateTo {self.target}: migration type is required")
        if self.kind != RelationshipKind.MIGRATE_TO and self.migration_type is not None:
            raise TopologyError(f"{self.source} {self.kind.value} {self.target}: migration type only applies to migrateTo")

    @property
    def id(self) -> str:
        return f"{self.source}/{self.kind.value}/{self.target}"

    @property
    def triple(self) -> Tuple[RelationshipKind, str, str]:
        return (self.kind, self.source, self.target)


# =============================================================================
# Topology
# =============================================================================

@dataclass(frozen=True)
class Topology:
    """Declarative model: component nodes, platform nodes, typed relationships"""
    components: Dict[str, ComponentNode] = field(default_factory=dict)
    platforms: Dict[str, PlatformNode] = field(default_factory=dict)
    relationships: Tuple[Relationship, ...] = ()

    def __post_init__(self):
        shared = set(self.components) & set(self.platforms)
        if shared:
            raise TopologyError(f"ids used by both a component and a platform: {', '.join(sorted(shared))}")

        seen: Set[Tuple[RelationshipKind, str, str]] = set()
        for rel in self.relationships:
            for endpoint in (rel.source, rel.target):
                if not self.has_node(endpoint):
                    raise TopologyError(f"relationship {rel.id} refers to unknown node '{endpoint}'")
            if rel.triple in seen:
                raise TopologyError(f"duplicate relationship {rel.id}")
            seen.add(rel.triple)

    @classmethod
    def build(cls, components: List[ComponentNode], platforms: List[PlatformNode],
              relationships: List[Relationship]) -> "Topology":
        """Build a Topology from node lists, rejecting duplicate ids"""
        comp_map: Dict[str, ComponentNode] = {}
        for comp in components:
            if comp.id in comp_map:
                raise TopologyError(f"duplicate component id '{comp.id}'")
            comp_map[comp.id] = comp
        plat_map: Dict[str, PlatformNode] = {}
        for plat in platforms:
            if plat.id in plat_map:
                raise TopologyError(f"duplicate platform id '{plat.id}'")
            plat_map[plat.id] = plat
        return cls(components=comp_map, platforms=plat_map, relationships=tuple(relationships))

    # -------------------------------------------------------------------------
    # Accessors
    # -------------------------------------------------------------------------

    def has_node(self, node_id: str) -> bool:
        return node_id in self.components or node_id in self.platforms

    def is_empty(self) -> bool:
        return not self.components and not self.platforms and not self.relationships

    def component(self, component_id: str) -> ComponentNode:
        try:
            return self.components[component_id]
        except KeyError:
            raise TopologyError(f"unknown component '{component_id}'") from None

    def platform(self, platform_id: str) -> PlatformNode:
        try:
            return self.platforms[platform_id]
        except KeyError:
            raise TopologyError(f"unknown platform '{platform_id}'") from None

    def relationships_of(self, kind: RelationshipKind) -> Iterator[Relationship]:
        return (rel for rel in self.relationships if rel.kind == kind)

    def outgoing(self, node_id: str, kind: RelationshipKind) -> List[Relationship]:
        return [rel for rel in self.relationships if rel.kind == kind and rel.source == node_id]

    def incoming(self, node_id: str, kind: RelationshipKind) -> List[Relationship]:
        return [rel for rel in self.relationships if rel.kind == kind and rel.target == node_id]

    def hosting_platform(self, component_id: str) -> Optional[PlatformNode]:
        """
        Platform the component is hosted on

        Returns:
            The target of the component's single hostedOn edge, or None

        Raises:
            AmbiguousHosting: more than one hostedOn edge leaves the component
        """
        self.component(component_id)
        edges = self.outgoing(component_id, RelationshipKind.HOSTED_ON)
        if not edges:
            return None
        if len(edges) > 1:
            raise AmbiguousHosting(component_id, [e.target for e in edges])
        return self.platforms.get(edges[0].target)

    def hosts_anything(self, platform_id: str) -> bool:
        return any(rel.target == platform_id for rel in self.relationships_of(RelationshipKind.HOSTED_ON))

    def start_dependencies(self, component_id: str) -> Set[str]:
        """Components that must be started before this one (connectsTo targets)"""
        self.component(component_id)
        return {rel.target for rel in self.outgoing(component_id, RelationshipKind.CONNECTS_TO)}

    def hosted_pairs(self) -> List[Tuple[ComponentNode, PlatformNode]]:
        """(component, platform) for every well-typed hostedOn edge, sorted by component id"""
        pairs = []
        for rel in self.relationships_of(RelationshipKind.HOSTED_ON):
            if rel.source in self.components and rel.target in self.platforms:
                pairs.append((self.components[rel.source], self.platforms[rel.target]))
        return sorted(pairs, key=lambda pair: (pair[0].id, pair[1].id))

    def migration_source(self, component_id: str) -> Optional[PlatformNode]:
        """Target of the component's deleteFrom edge, if any"""
        edges = self.outgoing(component_id, RelationshipKind.DELETE_FROM)
        return self.platforms.get(edges[0].target) if edges else None

    def migration_target(self, component_id: str) -> Optional[Relationship]:
        edges = self.outgoing(component_id, RelationshipKind.MIGRATE_TO)
        return edges[0] if edges else None

    def after_migration(self) -> "Topology":
        """
        The topology once every deleteFrom/migrateTo has been carried out

        Migrating components are re-hosted on their migrateTo target, components
        that are only deleted disappear together with their connectsTo edges,
        and platforms left without any relationship are dropped.
        """
        moved = {rel.source: rel.target for rel in self.relationships_of(RelationshipKind.MIGRATE_TO)}
        removed_from = {(rel.source, rel.target) for rel in self.relationships_of(RelationshipKind.DELETE_FROM)}
        gone = {comp for comp, _ in removed_from if comp not in moved}

        relationships: List[Relationship] = []
        for rel in self.relationships:
            if rel.kind in (RelationshipKind.DELETE_FROM, RelationshipKind.MIGRATE_TO):
                continue
            if rel.source in gone or rel.target in gone:
                continue
            if rel.kind == RelationshipKind.HOSTED_ON and (rel.source, rel.target) in removed_from:
                continue
            relationships.append(rel)
        for comp_id in sorted(moved):
            rel = Relationship(RelationshipKind.HOSTED_ON, comp_id, moved[comp_id])
            if rel not in relationships:
                relationships.append(rel)

        referenced = {rel.target for rel in relationships}
        dropped = {target for _, target in removed_from} | set(moved.values())
        platforms = [plat for plat_id, plat in self.platforms.items()
                     if plat_id in referenced or plat_id not in dropped]
        components = [comp for comp_id, comp in self.components.items() if comp_id not in gone]
        return Topology.build(components, platforms, relationships)
