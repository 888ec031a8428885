"""
Exception hierarchy for the IaC compiler

Every error raised on purpose derives from IacError so the CLI can map
families to exit codes.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple


class IacError(Exception):
    """Base class for all compiler errors"""


# =============================================================================
# Model parsing
# =============================================================================

@dataclass(frozen=True)
class SourceSpan:
    """Location of a token in a model file (1-based)"""
    file: str
    line: int
    column: int

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError(f"SourceSpan line/column must be >= 1, got {self.line}:{self.column}")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


class ModelParseError(IacError):
    """A model file could not be turned into a Topology"""

    def __init__(self, span: SourceSpan, message: str):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.message = message


class ModelSyntaxError(ModelParseError):
    """Grammar violation"""


class DuplicateId(ModelParseError):
    """Two declarations share a node id"""


class UnknownNodeRef(ModelParseError):
    """A relationship names an undeclared node"""


class UnknownKeyword(ModelParseError):
    """Unrecognized block type, relation verb or enumerated value"""


# =============================================================================
# Topology
# =============================================================================

class TopologyError(IacError):
    """A Topology violates a structural invariant"""


class AmbiguousHosting(TopologyError):
    def __init__(self, component_id: str, targets: List[str]):
        super().__init__(f"component '{component_id}' has {len(targets)} hostedOn edges: {', '.join(targets)}")
        self.component_id = component_id
        self.targets = targets


# =============================================================================
# Validation rules
# =============================================================================

class RuleParseError(IacError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


# =============================================================================
# Knowledge base
# =============================================================================

class KnowledgeBaseError(IacError):
    """Knowledge base loading or query failure"""


class MissingTable(KnowledgeBaseError):
    def __init__(self, table: str):
        super().__init__(f"missing knowledge base table: {table}")
        self.table = table


class IntegrityError(KnowledgeBaseError):
    """A foreign key dangles or a uniqueness constraint is broken"""


class TableParseError(KnowledgeBaseError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class UnknownApplicationType(KnowledgeBaseError):
    def __init__(self, app_name: str):
        super().__init__(f"unknown application type: {app_name}")
        self.app_name = app_name


class UnsupportedOs(KnowledgeBaseError):
    def __init__(self, os_type: str, os_version: str):
        super().__init__(f"no package manager registered for {os_type} {os_version}")
        self.os_type = os_type
        self.os_version = os_version


class EmptyResolution(KnowledgeBaseError):
    def __init__(self, app_name: str, apptype: str, os_type: str, os_version: str):
        super().__init__(
            f"knowledge base has no packages for {app_name} ({apptype}) on {os_type} {os_version}"
        )
        self.app_name = app_name
        self.apptype = apptype


# =============================================================================
# Generation
# =============================================================================

class GenerationError(IacError):
    """Template or bundle generation failure"""


class TemplateLibraryError(GenerationError):
    """Template directory is malformed or a placeholder is undocumented"""


class NoTemplate(GenerationError):
    def __init__(self, kind: str, engine: str):
        super().__init__(f"no template for {kind}/{engine}")
        self.kind = kind
        self.engine = engine


class UnboundPlaceholder(GenerationError):
    def __init__(self, name: str, placeholder: Optional[str] = None):
        detail = f" (placeholder '{placeholder}')" if placeholder and placeholder != name else ""
        super().__init__(f"missing attribute '{name}'{detail}")
        self.name = name
        self.placeholder = placeholder or name


class MissingAttribute(GenerationError):
    def __init__(self, name: str, subject: str = ""):
        where = f" on '{subject}'" if subject else ""
        super().__init__(f"required attribute '{name}' is absent{where}")
        self.name = name


class BundleError(GenerationError):
    """Aggregates per-node generation failures"""

    def __init__(self, failures: List[Tuple[str, IacError]]):
        lines = [f"{node}: {error}" for node, error in failures]
        details = "\n  ".join(lines)
        super().__init__(f"generation failed for {len(failures)} node(s):\n  {details}")
        self.failures = failures


# =============================================================================
# Planning and simulation
# =============================================================================

class PlanningError(IacError):
    """Plan construction failure"""


class NoMigrationPair(PlanningError):
    def __init__(self, component_id: str):
        super().__init__(f"component '{component_id}' has migrateTo without deleteFrom")
        self.component_id = component_id


class UnsupportedDelta(PlanningError):
    def __init__(self, node_id: str, reason: str):
        super().__init__(f"unsupported change to '{node_id}': {reason}")
        self.node_id = node_id


class CyclicPlan(PlanningError):
    def __init__(self, cycle: List[str]):
        super().__init__("plan contains a cycle: " + " -> ".join(cycle))
        self.cycle = cycle


class SimConfigError(IacError):
    """Simulator configuration is malformed"""
