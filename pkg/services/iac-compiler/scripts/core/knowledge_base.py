#!/usr/bin/env python3
"""
Software Dependency Knowledge Base

Four tab-separated tables map an application type to the packages it needs
on a given operating system:

    os_pkg_mgr     (id, os_type, os_version, pkg_mgr)
    swdependency   (id, app_name)
    packages       (id, app_id, sw_id, apptype, pkg_name, pkg_mgr, install_order)
    os_dependency  (os_id, app_sw_id)

resolve() is the relational join

    packages p JOIN swdependency d ON p.app_id = d.id
    WHERE d.app_name = ? AND p.apptype = ?
      AND p.sw_id IN (SELECT app_sw_id FROM os_dependency
                      WHERE os_id IN (SELECT id FROM os_pkg_mgr
                                      WHERE os_type = ? AND os_version = ?))

ordered by install_order and grouped by package manager.
"""

import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from . import config
from .errors import (EmptyResolution, IntegrityError, KnowledgeBaseError,
                     MissingTable, TableParseError, UnknownApplicationType,
                     UnsupportedOs)

logger = logging.getLogger(__name__)


# =============================================================================
# Rows
# =============================================================================

@dataclass(frozen=True)
class OsPkgMgrRow:
    id: int
    os_type: str
    os_version: str
    pkg_mgr: str


@dataclass(frozen=True)
class SwDependencyRow:
    id: int
    app_name: str


@dataclass(frozen=True)
class PackageRow:
    id: int
    app_id: int
    sw_id: int
    apptype: str
    pkg_name: str
    pkg_mgr: str
    install_order: int


@dataclass(frozen=True)
class OsDependencyRow:
    os_id: int
    app_sw_id: int


_ROW_TYPES = {
    "os_pkg_mgr": OsPkgMgrRow,
    "swdependency": SwDependencyRow,
    "packages": PackageRow,
    "os_dependency": OsDependencyRow,
}

_INT_COLUMNS = {"id", "app_id", "sw_id", "install_order", "os_id", "app_sw_id"}


@dataclass(frozen=True)
class PackageResolution:
    """Ordered (pkg_mgr, pkg_name) install steps for one component on one OS"""
    steps: Tuple[Tuple[str, str], ...] = ()

    def groups(self) -> List[Tuple[str, List[str]]]:
        """Consecutive steps merged per package manager, order preserved"""
        out: List[Tuple[str, List[str]]] = []
        for mgr, name in self.steps:
            if out and out[-1][0] == mgr:
                out[-1][1].append(name)
            else:
                out.append((mgr, [name]))
        return out

    def merged(self, other: "PackageResolution") -> "PackageResolution":
        """Concatenate, dropping steps already present"""
        seen = set(self.steps)
        extra = tuple(step for step in other.steps if step not in seen)
        return PackageResolution(self.steps + extra)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class KnowledgeBase:
    os_pkg_mgr: Tuple[OsPkgMgrRow, ...]
    swdependency: Tuple[SwDependencyRow, ...]
    packages: Tuple[PackageRow, ...]
    os_dependency: Tuple[OsDependencyRow, ...]
    source: str = ""
    _apps: Dict[str, SwDependencyRow] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self._apps.update({row.app_name: row for row in self.swdependency})

    def app(self, app_name: str) -> SwDependencyRow:
        try:
            return self._apps[app_name]
        except KeyError:
            raise UnknownApplicationType(app_name) from None

    def app_names(self) -> List[str]:
        return sorted(self._apps)

    def os_keys(self) -> List[Tuple[str, str]]:
        """Distinct (os_type, os_version) pairs, sorted"""
        return sorted({(row.os_type, row.os_version) for row in self.os_pkg_mgr})

    def resolve(self, app_name: str, apptype: str, os_type: str, os_version: str) -> PackageResolution:
        return resolve(self, app_name, apptype, os_type, os_version)


# =============================================================================
# Loading
# =============================================================================

def _read_table(path: Path, table: str) -> list:
    columns = config.KB_TABLE_COLUMNS[table]
    row_type = _ROW_TYPES[table]
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise TableParseError(str(path), 1, "empty file, expected a header row") from None
        if tuple(header) != columns:
            raise TableParseError(str(path), 1, f"header must be {' '.join(columns)}, got {' '.join(header)}")
        for record in reader:
            if not record or record == [""]:
                continue
            if len(record) != len(columns):
                raise TableParseError(str(path), reader.line_num,
                                      f"expected {len(columns)} columns, got {len(record)}")
            values = {}
            for name, raw in zip(columns, record):
                if name in _INT_COLUMNS:
                    try:
                        values[name] = int(raw)
                    except ValueError:
                        raise TableParseError(str(path), reader.line_num,
                                              f"column {name} must be an integer, got '{raw}'") from None
                else:
                    values[name] = raw
            rows.append(row_type(**values))
    return rows


def _unique(rows, key, what: str):
    seen = set()
    for row in rows:
        k = key(row)
        if k in seen:
            raise IntegrityError(f"duplicate {what}: {k}")
        seen.add(k)


def _check_integrity(kb: KnowledgeBase):
    _unique(kb.os_pkg_mgr, lambda r: r.id, "os_pkg_mgr.id")
    _unique(kb.os_pkg_mgr, lambda r: (r.os_type, r.os_version, r.pkg_mgr), "os_pkg_mgr (os_type, os_version, pkg_mgr)")
    _unique(kb.swdependency, lambda r: r.id, "swdependency.id")
    _unique(kb.swdependency, lambda r: r.app_name, "swdependency.app_name")
    _unique(kb.packages, lambda r: r.id, "packages.id")
    _unique(kb.packages, lambda r: (r.app_id, r.sw_id, r.install_order), "packages (app_id, sw_id, install_order)")
    _unique(kb.os_dependency, lambda r: (r.os_id, r.app_sw_id), "os_dependency (os_id, app_sw_id)")

    app_ids = {r.id for r in kb.swdependency}
    os_ids = {r.id for r in kb.os_pkg_mgr}
    sw_ids = {r.sw_id for r in kb.packages}

    for row in kb.packages:
        if row.app_id not in app_ids:
            raise IntegrityError(f"packages.id={row.id}: app_id {row.app_id} has no swdependency row")
        if not row.pkg_name:
            raise IntegrityError(f"packages.id={row.id}: empty pkg_name")
    for row in kb.os_dependency:
        if row.os_id not in os_ids:
            raise IntegrityError(f"os_dependency: os_id {row.os_id} has no os_pkg_mgr row")
        if row.app_sw_id not in sw_ids:
            raise IntegrityError(f"os_dependency: app_sw_id {row.app_sw_id} matches no packages.sw_id")


def load(directory: Union[str, Path]) -> KnowledgeBase:
    """
    Load and integrity-check the four knowledge base tables

    Args:
        directory: Directory holding <table>.tsv for every table

    Returns:
        Immutable KnowledgeBase

    Raises:
        MissingTable, TableParseError, IntegrityError
    """
    directory = Path(directory)
    tables = {}
    for table in config.KB_TABLE_COLUMNS:
        path = directory / f"{table}{config.KB_FILE_SUFFIX}"
        if not path.is_file():
            raise MissingTable(table)
        tables[table] = tuple(_read_table(path, table))

    kb = KnowledgeBase(source=str(directory), **tables)
    _check_integrity(kb)
    logger.info(f"Knowledge base {directory}: {len(kb.swdependency)} apps, {len(kb.packages)} packages, "
                f"{len(kb.os_pkg_mgr)} os entries")
    return kb


# =============================================================================
# Queries
# =============================================================================

def _check_bootstrap(steps: List[Tuple[str, str]], app_name: str):
    position = {name: i for i, (_, name) in enumerate(steps)}
    for mgr, bootstrap in config.PKG_MGR_BOOTSTRAP.items():
        first_use = next((i for i, (m, _) in enumerate(steps) if m == mgr), None)
        if first_use is None:
            continue
        for pkg in bootstrap:
            if pkg in position and position[pkg] > first_use:
                raise IntegrityError(f"{app_name}: '{pkg}' must be installed before any {mgr} package")


def resolve(kb: KnowledgeBase, app_name: str, apptype: str, os_type: str, os_version: str) -> PackageResolution:
    """
    Expand an application type into its package closure for one OS

    Raises:
        UnknownApplicationType: app_name is not in swdependency
        UnsupportedOs: no os_pkg_mgr row for (os_type, os_version)
        EmptyResolution: the join selected nothing
    """
    app = kb.app(app_name)
    os_ids = {row.id for row in kb.os_pkg_mgr if row.os_type == os_type and row.os_version == os_version}
    if not os_ids:
        raise UnsupportedOs(os_type, os_version)
    sw_ids = {row.app_sw_id for row in kb.os_dependency if row.os_id in os_ids}

    selected = [row for row in kb.packages
                if row.app_id == app.id and row.apptype == apptype and row.sw_id in sw_ids]
    if not selected:
        raise EmptyResolution(app_name, apptype, os_type, os_version)
    selected.sort(key=lambda r: (r.install_order, r.sw_id, r.id))

    grouped: "OrderedDict[str, List[str]]" = OrderedDict()
    for row in selected:
        grouped.setdefault(row.pkg_mgr, []).append(row.pkg_name)
    steps = [(mgr, name) for mgr, names in grouped.items() for name in names]
    _check_bootstrap(steps, app_name)

    logger.debug(f"resolve({app_name}, {apptype}, {os_type} {os_version}) -> {len(steps)} package(s)")
    return PackageResolution(tuple(steps))


def os_variants(kb: KnowledgeBase, app_name: str,
                apptype: Optional[str] = None) -> Dict[Tuple[str, str], PackageResolution]:
    """
    Resolution of an application type on every OS the knowledge base supports it on

    Args:
        apptype: Qualifier to resolve with; may be omitted when the application
                 has packages under a single apptype only
    """
    app = kb.app(app_name)
    if apptype is None:
        apptypes = sorted({row.apptype for row in kb.packages if row.app_id == app.id})
        if len(apptypes) != 1:
            raise KnowledgeBaseError(f"{app_name} has apptypes {apptypes}; pass one explicitly")
        apptype = apptypes[0]

    variants: Dict[Tuple[str, str], PackageResolution] = {}
    for os_type, os_version in kb.os_keys():
        try:
            variants[(os_type, os_version)] = resolve(kb, app_name, apptype, os_type, os_version)
        except EmptyResolution:
            continue
    return variants
