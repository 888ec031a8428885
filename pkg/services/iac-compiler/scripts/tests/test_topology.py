#!/usr/bin/env python3
"""
Tests for the in-memory topology model
"""

import pytest

from core.errors import AmbiguousHosting, TopologyError
from core.topology import (ComponentKind, ComponentNode, MigrationType, OsType,
                           PlatformNode, Provider, Relationship,
                           RelationshipKind, Topology)


def _web(cid="web"):
    return ComponentNode(cid, ComponentKind.WEB, {"webengine": "apache", "language": "php"})


def _vm(pid="vm", provider=Provider.AMAZON, **kwargs):
    return PlatformNode(pid, provider, OsType.UBUNTU, "16.04", **kwargs)


def test_duplicate_ids_rejected():
    """Component and platform ids share one namespace"""
    with pytest.raises(TopologyError):
        Topology.build([_web("x")], [_vm("x")], [])
    with pytest.raises(TopologyError):
        Topology.build([_web("a"), _web("a")], [], [])


def test_relationship_endpoints_must_exist():
    with pytest.raises(TopologyError, match="unknown node"):
        Topology.build([_web()], [], [Relationship(RelationshipKind.HOSTED_ON, "web", "nowhere")])


def test_duplicate_relationship_rejected():
    rel = Relationship(RelationshipKind.HOSTED_ON, "web", "vm")
    with pytest.raises(TopologyError, match="duplicate"):
        Topology.build([_web()], [_vm()], [rel, rel])


def test_relationship_ids_stay_distinct_with_dotted_node_ids():
    first = Relationship(RelationshipKind.CONNECTS_TO, "a.connectsTo", "b")
    second = Relationship(RelationshipKind.CONNECTS_TO, "a", "connectsTo.b")
    assert first.id == "a.connectsTo/connectsTo/b"
    assert first.id != second.id


def test_migration_type_only_on_migrate_to():
    with pytest.raises(TopologyError):
        Relationship(RelationshipKind.MIGRATE_TO, "web", "vm")
    with pytest.raises(TopologyError):
        Relationship(RelationshipKind.HOSTED_ON, "web", "vm", MigrationType.STATEFUL)


def test_platform_invariants():
    with pytest.raises(TopologyError):
        _vm(instance_count=0)
    with pytest.raises(TopologyError):
        _vm(provider=Provider.PREDEPLOYED)
    with pytest.raises(TopologyError):
        _vm(address="10.0.0.1")


def test_host_names():
    assert _vm("db", instance_count=3).host_names() == ["db-0", "db-1", "db-2"]
    assert _vm("rack", provider=Provider.PREDEPLOYED, address="10.0.0.9").host_names() == ["10.0.0.9"]


def test_hosting_platform_and_start_dependencies(lamp):
    assert lamp.hosting_platform("php_frontend").id == "openstack_vm"
    assert lamp.start_dependencies("php_frontend") == {"mysql_db"}
    assert lamp.start_dependencies("mysql_db") == set()
    with pytest.raises(TopologyError):
        lamp.hosting_platform("no_such_component")


def test_ambiguous_hosting():
    topology = Topology.build(
        [_web()], [_vm("a"), _vm("b")],
        [Relationship(RelationshipKind.HOSTED_ON, "web", "a"), Relationship(RelationshipKind.HOSTED_ON, "web", "b")],
    )
    with pytest.raises(AmbiguousHosting):
        topology.hosting_platform("web")


def test_engine_property():
    analytics = ComponentNode("job", ComponentKind.DATA_ANALYTICS, {"process_engine": "spark, scikit-learn"})
    assert analytics.process_engines == ["spark", "scikit-learn"]
    assert analytics.engine == "spark"
    assert _web().engine == "apache"


def test_after_migration_rehosts_component(model):
    before = model("lamp_db_migration")
    after = before.after_migration()

    assert after.hosting_platform("mysql_db").id == "new_db_vm"
    assert "old_db_vm" not in after.platforms
    assert not list(after.relationships_of(RelationshipKind.DELETE_FROM))
    assert not list(after.relationships_of(RelationshipKind.MIGRATE_TO))
    assert after.start_dependencies("php_frontend") == {"mysql_db"}


def test_after_migration_drops_deleted_components():
    topology = Topology.build(
        [_web("web"), _web("api")], [_vm("a"), _vm("b")],
        [
            Relationship(RelationshipKind.HOSTED_ON, "web", "a"),
            Relationship(RelationshipKind.HOSTED_ON, "api", "b"),
            Relationship(RelationshipKind.CONNECTS_TO, "web", "api"),
            Relationship(RelationshipKind.DELETE_FROM, "api", "b"),
        ],
    )
    after = topology.after_migration()
    assert set(after.components) == {"web"}
    assert set(after.platforms) == {"a"}
    assert not list(after.relationships_of(RelationshipKind.CONNECTS_TO))
