#!/usr/bin/env python3
"""
Tests for IaC bundle generation
"""

import json
import os
import shutil
import stat
from dataclasses import replace

import pytest
import yaml

from core.errors import (BundleError, MissingAttribute, NoTemplate,
                         TemplateLibraryError, UnboundPlaceholder)
from core.generator import (generate_bundle, generate_config,
                            generate_migration_bundle, generate_provision,
                            kb_keys, render_playbook)
from core.knowledge_base import resolve
from core.parser import parse, serialize
from core.templates import TemplateLibrary

from .conftest import TEMPLATES_DIR


def _tasks(bundle, component_id):
    return bundle.playbooks[component_id][0]["tasks"]


def _with_attrs(topology, component_id, **changes):
    """Copy of a topology with one component's attributes changed (None removes)"""
    comp = topology.component(component_id)
    attrs = dict(comp.attributes)
    for key, value in changes.items():
        if value is None:
            attrs.pop(key, None)
        else:
            attrs[key] = value
    components = dict(topology.components)
    components[component_id] = replace(comp, attributes=attrs)
    return replace(topology, components=components)


def test_lamp_bundle_shape(lamp, kb, templates):
    bundle = generate_bundle(lamp, kb, templates)

    assert sorted(bundle.playbooks) == ["mysql_db", "php_frontend"]
    assert sorted(bundle.provision_scripts) == ["ec2_vm", "openstack_vm"]
    assert bundle.inventory == {
        "ec2_vm": ["ec2_vm-0"],
        "mysql_db": ["ec2_vm-0"],
        "openstack_vm": ["openstack_vm-0"],
        "php_frontend": ["openstack_vm-0"],
    }
    assert bundle.secrets["mysql_db"] == ["db_root_pass"]
    assert bundle.templates_used["mysql_db"] == {"template": "database/mysql", "reconstruction": True}


def test_mysql_playbook(lamp, kb, templates):
    play = generate_bundle(lamp, kb, templates).playbooks["mysql_db"][0]

    assert play["hosts"] == "mysql_db"
    assert play["name"] == "Deploy MySQL database mysql_db"
    assert play["vars"]["mysql_user"] == "app"
    assert play["vars"]["mysql_root_pass"] == "secret"
    assert play["vars"]["mysql_port"] == "3306"

    installs = [t for t in play["tasks"] if t["name"].startswith("Install ")]
    assert installs == [
        {"name": "Install mysql-server (apt)", "apt": {"name": "mysql-server", "state": "present"}, "tags": ["configure"]},
        {"name": "Install mysql-client (apt)", "apt": {"name": "mysql-client", "state": "present"}, "tags": ["configure"]},
    ]
    assert play["tasks"][:2] == installs

    start_tasks = [t for t in play["tasks"] if t["tags"] == ["start"]]
    assert [t["service"]["name"] for t in start_tasks] == ["mysql"]
    assert play["tasks"][-1] is start_tasks[-1]
    assert play["handlers"][0]["name"] == "restart mysql"


def test_rendered_assets(lamp, kb, templates):
    bundle = generate_bundle(lamp, kb, templates)
    cnf = bundle.files["files/mysql_db/camp.cnf"].decode("utf-8")
    assert "port = 3306" in cnf
    assert "{{" not in cnf

    copy = next(t for t in _tasks(bundle, "mysql_db") if "copy" in t)
    assert copy["copy"]["src"] == "../files/mysql_db/camp.cnf"
    assert copy["copy"]["dest"] == "/etc/mysql/conf.d/camp.cnf"


def test_source_checkout(lamp, kb, templates):
    tasks = _tasks(generate_bundle(lamp, kb, templates), "php_frontend")
    git = next(t for t in tasks if "git" in t)
    assert git["git"]["repo"] == "https://github.com/camp-examples/php-guestbook.git"
    assert git["git"]["dest"] == "/opt/php_frontend"
    assert git["tags"] == ["configure"]


def test_php_packages_follow_os(lamp, kb, templates):
    """php_frontend sits on ubuntu 16.04 and gets the php7 package set"""
    tasks = _tasks(generate_bundle(lamp, kb, templates), "php_frontend")
    installed = [t["apt"]["name"] for t in tasks if "apt" in t]
    assert installed == ["apache2", "php", "libapache2-mod-php", "php-mysql"]


def test_playbook_yaml_round_trips(lamp, kb, templates):
    bundle = generate_bundle(lamp, kb, templates)
    for comp_id, playbook in bundle.playbooks.items():
        text = render_playbook(playbook)
        assert text.startswith("---\n")
        assert yaml.safe_load(text) == playbook, comp_id


def test_missing_port_is_unbound(lamp, kb, templates):
    broken = _with_attrs(lamp, "php_frontend", port=None)
    with pytest.raises(BundleError) as excinfo:
        generate_bundle(broken, kb, templates)
    failures = excinfo.value.failures
    assert [node for node, _ in failures] == ["php_frontend"]
    assert isinstance(failures[0][1], UnboundPlaceholder)
    assert failures[0][1].name == "port"


def test_generate_config_raises_directly(lamp, kb, templates):
    comp = lamp.component("php_frontend")
    comp = replace(comp, attributes={k: v for k, v in comp.attributes.items() if k != "port"})
    resolution = resolve(kb, "php-web", "apache", "ubuntu", "16.04")
    with pytest.raises(UnboundPlaceholder) as excinfo:
        generate_config(comp, ("ubuntu", "16.04"), resolution, templates)
    assert excinfo.value.name == "port"


def test_failures_are_aggregated(lamp, kb, templates):
    broken = _with_attrs(_with_attrs(lamp, "php_frontend", webengine="nginx"), "mysql_db", dbengine="oracle")
    with pytest.raises(BundleError) as excinfo:
        generate_bundle(broken, kb, templates)
    assert [(node, type(err)) for node, err in excinfo.value.failures] == [
        ("mysql_db", NoTemplate),
        ("php_frontend", NoTemplate),
    ]


def test_generation_is_deterministic(lamp, kb, templates):
    first = generate_bundle(lamp, kb, templates).to_file_tree()
    for workers in (1, 2, 8):
        assert generate_bundle(lamp, kb, templates, workers=workers).to_file_tree() == first


def test_changes_stay_local(lamp, kb, templates):
    """Editing one component's attributes only touches that component's files"""
    before = generate_bundle(lamp, kb, templates).to_file_tree()
    after = generate_bundle(_with_attrs(lamp, "mysql_db", db_user="reporting", port="3307"),
                            kb, templates).to_file_tree()
    changed = {path for path in before if before[path] != after.get(path)}
    assert changed == {"playbooks/mysql_db.yml", "files/mysql_db/camp.cnf"}


def test_kb_keys():
    topology = parse(
        "component w { kind = web; webengine = apache; language = php; }\n"
        "component d { kind = database; dbengine = mysql; }\n"
        "component j { kind = dataanalytics; process_engine = \"scikit-learn, spark\"; language = python; }\n"
        "component o { kind = web; webengine = apache; app_type = wordpress; }\n"
    )
    assert kb_keys(topology.component("w")) == [("php-web", "apache")]
    assert kb_keys(topology.component("d")) == [("mysql", "mysql")]
    assert kb_keys(topology.component("j")) == [("scikit-learn", "python"), ("spark", "python")]
    assert kb_keys(topology.component("o")) == [("wordpress", "apache")]


def test_kb_keys_needs_language():
    topology = parse("component w { kind = web; webengine = apache; }\n")
    with pytest.raises(MissingAttribute):
        kb_keys(topology.component("w"))


# =============================================================================
# Provisioning
# =============================================================================

def test_provision_scripts(lamp, templates):
    openstack = generate_provision(lamp.platform("openstack_vm"), templates)
    assert openstack.startswith("#!/bin/sh\n")
    assert 'CLI="${CAMP_PROVIDER_CLI:-openstack}"' in openstack
    assert "--image ubuntu-16.04" in openstack
    assert "--flavor m1.small" in openstack
    assert "--network" not in openstack

    ec2 = generate_provision(lamp.platform("ec2_vm"), templates)
    assert 'CLI="${CAMP_PROVIDER_CLI:-aws}"' in ec2
    assert "--image-id ubuntu-14.04" in ec2
    assert "--instance-type t2.micro" in ec2


def test_provision_needs_image_on_openstack(templates):
    topology = parse("platform p { provider = openstack; os = ubuntu 16.04; }\n")
    with pytest.raises(MissingAttribute) as excinfo:
        generate_provision(topology.platform("p"), templates)
    assert excinfo.value.name == "image_name"


def test_no_provision_for_predeployed(templates):
    topology = parse("platform rack { provider = predeployed; os = ubuntu 16.04; address = 10.0.0.5; }\n")
    assert generate_provision(topology.platform("rack"), templates) is None


def test_replicated_analytics(model, kb, templates):
    bundle = generate_bundle(model("analytics"), kb, templates)
    assert bundle.inventory["churn_model"] == ["analytics_vm-0", "analytics_vm-1", "analytics_vm-2"]
    assert "for name in analytics_vm-0 analytics_vm-1 analytics_vm-2; do" in bundle.provision_scripts["analytics_vm"]

    tasks = _tasks(bundle, "churn_model")
    assert tasks[4] == {"name": "Install scikit-learn (pip)",
                        "pip": {"name": "scikit-learn", "state": "present"}, "tags": ["configure"]}
    copy = next(t for t in tasks if "copy" in t)
    assert copy["copy"]["dest"] == "/opt/churn/job.py"
    assert bundle.files["files/churn_model/job.py"].startswith(b'"""Placeholder analytics job')


# =============================================================================
# Writing
# =============================================================================

def test_write_is_reproducible(lamp, kb, templates, tmp_path):
    bundle = generate_bundle(lamp, kb, templates)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    written = bundle.write(out_a)
    generate_bundle(lamp, kb, templates).write(out_b)

    assert written == sorted(written)
    for rel_path in written:
        assert (out_a / rel_path).read_bytes() == (out_b / rel_path).read_bytes()

    script = out_a / "provision" / "openstack_vm.sh"
    assert os.stat(script).st_mode & stat.S_IXUSR

    inventory = (out_a / "inventory").read_text(encoding="utf-8")
    assert inventory.startswith("[ec2_vm]\nec2_vm-0\n\n[mysql_db]\n")

    manifest = json.loads((out_a / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["secrets"] == {"mysql_db": ["db_root_pass"]}
    assert manifest["playbooks"]["php_frontend"] == "playbooks/php_frontend.yml"


def test_write_replaces_existing_output(lamp, kb, templates, tmp_path):
    out = tmp_path / "bundle"
    out.mkdir()
    (out / "stale.txt").write_text("left over", encoding="utf-8")
    generate_bundle(lamp, kb, templates).write(out)
    assert not (out / "stale.txt").exists()
    assert (out / "playbooks" / "mysql_db.yml").is_file()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bundle"]


# =============================================================================
# Migration bundles
# =============================================================================

def test_stateful_migration_bundle(model, kb, templates):
    bundle = generate_migration_bundle(model("lamp_db_migration"), kb, templates)

    assert sorted(bundle.playbooks) == ["mysql_db", "php_frontend"]
    assert sorted(bundle.provision_scripts) == ["new_db_vm", "web_vm"]
    assert bundle.inventory["mysql_db"] == ["new_db_vm-0"]
    assert sorted(bundle.teardown_scripts) == ["old_db_vm"]
    assert "server delete --wait" in bundle.teardown_scripts["old_db_vm"]
    assert sorted(bundle.hook_scripts) == [
        "hooks/mysql_db.checkpoint.sh",
        "hooks/mysql_db.lb_attach.sh",
        "hooks/mysql_db.lb_detach.sh",
        "hooks/mysql_db.redirect.sh",
        "hooks/mysql_db.restore.sh",
    ]
    assert "checkpoint mysql state on old_db_vm-0" in bundle.hook_scripts["hooks/mysql_db.checkpoint.sh"]
    assert "restore mysql checkpoint on new_db_vm-0" in bundle.hook_scripts["hooks/mysql_db.restore.sh"]


def test_stateless_migration_from_predeployed(model, kb, templates):
    bundle = generate_migration_bundle(model("web_migration"), kb, templates)

    assert sorted(bundle.provision_scripts) == ["azure_vm"]
    assert "Canonical:UbuntuServer:16.04-LTS:latest" in bundle.provision_scripts["azure_vm"]
    assert bundle.inventory["php_frontend"] == ["azure_vm-0", "azure_vm-1"]
    assert bundle.hook_scripts == {}
    teardown = bundle.teardown_scripts["rack_server"]
    assert "ssh 10.0.0.12 sudo systemctl stop apache2" in teardown
    assert "$CLI" not in teardown


_SHARED_HOST = (
    "component db { kind = database; dbengine = mysql; db_user = app; db_root_pass = secret; }\n"
    "component web { kind = web; webengine = apache; language = php; port = 80; }\n"
    "platform shared { provider = amazon; os = ubuntu 16.04; instance_count = 2; }\n"
    "platform fresh { provider = amazon; os = ubuntu 16.04; }\n"
    "db hostedOn shared;\nweb hostedOn shared;\n"
    "db deleteFrom shared;\n"
    "db migrateTo fresh with migration=stateless;\n"
)


def test_teardown_keeps_a_shared_cloud_host(kb, templates):
    teardown = generate_migration_bundle(parse(_SHARED_HOST), kb, templates).teardown_scripts["shared"]
    assert "terminate-instances" not in teardown
    assert "$CLI" not in teardown
    assert '[ "$ONLY" = db ]' in teardown
    assert "ssh shared-0 sudo systemctl stop mysql" in teardown
    assert "ssh shared-1 sudo systemctl stop mysql" in teardown
    assert "apache2" not in teardown


def test_teardown_deletes_an_emptied_cloud_host(kb, templates):
    emptied = _SHARED_HOST.replace("web hostedOn shared;", "web hostedOn fresh;")
    teardown = generate_migration_bundle(parse(emptied), kb, templates).teardown_scripts["shared"]
    assert '"$CLI" ec2 terminate-instances --instance-ids "$name"' in teardown
    assert "systemctl" not in teardown


# =============================================================================
# Template library
# =============================================================================

def test_library_contents(templates):
    assert sorted(templates.templates) == [
        ("dataanalytics", "scikit-learn"), ("database", "mysql"), ("web", "apache"),
    ]
    mysql = templates.get("database", "mysql")
    assert mysql.secret_attributes() == ["db_root_pass"]
    with pytest.raises(NoTemplate):
        templates.get("web", "nginx")


@pytest.fixture
def library_copy(tmp_path):
    target = tmp_path / "templates"
    shutil.copytree(TEMPLATES_DIR, target)
    return target


def test_undocumented_placeholder_rejected(library_copy):
    path = library_copy / "web" / "apache" / "template.yml"
    path.write_text(path.read_text(encoding="utf-8").replace("Listen {{ http_port }}", "Listen {{ listen_port }}"),
                    encoding="utf-8")
    with pytest.raises(TemplateLibraryError, match="listen_port"):
        TemplateLibrary.load(library_copy)


def test_asset_without_destination_rejected(library_copy):
    (library_copy / "database" / "mysql" / "files" / "extra.cnf").write_text("[client]\n", encoding="utf-8")
    with pytest.raises(TemplateLibraryError, match="extra.cnf"):
        TemplateLibrary.load(library_copy)


def test_unknown_placeholder_source_rejected(library_copy):
    path = library_copy / "web" / "apache" / "manifest.toml"
    path.write_text(path.read_text(encoding="utf-8") + '\n[placeholders.build_id]\nsource = "environment"\n',
                    encoding="utf-8")
    with pytest.raises(TemplateLibraryError, match="build_id"):
        TemplateLibrary.load(library_copy)


def test_serialized_model_generates_same_bundle(lamp, kb, templates):
    again = parse(serialize(lamp))
    assert generate_bundle(again, kb, templates).to_file_tree() == generate_bundle(lamp, kb, templates).to_file_tree()
