#!/usr/bin/env python3
"""
IaC Generator

Turns a validated Topology into an IacBundle:

- one playbook per hosted component, filled from its template, its attributes
  and the knowledge base resolution for the hosting platform's OS
- one provisioning script per cloud platform
- an inventory with one group per component (and per platform)
- rendered config assets, a manifest flagging secrets

Migration bundles add teardown scripts for deleteFrom targets and hook
scripts for stateful migrations.
"""

import json
import logging
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from . import config
from .errors import BundleError, IacError, MissingAttribute, NoTemplate
from .knowledge_base import KnowledgeBase, PackageResolution, resolve
from .templates import TemplateLibrary
from .topology import (ComponentKind, ComponentNode, MigrationType,
                       PlatformNode, RelationshipKind, Topology)

logger = logging.getLogger(__name__)

INVENTORY_FILE = "inventory"
MANIFEST_FILE = "manifest.json"

# Playbook tags selecting the Configure and Start plan steps
CONFIGURE_TAG = "configure"
START_TAG = "start"


# =============================================================================
# Bundle paths
# =============================================================================

def playbook_path(component_id: str) -> str:
    return f"playbooks/{component_id}.yml"


def provision_path(platform_id: str) -> str:
    return f"provision/{platform_id}.sh"


def teardown_path(platform_id: str) -> str:
    return f"teardown/{platform_id}.sh"


def hook_path(component_id: str, hook: str) -> str:
    return f"hooks/{component_id}.{hook}.sh"


def asset_path(component_id: str, name: str) -> str:
    return f"files/{component_id}/{name}"


# =============================================================================
# Bundle
# =============================================================================

@dataclass
class IacBundle:
    """Generated documents, keyed by node id; rendered to a file tree on demand"""
    playbooks: Dict[str, list] = field(default_factory=dict)
    provision_scripts: Dict[str, str] = field(default_factory=dict)
    inventory: Dict[str, List[str]] = field(default_factory=dict)
    files: Dict[str, bytes] = field(default_factory=dict)
    secrets: Dict[str, List[str]] = field(default_factory=dict)
    teardown_scripts: Dict[str, str] = field(default_factory=dict)
    hook_scripts: Dict[str, str] = field(default_factory=dict)
    templates_used: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def render_inventory(self) -> str:
        sections = []
        for group in sorted(self.inventory):
            sections.append("\n".join([f"[{group}]"] + self.inventory[group]))
        return "\n\n".join(sections) + "\n" if sections else ""

    def manifest(self) -> Dict[str, Any]:
        return {
            "playbooks": {c: playbook_path(c) for c in sorted(self.playbooks)},
            "provision": {p: provision_path(p) for p in sorted(self.provision_scripts)},
            "teardown": {p: teardown_path(p) for p in sorted(self.teardown_scripts)},
            "hooks": sorted(self.hook_scripts),
            "inventory": INVENTORY_FILE,
            "files": sorted(self.files),
            "secrets": {node: sorted(names) for node, names in sorted(self.secrets.items()) if names},
            "templates": {c: self.templates_used[c] for c in sorted(self.templates_used)},
        }

    def to_file_tree(self) -> Dict[str, bytes]:
        """Relative path -> file bytes for everything in the bundle"""
        tree: Dict[str, bytes] = {}
        for comp_id, playbook in self.playbooks.items():
            tree[playbook_path(comp_id)] = render_playbook(playbook).encode("utf-8")
        for plat_id, script in self.provision_scripts.items():
            tree[provision_path(plat_id)] = script.encode("utf-8")
        for plat_id, script in self.teardown_scripts.items():
            tree[teardown_path(plat_id)] = script.encode("utf-8")
        for rel_path, script in self.hook_scripts.items():
            tree[rel_path] = script.encode("utf-8")
        tree.update(self.files)
        tree[INVENTORY_FILE] = self.render_inventory().encode("utf-8")
        tree[MANIFEST_FILE] = (json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n").encode("utf-8")
        return dict(sorted(tree.items()))

    def write(self, out: Union[str, Path]) -> List[str]:
        """
        Write the bundle atomically: staged in a sibling temp dir, then renamed over `out`

        Returns:
            Relative paths written, sorted
        """
        out = Path(out)
        parent = out.absolute().parent
        parent.mkdir(parents=True, exist_ok=True)
        tree = self.to_file_tree()

        staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=parent))
        try:
            staging.chmod(0o755)
            for rel_path, data in tree.items():
                path = staging / rel_path
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(data)
                if rel_path.endswith(".sh"):
                    path.chmod(0o755)
            if out.exists():
                backup = Path(tempfile.mkdtemp(prefix=f".{out.name}.old.", dir=parent))
                os.replace(out, backup / out.name)
                os.replace(staging, out)
                shutil.rmtree(backup, ignore_errors=True)
            else:
                os.replace(staging, out)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise

        logger.info(f"Wrote {len(tree)} file(s) to {out}")
        return list(tree)


def render_playbook(playbook: list) -> str:
    return yaml.safe_dump(playbook, explicit_start=True, sort_keys=False,
                          default_flow_style=False, width=1000)


# =============================================================================
# Knowledge base keys
# =============================================================================

def kb_keys(component: ComponentNode) -> List[Tuple[str, str]]:
    """
    (app_name, apptype) pairs to resolve for a component

    web:           (<language>-web, webengine)
    database:      (dbengine, dbengine)
    dataanalytics: (engine, language) for each process engine

    An `app_type` attribute replaces the derived app_name.
    """
    override = component.attr("app_type")
    if component.kind == ComponentKind.WEB:
        engine = component.attr("webengine")
        if not engine:
            raise MissingAttribute("webengine", component.id)
        if override:
            return [(override, engine)]
        language = component.attr("language")
        if not language:
            raise MissingAttribute("language", component.id)
        return [(f"{language}-web", engine)]

    if component.kind == ComponentKind.DATABASE:
        engine = component.attr("dbengine")
        if not engine:
            raise MissingAttribute("dbengine", component.id)
        return [(override or engine, engine)]

    engines = component.process_engines
    if not engines:
        raise MissingAttribute("process_engine", component.id)
    language = component.attr("language")
    if not language:
        raise MissingAttribute("language", component.id)
    if override:
        return [(override, language)]
    return [(engine, language) for engine in engines]


def component_resolution(component: ComponentNode, platform: PlatformNode, kb: KnowledgeBase) -> PackageResolution:
    resolution = PackageResolution()
    for app_name, apptype in kb_keys(component):
        resolution = resolution.merged(resolve(kb, app_name, apptype, platform.os_type.value, platform.os_version))
    return resolution


# =============================================================================
# Provisioning
# =============================================================================

def _script_context(platform: PlatformNode) -> Dict[str, Any]:
    return {
        "platform_id": platform.id,
        "provider": platform.provider.value,
        "os_type": platform.os_type.value,
        "os_version": platform.os_version,
        "hosts": platform.host_names(),
        "instance_count": platform.instance_count,
        "env_file": platform.attributes.get("env_file"),
        "cli": config.PROVIDER_CLI.get(platform.provider.value, ""),
    }


def generate_provision(platform: PlatformNode, templates: TemplateLibrary) -> Optional[str]:
    """
    Provider-specific provisioning script for a cloud platform

    Returns:
        Script text, or None for a pre-deployed platform

    Raises:
        MissingAttribute: a field the provider needs is absent
    """
    if platform.is_predeployed:
        return None
    provider = platform.provider.value
    for required in config.PROVIDER_REQUIRED_FIELDS.get(provider, ()):
        if not getattr(platform, required):
            raise MissingAttribute(required, platform.id)

    context = _script_context(platform)
    context.update(
        image=platform.image_name or f"{platform.os_type.value}-{platform.os_version}",
        flavor=platform.flavor,
        network=platform.network,
        security_group=platform.security_group,
        key_name=platform.key_name,
    )
    return templates.render_script(f"{provider}.sh.j2", **context)


# =============================================================================
# Playbooks
# =============================================================================

def _install_task(pkg_mgr: str, pkg_name: str) -> Dict[str, Any]:
    module = config.PKG_MGR_MODULES.get(pkg_mgr, config.DEFAULT_PKG_MODULE)
    args: Dict[str, Any] = {"name": pkg_name, "state": "present"}
    if module == config.DEFAULT_PKG_MODULE:
        args["use"] = pkg_mgr
    return {"name": f"Install {pkg_name} ({pkg_mgr})", module: args, "tags": [CONFIGURE_TAG]}


def _tagged(tasks: List[Dict[str, Any]], tag: str) -> List[Dict[str, Any]]:
    return [dict(task, tags=[tag]) for task in tasks]


def _render_component(component: ComponentNode, os_key: Tuple[str, str], resolution: PackageResolution,
                      templates: TemplateLibrary, hosts: Optional[str] = None,
                      platform_id: str = "") -> Tuple[list, Dict[str, bytes], List[str], Dict[str, Any]]:
    template = templates.get(component.kind.value, component.engine)
    generated = {
        "hosts": hosts or component.id,
        "component_id": component.id,
        "platform_id": platform_id,
        "os_type": os_key[0],
        "os_version": os_key[1],
    }
    resolved = {
        "packages": " ".join(name for _, name in resolution.steps),
        "pkg_mgr": resolution.steps[0][0] if resolution.steps else "",
    }
    context = template.bind(component, generated, resolved)
    render = templates.render_tree

    tasks = [_install_task(mgr, name) for mgr, name in resolution.steps]

    files: Dict[str, bytes] = {}
    for asset in template.assets:
        rel = asset_path(component.id, asset.output_name)
        if asset.rendered:
            files[rel] = render(asset.content.decode("utf-8"), context).encode("utf-8")
        else:
            files[rel] = asset.content
        tasks.append({
            "name": f"Copy {asset.output_name}",
            "copy": {"src": f"../{rel}", "dest": render(asset.dest, context), "mode": "0644"},
            "tags": [CONFIGURE_TAG],
        })

    if component.source_ref:
        tasks.append({
            "name": f"Check out {component.id} application code",
            "git": {
                "repo": component.source_ref,
                "dest": component.attr("app_dir") or f"{config.GIT_CHECKOUT_ROOT}/{component.id}",
                "version": component.attr("source_version") or "HEAD",
            },
            "tags": [CONFIGURE_TAG],
        })

    tasks += _tagged(render(template.body.get("config_tasks") or [], context), CONFIGURE_TAG)
    tasks += _tagged(render(template.body.get("service_tasks") or [], context), START_TAG)

    header = render(template.body.get("play") or {}, context)
    play: Dict[str, Any] = {"name": header.pop("name", f"Deploy {component.id}"), "hosts": generated["hosts"]}
    play.update(header)
    play["tasks"] = tasks
    play["handlers"] = render(template.body.get("handlers") or [], context)

    secrets = sorted(
        {name for name in template.secret_attributes() if component.attr(name) is not None}
        | {name for name in component.attributes if name in config.SECRET_ATTRIBUTES}
    )
    used = {"template": f"{template.kind}/{template.engine}", "reconstruction": template.reconstruction}
    return [play], files, secrets, used


def generate_config(component: ComponentNode, os: Tuple[str, str], resolution: PackageResolution,
                    templates: TemplateLibrary) -> list:
    """
    Playbook tree for one component

    Tasks, in order: one install task per resolution step, config asset copies,
    source checkout, template config tasks (tag `configure`), then service tasks
    (tag `start`).

    Raises:
        NoTemplate: no template for (kind, engine)
        UnboundPlaceholder: a template placeholder has no attribute value or default
    """
    playbook, _, _, _ = _render_component(component, os, resolution, templates)
    return playbook


def _component_documents(component: ComponentNode, platform: PlatformNode, kb: KnowledgeBase,
                         templates: TemplateLibrary):
    # template lookup first so a missing template is reported before KB gaps
    templates.get(component.kind.value, component.engine)
    resolution = component_resolution(component, platform, kb)
    return _render_component(component, platform.os_key, resolution, templates, platform_id=platform.id)


def generate_bundle(topology: Topology, kb: KnowledgeBase, templates: TemplateLibrary,
                    workers: int = config.GENERATION_WORKERS) -> IacBundle:
    """
    Generate playbooks, provisioning scripts and inventory for a topology

    Per-node generation runs on a thread pool; results are merged by node id.

    Raises:
        BundleError: one or more nodes failed; lists every (node id, error)
    """
    pairs = topology.hosted_pairs()
    clouds = [topology.platforms[p] for p in sorted(topology.platforms)
              if not topology.platforms[p].is_predeployed]

    results: Dict[str, Any] = {}
    failures: List[Tuple[str, IacError]] = []
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futures = {ex.submit(_component_documents, comp, plat, kb, templates): comp.id for comp, plat in pairs}
        futures.update({ex.submit(generate_provision, plat, templates): plat.id for plat in clouds})
        for fut in as_completed(futures):
            node_id = futures[fut]
            try:
                results[node_id] = fut.result()
            except IacError as e:
                logger.debug(f"Generation failed for {node_id}: {e}")
                failures.append((node_id, e))

    if failures:
        raise BundleError(sorted(failures, key=lambda f: f[0]))

    bundle = IacBundle()
    for comp, plat in pairs:
        playbook, files, secrets, used = results[comp.id]
        bundle.playbooks[comp.id] = playbook
        bundle.files.update(files)
        bundle.secrets[comp.id] = secrets
        bundle.templates_used[comp.id] = used
        bundle.inventory[comp.id] = plat.host_names()
    for plat in topology.platforms.values():
        if plat.id in results:
            bundle.provision_scripts[plat.id] = results[plat.id]
        if any(p.id == plat.id for _, p in pairs):
            bundle.inventory[plat.id] = plat.host_names()
        platform_secrets = sorted(name for name in plat.attributes if name in config.SECRET_ATTRIBUTES)
        if platform_secrets:
            bundle.secrets[plat.id] = platform_secrets

    logger.info(f"Generated {len(bundle.playbooks)} playbook(s), {len(bundle.provision_scripts)} provision script(s)")
    return bundle


# =============================================================================
# Migration
# =============================================================================

def _service_name(component: ComponentNode, templates: TemplateLibrary) -> str:
    try:
        return templates.get(component.kind.value, component.engine).service
    except NoTemplate:
        return component.engine or component.id


def generate_teardown(topology: Topology, platform_id: str, templates: TemplateLibrary) -> str:
    """
    Script removing the deleteFrom sources from one platform

    A cloud machine is deleted only when nothing stays hosted on it after the
    migration. Otherwise, as on a pre-deployed host, the leaving services are
    stopped; an optional component id argument limits the script to one of them.
    """
    platform = topology.platform(platform_id)
    removed = sorted(rel.source for rel in topology.incoming(platform_id, RelationshipKind.DELETE_FROM))
    context = _script_context(platform)
    context.update(
        components=removed,
        stops=[{"component": c, "service": _service_name(topology.component(c), templates)} for c in removed],
        keep_host=platform.is_predeployed or topology.after_migration().hosts_anything(platform_id),
        delete_command=config.PROVIDER_TEARDOWN.get(platform.provider.value, ""),
    )
    return templates.render_script("teardown.sh.j2", **context)


def generate_hooks(topology: Topology, component_id: str, templates: TemplateLibrary) -> Dict[str, str]:
    """Hook scripts for a stateful migration, keyed by bundle path"""
    component = topology.component(component_id)
    old = topology.migration_source(component_id)
    target = topology.migration_target(component_id)
    new = topology.platform(target.target)
    scripts = {}
    for hook in config.MIGRATION_HOOKS:
        scripts[hook_path(component_id, hook)] = templates.render_script(
            "hook.sh.j2",
            hook=hook,
            component_id=component_id,
            service=_service_name(component, templates),
            old_platform=old.id if old else "",
            new_platform=new.id,
            old_hosts=old.host_names() if old else [],
            new_hosts=new.host_names(),
            lb_node=component_id + config.LB_NODE_SUFFIX,
        )
    return scripts


def generate_migration_bundle(topology: Topology, kb: KnowledgeBase, templates: TemplateLibrary) -> IacBundle:
    """
    Bundle for carrying out the topology's deleteFrom/migrateTo relationships

    New-host documents come from the same path as deployment, applied to the
    post-migration topology. Teardown scripts cover every deleteFrom target and
    stateful migrations get their hook scripts.
    """
    bundle = generate_bundle(topology.after_migration(), kb, templates)

    for plat_id in sorted({rel.target for rel in topology.relationships_of(RelationshipKind.DELETE_FROM)}):
        bundle.teardown_scripts[plat_id] = generate_teardown(topology, plat_id, templates)

    for rel in topology.relationships_of(RelationshipKind.MIGRATE_TO):
        if rel.migration_type == MigrationType.STATEFUL and topology.migration_source(rel.source):
            bundle.hook_scripts.update(generate_hooks(topology, rel.source, templates))

    logger.info(f"Migration bundle: {len(bundle.teardown_scripts)} teardown script(s), "
                f"{len(bundle.hook_scripts)} hook script(s)")
    return bundle
