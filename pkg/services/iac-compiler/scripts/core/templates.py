"""
Template library

Layout on disk:

    templates/<kind>/<engine>/template.yml    playbook skeleton with {{ placeholder }} strings
    templates/<kind>/<engine>/manifest.toml   placeholder documentation and asset destinations
    templates/<kind>/<engine>/files/          config assets (*.j2 assets are rendered)
    templates/provision/*.sh.j2               provider, teardown and hook script templates

Placeholders are Jinja2 expressions inside YAML string leaves. Templates are
rendered on the parsed tree, so the playbook structure never goes through text
substitution.
"""

import logging
import shlex
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Union

import jinja2
import yaml
from jinja2 import meta

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import config
from .errors import NoTemplate, TemplateLibraryError, UnboundPlaceholder
from .topology import ComponentNode

logger = logging.getLogger(__name__)

TEMPLATE_FILE = "template.yml"
MANIFEST_FILE = "manifest.toml"
ASSET_DIR = "files"
RENDERED_ASSET_SUFFIX = ".j2"
TEMPLATE_SECTIONS = ("play", "config_tasks", "service_tasks", "handlers")


def make_environment(loader: Optional[jinja2.BaseLoader] = None) -> jinja2.Environment:
    """Strict Jinja2 environment: undefined names raise instead of rendering empty"""
    env = jinja2.Environment(
        loader=loader,
        undefined=jinja2.StrictUndefined,
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
        autoescape=False,
    )
    env.filters["shquote"] = lambda value: shlex.quote(str(value))
    return env


@dataclass(frozen=True)
class Placeholder:
    name: str
    source: str
    attribute: Optional[str] = None
    default: Optional[str] = None
    secret: bool = False


@dataclass(frozen=True)
class Asset:
    name: str
    dest: str
    content: bytes
    rendered: bool

    @property
    def output_name(self) -> str:
        if self.rendered:
            return self.name[: -len(RENDERED_ASSET_SUFFIX)]
        return self.name


@dataclass(frozen=True)
class Template:
    """One (kind, engine) playbook skeleton plus its manifest"""
    kind: str
    engine: str
    service: str
    body: Dict[str, Any]
    placeholders: Dict[str, Placeholder]
    assets: Tuple[Asset, ...] = ()
    description: str = ""
    reconstruction: bool = False
    path: str = ""

    def secret_attributes(self) -> List[str]:
        return sorted(p.attribute for p in self.placeholders.values() if p.secret and p.attribute)

    def bind(self, component: ComponentNode, generated: Dict[str, str],
             resolved: Dict[str, str]) -> Dict[str, str]:
        """
        Build the rendering context for one component

        Args:
            component: Attribute source
            generated: Values for generator placeholders
            resolved: Values for resolution placeholders

        Raises:
            UnboundPlaceholder: an attribute placeholder has neither a value nor a default
        """
        context: Dict[str, str] = {}
        for name, ph in sorted(self.placeholders.items()):
            if ph.source == "generator":
                context[name] = generated[name]
            elif ph.source == "resolution":
                context[name] = resolved[name]
            else:
                value = component.attr(ph.attribute)
                if value is None:
                    value = ph.default
                if value is None:
                    raise UnboundPlaceholder(ph.attribute, name)
                context[name] = value
        return context


class TemplateLibrary:
    """All templates under one directory, keyed by (kind, engine)"""

    def __init__(self, root: Path, templates: Dict[Tuple[str, str], Template]):
        self.root = root
        self.templates = templates
        self.env = make_environment()
        self.scripts = make_environment(jinja2.FileSystemLoader(str(root / config.PROVISION_TEMPLATE_DIR)))

    @classmethod
    def load(cls, root: Union[str, Path]) -> "TemplateLibrary":
        """
        Load every template directory and check its manifest

        Raises:
            TemplateLibraryError: missing files, bad manifest, undocumented placeholder
        """
        root = Path(root)
        if not root.is_dir():
            raise TemplateLibraryError(f"template directory not found: {root}")
        if not (root / config.PROVISION_TEMPLATE_DIR).is_dir():
            raise TemplateLibraryError(f"{root}: missing {config.PROVISION_TEMPLATE_DIR}/ script templates")

        env = make_environment()
        templates: Dict[Tuple[str, str], Template] = {}
        for kind_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            if kind_dir.name == config.PROVISION_TEMPLATE_DIR:
                continue
            for engine_dir in sorted(p for p in kind_dir.iterdir() if p.is_dir()):
                template = _load_template(env, kind_dir.name, engine_dir)
                templates[(template.kind, template.engine)] = template
                logger.debug(f"Loaded template {template.kind}/{template.engine} ({len(template.placeholders)} placeholders)")

        logger.info(f"Template library {root}: {len(templates)} template(s)")
        return cls(root, templates)

    def get(self, kind: str, engine: Optional[str]) -> Template:
        try:
            return self.templates[(kind, engine)]
        except KeyError:
            raise NoTemplate(kind, engine or "<none>") from None

    def render_tree(self, node: Any, context: Dict[str, str]) -> Any:
        """Render every string leaf of a YAML tree with the given context"""
        if isinstance(node, dict):
            return {key: self.render_tree(value, context) for key, value in node.items()}
        if isinstance(node, list):
            return [self.render_tree(item, context) for item in node]
        if isinstance(node, str) and "{" in node:
            return self.env.from_string(node).render(context)
        return node

    def render_script(self, name: str, **context) -> str:
        return self.scripts.get_template(name).render(**context)


# =============================================================================
# Loading helpers
# =============================================================================

def _string_leaves(node: Any):
    if isinstance(node, dict):
        for value in node.values():
            yield from _string_leaves(value)
    elif isinstance(node, list):
        for item in node:
            yield from _string_leaves(item)
    elif isinstance(node, str):
        yield node


def _variables(env: jinja2.Environment, source: str, where: str) -> Set[str]:
    try:
        return meta.find_undeclared_variables(env.parse(source))
    except jinja2.TemplateSyntaxError as e:
        raise TemplateLibraryError(f"{where}: {e.message}") from None


def _load_placeholders(raw: Dict[str, Any], where: str) -> Dict[str, Placeholder]:
    placeholders = {}
    for name, spec in raw.items():
        source = spec.get("source")
        if source not in config.PLACEHOLDER_SOURCES:
            raise TemplateLibraryError(f"{where}: placeholder '{name}' has unknown source '{source}'")
        if source == "generator" and name not in config.GENERATOR_PLACEHOLDERS:
            raise TemplateLibraryError(f"{where}: '{name}' is not a generator placeholder")
        if source == "resolution" and name not in config.RESOLUTION_PLACEHOLDERS:
            raise TemplateLibraryError(f"{where}: '{name}' is not a resolution placeholder")
        attribute = spec.get("attribute", name) if source == "attribute" else None
        default = spec.get("default")
        placeholders[name] = Placeholder(
            name=name,
            source=source,
            attribute=attribute,
            default=str(default) if default is not None else None,
            secret=bool(spec.get("secret", False)) or (attribute in config.SECRET_ATTRIBUTES),
        )
    return placeholders


def _load_template(env: jinja2.Environment, kind: str, directory: Path) -> Template:
    template_path = directory / TEMPLATE_FILE
    manifest_path = directory / MANIFEST_FILE
    for required in (template_path, manifest_path):
        if not required.is_file():
            raise TemplateLibraryError(f"{directory}: missing {required.name}")

    try:
        body = yaml.safe_load(template_path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise TemplateLibraryError(f"{template_path}: {e}") from None
    unknown = set(body) - set(TEMPLATE_SECTIONS)
    if unknown:
        raise TemplateLibraryError(f"{template_path}: unknown sections {sorted(unknown)}")

    try:
        manifest = tomllib.loads(manifest_path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise TemplateLibraryError(f"{manifest_path}: {e}") from None

    header = manifest.get("template", {})
    engine = header.get("engine", directory.name)
    if header.get("kind", kind) != kind or engine != directory.name:
        raise TemplateLibraryError(f"{manifest_path}: kind/engine do not match directory {kind}/{directory.name}")

    placeholders = _load_placeholders(manifest.get("placeholders", {}), str(manifest_path))

    used: Set[str] = set()
    for leaf in _string_leaves(body):
        used |= _variables(env, leaf, str(template_path))

    assets = []
    destinations = manifest.get("assets", {})
    asset_dir = directory / ASSET_DIR
    if asset_dir.is_dir():
        for path in sorted(p for p in asset_dir.iterdir() if p.is_file()):
            if path.name not in destinations:
                raise TemplateLibraryError(f"{manifest_path}: asset {path.name} has no destination")
            rendered = path.name.endswith(RENDERED_ASSET_SUFFIX)
            content = path.read_bytes()
            if rendered:
                used |= _variables(env, content.decode("utf-8"), str(path))
            used |= _variables(env, destinations[path.name], str(manifest_path))
            assets.append(Asset(path.name, destinations[path.name], content, rendered))
    missing_assets = set(destinations) - {a.name for a in assets}
    if missing_assets:
        raise TemplateLibraryError(f"{manifest_path}: assets listed but not present: {sorted(missing_assets)}")

    undocumented = used - set(placeholders)
    if undocumented:
        raise TemplateLibraryError(f"{directory}: undocumented placeholders {sorted(undocumented)}")

    return Template(
        kind=kind,
        engine=engine,
        service=header.get("service", engine),
        body=body,
        placeholders=placeholders,
        assets=tuple(assets),
        description=header.get("description", ""),
        reconstruction=bool(header.get("reconstruction", False)),
        path=str(directory),
    )
