"""
Topology DSL parser

Parses `.camp` model text into a Topology and serializes a Topology back to
canonical text. Grammar:

    component <id> { <key> = <value>; ... }
    platform  <id> { <key> = <value>; ... }
    <id> <verb> <id> [with <key>=<value> ...];

verbs: hostedOn, connectsTo, deleteFrom, migrateTo
values: bare words or double-quoted strings; `#` starts a line comment
"""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pyparsing as pp

from .errors import (DuplicateId, ModelSyntaxError, SourceSpan, TopologyError,
                     UnknownKeyword, UnknownNodeRef)
from .topology import (ComponentKind, ComponentNode, MigrationType, OsType,
                       PlatformNode, Provider, Relationship, RelationshipKind,
                       Topology)

__all__ = ["parse", "parse_file", "serialize"]


@dataclass(frozen=True)
class _Tok:
    """Token text plus its offset in the source"""
    text: str
    loc: int


def _located(expr: pp.ParserElement) -> pp.ParserElement:
    return expr.copy().add_parse_action(lambda s, loc, toks: _Tok(toks[0], loc))


# =============================================================================
# Grammar
# =============================================================================

_IDENT_RE = r"[A-Za-z_][A-Za-z0-9_\-\.]*"
_BARE_RE = r'[^\s;{}"#=]+'
_KEY_FORMAT = re.compile(r"[a-z_][a-z0-9_]*\Z")
_BARE_FORMAT = re.compile(_BARE_RE + r"\Z")

_IDENT = pp.Regex(_IDENT_RE).set_name("identifier")
_KEY = pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*").set_name("attribute name")
_QUOTED = pp.QuotedString('"', esc_char="\\", convert_whitespace_escapes=False).set_name("quoted string")
_BARE = pp.Regex(_BARE_RE).set_name("value")

_VALUE = _located(_QUOTED) | _located(_BARE)

_ATTR = pp.Group(
    _located(_KEY)("key") + pp.Suppress("=") - pp.Group(pp.OneOrMore(_VALUE))("value") - pp.Suppress(";")
)

_BLOCK = pp.Group(
    _located(_IDENT)("btype")
    + _located(_IDENT)("name")
    + pp.Suppress("{")
    - pp.Group(pp.ZeroOrMore(_ATTR))("attrs")
    - pp.Suppress("}")
)("block")

_OPTION = pp.Group(_located(_KEY)("key") + pp.Suppress("=") - _VALUE("value"))

_RELATION = pp.Group(
    _located(_IDENT)("source")
    + _located(_IDENT)("verb")
    + _located(_IDENT)("target")
    - pp.Optional(pp.Keyword("with").suppress() - pp.Group(pp.OneOrMore(_OPTION))("options"))
    - pp.Suppress(";")
)("relation")

_DOCUMENT = pp.ZeroOrMore(_BLOCK | _RELATION)
_DOCUMENT.ignore(pp.Regex(r"#[^\n]*"))
_DOCUMENT.parse_with_tabs()

_VERBS = {kind.value: kind for kind in RelationshipKind}
_PROVIDER_ALIASES = {"hardware": Provider.PREDEPLOYED}
_PLATFORM_FIELDS = ("image_name", "flavor", "network", "security_group", "key_name")


# =============================================================================
# Parsing
# =============================================================================

class _ModelReader:
    """Turns parse results into a Topology, reporting errors with source spans"""

    def __init__(self, text: str, file: str):
        self.text = text
        self.file = file

    def span(self, loc: int) -> SourceSpan:
        return SourceSpan(self.file, pp.lineno(loc, self.text), pp.col(loc, self.text))

    def read(self) -> Topology:
        try:
            results = _DOCUMENT.parse_string(self.text, parse_all=True)
        except pp.ParseBaseException as e:
            raise ModelSyntaxError(SourceSpan(self.file, max(e.lineno, 1), max(e.col, 1)), e.msg) from None

        blocks = [item for item in results if "btype" in item]
        relations = [item for item in results if "verb" in item]

        components: List[ComponentNode] = []
        platforms: List[PlatformNode] = []
        declared: Dict[str, _Tok] = {}

        for block in blocks:
            btype, name = block.btype, block.name
            if btype.text not in ("component", "platform"):
                raise UnknownKeyword(self.span(btype.loc), f"unknown block type '{btype.text}'")
            if name.text in declared:
                first = self.span(declared[name.text].loc)
                raise DuplicateId(self.span(name.loc), f"'{name.text}' already declared at line {first.line}")
            declared[name.text] = name
            attrs = self._read_attrs(block.attrs)
            if btype.text == "component":
                components.append(self._component(name, attrs))
            else:
                platforms.append(self._platform(name, attrs))

        relationships: List[Relationship] = []
        seen: Dict[Tuple[RelationshipKind, str, str], _Tok] = {}

        for rel in relations:
            verb = _VERBS.get(rel.verb.text)
            if verb is None:
                raise UnknownKeyword(self.span(rel.verb.loc), f"unknown relation '{rel.verb.text}'")
            for endpoint in (rel.source, rel.target):
                if endpoint.text not in declared:
                    raise UnknownNodeRef(self.span(endpoint.loc), f"undeclared node '{endpoint.text}'")
            migration = self._read_options(rel, verb)
            relationship = Relationship(verb, rel.source.text, rel.target.text, migration)
            if relationship.triple in seen:
                raise ModelSyntaxError(self.span(rel.source.loc), f"duplicate relationship {relationship.id}")
            seen[relationship.triple] = rel.source
            relationships.append(relationship)

        return Topology.build(components, platforms, relationships)

    def _read_attrs(self, attrs) -> Dict[str, Tuple[_Tok, _Tok, str]]:
        """Map key -> (key token, first value token, joined value)"""
        out: Dict[str, Tuple[_Tok, _Tok, str]] = {}
        for attr in attrs:
            key = attr.key
            if not _KEY_FORMAT.match(key.text):
                raise ModelSyntaxError(self.span(key.loc), f"attribute names must be lowercase identifiers: '{key.text}'")
            if key.text in out:
                raise ModelSyntaxError(self.span(key.loc), f"duplicate attribute '{key.text}'")
            values = list(attr.value)
            joined = values[0].text if len(values) == 1 else " ".join(v.text for v in values)
            if not joined:
                raise ModelSyntaxError(self.span(values[0].loc), f"attribute '{key.text}' has an empty value")
            out[key.text] = (key, values[0], joined)
        return out

    def _enum(self, enum_cls, token: _Tok, value: str, what: str, aliases=None):
        if aliases and value in aliases:
            return aliases[value]
        try:
            return enum_cls(value)
        except ValueError:
            raise UnknownKeyword(self.span(token.loc), f"unknown {what} '{value}'") from None

    def _component(self, name: _Tok, attrs) -> ComponentNode:
        if "kind" not in attrs:
            raise ModelSyntaxError(self.span(name.loc), f"component '{name.text}' has no kind")
        _, kind_tok, kind_value = attrs.pop("kind")
        kind = self._enum(ComponentKind, kind_tok, kind_value, "component kind")
        source = attrs.pop("source", None)
        return ComponentNode(
            id=name.text,
            kind=kind,
            attributes={key: value for key, (_, _, value) in attrs.items()},
            source_ref=source[2] if source else None,
        )

    def _platform(self, name: _Tok, attrs) -> PlatformNode:
        for required in ("provider", "os"):
            if required not in attrs:
                raise ModelSyntaxError(self.span(name.loc), f"platform '{name.text}' has no {required}")
        _, prov_tok, prov_value = attrs.pop("provider")
        provider = self._enum(Provider, prov_tok, prov_value, "provider", _PROVIDER_ALIASES)

        _, os_tok, os_value = attrs.pop("os")
        parts = os_value.split()
        if len(parts) != 2:
            raise ModelSyntaxError(self.span(os_tok.loc), f"os must be '<type> <version>', got '{os_value}'")
        os_type = self._enum(OsType, os_tok, parts[0], "os type")

        fields = {f: attrs.pop(f)[2] for f in _PLATFORM_FIELDS if f in attrs}

        instance_count = 1
        if "instance_count" in attrs:
            _, count_tok, count_value = attrs.pop("instance_count")
            if not count_value.isdigit() or int(count_value) < 1:
                raise ModelSyntaxError(self.span(count_tok.loc), f"instance_count must be a positive integer, got '{count_value}'")
            instance_count = int(count_value)

        address = attrs.pop("address")[2] if "address" in attrs else None
        try:
            return PlatformNode(
                id=name.text,
                provider=provider,
                os_type=os_type,
                os_version=parts[1],
                instance_count=instance_count,
                address=address,
                attributes={key: value for key, (_, _, value) in attrs.items()},
                **fields,
            )
        except TopologyError as e:
            raise ModelSyntaxError(self.span(name.loc), str(e)) from None

    def _read_options(self, rel, verb: RelationshipKind) -> Optional[MigrationType]:
        migration = None
        for option in (rel.options if "options" in rel else []):
            key, value = option.key, option.value
            if key.text != "migration" or verb != RelationshipKind.MIGRATE_TO:
                raise UnknownKeyword(self.span(key.loc), f"unknown option '{key.text}' for {verb.value}")
            migration = self._enum(MigrationType, value, value.text, "migration type")
        if verb == RelationshipKind.MIGRATE_TO and migration is None:
            raise ModelSyntaxError(self.span(rel.verb.loc), "migrateTo needs 'with migration=stateful|stateless'")
        return migration


def parse(text: str, file: str = "<model>") -> Topology:
    """
    Parse model text into a Topology

    Args:
        text: Model source; LF or CRLF line endings
        file: Name used in error spans

    Returns:
        Topology with declaration order preserved in relationships
    """
    return _ModelReader(text.replace("\r\n", "\n"), file).read()


def parse_file(path: Union[str, Path]) -> Topology:
    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), str(path))


# =============================================================================
# Serialization
# =============================================================================

def _quote(value: str) -> str:
    if _BARE_FORMAT.match(value):
        return value
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _block(keyword: str, node_id: str, pairs: List[Tuple[str, str]]) -> str:
    lines = [f"{keyword} {node_id} {{"]
    lines += [f"    {key} = {value};" for key, value in pairs]
    lines.append("}")
    return "\n".join(lines)


def serialize(topology: Topology) -> str:
    """Canonical text: components then platforms sorted by id, relationships in order"""
    chunks: List[str] = []

    for comp_id in sorted(topology.components):
        comp = topology.components[comp_id]
        pairs = [("kind", comp.kind.value)]
        pairs += [(key, _quote(value)) for key, value in comp.attributes.items()]
        if comp.source_ref is not None:
            pairs.append(("source", _quote(comp.source_ref)))
        chunks.append(_block("component", comp_id, pairs))

    for plat_id in sorted(topology.platforms):
        plat = topology.platforms[plat_id]
        pairs = [("provider", plat.provider.value)]
        version = plat.os_version if _BARE_FORMAT.match(plat.os_version) else _quote(plat.os_version)
        pairs.append(("os", f"{plat.os_type.value} {version}"))
        for field_name in _PLATFORM_FIELDS:
            value = getattr(plat, field_name)
            if value is not None:
                pairs.append((field_name, _quote(value)))
        if plat.instance_count != 1:
            pairs.append(("instance_count", str(plat.instance_count)))
        if plat.address is not None:
            pairs.append(("address", _quote(plat.address)))
        pairs += [(key, _quote(value)) for key, value in plat.attributes.items()]
        chunks.append(_block("platform", plat_id, pairs))

    if topology.relationships:
        lines = []
        for rel in topology.relationships:
            line = f"{rel.source} {rel.kind.value} {rel.target}"
            if rel.migration_type is not None:
                line += f" with migration={rel.migration_type.value}"
            lines.append(line + ";")
        chunks.append("\n".join(lines))

    return "\n\n".join(chunks) + "\n" if chunks else ""
