"""
Shared fixtures: the shipped knowledge base, template library and models
"""

import os
import random
import sys
from pathlib import Path
from typing import Iterable, List, Tuple

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core.knowledge_base import load
from core.parser import parse, parse_file
from core.templates import TemplateLibrary

SCRIPTS_DIR = Path(__file__).resolve().parent.parent
KB_DIR = SCRIPTS_DIR / "kb"
TEMPLATES_DIR = SCRIPTS_DIR / "templates"
MODELS_DIR = SCRIPTS_DIR / "models"
SIM_DIR = SCRIPTS_DIR / "sim"
RULES_FILE = SCRIPTS_DIR / "rules" / "default.rules"


@pytest.fixture(scope="session")
def kb():
    return load(KB_DIR)


@pytest.fixture(scope="session")
def templates():
    return TemplateLibrary.load(TEMPLATES_DIR)


@pytest.fixture
def model():
    """Load a shipped model by name"""
    return lambda name: parse_file(MODELS_DIR / f"{name}.camp")


@pytest.fixture
def lamp():
    return parse_file(MODELS_DIR / "lamp.camp")


def chain_model(n: int, provider: str = "amazon") -> str:
    """n web components on n platforms, each connecting to the next"""
    lines = []
    for i in range(n):
        lines.append(f"component c{i} {{ kind = web; webengine = apache; language = php; port = 80; }}")
        lines.append(f"platform p{i} {{ provider = {provider}; os = ubuntu 16.04; }}")
    for i in range(n):
        lines.append(f"c{i} hostedOn p{i};")
    for i in range(n - 1):
        lines.append(f"c{i} connectsTo c{i + 1};")
    return "\n".join(lines) + "\n"


@pytest.fixture
def chain():
    return lambda n, provider="amazon": parse(chain_model(n, provider))


# =============================================================================
# Random topologies
# =============================================================================

_WEB = "kind = web; webengine = apache; language = php; port = 80;"


def _random_layout(rng: random.Random, max_components: int):
    """(instance counts per platform, host index per component, connectsTo pairs i -> j with i < j)"""
    n = rng.randint(1, max_components)
    platforms = rng.randint(1, n)
    counts = [rng.randint(1, 3) for _ in range(platforms)]
    hosts = [rng.randrange(platforms) for _ in range(n)]
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3]
    return counts, hosts, edges


def _layout_lines(layout, components: Iterable[int]) -> List[str]:
    counts, hosts, edges = layout
    keep = sorted(set(components))
    lines = [f"component c{i} {{ {_WEB} }}" for i in keep]
    for j in sorted({hosts[i] for i in keep}):
        lines.append(f"platform p{j} {{ provider = amazon; os = ubuntu 16.04; instance_count = {counts[j]}; }}")
    lines += [f"c{i} hostedOn p{hosts[i]};" for i in keep]
    lines += [f"c{i} connectsTo c{j};" for i, j in edges if i in keep and j in keep]
    return lines


def random_dag_model(rng: random.Random, max_components: int = 7) -> str:
    """Web components on replicated amazon platforms with acyclic connectsTo edges"""
    layout = _random_layout(rng, max_components)
    return "\n".join(_layout_lines(layout, range(len(layout[1])))) + "\n"


def random_migration_model(rng: random.Random, max_components: int = 7) -> str:
    """A random DAG model in which one component moves to a fresh platform"""
    layout = _random_layout(rng, max_components)
    hosts = layout[1]
    mover = rng.randrange(len(hosts))
    mode = rng.choice(["stateful", "stateless"])
    lines = _layout_lines(layout, range(len(hosts))) + [
        "platform moved_to { provider = amazon; os = ubuntu 16.04; }",
        f"c{mover} deleteFrom p{hosts[mover]};",
        f"c{mover} migrateTo moved_to with migration={mode};",
    ]
    return "\n".join(lines) + "\n"


def random_delta_models(rng: random.Random, max_components: int = 7) -> Tuple[str, str]:
    """(old, new): new adds components, their platforms and edges to a random subset of old"""
    layout = _random_layout(rng, max_components)
    everything = range(len(layout[1]))
    running = rng.sample(list(everything), rng.randint(1, len(layout[1])))
    old = "\n".join(_layout_lines(layout, running)) + "\n"
    new = "\n".join(_layout_lines(layout, everything)) + "\n"
    return old, new
