"""Annotated token-flow DAG: vertices, edges, constraints, rates.

Vertices carry cost and selectivity; each DAG edge carries the full output
token rate of its tail vertex, so a vertex feeding several successors sends
its complete output to each of them. Dependency constraints (precedence and
exclusion pairs) ride along with the graph and restrict the optimizer.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

__all__ = [
    "Vertex",
    "VertexKind",
    "ConstraintSet",
    "TokenFlowDag",
    "DagBuilder",
    "CycleError",
    "DagFormatError",
    "token_rate",
    "token_rates",
    "transitive_closure",
    "validate_dag",
    "load_dag",
    "loads_dag",
    "save_dag",
    "to_dot",
]


class CycleError(ValueError):
    """A cycle was found where an acyclic structure is required."""


class DagFormatError(ValueError):
    """A DAG interchange document is malformed."""


class VertexKind(str, Enum):
    ORDINARY = "Ordinary"
    DUMMY_FILTER = "DummyFilter"
    DUMMY_COMBINER = "DummyCombiner"
    DUMMY_DELAY = "DummyDelay"


@dataclass(frozen=True)
class Vertex:
    """One task in the token-flow DAG.

    ``origin`` names the process element the vertex came from; dummy
    vertices keep the id of the element whose mapping rule produced them.
    """

    id: str
    kind: VertexKind
    cost: float = 0.0
    selectivity: float = 1.0
    origin: str | None = None
    pipelining: bool = True
    parallelizable: bool = False
    max_degree: int = 1

    def __post_init__(self) -> None:
        if self.cost < 0:
            raise ValueError(f"vertex {self.id!r}: cost must be >= 0, got {self.cost}")
        if self.selectivity <= 0:
            raise ValueError(
                f"vertex {self.id!r}: selectivity must be > 0, got {self.selectivity}"
            )
        if self.max_degree < 1:
            raise ValueError(f"vertex {self.id!r}: max_degree must be >= 1")
        if self.origin is None:
            object.__setattr__(self, "origin", self.id)

    @property
    def is_dummy(self) -> bool:
        return self.kind is not VertexKind.ORDINARY


def _norm_pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ConstraintSet:
    """Precedence (ordered) and exclusion (unordered) task-pair constraints."""

    precedence: frozenset[tuple[str, str]] = field(default_factory=frozenset)
    exclusion: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "precedence", frozenset(tuple(p) for p in self.precedence))
        object.__setattr__(
            self, "exclusion", frozenset(_norm_pair(*p) for p in self.exclusion)
        )

    def excludes(self, a: str, b: str) -> bool:
        return _norm_pair(a, b) in self.exclusion


def transitive_closure(constraints: ConstraintSet) -> ConstraintSet:
    """Close the precedence relation under transitivity; exclusion unchanged.

    Raises :class:`CycleError` if the precedence pairs contain a cycle
    (including a pair in both directions).
    """
    nodes = sorted({x for pair in constraints.precedence for x in pair})
    index = {node: i for i, node in enumerate(nodes)}
    succ = [0] * len(nodes)
    for a, b in constraints.precedence:
        succ[index[a]] |= 1 << index[b]
    # Iterate to a fixed point; n is small in practice.
    changed = True
    while changed:
        changed = False
        for i in range(len(nodes)):
            mask = succ[i]
            acc = mask
            while mask:
                low = mask & -mask
                acc |= succ[low.bit_length() - 1]
                mask ^= low
            if acc != succ[i]:
                succ[i] = acc
                changed = True
    closed = set()
    for i, node in enumerate(nodes):
        if succ[i] >> i & 1:
            raise CycleError(f"precedence constraints contain a cycle through {node!r}")
        mask = succ[i]
        while mask:
            low = mask & -mask
            closed.add((node, nodes[low.bit_length() - 1]))
            mask ^= low
    return ConstraintSet(precedence=frozenset(closed), exclusion=constraints.exclusion)


@dataclass(frozen=True)
class TokenFlowDag:
    """Immutable annotated DAG; build with :class:`DagBuilder`."""

    vertices: tuple[Vertex, ...]
    edges: tuple[tuple[str, str], ...]
    source: str
    constraints: ConstraintSet = field(default_factory=ConstraintSet)

    @cached_property
    def vertex_map(self) -> dict[str, Vertex]:
        return {v.id: v for v in self.vertices}

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {v.id: [] for v in self.vertices}
        for a, b in self.edges:
            succ[a].append(b)
        return {k: tuple(v) for k, v in succ.items()}

    @cached_property
    def predecessors(self) -> dict[str, tuple[str, ...]]:
        pred: dict[str, list[str]] = {v.id: [] for v in self.vertices}
        for a, b in self.edges:
            pred[b].append(a)
        return {k: tuple(v) for k, v in pred.items()}

    def vertex(self, vertex_id: str) -> Vertex:
        try:
            return self.vertex_map[vertex_id]
        except KeyError:
            raise KeyError(f"unknown vertex {vertex_id!r}") from None

    def topological_order(self) -> list[str]:
        """Kahn order, deterministic: ready vertices fire in insertion order."""
        indegree = {v.id: len(self.predecessors[v.id]) for v in self.vertices}
        order_index = {v.id: i for i, v in enumerate(self.vertices)}
        ready = deque(sorted((v.id for v in self.vertices if indegree[v.id] == 0),
                             key=order_index.__getitem__))
        out: list[str] = []
        while ready:
            node = ready.popleft()
            out.append(node)
            newly = []
            for nxt in self.successors[node]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    newly.append(nxt)
            for nxt in sorted(newly, key=order_index.__getitem__):
                ready.append(nxt)
        if len(out) != len(self.vertices):
            raise CycleError("edge set contains a cycle")
        return out


class DagBuilder:
    """Accumulates vertices, edges and constraints, then freezes a DAG."""

    def __init__(self) -> None:
        self._vertices: dict[str, Vertex] = {}
        self._edges: list[tuple[str, str]] = []
        self._edge_set: set[tuple[str, str]] = set()
        self._precedence: set[tuple[str, str]] = set()
        self._exclusion: set[tuple[str, str]] = set()

    def __contains__(self, vertex_id: str) -> bool:
        return vertex_id in self._vertices

    @property
    def vertex_ids(self) -> tuple[str, ...]:
        return tuple(self._vertices)

    def add_vertex(self, vertex: Vertex) -> Vertex:
        if vertex.id in self._vertices:
            raise ValueError(f"duplicate vertex id {vertex.id!r}")
        self._vertices[vertex.id] = vertex
        return vertex

    def add_edge(self, tail: str, head: str) -> None:
        if tail not in self._vertices or head not in self._vertices:
            missing = tail if tail not in self._vertices else head
            raise ValueError(f"edge ({tail!r}, {head!r}) references unknown vertex {missing!r}")
        if tail == head:
            raise ValueError(f"self edge on {tail!r}")
        pair = (tail, head)
        if pair not in self._edge_set:
            self._edge_set.add(pair)
            self._edges.append(pair)

    def add_precedence(self, before: str, after: str) -> None:
        self._precedence.add((before, after))

    def add_exclusion(self, a: str, b: str) -> None:
        self._exclusion.add(_norm_pair(a, b))

    def build(self, source: str, validate: bool = True) -> TokenFlowDag:
        dag = TokenFlowDag(
            vertices=tuple(self._vertices.values()),
            edges=tuple(self._edges),
            source=source,
            constraints=ConstraintSet(
                precedence=frozenset(self._precedence),
                exclusion=frozenset(self._exclusion),
            ),
        )
        if validate:
            report = validate_dag(dag)
            if report:
                raise ValueError("built an invalid DAG: " + "; ".join(report))
        return dag


def token_rates(dag: TokenFlowDag) -> dict[str, float]:
    """Expected input tokens per process instance for every vertex.

    The source receives one token; every other vertex receives the sum of
    its predecessors' output rates (input rate times selectivity).
    """
    rates = {v.id: 0.0 for v in dag.vertices}
    rates[dag.source] = 1.0
    for vertex_id in dag.topological_order():
        out_rate = rates[vertex_id] * dag.vertex_map[vertex_id].selectivity
        for nxt in dag.successors[vertex_id]:
            rates[nxt] += out_rate
    return rates


def token_rate(dag: TokenFlowDag, vertex_id: str) -> float:
    """Input token rate of one vertex; raises ``KeyError`` if unknown."""
    if vertex_id not in dag.vertex_map:
        raise KeyError(f"unknown vertex {vertex_id!r}")
    return token_rates(dag)[vertex_id]


def validate_dag(dag: TokenFlowDag) -> list[str]:
    """Check every structural invariant; returns the list of violations.

    An empty report means the DAG is valid. Never raises.
    """
    report: list[str] = []
    ids = {v.id for v in dag.vertices}
    if len(ids) != len(dag.vertices):
        report.append("duplicate vertex ids")
    if dag.source not in ids:
        report.append(f"source {dag.source!r} is not a vertex")

    for vertex in dag.vertices:
        if vertex.cost < 0:
            report.append(f"vertex {vertex.id!r} has negative cost")
        if vertex.selectivity <= 0:
            report.append(f"vertex {vertex.id!r} has non-positive selectivity")

    seen_edges = set()
    dangling = False
    for tail, head in dag.edges:
        if tail not in ids or head not in ids:
            report.append(f"edge ({tail!r}, {head!r}) references an unknown vertex")
            dangling = True
        if tail == head:
            report.append(f"self edge on {tail!r}")
        if (tail, head) in seen_edges:
            report.append(f"duplicate edge ({tail!r}, {head!r})")
        seen_edges.add((tail, head))

    if not dangling:
        try:
            dag.topological_order()
        except CycleError:
            report.append("edge set contains a cycle")
        else:
            if dag.source in ids:
                reachable = {dag.source}
                frontier = deque([dag.source])
                while frontier:
                    node = frontier.popleft()
                    for nxt in dag.successors[node]:
                        if nxt not in reachable:
                            reachable.add(nxt)
                            frontier.append(nxt)
                for vertex in dag.vertices:
                    if vertex.id not in reachable:
                        report.append(f"vertex {vertex.id!r} unreachable from source")

    constraints = dag.constraints
    for a, b in constraints.precedence:
        if a not in ids or b not in ids:
            report.append(f"precedence pair ({a!r}, {b!r}) references an unknown vertex")
    for a, b in constraints.exclusion:
        if a not in ids or b not in ids:
            report.append(f"exclusion pair ({a!r}, {b!r}) references an unknown vertex")
        if a == b:
            report.append(f"exclusion pair on a single vertex {a!r}")
    try:
        closed = transitive_closure(constraints)
    except CycleError:
        report.append("precedence constraints contain a cycle")
    else:
        for a, b in closed.precedence:
            if closed.excludes(a, b):
                report.append(f"constraint conflict: ({a!r}, {b!r}) in both precedence and exclusion")
    return report


# --- interchange format -------------------------------------------------

_KIND_BY_NAME = {kind.value: kind for kind in VertexKind}


def _vertex_to_dict(vertex: Vertex) -> dict:
    return {
        "id": vertex.id,
        "origin": vertex.origin,
        "kind": vertex.kind.value,
        "cost": vertex.cost,
        "selectivity": vertex.selectivity,
        "pipelining": vertex.pipelining,
        "parallel_degree": vertex.max_degree if vertex.parallelizable else 1,
    }


def dag_to_dict(dag: TokenFlowDag) -> dict:
    return {
        "vertices": [_vertex_to_dict(v) for v in dag.vertices],
        "edges": [[a, b] for a, b in dag.edges],
        "source": dag.source,
        "constraints": {
            "precedence": sorted([a, b] for a, b in dag.constraints.precedence),
            "exclusion": sorted([a, b] for a, b in dag.constraints.exclusion),
        },
    }


def dag_from_dict(doc: dict) -> TokenFlowDag:
    if not isinstance(doc, dict):
        raise DagFormatError("DAG document must be a JSON object")
    missing = {"vertices", "edges", "source"} - set(doc)
    if missing:
        raise DagFormatError(f"DAG document is missing keys: {sorted(missing)}")
    builder = DagBuilder()
    for raw in doc["vertices"]:
        if not isinstance(raw, dict):
            raise DagFormatError("each vertex must be an object")
        unknown = set(raw) - {"id", "origin", "kind", "cost", "selectivity",
                              "pipelining", "parallel_degree"}
        if unknown:
            raise DagFormatError(f"vertex has unknown fields: {sorted(unknown)}")
        try:
            kind = _KIND_BY_NAME[raw.get("kind", "Ordinary")]
        except KeyError:
            raise DagFormatError(f"unknown vertex kind {raw.get('kind')!r}") from None
        degree = int(raw.get("parallel_degree", 1))
        try:
            vertex = Vertex(
                id=str(raw["id"]),
                kind=kind,
                cost=float(raw.get("cost", 0.0)),
                selectivity=float(raw.get("selectivity", 1.0)),
                origin=str(raw["origin"]) if raw.get("origin") is not None else None,
                pipelining=bool(raw.get("pipelining", True)),
                parallelizable=degree > 1,
                max_degree=max(degree, 1),
            )
            builder.add_vertex(vertex)
        except (KeyError, ValueError) as exc:
            raise DagFormatError(str(exc)) from exc
    try:
        for pair in doc["edges"]:
            builder.add_edge(str(pair[0]), str(pair[1]))
        constraints = doc.get("constraints", {})
        for a, b in constraints.get("precedence", []):
            builder.add_precedence(str(a), str(b))
        for a, b in constraints.get("exclusion", []):
            builder.add_exclusion(str(a), str(b))
        return builder.build(source=str(doc["source"]), validate=False)
    except (ValueError, IndexError, TypeError) as exc:
        raise DagFormatError(str(exc)) from exc


def loads_dag(text: str | bytes) -> TokenFlowDag:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DagFormatError(f"DAG document is not valid JSON: {exc}") from exc
    return dag_from_dict(doc)


def load_dag(source) -> TokenFlowDag:
    if hasattr(source, "read"):
        return loads_dag(source.read())
    with open(source, "rb") as handle:
        return loads_dag(handle.read())


def dumps_dag(dag: TokenFlowDag) -> str:
    return json.dumps(dag_to_dict(dag), indent=2) + "\n"


def save_dag(dag: TokenFlowDag, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps_dag(dag))


def to_dot(dags: TokenFlowDag | list[TokenFlowDag]) -> str:
    """Render one digraph per DAG; dummy vertices get dashed borders and
    edge labels show the tail vertex's selectivity."""
    if isinstance(dags, TokenFlowDag):
        dags = [dags]
    chunks = []
    for i, dag in enumerate(dags):
        lines = [f"digraph dag{i + 1} {{", "  rankdir=LR;"]
        for vertex in dag.vertices:
            label = f"{vertex.id}\\ncost={vertex.cost:g} sel={vertex.selectivity:g}"
            style = ', style=dashed' if vertex.is_dummy else ""
            lines.append(f'  "{vertex.id}" [label="{label}"{style}];')
        for tail, head in dag.edges:
            sel = dag.vertex_map[tail].selectivity
            lines.append(f'  "{tail}" -> "{head}" [label="{sel:g}"];')
        lines.append("}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"
