"""Causal structure: DAGs, layerings, graph surgery and path-blocking separation.

Nodes are identified by integer ids. Every object here is immutable; the
surgery functions return new graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations
from typing import Iterable, Iterator, Sequence

EXOGENOUS = "exogenous"
INTERNAL = "internal"
TERMINAL = "terminal"
KINDS = (EXOGENOUS, INTERNAL, TERMINAL)

CLASSICAL = "classical"
QUANTUM = "quantum"
RULESETS = (CLASSICAL, QUANTUM)

# guards for exhaustive path enumeration
PATH_NODE_CAP = 12
INDEPENDENCE_NODE_CAP = 8


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    name: str
    dim: int = 2
    kind: str | None = None


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph with node dimensions and kinds.

    If a node is created with ``kind=None`` its kind is derived from the
    edges: no parents gives exogenous, no children gives terminal, anything
    else is internal. Isolated nodes count as exogenous.
    """

    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        nodes = tuple(self.nodes)
        edges = tuple(sorted((int(a), int(b)) for a, b in self.edges))
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids")
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            raise GraphError("duplicate node names")
        idset = set(ids)
        for a, b in edges:
            if a not in idset or b not in idset:
                raise GraphError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise GraphError(f"self-loop on node {a}")
        if len(set(edges)) != len(edges):
            raise GraphError("duplicate edges")
        has_in = {b for _, b in edges}
        has_out = {a for a, _ in edges}
        fixed = []
        for n in nodes:
            if n.dim < 2:
                raise GraphError(f"node {n.name!r} has dim {n.dim} < 2")
            kind = n.kind
            if kind is None:
                if n.id not in has_in:
                    kind = EXOGENOUS
                elif n.id not in has_out:
                    kind = TERMINAL
                else:
                    kind = INTERNAL
            if kind not in KINDS:
                raise GraphError(f"node {n.name!r} has unknown kind {kind!r}")
            if kind == EXOGENOUS and n.id in has_in:
                raise GraphError(f"exogenous node {n.name!r} has incoming edges")
            if kind == TERMINAL and n.id in has_out:
                raise GraphError(f"terminal node {n.name!r} has outgoing edges")
            fixed.append(replace(n, kind=kind))
        object.__setattr__(self, "nodes", tuple(sorted(fixed, key=lambda n: n.id)))
        object.__setattr__(self, "edges", edges)
        self.topological_order  # raises on cycles

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], dims: dict | None = None,
                   names: Sequence[str] | None = None) -> "Dag":
        """Build a DAG from named edges, e.g. ``Dag.from_edges([("X", "Y")])``.

        Node ids follow first appearance (or the order of ``names``).
        """
        edges = list(edges)
        order = list(names or [])
        for a, b in edges:
            for v in (a, b):
                if v not in order:
                    order.append(v)
        dims = dims or {}
        nodes = [Node(i, nm, int(dims.get(nm, 2))) for i, nm in enumerate(order)]
        ix = {nm: i for i, nm in enumerate(order)}
        return cls(tuple(nodes), tuple((ix[a], ix[b]) for a, b in edges))

    @cached_property
    def ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes)

    @cached_property
    def _by_id(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def _by_name(self) -> dict[str, Node]:
        return {n.name: n for n in self.nodes}

    def node(self, x: int) -> Node:
        try:
            return self._by_id[x]
        except KeyError:
            raise GraphError(f"unknown node id {x!r}") from None

    def id_of(self, name: str) -> int:
        try:
            return self._by_name[name].id
        except KeyError:
            raise GraphError(f"unknown node name {name!r}") from None

    def resolve(self, x) -> int:
        """Accept a node id or a node name and return the id."""
        if isinstance(x, str):
            return self.id_of(x)
        self.node(x)
        return int(x)

    def name(self, x: int) -> str:
        return self.node(x).name

    def dim(self, x: int) -> int:
        return self.node(x).dim

    def kind(self, x: int) -> str:
        return self.node(x).kind

    @cached_property
    def _parents(self) -> dict[int, frozenset]:
        out = {i: set() for i in self.ids}
        for a, b in self.edges:
            out[b].add(a)
        return {k: frozenset(v) for k, v in out.items()}

    @cached_property
    def _children(self) -> dict[int, frozenset]:
        out = {i: set() for i in self.ids}
        for a, b in self.edges:
            out[a].add(b)
        return {k: frozenset(v) for k, v in out.items()}

    def parents(self, x: int) -> frozenset:
        self.node(x)
        return self._parents[x]

    def children(self, x: int) -> frozenset:
        self.node(x)
        return self._children[x]

    def _reach(self, x: int, step: dict) -> frozenset:
        seen: set[int] = set()
        stack = list(step[x])
        while stack:
            v = stack.pop()
            if v not in seen:
                seen.add(v)
                stack.extend(step[v])
        return frozenset(seen)

    @cached_property
    def _ancestors(self) -> dict[int, frozenset]:
        return {i: self._reach(i, self._parents) for i in self.ids}

    @cached_property
    def _descendants(self) -> dict[int, frozenset]:
        return {i: self._reach(i, self._children) for i in self.ids}

    def ancestors(self, x: int) -> frozenset:
        self.node(x)
        return self._ancestors[x]

    def descendants(self, x: int) -> frozenset:
        self.node(x)
        return self._descendants[x]

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        # Kahn's algorithm, smallest id first for determinism
        indeg = {i: 0 for i in self.ids}
        for _, b in self.edges:
            indeg[b] += 1
        ready = sorted(i for i, k in indeg.items() if k == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in sorted(self._children[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        if len(order) != len(self.nodes):
            raise GraphError("graph has a cycle")
        return tuple(order)

    def with_edges(self, edges, kinds: dict | None = None, drop: Iterable[int] = ()) -> "Dag":
        """Copy with a new edge set; kinds are re-derived unless given."""
        drop = set(drop)
        kinds = kinds or {}
        nodes = tuple(replace(n, kind=kinds.get(n.id)) for n in self.nodes if n.id not in drop)
        return Dag(nodes, tuple(sorted(set(edges))))


@dataclass(frozen=True)
class Kin:
    parents: frozenset
    children: frozenset
    ancestors: frozenset
    descendants: frozenset


def kin(dag: Dag, x) -> Kin:
    x = dag.resolve(x)
    return Kin(dag.parents(x), dag.children(x), dag.ancestors(x), dag.descendants(x))


# --- layerings -------------------------------------------------------------

@dataclass(frozen=True)
class Layering:
    layers: tuple[frozenset, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(frozenset(int(v) for v in L) for L in self.layers))

    @classmethod
    def of(cls, dag: Dag, layers: Sequence[Iterable]) -> "Layering":
        """Layering from node ids or names."""
        return cls(tuple(frozenset(dag.resolve(v) for v in L) for L in layers))

    def __len__(self):
        return len(self.layers)

    def layer_of(self, x: int) -> int:
        for j, L in enumerate(self.layers):
            if x in L:
                return j
        raise GraphError(f"node {x!r} is not in any layer")

    def ordered(self, j: int) -> tuple[int, ...]:
        return tuple(sorted(self.layers[j]))

    @property
    def order(self) -> tuple[int, ...]:
        """All nodes, layer by layer, ids ascending inside a layer."""
        return tuple(v for j in range(len(self.layers)) for v in self.ordered(j))


@dataclass(frozen=True)
class LayeringReport:
    valid: bool
    problems: tuple[str, ...] = field(default=())

    def __bool__(self):
        return self.valid


def validate_layering(dag: Dag, layering: Layering) -> LayeringReport:
    """Check that ``layering`` makes ``dag`` a layered DAG.

    Two conditions: no node is an ancestor of another node in its own
    layer, and every path between layers i and k (i < j < k) meets layer j.
    Paths are read as undirected, so the second condition amounts to every
    edge joining adjacent layers.
    """
    problems = []
    seen: dict[int, int] = {}
    for j, L in enumerate(layering.layers):
        if not L:
            problems.append(f"layer {j} is empty")
        for v in L:
            if v in seen:
                problems.append(f"node {dag.name(v) if v in dag.ids else v} is in layers {seen[v]} and {j}")
            seen[v] = j
    missing = set(dag.ids) - set(seen)
    extra = set(seen) - set(dag.ids)
    if missing:
        problems.append("nodes missing from layering: " + ", ".join(dag.name(v) for v in sorted(missing)))
    if extra:
        problems.append(f"unknown nodes in layering: {sorted(extra)}")
    if problems:
        return LayeringReport(False, tuple(problems))
    for j, L in enumerate(layering.layers):
        for a in sorted(L):
            for b in sorted(L):
                if a != b and a in dag.ancestors(b):
                    problems.append(f"{dag.name(a)} is an ancestor of {dag.name(b)} inside layer {j}")
    for a, b in dag.edges:
        ja, jb = seen[a], seen[b]
        if abs(ja - jb) != 1:
            problems.append(
                f"edge {dag.name(a)}->{dag.name(b)} joins layers {ja} and {jb} "
                "and is not intercepted by the layers between them")
    return LayeringReport(not problems, tuple(problems))


# --- surgery ---------------------------------------------------------------

def surgery_do(dag: Dag, w) -> Dag:
    """Cut every edge into ``w``; ``w`` becomes exogenous."""
    w = dag.resolve(w)
    edges = [(a, b) for a, b in dag.edges if b != w]
    kinds = {n.id: n.kind for n in dag.nodes}
    kinds[w] = EXOGENOUS
    # a former internal/terminal parent may have lost its only child
    for p in dag.parents(w):
        if not any(a == p for a, _ in edges) and kinds[p] == INTERNAL:
            kinds[p] = TERMINAL
    return dag.with_edges(edges, kinds)


def surgery_undo(dag: Dag, z) -> Dag:
    """Delete ``z`` and wire each of its parents directly to each of its children."""
    z = dag.resolve(z)
    if dag.kind(z) == EXOGENOUS:
        raise GraphError(f"cannot un-measure exogenous node {dag.name(z)!r}: the operation is ambiguous there")
    edges = {(a, b) for a, b in dag.edges if z not in (a, b)}
    for p in dag.parents(z):
        for c in dag.children(z):
            edges.add((p, c))
    kinds = {}
    for n in dag.nodes:
        if n.id == z:
            continue
        has_in = any(b == n.id for _, b in edges)
        has_out = any(a == n.id for a, _ in edges)
        if n.kind == EXOGENOUS or not has_in:
            kinds[n.id] = EXOGENOUS
        elif not has_out:
            kinds[n.id] = TERMINAL
        else:
            kinds[n.id] = INTERNAL
    return dag.with_edges(edges, kinds, drop=[z])


def reverse_dag(dag: Dag) -> Dag:
    swap = {EXOGENOUS: TERMINAL, TERMINAL: EXOGENOUS, INTERNAL: INTERNAL}
    # isolated nodes stay exogenous so that reversal is an involution
    kinds = {}
    for n in dag.nodes:
        isolated = not dag.parents(n.id) and not dag.children(n.id)
        kinds[n.id] = n.kind if isolated else swap[n.kind]
    return dag.with_edges([(b, a) for a, b in dag.edges], kinds)


# --- separation ------------------------------------------------------------

def undirected_paths(dag: Dag, u: int, v: int, avoid: frozenset = frozenset()) -> Iterator[tuple[int, ...]]:
    """All simple paths from u to v in the skeleton, interior avoiding ``avoid``."""
    nbrs = {i: sorted(dag._parents[i] | dag._children[i]) for i in dag.ids}
    path = [u]
    on_path = {u}

    def walk(x):
        for y in nbrs[x]:
            if y == v:
                yield tuple(path) + (v,)
            elif y not in on_path and y not in avoid:
                path.append(y)
                on_path.add(y)
                yield from walk(y)
                path.pop()
                on_path.discard(y)

    if u == v:
        return
    yield from walk(u)


def _triple_blocked(dag: Dag, a: int, c: int, b: int, W: frozenset, rules: str) -> bool:
    into_c_from_a = c in dag._children[a]
    into_c_from_b = c in dag._children[b]
    if into_c_from_a and into_c_from_b:
        # collider
        return c not in W and not (dag._descendants[c] & W)
    if not into_c_from_a and not into_c_from_b:
        # fork
        if rules == CLASSICAL:
            return c in W
        return c not in W and not (dag._ancestors[c] & W)
    # chain
    return c in W


def path_blocked(dag: Dag, path: Sequence[int], W: frozenset, rules: str) -> bool:
    return any(_triple_blocked(dag, path[i - 1], path[i], path[i + 1], W, rules)
               for i in range(1, len(path) - 1))


def _check_rules(rules):
    rules = getattr(rules, "tag", rules)
    if rules not in RULESETS:
        raise GraphError(f"unknown ruleset {rules!r}; expected one of {RULESETS}")
    return rules


def _as_ids(dag: Dag, xs) -> frozenset:
    if isinstance(xs, (int, str)):
        xs = [xs]
    return frozenset(dag.resolve(x) for x in xs)


def separated(dag: Dag, U, V, W, rules=QUANTUM, node_cap: int = PATH_NODE_CAP) -> bool:
    """True iff every undirected path between U and V is blocked by W.

    Chains block iff the middle node is in W and colliders block iff
    neither the middle node nor any of its descendants is in W. Forks
    depend on the ruleset. Classically a fork blocks iff its middle node
    is in W. Under the quantum ruleset a fork blocks iff neither the
    middle node nor any of its ancestors is in W.
    """
    rules = _check_rules(rules)
    if len(dag.nodes) > node_cap:
        raise GraphError(f"path enumeration capped at {node_cap} nodes, graph has {len(dag.nodes)}")
    U, V, W = _as_ids(dag, U), _as_ids(dag, V), _as_ids(dag, W)
    if (U & V) or (U & W) or (V & W):
        raise GraphError("U, V and W must be pairwise disjoint")
    endpoints = U | V
    for u in sorted(U):
        for v in sorted(V):
            # paths through another endpoint contain a shorter U-V path
            for path in undirected_paths(dag, u, v, endpoints):
                if not path_blocked(dag, path, W, rules):
                    return False
    return True


def _subsets(items: Sequence[int], max_size: int | None = None):
    top = len(items) if max_size is None else min(max_size, len(items))
    for k in range(0, top + 1):
        yield from combinations(items, k)


def implied_independences(dag: Dag, rules=QUANTUM, max_set_size: int = 1,
                          node_cap: int = INDEPENDENCE_NODE_CAP) -> list[tuple[frozenset, frozenset, frozenset]]:
    """Every separated triple (U, V, W) with |U|, |V| <= max_set_size.

    W ranges over all subsets of the remaining nodes. Symmetric duplicates
    are dropped by keeping only U < V in sorted-tuple order.
    """
    rules = _check_rules(rules)
    n = len(dag.nodes)
    if n > node_cap:
        raise GraphError(f"independence enumeration capped at {node_cap} nodes, graph has {n}")
    ids = list(dag.ids)
    out = []
    sides = [s for s in _subsets(ids, max_set_size) if s]
    for U in sides:
        for V in sides:
            if U >= V or set(U) & set(V):
                continue
            endpoints = frozenset(U) | frozenset(V)
            paths = [p for u in U for v in V for p in undirected_paths(dag, u, v, endpoints)]
            rest = [i for i in ids if i not in endpoints]
            for Wt in _subsets(rest):
                W = frozenset(Wt)
                if all(path_blocked(dag, p, W, rules) for p in paths):
                    out.append((frozenset(U), frozenset(V), W))
    return out
