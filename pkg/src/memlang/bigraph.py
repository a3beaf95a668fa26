"""Memo-tables as finite bipartite graphs.

Left nodes stand for memoized functions, right nodes for atoms, and each
(left, right) pair carries an edge value: True, False, or None for
not-yet-sampled.  A graph with no None entries is total; total graphs are
the worlds of the compositional evaluator, while evaluation states carry
partial graphs.  All values are immutable; updates return new graphs.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

EdgeVal = Optional[bool]

DEFAULT_MAX_UNDEF = 20


class EdgeAlreadyDefined(Exception):
    def __init__(self, fun: int, atom: int):
        super().__init__(f"edge ({fun}, {atom}) is already defined")
        self.pair = (fun, atom)


class TooManyUndefined(Exception):
    def __init__(self, count: int, limit: int):
        super().__init__(f"{count} undefined edges exceed the completion limit {limit}")
        self.count = count
        self.limit = limit


class CrossEdgeError(Exception):
    """The glued graph would need edges neither input determines."""


def _completion_limit() -> int:
    return int(os.environ.get("MEMLANG_MAX_UNDEF", str(DEFAULT_MAX_UNDEF)))


class PartialBigraph:
    __slots__ = ("_left", "_right", "_edges", "_key")

    def __init__(
        self,
        left: Iterable[int] = (),
        right: Iterable[int] = (),
        edges: Mapping[tuple[int, int], EdgeVal] | None = None,
    ):
        self._left = frozenset(left)
        self._right = frozenset(right)
        edges = dict(edges or {})
        domain = {(f, a) for f in self._left for a in self._right}
        if set(edges) != domain:
            raise ValueError("edge map must be defined on exactly left x right")
        self._edges = edges
        self._key = (
            tuple(sorted(self._left)),
            tuple(sorted(self._right)),
            tuple(sorted(edges.items())),
        )

    @property
    def left(self) -> frozenset[int]:
        return self._left

    @property
    def right(self) -> frozenset[int]:
        return self._right

    def edge(self, fun: int, atom: int) -> EdgeVal:
        return self._edges[(fun, atom)]

    def edge_items(self) -> list[tuple[tuple[int, int], EdgeVal]]:
        return sorted(self._edges.items())

    def is_total(self) -> bool:
        return all(v is not None for v in self._edges.values())

    def undefined_pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset(p for p, v in self._edges.items() if v is None)

    def _fresh_label(self, side: frozenset[int]) -> int:
        return max(side) + 1 if side else 0

    def add_left_undef(self) -> tuple["PartialBigraph", int]:
        """New function node with a not-yet-sampled edge to every atom."""
        fun = self._fresh_label(self._left)
        edges = dict(self._edges)
        for atom in self._right:
            edges[(fun, atom)] = None
        return PartialBigraph(self._left | {fun}, self._right, edges), fun

    def add_right_undef(self) -> tuple["PartialBigraph", int]:
        """New atom node with a not-yet-sampled edge from every function."""
        atom = self._fresh_label(self._right)
        edges = dict(self._edges)
        for fun in self._left:
            edges[(fun, atom)] = None
        return PartialBigraph(self._left, self._right | {atom}, edges), atom

    def set_edge(self, fun: int, atom: int, value: bool) -> "PartialBigraph":
        if self._edges[(fun, atom)] is not None:
            raise EdgeAlreadyDefined(fun, atom)
        edges = dict(self._edges)
        edges[(fun, atom)] = bool(value)
        return PartialBigraph(self._left, self._right, edges)

    def restrict(self, keep_left: Iterable[int], keep_right: Iterable[int]) -> "PartialBigraph":
        keep_left = frozenset(keep_left)
        keep_right = frozenset(keep_right)
        if not keep_left <= self._left or not keep_right <= self._right:
            raise ValueError("keep sets must be subsets of the node sets")
        edges = {
            (f, a): v
            for (f, a), v in self._edges.items()
            if f in keep_left and a in keep_right
        }
        return PartialBigraph(keep_left, keep_right, edges)

    def completions(self, limit: int | None = None) -> list[tuple["TotalBigraph", dict[tuple[int, int], bool]]]:
        """All total extensions, in binary-counting order over the sorted
        undefined pairs (False before True)."""
        undef = sorted(self.undefined_pairs())
        limit = _completion_limit() if limit is None else limit
        if len(undef) > limit:
            raise TooManyUndefined(len(undef), limit)
        out = []
        for bits in itertools.product((False, True), repeat=len(undef)):
            assign = dict(zip(undef, bits))
            edges = dict(self._edges)
            edges.update(assign)
            out.append((TotalBigraph(self._left, self._right, edges), assign))
        return out

    def to_total(self) -> "TotalBigraph":
        if not self.is_total():
            raise ValueError("graph has undefined edges")
        return TotalBigraph(self._left, self._right, self._edges)

    def to_json(self) -> dict:
        names = {True: "true", False: "false", None: "undef"}
        return {
            "left": sorted(self._left),
            "right": sorted(self._right),
            "edges": [[f, a, names[v]] for (f, a), v in self.edge_items()],
        }

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PartialBigraph) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"PartialBigraph(left={sorted(self._left)}, right={sorted(self._right)}, edges={self.edge_items()})"


class TotalBigraph(PartialBigraph):
    """A memo-table with every edge sampled."""

    def __init__(self, left=(), right=(), edges=None):
        super().__init__(left, right, edges)
        if any(v is None for _, v in self.edge_items()):
            raise ValueError("total bigraph cannot contain undefined edges")

    def add_left_defined(self, row: Mapping[int, bool]) -> tuple["TotalBigraph", int]:
        if set(row) != set(self._right):
            raise ValueError("row must assign every atom")
        fun = self._fresh_label(self._left)
        edges = dict(self._edges)
        for atom, v in row.items():
            edges[(fun, atom)] = bool(v)
        return TotalBigraph(self._left | {fun}, self._right, edges), fun

    def add_right_defined(self, column: Mapping[int, bool]) -> tuple["TotalBigraph", int]:
        if set(column) != set(self._left):
            raise ValueError("column must assign every function")
        atom = self._fresh_label(self._right)
        edges = dict(self._edges)
        for fun, v in column.items():
            edges[(fun, atom)] = bool(v)
        return TotalBigraph(self._left, self._right | {atom}, edges), atom


def empty() -> PartialBigraph:
    return PartialBigraph()


def empty_total() -> TotalBigraph:
    return TotalBigraph()


@dataclass(frozen=True)
class Embedding:
    """Injective, edge-preserving map between graphs.

    Edge values (including undefined ones) must agree: the target never
    adds or removes information on pairs coming from the source.
    """

    source: PartialBigraph
    target: PartialBigraph
    left_map: tuple[tuple[int, int], ...]
    right_map: tuple[tuple[int, int], ...]

    @staticmethod
    def make(source, target, left_map: Mapping[int, int], right_map: Mapping[int, int]) -> "Embedding":
        emb = Embedding(source, target, tuple(sorted(left_map.items())), tuple(sorted(right_map.items())))
        emb.validate()
        return emb

    @staticmethod
    def inclusion(source: PartialBigraph, target: PartialBigraph) -> "Embedding":
        return Embedding.make(
            source, target,
            {f: f for f in source.left},
            {a: a for a in source.right},
        )

    def lmap(self) -> dict[int, int]:
        return dict(self.left_map)

    def rmap(self) -> dict[int, int]:
        return dict(self.right_map)

    def validate(self) -> None:
        lm, rm = self.lmap(), self.rmap()
        if set(lm) != set(self.source.left) or set(rm) != set(self.source.right):
            raise ValueError("embedding must be defined on exactly the source nodes")
        if len(set(lm.values())) != len(lm) or len(set(rm.values())) != len(rm):
            raise ValueError("embedding must be injective")
        if not set(lm.values()) <= set(self.target.left) or not set(rm.values()) <= set(self.target.right):
            raise ValueError("embedding must land in the target nodes")
        for f in self.source.left:
            for a in self.source.right:
                if self.source.edge(f, a) != self.target.edge(lm[f], rm[a]):
                    raise ValueError(f"embedding does not preserve edge ({f}, {a})")


def is_embedding(source, target, left_map, right_map) -> bool:
    try:
        Embedding.make(source, target, left_map, right_map)
        return True
    except ValueError:
        return False


def pushout(leg_h: Embedding, leg_g2: Embedding) -> tuple[PartialBigraph, Embedding, Embedding]:
    """Glue two extensions of a common graph along it.

    Fresh nodes of both targets are kept disjoint.  If one target has fresh
    left nodes and the other fresh right nodes, the glued graph would need
    edges neither input determines; that case raises CrossEdgeError (callers
    that know the missing biases must fill such edges themselves).
    """
    if leg_h.source != leg_g2.source:
        raise ValueError("both legs must share the same source graph")
    g = leg_h.source
    h, g2 = leg_h.target, leg_g2.target
    h_lmap, h_rmap = leg_h.lmap(), leg_h.rmap()
    g2_lmap, g2_rmap = leg_g2.lmap(), leg_g2.rmap()

    fresh_h_left = sorted(set(h.left) - set(h_lmap.values()))
    fresh_h_right = sorted(set(h.right) - set(h_rmap.values()))
    fresh_g2_left = sorted(set(g2.left) - set(g2_lmap.values()))
    fresh_g2_right = sorted(set(g2.right) - set(g2_rmap.values()))
    if (fresh_h_left and fresh_g2_right) or (fresh_g2_left and fresh_h_right):
        raise CrossEdgeError(
            "gluing would create function/atom pairs with no edge value"
        )

    # result labels: 0.. for the shared part, then h's fresh part, then g2's
    out_lh: dict[int, int] = {}
    out_rh: dict[int, int] = {}
    out_lg2: dict[int, int] = {}
    out_rg2: dict[int, int] = {}
    next_l = next_r = 0
    for f in sorted(g.left):
        out_lh[h_lmap[f]] = out_lg2[g2_lmap[f]] = next_l
        next_l += 1
    for a in sorted(g.right):
        out_rh[h_rmap[a]] = out_rg2[g2_rmap[a]] = next_r
        next_r += 1
    for f in fresh_h_left:
        out_lh[f] = next_l
        next_l += 1
    for f in fresh_g2_left:
        out_lg2[f] = next_l
        next_l += 1
    for a in fresh_h_right:
        out_rh[a] = next_r
        next_r += 1
    for a in fresh_g2_right:
        out_rg2[a] = next_r
        next_r += 1

    edges: dict[tuple[int, int], EdgeVal] = {}
    for f in h.left:
        for a in h.right:
            edges[(out_lh[f], out_rh[a])] = h.edge(f, a)
    for f in g2.left:
        for a in g2.right:
            edges[(out_lg2[f], out_rg2[a])] = g2.edge(f, a)
    graph = PartialBigraph(range(next_l), range(next_r), edges)
    if graph.is_total():
        graph = graph.to_total()
    emb_h = Embedding.make(h, graph, out_lh, out_rh)
    emb_g2 = Embedding.make(g2, graph, out_lg2, out_rg2)
    return graph, emb_h, emb_g2


def smallest_free(count: int, used: Iterable[int]) -> list[int]:
    """The smallest ``count`` naturals outside ``used``, ascending."""
    used = set(used)
    out: list[int] = []
    candidate = 0
    while len(out) < count:
        if candidate not in used:
            out.append(candidate)
        candidate += 1
    return out


def canonical_relabel(
    graph: PartialBigraph,
    fixed_left: Iterable[int],
    fixed_right: Iterable[int],
    order_left: Iterable[int],
    order_right: Iterable[int],
) -> tuple[PartialBigraph, dict[int, int], dict[int, int]]:
    """Renumber the non-fixed nodes to the smallest free labels, in the
    given order, leaving fixed nodes untouched.  Returns the relabeled graph
    and the per-side label maps (defined on all nodes)."""
    fixed_left = frozenset(fixed_left)
    fixed_right = frozenset(fixed_right)
    order_left = list(order_left)
    order_right = list(order_right)
    if set(order_left) != set(graph.left) - fixed_left or len(set(order_left)) != len(order_left):
        raise ValueError("order_left must list exactly the non-fixed left nodes")
    if set(order_right) != set(graph.right) - fixed_right or len(set(order_right)) != len(order_right):
        raise ValueError("order_right must list exactly the non-fixed right nodes")
    lmap = {f: f for f in fixed_left}
    rmap = {a: a for a in fixed_right}
    lmap.update(zip(order_left, smallest_free(len(order_left), fixed_left)))
    rmap.update(zip(order_right, smallest_free(len(order_right), fixed_right)))
    edges = {
        (lmap[f], rmap[a]): graph.edge(f, a) for f in graph.left for a in graph.right
    }
    out = PartialBigraph(lmap.values(), rmap.values(), edges)
    if graph.is_total():
        out = out.to_total()
    return out, lmap, rmap
