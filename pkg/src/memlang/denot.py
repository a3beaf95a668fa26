"""Compositional semantics over totally populated memo-table worlds.

A computation at a world g (a total bigraph) denotes, for each assignment of
biases to g's functions, an exact distribution over canonical classes: a
result value together with just the fresh structure it mentions.  Fresh
nodes a value does not mention are garbage-collected and their edge choices
marginalized away, so boolean results always collapse to bare classes.

A class records, relative to its base world: the value, fresh function
labels with their biases (the chance of answering true on atoms that do not
exist yet), fresh atom labels, and every edge touching a fresh node.  Fresh
labels are renumbered to the smallest labels absent from the base, in first
occurrence order of a left-to-right traversal of the value, which makes the
representative canonical.

Memoized functions are interpreted by sampling a full row of answers over
the existing atoms (one probability per atom, obtained by running the body
on that atom) plus a single bias for future atoms.  That bias must not
depend on how a hypothetical new atom is wired to the existing functions;
``FreshnessViolation`` reports a witnessing pair of wirings when it does.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Union

from . import bigraph as B
from . import opsem as O
from . import syntax as S
from .dist import FinDist, ONE, ZERO, HALF, as_prob, dirac, dist_eq, weighted_mix

BiasState = Mapping[int, Fraction]
BiasKey = tuple[tuple[int, Fraction], ...]

EMPTY_WORLD = B.empty_total()


class NonCollapsedClass(Exception):
    """A boolean-typed result still carries world data; canonicalization bug."""


class FreshnessViolation(Exception):
    """A memoized body's bias on a new atom depends on the atom's wiring."""

    def __init__(self, body: S.Comp, witness_a, witness_b):
        conn_a, prob_a = witness_a
        conn_b, prob_b = witness_b
        super().__init__(
            f"body {S.pretty(body)!r} is not freshness-invariant: "
            f"wiring {dict(conn_a)} yields true-probability {prob_a}, "
            f"wiring {dict(conn_b)} yields {prob_b}"
        )
        self.body = body
        self.witness_a = witness_a
        self.witness_b = witness_b


def _bias_key(bias: BiasState) -> BiasKey:
    return tuple(sorted((f, as_prob(p)) for f, p in dict(bias).items()))


# ---------------------------------------------------------------------------
# Canonical classes


@dataclass(frozen=True)
class CanonicalClass:
    base: B.TotalBigraph
    value: O.EnvValue
    fresh_funs: tuple[int, ...]
    fresh_biases: tuple[Fraction, ...]
    fresh_atoms: tuple[int, ...]
    ext_edges: tuple[tuple[int, int, bool], ...]

    def bias_of(self, fun: int) -> Fraction:
        return self.fresh_biases[self.fresh_funs.index(fun)]

    def ext_edge(self, fun: int, atom: int) -> bool:
        for f, a, v in self.ext_edges:
            if f == fun and a == atom:
                return v
        raise KeyError((fun, atom))

    def to_json(self) -> dict:
        return {
            "value": O.value_to_json(self.value),
            "graph": {
                "fresh_left": list(self.fresh_funs),
                "fresh_right": list(self.fresh_atoms),
                "edges": [[f, a, v] for f, a, v in self.ext_edges],
            },
            "biases": {
                f"fun{f}": str(b) for f, b in zip(self.fresh_funs, self.fresh_biases)
            },
        }


def canonicalize(
    base: B.TotalBigraph,
    world: B.TotalBigraph,
    value: O.EnvValue,
    biases: Mapping[int, Fraction],
) -> CanonicalClass:
    """Canonical representative of a value living in an extension of base.

    Fresh nodes absent from the value are discarded together with their
    edges and biases; the retained ones are renumbered to the smallest
    labels the base does not use, in first-occurrence order.
    """
    if not (set(base.left) <= set(world.left) and set(base.right) <= set(world.right)):
        raise ValueError("world does not extend the base graph")

    fresh_fun_order: list[int] = []
    fresh_atom_order: list[int] = []

    def visit(v: O.EnvValue) -> None:
        if isinstance(v, O.AtomV):
            if v.label not in base.right and v.label not in fresh_atom_order:
                fresh_atom_order.append(v.label)
        elif isinstance(v, O.FunV):
            if v.label not in base.left and v.label not in fresh_fun_order:
                fresh_fun_order.append(v.label)
        elif isinstance(v, O.PairV):
            visit(v.fst)
            visit(v.snd)

    visit(value)
    fmap = dict(zip(fresh_fun_order, B.smallest_free(len(fresh_fun_order), base.left)))
    amap = dict(zip(fresh_atom_order, B.smallest_free(len(fresh_atom_order), base.right)))

    def rename(v: O.EnvValue) -> O.EnvValue:
        if isinstance(v, O.AtomV):
            return O.AtomV(amap.get(v.label, v.label))
        if isinstance(v, O.FunV):
            return O.FunV(fmap.get(v.label, v.label))
        if isinstance(v, O.PairV):
            return O.PairV(rename(v.fst), rename(v.snd))
        return v

    edges: list[tuple[int, int, bool]] = []
    for f in [*sorted(base.left), *fresh_fun_order]:
        for a in [*sorted(base.right), *fresh_atom_order]:
            if f in base.left and a in base.right:
                continue
            v = world.edge(f, a)
            assert v is not None
            edges.append((fmap.get(f, f), amap.get(a, a), v))
    return CanonicalClass(
        base,
        rename(value),
        tuple(fmap.values()),
        tuple(as_prob(biases[f]) for f in fresh_fun_order),
        tuple(amap.values()),
        tuple(sorted(edges)),
    )


def class_world(cls: CanonicalClass) -> B.TotalBigraph:
    """Rebuild the total world a class describes: base plus fresh nodes."""
    edges = {pair: v for pair, v in cls.base.edge_items()}
    for f, a, v in cls.ext_edges:
        edges[(f, a)] = v
    return B.TotalBigraph(
        set(cls.base.left) | set(cls.fresh_funs),
        set(cls.base.right) | set(cls.fresh_atoms),
        edges,
    )


# ---------------------------------------------------------------------------
# Bias-indexed distributions


class MonValue:
    """A result at a world: for each bias state over the world's functions,
    an exact distribution over canonical classes at that world."""

    __slots__ = ("base", "_fn", "_cache")

    def __init__(self, base: B.TotalBigraph, fn: Callable[[dict[int, Fraction]], FinDist[CanonicalClass]]):
        self.base = base
        self._fn = fn
        self._cache: dict[BiasKey, FinDist[CanonicalClass]] = {}

    def at(self, bias: BiasState) -> FinDist[CanonicalClass]:
        key = _bias_key(bias)
        if {f for f, _ in key} != set(self.base.left):
            raise ValueError(
                f"bias state must assign exactly the functions {sorted(self.base.left)}"
            )
        if key not in self._cache:
            dist = self._fn(dict(key))
            for cls in dist.support():
                if cls.base != self.base:
                    raise ValueError("class produced at the wrong base world")
            self._cache[key] = dist
        return self._cache[key]


def unit(graph: B.TotalBigraph, value: O.EnvValue) -> MonValue:
    cls = canonicalize(graph, graph, value, {})
    return MonValue(graph, lambda bias: dirac(cls))


def bind(m: MonValue, kont: Callable[[B.TotalBigraph, O.EnvValue], MonValue]) -> MonValue:
    """Sequence m with a continuation evaluated at each class's own world.

    The continuation's classes, living over the extended world, are
    re-expressed over m's base by unioning the fresh parts; garbage
    collection then merges branches that differ only in discarded nodes.
    """
    g = m.base

    def fn(bias: dict[int, Fraction]) -> FinDist[CanonicalClass]:
        branches = []
        for cls, p in m.at(bias).items():
            world = class_world(cls)
            carried = dict(zip(cls.fresh_funs, cls.fresh_biases))
            inner = kont(world, cls.value)
            if inner.base != world:
                raise ValueError("continuation must answer at the extended world")
            lam = dict(bias)
            lam.update(carried)
            flattened = []
            for cls2, q in inner.at(lam).items():
                all_biases = dict(carried)
                all_biases.update(zip(cls2.fresh_funs, cls2.fresh_biases))
                flattened.append(
                    (canonicalize(g, class_world(cls2), cls2.value, all_biases), q)
                )
            branches.append((p, FinDist(flattened)))
        return weighted_mix(branches)

    return MonValue(g, fn)


def transport(m: MonValue, emb: B.Embedding) -> MonValue:
    """Reindex a result along a world extension.

    The bias state is pulled back along the embedding; each class is pushed
    into the larger world.  Edges between a class's fresh nodes and the
    extension's new nodes are not determined by either side, so they are
    sampled: a new function connects to a fresh atom with the function's
    bias, and a fresh function connects to a new atom with the class's
    recorded bias.
    """
    if m.base != emb.source:
        raise ValueError("embedding source must be the result's world")
    target = emb.target
    if not isinstance(target, B.TotalBigraph):
        target = target.to_total()
    lmap, rmap = emb.lmap(), emb.rmap()
    new_funs = sorted(set(target.left) - set(lmap.values()))
    new_atoms = sorted(set(target.right) - set(rmap.values()))

    def fn(bias2: dict[int, Fraction]) -> FinDist[CanonicalClass]:
        bias = {f: bias2[lmap[f]] for f in m.base.left}
        flattened: list[tuple[CanonicalClass, Fraction]] = []
        for cls, p in m.at(bias).items():
            next_f = max(list(target.left) + [-1]) + 1
            next_a = max(list(target.right) + [-1]) + 1
            falias = {f: next_f + i for i, f in enumerate(cls.fresh_funs)}
            aalias = {a: next_a + i for i, a in enumerate(cls.fresh_atoms)}
            fbias = {falias[f]: b for f, b in zip(cls.fresh_funs, cls.fresh_biases)}

            def rename_atom(a: int) -> int:
                return aalias[a] if a in aalias else rmap[a]

            def rename_fun(f: int) -> int:
                return falias[f] if f in falias else lmap[f]

            def rename(v: O.EnvValue) -> O.EnvValue:
                if isinstance(v, O.AtomV):
                    return O.AtomV(rename_atom(v.label))
                if isinstance(v, O.FunV):
                    return O.FunV(rename_fun(v.label))
                if isinstance(v, O.PairV):
                    return O.PairV(rename(v.fst), rename(v.snd))
                return v

            mapped_edges = {
                (rename_fun(f), rename_atom(a)): v for f, a, v in cls.ext_edges
            }
            cross = [(nf, aalias[a]) for nf in new_funs for a in cls.fresh_atoms]
            cross += [(falias[f], na) for f in cls.fresh_funs for na in new_atoms]
            for bits in itertools.product((False, True), repeat=len(cross)):
                weight = p
                for (f, a), bit in zip(cross, bits):
                    chance = bias2[f] if f in bias2 else fbias[f]
                    weight *= chance if bit else ONE - chance
                if weight == ZERO:
                    continue
                edges = {pair: v for pair, v in target.edge_items()}
                edges.update(mapped_edges)
                edges.update({pair: bit for pair, bit in zip(cross, bits)})
                world = B.TotalBigraph(
                    set(target.left) | set(falias.values()),
                    set(target.right) | set(aalias.values()),
                    edges,
                )
                flattened.append(
                    (canonicalize(target, world, rename(cls.value), fbias), weight)
                )
        return FinDist(flattened)

    return MonValue(target, fn)


# ---------------------------------------------------------------------------
# Denotations of the primitives


def _bool_class(graph: B.TotalBigraph, flag: bool) -> CanonicalClass:
    return canonicalize(graph, graph, O.BoolV(flag), {})


def den_flip(graph: B.TotalBigraph, theta) -> MonValue:
    theta = as_prob(theta)
    dist = FinDist([(_bool_class(graph, True), theta), (_bool_class(graph, False), ONE - theta)])
    return MonValue(graph, lambda bias: dist)


def den_app(graph: B.TotalBigraph, fun: int, atom: int) -> MonValue:
    return unit(graph, O.BoolV(bool(graph.edge(fun, atom))))


def den_eq(graph: B.TotalBigraph, atom_a: int, atom_b: int) -> MonValue:
    return unit(graph, O.BoolV(atom_a == atom_b))


def den_fresh(graph: B.TotalBigraph) -> MonValue:
    """A new atom whose wiring to each existing function is sampled from
    that function's bias; the weights over all wirings sum to 1."""
    funs = sorted(graph.left)

    def fn(bias: dict[int, Fraction]) -> FinDist[CanonicalClass]:
        branches = []
        for bits in itertools.product((False, True), repeat=len(funs)):
            weight = ONE
            for f, bit in zip(funs, bits):
                weight *= bias[f] if bit else ONE - bias[f]
            if weight == ZERO:
                continue
            world, atom = graph.add_right_defined(dict(zip(funs, bits)))
            branches.append((canonicalize(graph, world, O.AtomV(atom), {}), weight))
        return FinDist(branches)

    return MonValue(graph, fn)


def prob_true(m: MonValue, bias: BiasState) -> Fraction:
    """Mass of the true class of a boolean result (which must be collapsed)."""
    total = ZERO
    for cls, p in m.at(bias).items():
        if cls.fresh_funs or cls.fresh_atoms or not isinstance(cls.value, O.BoolV):
            raise NonCollapsedClass(f"boolean result carries world data: {cls!r}")
        if cls.value.value:
            total += p
    return total


_PROB_CACHE: dict = {}


def clear_caches() -> None:
    _PROB_CACHE.clear()


def _cached_prob_true(body: S.Comp, graph: B.TotalBigraph, env: O.FrozenMap, lam_key: BiasKey) -> Fraction:
    key = (body, graph, env, lam_key)
    if key not in _PROB_CACHE:
        _PROB_CACHE[key] = prob_true(den_comp(body, graph, env), dict(lam_key))
    return _PROB_CACHE[key]


def _fresh_bias(
    graph: B.TotalBigraph, env: O.FrozenMap, binder: S.Ident, body: S.Comp, bias: BiasState
) -> Fraction:
    """The body's true-probability on a brand-new atom, checked to be the
    same for every wiring of that atom to the existing functions."""
    funs = sorted(graph.left)
    lam_key = _bias_key(bias)
    results = []
    for bits in itertools.product((False, True), repeat=len(funs)):
        world, atom = graph.add_right_defined(dict(zip(funs, bits)))
        q = _cached_prob_true(body, world, env.set(binder, O.AtomV(atom)), lam_key)
        results.append((tuple(zip(funs, bits)), q))
    first_conn, first_q = results[0]
    for conn, q in results[1:]:
        if q != first_q:
            raise FreshnessViolation(body, (first_conn, first_q), (conn, q))
    return first_q


def den_mem(
    graph: B.TotalBigraph, env: O.FrozenMap, binder: S.Ident, body: S.Comp, bias: BiasState
) -> FinDist[CanonicalClass]:
    """A new function: its answer on each existing atom is sampled from the
    body's probability at that atom, and its bias on future atoms is the
    body's (wiring-independent) probability on a new atom."""
    bias = dict(_bias_key(bias))
    if set(bias) != set(graph.left):
        raise ValueError("bias state must assign exactly the existing functions")
    lam_key = _bias_key(bias)
    atoms = sorted(graph.right)
    per_atom = {
        a: _cached_prob_true(body, graph, env.set(binder, O.AtomV(a)), lam_key)
        for a in atoms
    }
    new_bias = _fresh_bias(graph, env, binder, body, bias)
    branches = []
    for bits in itertools.product((False, True), repeat=len(atoms)):
        weight = ONE
        for a, bit in zip(atoms, bits):
            weight *= per_atom[a] if bit else ONE - per_atom[a]
        if weight == ZERO:
            continue
        world, fun = graph.add_left_defined(dict(zip(atoms, bits)))
        branches.append((canonicalize(graph, world, O.FunV(fun), {fun: new_bias}), weight))
    return FinDist(branches)


def den_comp(comp: S.Comp, graph: B.TotalBigraph, env: O.FrozenMap) -> MonValue:
    """Compositional interpretation of a well-typed computation whose free
    variables are covered by env over the given world."""
    if isinstance(comp, S.Return):
        return unit(graph, O.eval_value(env, comp.value))
    if isinstance(comp, S.Let):
        bound = den_comp(comp.bound, graph, env)

        def kont(world: B.TotalBigraph, value: O.EnvValue) -> MonValue:
            return den_comp(comp.body, world, env.set(comp.name, value))

        return bind(bound, kont)
    if isinstance(comp, S.If):
        flag = O.eval_value(env, comp.cond)
        if not isinstance(flag, O.BoolV):
            raise O.MalformedConfiguration("if scrutinee must be a boolean")
        return den_comp(comp.then if flag.value else comp.orelse, graph, env)
    if isinstance(comp, S.Match):
        subject = O.eval_value(env, comp.subject)
        if not isinstance(subject, O.PairV):
            raise O.MalformedConfiguration("match scrutinee must be a pair")
        env2 = env.set(comp.fst_name, subject.fst).set(comp.snd_name, subject.snd)
        return den_comp(comp.body, graph, env2)
    if isinstance(comp, S.Flip):
        return den_flip(graph, comp.bias)
    if isinstance(comp, S.Fresh):
        return den_fresh(graph)
    if isinstance(comp, S.Eq):
        lhs = O.eval_value(env, comp.lhs)
        rhs = O.eval_value(env, comp.rhs)
        if not isinstance(lhs, O.AtomV) or not isinstance(rhs, O.AtomV):
            raise O.MalformedConfiguration("equality compares atoms")
        return den_eq(graph, lhs.label, rhs.label)
    if isinstance(comp, S.App):
        fn = O.eval_value(env, comp.fn)
        arg = O.eval_value(env, comp.arg)
        if not isinstance(fn, O.FunV) or not isinstance(arg, O.AtomV):
            raise O.MalformedConfiguration("application needs a function and an atom")
        return den_app(graph, fn.label, arg.label)
    if isinstance(comp, S.MemFn):
        return MonValue(
            graph, lambda bias: den_mem(graph, env, comp.binder, comp.body, bias)
        )
    raise TypeError(f"not a computation: {comp!r}")


def den_program(program: S.Comp) -> FinDist[CanonicalClass]:
    """Denotation of a closed program at the empty world."""
    return den_comp(program, EMPTY_WORLD, O.EMPTY_MAP).at({})


def mem_phi(m: MonValue, bias: BiasState, query: Union[int, Mapping[int, bool]]) -> Fraction:
    """Probability that a function-typed result answers true at a query
    point: an existing atom (by label) or a hypothetical new atom given as
    its wiring to the existing functions."""
    g = m.base
    if isinstance(query, int):
        if query not in g.right:
            raise ValueError(f"atom {query} does not exist in the world")
    else:
        if set(query) != set(g.left):
            raise ValueError("wiring must assign exactly the existing functions")
    total = ZERO
    for cls, p in m.at(bias).items():
        v = cls.value
        if not isinstance(v, O.FunV):
            raise NonCollapsedClass(f"function-typed result expected, got {cls!r}")
        if v.label in g.left:
            if isinstance(query, int):
                answered = bool(g.edge(v.label, query))
            else:
                answered = bool(query[v.label])
            if answered:
                total += p
        else:
            if isinstance(query, int):
                if cls.ext_edge(v.label, query):
                    total += p
            else:
                total += p * cls.bias_of(v.label)
    return total


# ---------------------------------------------------------------------------
# Configuration denotation and the checkers


def _closure_biases(config: O.Configuration, total: B.TotalBigraph) -> dict[int, Fraction]:
    """Bias of every function, derived from its closure at the completed
    world.  Computed in creation order; a body can only mention older
    functions, and wirings to unmentioned ones marginalize out, so the 1/2
    placeholder for not-yet-computed entries cannot influence the result."""
    biases: dict[int, Fraction] = {}
    for fun in sorted(total.left):
        closure = config.closures[fun]
        lam = {f: biases.get(f, HALF) for f in total.left}
        biases[fun] = _fresh_bias(total, closure.captured, closure.binder, closure.body, lam)
    return biases


def _den_config(config: O.Configuration, chain_rule: bool) -> FinDist[CanonicalClass]:
    if O.memo_stack(config.term):
        raise ValueError("configuration denotation requires a marker-free term")
    undef = sorted(config.graph.undefined_pairs())
    branches = []
    for total, assign in config.graph.completions():
        biases = _closure_biases(config, total)
        weight = ONE
        for fun, atom in undef:
            if chain_rule:
                closure = config.closures[fun]
                p = _cached_prob_true(
                    closure.body,
                    total,
                    closure.captured.set(closure.binder, O.AtomV(atom)),
                    _bias_key(biases),
                )
            else:
                p = biases[fun]
            weight *= p if assign[(fun, atom)] else ONE - p
        if weight == ZERO:
            continue
        result = den_comp(config.term, total, config.env).at(biases)
        flattened = []
        for cls, q in result.items():
            all_biases = dict(biases)
            all_biases.update(zip(cls.fresh_funs, cls.fresh_biases))
            flattened.append(
                (canonicalize(EMPTY_WORLD, class_world(cls), cls.value, all_biases), q)
            )
        branches.append((weight, FinDist(flattened)))
    return weighted_mix(branches)


def den_config(config: O.Configuration) -> FinDist[CanonicalClass]:
    """Denotation of a configuration over the empty base world.

    Each completion of the unsampled edges is weighted by the chain rule:
    the factor for edge (f, a) is the probability f's closure body yields
    true at atom a in the completed world.  (Weighting every edge of f by
    f's single bias instead agrees for constant bodies but not in general;
    ``den_config_function_bias`` computes that variant for comparison.)
    """
    return _den_config(config, chain_rule=True)


def den_config_function_bias(config: O.Configuration) -> FinDist[CanonicalClass]:
    return _den_config(config, chain_rule=False)


@dataclass
class SoundnessReport:
    lhs: FinDist[CanonicalClass]
    rhs: FinDist[CanonicalClass]
    equal: bool
    bias_formula_rhs: FinDist[CanonicalClass]
    bias_formula_agrees: bool


def check_soundness(program: S.Comp) -> SoundnessReport:
    """Compare the compositional denotation of a closed program with the
    weighted sum of its terminal configurations' denotations."""
    lhs = den_program(program)
    terminals = O.enumerate_bigstep(program)
    chain = [(w, _den_config(cfg, True)) for cfg, w in terminals.items()]
    alt = [(w, _den_config(cfg, False)) for cfg, w in terminals.items()]
    rhs = weighted_mix(chain)
    bias_rhs = weighted_mix(alt)
    return SoundnessReport(
        lhs=lhs,
        rhs=rhs,
        equal=dist_eq(lhs, rhs),
        bias_formula_rhs=bias_rhs,
        bias_formula_agrees=dist_eq(rhs, bias_rhs),
    )


def check_dataflow(t1: S.Comp, t2: S.Comp, u: S.Comp, x1: S.Ident, x2: S.Ident) -> bool:
    """Reordering independent bindings and discarding an unused one must
    not change the denotation."""
    if x1 in S.free_vars(t2) or x2 in S.free_vars(t1):
        raise ValueError("bound variables must not occur in the other binding")
    ordered = S.Let(x1, t1, S.Let(x2, t2, u))
    swapped = S.Let(x2, t2, S.Let(x1, t1, u))
    commute = dist_eq(den_program(ordered), den_program(swapped))
    discard = dist_eq(den_program(S.Let(x1, t1, t2)), den_program(t2))
    return commute and discard
