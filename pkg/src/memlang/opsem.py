"""Small-step reduction, seeded sampling, and exact exhaustive execution.

A configuration bundles an environment (variables to runtime values), the
term under evaluation, the partial memo-table, and the closures backing the
function labels.  Reduction finds the unique leftmost-outermost redex, fires
one rule, and either stays deterministic or, at a coin flip, splits into an
exact two-point distribution over successor configurations.

``enumerate_bigstep`` unfolds ``step`` exhaustively with exact rational
weights; ``run_sampled`` drives one trace with a seeded generator;
``observe`` quotients terminal configurations down to the data a caller can
actually distinguish (returned value, the reachable slice of the memo-table,
and retained closures up to bound-variable renaming).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Union

from . import bigraph as B
from . import syntax as S
from . import typecheck as TC
from .dist import ONE, ZERO, FinDist

_STEP_BUDGET = 1_000_000


class Stuck(Exception):
    """No redex found in a non-terminal term; unreachable for typed input."""


class MalformedConfiguration(Exception):
    pass


class JudgementFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# Runtime values and immutable maps


@dataclass(frozen=True)
class BoolV:
    value: bool


@dataclass(frozen=True)
class FunV:
    label: int


@dataclass(frozen=True)
class AtomV:
    label: int


@dataclass(frozen=True)
class PairV:
    fst: "EnvValue"
    snd: "EnvValue"


EnvValue = Union[BoolV, FunV, AtomV, PairV]


class FrozenMap:
    """Small immutable map with deterministic ordering, usable as a dict key."""

    __slots__ = ("_d", "_key")

    def __init__(self, items: Mapping | Iterable[tuple] = ()):
        d = dict(items)
        self._d = d
        self._key = tuple(sorted(d.items(), key=lambda kv: kv[0]))

    def set(self, key, value) -> "FrozenMap":
        d = dict(self._d)
        d[key] = value
        return FrozenMap(d)

    def get(self, key, default=None):
        return self._d.get(key, default)

    def __getitem__(self, key):
        return self._d[key]

    def __contains__(self, key) -> bool:
        return key in self._d

    def keys(self):
        return [k for k, _ in self._key]

    def items(self) -> tuple:
        return self._key

    def __iter__(self) -> Iterator:
        return iter(self.keys())

    def __len__(self) -> int:
        return len(self._d)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FrozenMap) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k!r}: {v!r}" for k, v in self._key)
        return "FrozenMap({" + inner + "})"


EMPTY_MAP = FrozenMap()


@dataclass(frozen=True)
class Closure:
    binder: S.Ident
    body: S.Comp
    captured: FrozenMap  # name -> EnvValue


@dataclass(frozen=True)
class Configuration:
    env: FrozenMap  # name -> EnvValue
    term: S.ExtTerm
    graph: B.PartialBigraph
    closures: FrozenMap  # fun label -> Closure


def initial_configuration(program: S.Comp) -> Configuration:
    return Configuration(EMPTY_MAP, program, B.empty(), EMPTY_MAP)


def eval_value(env: FrozenMap, v: S.Val) -> EnvValue:
    if isinstance(v, S.BoolLit):
        return BoolV(v.value)
    if isinstance(v, S.Var):
        if v.name not in env:
            raise TC.UnboundVariable(v.name)
        return env[v.name]
    if isinstance(v, S.PairVal):
        return PairV(eval_value(env, v.fst), eval_value(env, v.snd))
    raise TypeError(f"not a value: {v!r}")


def value_to_json(value: EnvValue):
    """JSON form: booleans as-is, labels as "fun<i>"/"atom<i>", pairs as
    two-element arrays."""
    if isinstance(value, BoolV):
        return value.value
    if isinstance(value, FunV):
        return f"fun{value.label}"
    if isinstance(value, AtomV):
        return f"atom{value.label}"
    if isinstance(value, PairV):
        return [value_to_json(value.fst), value_to_json(value.snd)]
    raise TypeError(f"not a runtime value: {value!r}")


def value_labels(value: EnvValue) -> tuple[set[int], set[int]]:
    """(function labels, atom labels) mentioned in a runtime value."""
    funs: set[int] = set()
    atoms: set[int] = set()
    stack = [value]
    while stack:
        v = stack.pop()
        if isinstance(v, FunV):
            funs.add(v.label)
        elif isinstance(v, AtomV):
            atoms.add(v.label)
        elif isinstance(v, PairV):
            stack.append(v.fst)
            stack.append(v.snd)
    return funs, atoms


# ---------------------------------------------------------------------------
# Redex decomposition


@dataclass(frozen=True)
class LetFrame:
    name: S.Ident
    body: S.Comp


@dataclass(frozen=True)
class MemoFrame:
    fun_label: int
    atom_label: int
    restore_env: FrozenMap


Frame = Union[LetFrame, MemoFrame]


def _is_terminal_comp(t: S.ExtTerm) -> bool:
    return isinstance(t, (S.Return, S.MemFn, S.Fresh))


def decompose(term: S.ExtTerm) -> Optional[tuple[tuple[Frame, ...], S.ExtTerm]]:
    """Split a term into its reduction context and unique redex.

    Returns None when the term is terminal (a return, a function
    abstraction, or a bare fresh() at the top level).
    """
    frames: list[Frame] = []
    t = term
    while True:
        if isinstance(t, S.Let):
            if _is_terminal_comp(t.bound):
                return tuple(frames), t
            frames.append(LetFrame(t.name, t.body))
            t = t.bound
        elif isinstance(t, S.MemoCtx):
            if isinstance(t.inner, S.Return):
                return tuple(frames), t
            frames.append(MemoFrame(t.fun_label, t.atom_label, t.restore_env))
            t = t.inner
        elif _is_terminal_comp(t):
            if frames:
                raise Stuck(f"terminal {S.pretty(t)} under a reduction context")
            return None
        elif isinstance(t, (S.If, S.Match, S.Flip, S.Eq, S.App)):
            return tuple(frames), t
        else:
            raise Stuck(f"no redex in {t!r}")


def recompose(frames: Iterable[Frame], term: S.ExtTerm) -> S.ExtTerm:
    out = term
    for frame in reversed(list(frames)):
        if isinstance(frame, LetFrame):
            out = S.Let(frame.name, out, frame.body)
        else:
            out = S.MemoCtx(out, frame.fun_label, frame.atom_label, frame.restore_env)
    return out


# ---------------------------------------------------------------------------
# One-step reduction


def _validate(config: Configuration) -> None:
    if set(config.closures.keys()) != set(config.graph.left):
        raise MalformedConfiguration("closure map must cover exactly the function labels")
    for _, value in config.env.items():
        funs, atoms = value_labels(value)
        if not funs <= set(config.graph.left) or not atoms <= set(config.graph.right):
            raise MalformedConfiguration("environment mentions labels outside the graph")
    t = config.term
    while True:
        if isinstance(t, S.MemoCtx):
            if t.fun_label not in config.graph.left or t.atom_label not in config.graph.right:
                raise MalformedConfiguration("memo marker mentions labels outside the graph")
            t = t.inner
        elif isinstance(t, S.Let):
            t = t.bound
        else:
            break


def _term_size(t: S.ExtTerm) -> int:
    # Sized so that every rule except an application on an unsampled edge
    # strictly shrinks the term: a bare return weighs only its value.
    if isinstance(t, S.Return):
        return _val_size(t.value)
    if isinstance(t, S.Let):
        return 1 + _term_size(t.bound) + _term_size(t.body)
    if isinstance(t, S.If):
        return 1 + _val_size(t.cond) + _term_size(t.then) + _term_size(t.orelse)
    if isinstance(t, S.Match):
        return 1 + _val_size(t.subject) + _term_size(t.body)
    if isinstance(t, S.Flip):
        return 2
    if isinstance(t, S.Fresh):
        return 1
    if isinstance(t, S.Eq):
        return 1 + _val_size(t.lhs) + _val_size(t.rhs)
    if isinstance(t, S.MemFn):
        return 1 + _term_size(t.body)
    if isinstance(t, S.App):
        return 1 + _val_size(t.fn) + _val_size(t.arg)
    if isinstance(t, S.MemoCtx):
        return 1 + _term_size(t.inner)
    raise TypeError(f"not a term: {t!r}")


def _val_size(v: S.Val) -> int:
    if isinstance(v, S.PairVal):
        return 1 + _val_size(v.fst) + _val_size(v.snd)
    return 1


def _as_bool(value: EnvValue, what: str) -> bool:
    if not isinstance(value, BoolV):
        raise MalformedConfiguration(f"{what} must be a boolean, got {value!r}")
    return value.value


def _step_outcomes(
    config: Configuration, frames: tuple[Frame, ...], redex: S.ExtTerm
) -> list[tuple[Configuration, Fraction, Optional[bool]]]:
    """Successors of one reduction, tagged with the flip branch if any."""
    env, graph, closures = config.env, config.graph, config.closures

    def out(term, new_env=env, new_graph=graph, new_closures=closures):
        return Configuration(new_env, recompose(frames, term), new_graph, new_closures)

    if isinstance(redex, S.Let):
        bound = redex.bound
        if isinstance(bound, S.Return):
            value = eval_value(env, bound.value)
            return [(out(redex.body, env.set(redex.name, value)), ONE, None)]
        if isinstance(bound, S.MemFn):
            graph2, fun = graph.add_left_undef()
            closures2 = closures.set(fun, Closure(bound.binder, bound.body, env))
            return [
                (out(redex.body, env.set(redex.name, FunV(fun)), graph2, closures2), ONE, None)
            ]
        if isinstance(bound, S.Fresh):
            graph2, atom = graph.add_right_undef()
            return [(out(redex.body, env.set(redex.name, AtomV(atom)), graph2), ONE, None)]
        raise Stuck(f"let-bound term is not terminal: {S.pretty(bound)}")
    if isinstance(redex, S.MemoCtx):
        inner = redex.inner
        if not isinstance(inner, S.Return):
            raise Stuck("memo marker redex must wrap a return")
        result = eval_value(env, inner.value)
        flag = _as_bool(result, "memoized result")
        graph2 = graph.set_edge(redex.fun_label, redex.atom_label, flag)
        restored = redex.restore_env
        return [(out(S.Return(S.BoolLit(flag)), restored, graph2), ONE, None)]
    if isinstance(redex, S.App):
        fn = eval_value(env, redex.fn)
        arg = eval_value(env, redex.arg)
        if not isinstance(fn, FunV) or not isinstance(arg, AtomV):
            raise MalformedConfiguration("application needs a function and an atom")
        edge = graph.edge(fn.label, arg.label)
        if edge is not None:
            return [(out(S.Return(S.BoolLit(edge))), ONE, None)]
        closure = closures.get(fn.label)
        if closure is None:
            raise MalformedConfiguration(f"no closure for function label {fn.label}")
        call_env = closure.captured.set(closure.binder, arg)
        marker = S.MemoCtx(closure.body, fn.label, arg.label, env)
        return [(out(marker, call_env), ONE, None)]
    if isinstance(redex, S.Eq):
        lhs = eval_value(env, redex.lhs)
        rhs = eval_value(env, redex.rhs)
        if not isinstance(lhs, AtomV) or not isinstance(rhs, AtomV):
            raise MalformedConfiguration("equality compares atoms")
        return [(out(S.Return(S.BoolLit(lhs == rhs))), ONE, None)]
    if isinstance(redex, S.Flip):
        theta = Fraction(redex.bias)
        return [
            (out(S.Return(S.BoolLit(True))), theta, True),
            (out(S.Return(S.BoolLit(False))), ONE - theta, False),
        ]
    if isinstance(redex, S.If):
        flag = _as_bool(eval_value(env, redex.cond), "if scrutinee")
        return [(out(redex.then if flag else redex.orelse), ONE, None)]
    if isinstance(redex, S.Match):
        subject = eval_value(env, redex.subject)
        if not isinstance(subject, PairV):
            raise MalformedConfiguration("match scrutinee must be a pair")
        env2 = env.set(redex.fst_name, subject.fst).set(redex.snd_name, subject.snd)
        return [(out(redex.body, env2), ONE, None)]
    raise Stuck(f"unrecognized redex {redex!r}")


def step(config: Configuration) -> FinDist[Configuration]:
    """One reduction: a point mass except at a coin flip."""
    _validate(config)
    dec = decompose(config.term)
    if dec is None:
        raise MalformedConfiguration("configuration is terminal")
    frames, redex = dec
    outcomes = _step_outcomes(config, frames, redex)
    before = _term_size(config.term)
    app_on_undef = (
        isinstance(redex, S.App)
        and config.graph.edge(
            eval_value(config.env, redex.fn).label,
            eval_value(config.env, redex.arg).label,
        )
        is None
    )
    for successor, _, _ in outcomes:
        # progress: every rule shrinks the term except entering a pending
        # memoization, which permanently claims one unsampled edge
        assert app_on_undef or _term_size(successor.term) < before
    return FinDist([(cfg, w) for cfg, w, _ in outcomes])


def is_terminal(config: Configuration) -> bool:
    return decompose(config.term) is None


def run_sampled(program: S.Comp, seed: int) -> tuple[Configuration, list[Configuration]]:
    """Iterate ``step`` with a seeded generator; at ``flip(t)`` the true
    branch is taken iff the unit-interval draw is below t."""
    rng = random.Random(seed)
    config = initial_configuration(program)
    trace = [config]
    while True:
        dec = decompose(config.term)
        if dec is None:
            return config, trace
        frames, redex = dec
        outcomes = _step_outcomes(config, frames, redex)
        if isinstance(redex, S.Flip):
            take_true = Fraction(rng.random()) < redex.bias
            config = next(cfg for cfg, _, tag in outcomes if tag == take_true)
        else:
            config = outcomes[0][0]
        trace.append(config)


def enumerate_bigstep(program: S.Comp) -> FinDist[Configuration]:
    """Exact distribution over terminal configurations."""
    pending: list[tuple[Configuration, Fraction]] = [
        (initial_configuration(program), ONE)
    ]
    acc: dict[Configuration, Fraction] = {}
    steps = 0
    while pending:
        config, weight = pending.pop()
        if is_terminal(config):
            acc[config] = acc.get(config, ZERO) + weight
            continue
        steps += 1
        if steps > _STEP_BUDGET:
            raise MalformedConfiguration("step budget exceeded")
        for successor, q in step(config).items():
            pending.append((successor, weight * q))
    return FinDist(acc)


# ---------------------------------------------------------------------------
# Configuration judgements and invariants


def _shape_type(value: EnvValue) -> TC.Ty:
    if isinstance(value, BoolV):
        return TC.BOOL
    if isinstance(value, FunV):
        return TC.FUN
    if isinstance(value, AtomV):
        return TC.ATOM
    return TC.ProdT(_shape_type(value.fst), _shape_type(value.snd))


def memo_stack(term: S.ExtTerm) -> tuple[tuple[int, int], ...]:
    """Pending memoization pairs along the evaluation spine, outermost first."""
    pairs: list[tuple[int, int]] = []
    t = term
    while True:
        if isinstance(t, S.MemoCtx):
            pairs.append((t.fun_label, t.atom_label))
            t = t.inner
        elif isinstance(t, S.Let):
            t = t.bound
        else:
            return tuple(pairs)


def config_judgement(config: Configuration) -> tuple[TC.TyCtx, tuple[tuple[int, int], ...], TC.Ty]:
    """Reconstruct the typing of a configuration: the context derived from
    the environment's value shapes, the pending memoization stack, and the
    term's type.  Failure signals an evaluator bug on accessible input.

    While a memoization body runs, the running environment belongs to the
    callee, but the continuation around each marker refers to the caller
    variables stored in that marker's restore environment.  The context
    therefore merges the restore environments along the spine (oldest
    first) with the running environment, newer entries shadowing."""
    decls: dict[str, TC.Ty] = {}
    spine_envs: list[FrozenMap] = []
    t = config.term
    while True:
        if isinstance(t, S.MemoCtx):
            spine_envs.append(t.restore_env)
            t = t.inner
        elif isinstance(t, S.Let):
            t = t.bound
        else:
            break
    for env in [*spine_envs, config.env]:
        for name, value in env.items():
            decls[name] = _shape_type(value)
    ctx = TC.TyCtx(sorted(decls.items()))
    stack = memo_stack(config.term)
    try:
        ty = TC.type_of_ext(ctx, stack, config.term)
    except (TC.TypeMismatch, TC.UnboundVariable, TC.StackMismatch, TC.DuplicateStackPair) as exc:
        raise JudgementFailure(str(exc)) from exc
    return ctx, stack, ty


def check_stack_invariants(config: Configuration) -> bool:
    """Pending pairs are duplicate-free, and an application about to sample
    a new edge never targets a function already being memoized."""
    pairs = memo_stack(config.term)
    if len(pairs) != len(set(pairs)):
        return False
    dec = decompose(config.term)
    if dec is not None and isinstance(dec[1], S.App):
        redex = dec[1]
        fn = eval_value(config.env, redex.fn)
        arg = eval_value(config.env, redex.arg)
        if isinstance(fn, FunV) and isinstance(arg, AtomV):
            if config.graph.edge(fn.label, arg.label) is None:
                if any(f == fn.label for f, _ in pairs):
                    return False
    return True


# ---------------------------------------------------------------------------
# Observations of terminal configurations


@dataclass(frozen=True)
class Observation:
    """What a caller can distinguish about a terminal configuration: the
    returned value, the slice of the memo-table reachable from it, and the
    retained closures with bound variables renamed canonically.  Labels are
    renumbered in first-occurrence order of a left-to-right traversal."""

    value: EnvValue
    graph: B.PartialBigraph
    closures: tuple  # ((label, canonical MemFn, ((name, EnvValue), ...)), ...)


def observe(config: Configuration) -> Observation:
    if not isinstance(config.term, S.Return):
        raise MalformedConfiguration(
            f"observation requires a returned value, got {S.pretty(config.term)}"
        )
    value = eval_value(config.env, config.term.value)

    atoms: list[int] = []
    funs: list[int] = []

    def visit(v: EnvValue) -> None:
        if isinstance(v, AtomV):
            if v.label not in atoms:
                atoms.append(v.label)
        elif isinstance(v, FunV):
            if v.label not in funs:
                funs.append(v.label)
        elif isinstance(v, PairV):
            visit(v.fst)
            visit(v.snd)

    visit(value)
    kept_envs: dict[int, list[tuple[str, EnvValue]]] = {}
    i = 0
    while i < len(funs):
        label = funs[i]
        i += 1
        closure = config.closures[label]
        names = sorted(S.free_vars(closure.body) - {closure.binder})
        items = []
        for name in names:
            if name not in closure.captured:
                raise MalformedConfiguration(
                    f"closure for function {label} misses captured {name!r}"
                )
            captured = closure.captured[name]
            items.append((name, captured))
            visit(captured)
        kept_envs[label] = items

    amap = {old: new for new, old in enumerate(atoms)}
    fmap = {old: new for new, old in enumerate(funs)}

    def relabel(v: EnvValue) -> EnvValue:
        if isinstance(v, AtomV):
            return AtomV(amap[v.label])
        if isinstance(v, FunV):
            return FunV(fmap[v.label])
        if isinstance(v, PairV):
            return PairV(relabel(v.fst), relabel(v.snd))
        return v

    edges = {
        (fmap[f], amap[a]): config.graph.edge(f, a) for f in funs for a in atoms
    }
    graph = B.PartialBigraph(fmap.values(), amap.values(), edges)
    closures = tuple(
        (
            fmap[label],
            S.alpha_canonical(
                S.MemFn(config.closures[label].binder, config.closures[label].body)
            ),
            tuple((name, relabel(v)) for name, v in kept_envs[label]),
        )
        for label in funs
    )
    return Observation(relabel(value), graph, closures)


def observational_bigstep(program: S.Comp) -> FinDist[Observation]:
    """Exact distribution over observations of terminal configurations."""
    from .dist import map_dist

    return map_dist(enumerate_bigstep(program), observe)
