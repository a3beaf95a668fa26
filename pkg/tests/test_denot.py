import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memlang import bigraph as B
from memlang import denot as D
from memlang import opsem as O
from memlang import syntax as S
from memlang import typecheck as TC
from memlang.dist import FinDist, ONE, dist_eq
from memlang.progen import ProgramGen, _mem_instance, _random_world, mem_law_programs

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"

HALF = Fraction(1, 2)
THIRD = Fraction(1, 3)
EMPTY = D.EMPTY_WORLD


def load(name: str) -> S.Comp:
    return S.parse_program((PROGRAMS / name).read_text())


def bool_dist(dist) -> dict:
    out = {}
    for cls, w in dist.items():
        assert not cls.fresh_funs and not cls.fresh_atoms
        assert isinstance(cls.value, O.BoolV)
        out[cls.value.value] = w
    return out


def one_fun_world(edge_to=None) -> B.TotalBigraph:
    if edge_to is None:
        return B.TotalBigraph([0], [], {})
    return B.TotalBigraph([0], [0], {(0, 0): edge_to})


# -- canonical classes --------------------------------------------------------


def test_canonicalize_no_fresh_parts():
    g = one_fun_world(edge_to=True)
    cls = D.canonicalize(g, g, O.BoolV(True), {})
    assert cls.fresh_funs == () and cls.fresh_atoms == () and cls.ext_edges == ()
    assert cls.value == O.BoolV(True)


def test_canonicalize_fresh_atom_keeps_column():
    g = one_fun_world()
    h, atom = g.add_right_defined({0: True})
    cls = D.canonicalize(g, h, O.AtomV(atom), {})
    assert cls.fresh_atoms == (0,)
    assert cls.ext_edges == ((0, 0, True),)


def test_canonicalize_discards_unused_nodes():
    g = one_fun_world(edge_to=True)
    base_cls = D.canonicalize(g, g, O.BoolV(True), {})
    h, fun = g.add_left_defined({0: False})
    dropped = D.canonicalize(g, h, O.BoolV(True), {fun: HALF})
    assert dropped == base_cls


def test_canonicalize_renumbers_in_first_occurrence_order():
    g = EMPTY
    h, a1 = g.add_right_defined({})
    h, a2 = h.add_right_defined({})
    swapped = D.canonicalize(g, h, O.PairV(O.AtomV(a2), O.AtomV(a1)), {})
    assert swapped.value == O.PairV(O.AtomV(0), O.AtomV(1))


def test_class_world_roundtrip():
    g = one_fun_world()
    h, atom = g.add_right_defined({0: False})
    cls = D.canonicalize(g, h, O.AtomV(atom), {})
    world = D.class_world(cls)
    assert world.edge(0, cls.fresh_atoms[0]) is False


# -- unit, bind, transport ------------------------------------------------------


def test_unit_examples():
    assert bool_dist(D.unit(EMPTY, O.BoolV(True)).at({})) == {True: ONE}
    g = one_fun_world(edge_to=True)
    d = D.unit(g, O.AtomV(0)).at({0: THIRD})
    ((cls, w),) = d.items()
    assert w == ONE and cls.value == O.AtomV(0) and cls.fresh_atoms == ()


def test_bind_left_unit_via_let():
    lhs = D.den_program(S.parse_program("let val b <- flip(1/3) in return b"))
    rhs = D.den_program(S.parse_program("flip(1/3)"))
    assert dist_eq(lhs, rhs)


def test_bind_right_unit_monvalue_level():
    g = one_fun_world()
    m = D.den_fresh(g)
    back = D.bind(m, lambda world, value: D.unit(world, value))
    for p in (Fraction(0), THIRD, ONE):
        assert dist_eq(m.at({0: p}), back.at({0: p}))


def test_transport_identity():
    g = one_fun_world(edge_to=True)
    m = D.den_fresh(g)
    moved = D.transport(m, B.Embedding.inclusion(g, g))
    for p in (Fraction(0), HALF, ONE):
        assert dist_eq(m.at({0: p}), moved.at({0: p}))


def test_transport_unit_naturality():
    g = EMPTY
    g2, atom = g.add_right_defined({})
    m = D.unit(g, O.BoolV(False))
    moved = D.transport(m, B.Embedding.inclusion(g, g2))
    assert dist_eq(moved.at({}), D.unit(g2, O.BoolV(False)).at({}))


def test_transport_fresh_atom_splits_on_new_function_bias():
    # a result holding a fresh atom, moved into a world with one more
    # function, acquires that function's edge with the function's bias
    m = D.den_fresh(EMPTY)
    g2 = one_fun_world()
    moved = D.transport(m, B.Embedding.inclusion(EMPTY, g2))
    got = moved.at({0: THIRD})
    expected = D.den_fresh(g2).at({0: THIRD})
    assert dist_eq(got, expected)
    weights = sorted(w for _, w in got.items())
    assert weights == [THIRD, Fraction(2, 3)]


def test_transport_fresh_fun_fills_new_atom_with_recorded_bias():
    fn = S.parse_program("memfn y. flip(1/3)")
    m = D.den_comp(fn, EMPTY, O.EMPTY_MAP)
    g2, atom = EMPTY.add_right_defined({})
    moved = D.transport(m, B.Embedding.inclusion(EMPTY, g2))
    got = moved.at({})
    expected = D.den_comp(fn, g2, O.EMPTY_MAP).at({})
    assert dist_eq(got, expected)


# -- primitive denotations -----------------------------------------------------


def test_den_flip_examples():
    assert bool_dist(D.den_flip(EMPTY, ONE).at({})) == {True: ONE}
    assert bool_dist(D.den_flip(EMPTY, THIRD).at({})) == {True: THIRD, False: Fraction(2, 3)}
    assert bool_dist(D.den_flip(EMPTY, HALF).at({})) == {True: HALF, False: HALF}


def test_den_app_reads_table():
    g = one_fun_world(edge_to=True)
    assert bool_dist(D.den_app(g, 0, 0).at({0: HALF})) == {True: ONE}
    g2 = one_fun_world(edge_to=False)
    assert bool_dist(D.den_app(g2, 0, 0).at({0: HALF})) == {False: ONE}


def test_den_eq_examples():
    g = B.TotalBigraph([], [0, 1], {})
    assert bool_dist(D.den_eq(g, 0, 0).at({})) == {True: ONE}
    assert bool_dist(D.den_eq(g, 0, 1).at({})) == {False: ONE}


def test_two_fresh_atoms_never_equal():
    p = S.parse_program("let val x <- fresh() in let val y <- fresh() in x == y")
    assert bool_dist(D.den_program(p)) == {False: ONE}


def test_den_fresh_lone_atom():
    d = D.den_fresh(EMPTY).at({})
    ((cls, w),) = d.items()
    assert w == ONE and cls.fresh_atoms == (0,) and cls.ext_edges == ()


def test_den_fresh_one_function_product_weights():
    d = D.den_fresh(one_fun_world()).at({0: THIRD})
    by_edge = {cls.ext_edges[0][2]: w for cls, w in d.items()}
    assert by_edge == {True: THIRD, False: Fraction(2, 3)}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 8), st.integers(0, 8))
def test_den_fresh_mass_one_any_bias(num, num2):
    g = B.TotalBigraph([0, 1], [], {})
    bias = {0: Fraction(num, 8), 1: Fraction(num2, 8)}
    dist = D.den_fresh(g).at(bias)
    assert sum((w for _, w in dist.items()), Fraction(0)) == 1


def test_prob_true_examples():
    assert D.prob_true(D.den_flip(EMPTY, THIRD), {}) == THIRD
    assert D.prob_true(D.unit(EMPTY, O.BoolV(True)), {}) == ONE
    p = S.parse_program("let val x <- fresh() in return true")
    g = one_fun_world()
    assert D.prob_true(D.den_comp(p, g, O.EMPTY_MAP), {0: HALF}) == ONE


def test_prob_true_rejects_noncollapsed():
    with pytest.raises(D.NonCollapsedClass):
        D.prob_true(D.den_fresh(EMPTY), {})


# -- memoized functions ----------------------------------------------------------


def test_den_mem_constant_coin_one_atom():
    g = B.TotalBigraph([], [0], {})
    d = D.den_mem(g, O.EMPTY_MAP, "y", S.Flip(THIRD), {})
    rows = {cls.ext_edges[0][2]: (w, cls.fresh_biases[0]) for cls, w in d.items()}
    assert rows == {True: (THIRD, THIRD), False: (Fraction(2, 3), THIRD)}


def test_den_mem_recognizer_body():
    # body answers a coin at the captured atom and false elsewhere
    body = S.parse_program(
        "let val b <- x == x0 in if b then flip(1/2) else return false"
    )
    g = B.TotalBigraph([], [0], {})
    env = O.FrozenMap({"x0": O.AtomV(0)})
    d = D.den_mem(g, env, "x", body, {})
    rows = {cls.ext_edges[0][2]: (w, cls.fresh_biases[0]) for cls, w in d.items()}
    assert rows == {
        True: (HALF, Fraction(0)),
        False: (HALF, Fraction(0)),
    }


def test_den_mem_rejects_binder_application_with_witnesses():
    g = one_fun_world()
    env = O.FrozenMap({"f": O.FunV(0)})
    with pytest.raises(D.FreshnessViolation) as exc:
        D.den_mem(g, env, "y", S.App(S.Var("f"), S.Var("y")), {0: HALF})
    wa, wb = exc.value.witness_a, exc.value.witness_b
    assert {wa[1], wb[1]} == {Fraction(0), ONE}
    assert wa[0] != wb[0]


def test_den_comp_p1_reproduction():
    p = load("sound/p1_third.mem")
    assert bool_dist(D.den_program(p)) == {True: THIRD, False: Fraction(2, 3)}


def test_den_comp_memo_pair_diagonal():
    d = D.den_program(load("sound/memo_pair.mem"))
    values = {cls.value: w for cls, w in d.items()}
    assert values == {
        O.PairV(O.BoolV(True), O.BoolV(True)): HALF,
        O.PairV(O.BoolV(False), O.BoolV(False)): HALF,
    }


def test_mem_phi_on_existing_function():
    g = one_fun_world(edge_to=True)
    m = D.unit(g, O.FunV(0))
    assert D.mem_phi(m, {0: HALF}, 0) == ONE
    assert D.mem_phi(m, {0: HALF}, {0: False}) == Fraction(0)


def test_mem_phi_on_sampled_function():
    g = B.TotalBigraph([], [0], {})
    m = D.den_comp(S.parse_program("memfn y. flip(1/3)"), g, O.EMPTY_MAP)
    assert D.mem_phi(m, {}, 0) == THIRD  # mix 1/3 * 1 + 2/3 * 0
    assert D.mem_phi(m, {}, {}) == THIRD  # recorded bias on a new atom


# -- configuration denotation ---------------------------------------------------


def test_den_config_initial_equals_compositional():
    p = load("sound/p1_third.mem")
    assert dist_eq(D.den_config(O.initial_configuration(p)), D.den_program(p))


def test_den_config_chain_rule_on_unsampled_edge():
    p = load("sound/undef_edge_terminal.mem")
    ((cfg, w),) = O.enumerate_bigstep(p).items()
    assert w == ONE and cfg.graph.undefined_pairs() == {(0, 0)}
    got = D.den_config(cfg)
    value = O.PairV(O.FunV(0), O.AtomV(0))
    expected = FinDist(
        {
            D.CanonicalClass(EMPTY, value, (0,), (Fraction(0),), (0,), ((0, 0, True),)): HALF,
            D.CanonicalClass(EMPTY, value, (0,), (Fraction(0),), (0,), ((0, 0, False),)): HALF,
        }
    )
    assert dist_eq(got, expected)
    assert dist_eq(got, D.den_program(p))
    # the single-bias weighting puts everything on the bias-0 completion
    alt = D.den_config_function_bias(cfg)
    assert not dist_eq(alt, got)
    ((alt_cls, alt_w),) = alt.items()
    assert alt_w == ONE and alt_cls.ext_edges == ((0, 0, False),)


def test_per_step_denotation_preserved_on_marker_free_steps():
    p = S.parse_program(
        "let val b <- flip(1/4) in let val x <- fresh() in return (b, x)"
    )
    cfg = O.initial_configuration(p)
    while not O.is_terminal(cfg):
        succ = O.step(cfg)
        if any(O.memo_stack(c.term) for c in succ.support()):
            break
        from memlang.dist import weighted_mix

        mixed = weighted_mix([(w, D.den_config(c)) for c, w in succ.items()])
        assert dist_eq(D.den_config(cfg), mixed)
        cfg = next(iter(succ.support()))


# -- the checkers ----------------------------------------------------------------


def test_check_soundness_examples():
    for name in ("sound/p1_third.mem", "sound/memo_pair.mem", "sound/pair_mixed.mem"):
        report = D.check_soundness(load(name))
        assert report.equal, name


def test_check_soundness_logs_bias_formula_divergence():
    report = D.check_soundness(load("sound/undef_edge_terminal.mem"))
    assert report.equal
    assert not report.bias_formula_agrees


def test_check_dataflow_examples():
    assert D.check_dataflow(
        S.Flip(THIRD), S.Fresh(), S.Return(S.Var("x1")), "x1", "x2"
    )
    assert D.check_dataflow(
        S.Fresh(), S.Return(S.BoolLit(True)), S.Return(S.BoolLit(True)), "x1", "x2"
    )
    assert D.check_dataflow(
        S.Fresh(), S.Fresh(), S.Eq(S.Var("x1"), S.Var("x2")), "x1", "x2"
    )


def test_check_dataflow_rejects_bad_preconditions():
    with pytest.raises(ValueError):
        D.check_dataflow(S.Return(S.Var("x2")), S.Fresh(), S.Return(S.BoolLit(True)), "x1", "x2")


# -- structural invariants --------------------------------------------------------


def _assert_class_shape(cls: D.CanonicalClass, ty: TC.Ty) -> None:
    """Results are an existing node, or one fresh node with full wiring."""
    base = cls.base
    if ty == TC.BOOL:
        assert isinstance(cls.value, O.BoolV)
        assert not cls.fresh_funs and not cls.fresh_atoms
    elif ty == TC.ATOM:
        assert isinstance(cls.value, O.AtomV)
        if cls.value.label in base.right:
            assert not cls.fresh_atoms
        else:
            assert cls.fresh_atoms == (cls.value.label,)
            assert {(f, a) for f, a, _ in cls.ext_edges} >= {
                (f, cls.value.label) for f in base.left
            }
    elif ty == TC.FUN:
        assert isinstance(cls.value, O.FunV)
        if cls.value.label in base.left:
            assert not cls.fresh_funs
        else:
            assert cls.fresh_funs == (cls.value.label,)
            assert len(cls.fresh_biases) == 1
            assert {(f, a) for f, a, _ in cls.ext_edges} >= {
                (cls.value.label, a) for a in base.right
            }


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_result_class_shapes(seed):
    rng = random.Random(seed)
    graph, types, env = _random_world(rng)
    comp = ProgramGen(rng, 2, 1, 1, 4).program_over(types, tail=False)
    ty = TC.type_of_comp(TC.TyCtx(types.items()), comp)
    if not isinstance(ty, (TC.BoolT, TC.AtomT, TC.FunT)):
        return
    bias = {f: Fraction(rng.randint(0, 4), 4) for f in graph.left}
    for cls, _ in D.den_comp(comp, graph, env).at(bias).items():
        _assert_class_shape(cls, ty)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_boolean_results_always_collapse(seed):
    rng = random.Random(seed)
    graph, types, env = _random_world(rng)
    comp = ProgramGen(rng, 2, 1, 1, 4).program_over(types, tail=False)
    ty = TC.type_of_comp(TC.TyCtx(types.items()), comp)
    if ty != TC.BOOL:
        return
    bias = {f: Fraction(rng.randint(0, 4), 4) for f in graph.left}
    for cls, _ in D.den_comp(comp, graph, env).at(bias).items():
        assert not cls.fresh_funs and not cls.fresh_atoms


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_naturality_of_den_comp_under_one_sided_extension(seed):
    rng = random.Random(seed)
    graph, types, env = _random_world(rng)
    comp = ProgramGen(rng, 2, 1, 1, 4).program_over(types, tail=False)
    if rng.random() < 0.5:
        bigger, _ = graph.add_left_defined({a: rng.random() < 0.5 for a in graph.right})
    else:
        bigger, _ = graph.add_right_defined({f: rng.random() < 0.5 for f in graph.left})
    inclusion = B.Embedding.inclusion(graph, bigger)
    moved = D.transport(D.den_comp(comp, graph, env), inclusion)
    direct = D.den_comp(comp, bigger, env)
    for _ in range(3):
        bias = {f: Fraction(rng.randint(0, 4), 4) for f in bigger.left}
        assert dist_eq(moved.at(bias), direct.at(bias))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_memo_law_holds_compositionally(seed):
    rng = random.Random(seed)
    setup, fn = _mem_instance(rng)
    for lhs, rhs in mem_law_programs(setup, fn).values():
        assert dist_eq(D.den_program(lhs), D.den_program(rhs))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_syntactic_check_implies_semantic_acceptance(seed):
    rng = random.Random(seed)
    graph, types, env = _random_world(rng)
    fn = ProgramGen(rng, 2, 1, 1, 4).gen_memfn(types)
    assert S.syntactic_freshness_check(fn)
    bias = {f: Fraction(rng.randint(0, 4), 4) for f in graph.left}
    D.den_mem(graph, env, fn.binder, fn.body, bias)  # must not raise
