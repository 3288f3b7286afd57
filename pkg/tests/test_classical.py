from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcausal.classical import (ClassicalError, ClassicalModel, classical_do, classical_undo, cmc_check, do_model,
                               joint_from_cpts)
from qcausal.graph import EXOGENOUS, Dag, surgery_do
from qcausal.table import ProbTable, TableError
from qcausal.verify.ci import ci_deviation


def chain_model():
    g = Dag.from_edges([("A", "B"), ("B", "C")])
    A, B, C = (g.id_of(n) for n in "ABC")
    cpts = {
        A: [0.25, 0.75],
        B: [[0.5, 0.125], [0.5, 0.875]],
        C: [[0.75, 0.25], [0.25, 0.75]],
    }
    return ClassicalModel(g, cpts)


def xor_model():
    g = Dag.from_edges([("M", "C"), ("K", "C")], names=["M", "K", "C"])
    M, K, C = (g.id_of(n) for n in "MKC")
    xor = np.zeros((2, 2, 2))
    for m, k in product(range(2), range(2)):
        xor[m ^ k, m, k] = 1
    return ClassicalModel(g, {M: [0.75, 0.25], K: [0.5, 0.5], C: xor})


def random_model(g, seed):
    rng = np.random.default_rng(seed)
    cpts = {}
    for v in g.ids:
        k = len(g.parents(v))
        raw = rng.dirichlet(np.ones(2), size=(2,) * k)
        cpts[v] = np.moveaxis(raw, -1, 0)
    return ClassicalModel(g, cpts)


def test_identity_chain():
    g = Dag.from_edges([("A", "B")])
    t = joint_from_cpts(ClassicalModel(g, {0: [0.5, 0.5], 1: np.eye(2)}))
    assert np.array_equal(t.values, [[0.5, 0], [0, 0.5]])


def test_disconnected_is_product():
    g = Dag.from_edges([], names=["A", "B"])
    t = joint_from_cpts(ClassicalModel(g, {0: [0.25, 0.75], 1: [0.5, 0.5]}))
    assert np.array_equal(t.values, np.outer([0.25, 0.75], [0.5, 0.5]))


def test_model_validation():
    g = Dag.from_edges([("A", "B")])
    with pytest.raises(ClassicalError, match="shape"):
        ClassicalModel(g, {0: [0.5, 0.5], 1: [0.5, 0.5]})
    with pytest.raises(ClassicalError, match="sum"):
        ClassicalModel(g, {0: [0.5, 0.6], 1: np.eye(2)})
    with pytest.raises(ClassicalError, match="missing"):
        ClassicalModel(g, {0: [0.5, 0.5]})
    with pytest.raises(ClassicalError):
        ClassicalModel(g, {0: [1.5, -0.5], 1: np.eye(2)})


def exact_do_chain(m, b_star):
    """P(a, b, c | do B = b*) with Fractions."""
    A, B, C = (m.dag.id_of(n) for n in "ABC")
    pa = [Fraction(x) for x in m.cpts[A]]
    pc = [[Fraction(x) for x in row] for row in m.cpts[C]]
    out = {}
    for a, b, c in product(range(2), range(2), range(2)):
        out[a, b, c] = (b == b_star) * pa[a] * pc[c][b]
    return out


@pytest.mark.parametrize("b_star", [0, 1])
def test_fine_do_exact(b_star):
    m = chain_model()
    t = classical_do(m, "B", b_star)
    want = exact_do_chain(m, b_star)
    for idx, p in want.items():
        assert Fraction(t.values[idx]) == p


def test_do_exogenous_with_own_marginal():
    m = chain_model()
    ref = joint_from_cpts(m)
    assert np.array_equal(classical_do(m, "A", [0.25, 0.75]).values, ref.values)


def test_sequential_dos_commute():
    g = Dag.from_edges([("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")])
    m = random_model(g, 0)
    B, C = g.id_of("B"), g.id_of("C")
    one = joint_from_cpts(do_model(do_model(m, B, [0.25, 0.75]), C, 1))
    two = joint_from_cpts(do_model(do_model(m, C, 1), B, [0.25, 0.75]))
    assert one.max_abs_diff(two) < 1e-15


def test_do_target_errors():
    m = chain_model()
    with pytest.raises(ClassicalError):
        classical_do(m, "B", 2)
    with pytest.raises(ClassicalError):
        classical_do(m, "B", [0.5, 0.6])


def test_do_output_is_markov_for_mutilated_dag():
    m = chain_model()
    B = m.dag.id_of("B")
    out = classical_do(m, B, [0.5, 0.5])
    assert cmc_check(out, surgery_do(m.dag, B)).passed
    # A and B are now independent, which the original DAG does not imply
    assert cmc_check(out, m.dag).passed


def test_undo_examples():
    t = ProbTable(("A", "Z"), np.full((2, 2), 0.25))
    assert np.array_equal(classical_undo(t, "Z").values, [0.5, 0.5])
    m = chain_model()
    A, B, C = (m.dag.id_of(n) for n in "ABC")
    ref = joint_from_cpts(m)
    out = classical_undo(ref, B)
    assert np.allclose(out.values, ref.values.sum(axis=1))
    assert np.array_equal(classical_undo(classical_undo(ref, A), C).values,
                          classical_undo(classical_undo(ref, C), A).values)
    assert np.array_equal(classical_undo(ref, "B").values, out.values)
    with pytest.raises(TableError):
        classical_undo(ref, "Q")


def test_undo_commutes_with_conditioning():
    m = chain_model()
    A, B, C = (m.dag.id_of(n) for n in "ABC")
    ref = joint_from_cpts(m)
    lhs = classical_undo(ref, B).conditional([C], [A])
    rhs = np.einsum("cba,ba->ca", ref.conditional([C, B], [A]), np.ones((2, 2)))
    assert np.allclose(lhs, rhs, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_undo_all_internal_gives_exogenous_product(seed):
    g = Dag.from_edges([("A", "C"), ("B", "C"), ("B", "D"), ("C", "E"), ("D", "E")])
    m = random_model(g, seed)
    t = joint_from_cpts(m)
    for v in g.ids:
        if g.kind(v) != EXOGENOUS:
            t = classical_undo(t, v)
    A, B = g.id_of("A"), g.id_of("B")
    assert np.allclose(t.array([A, B]), np.outer(m.cpts[A], m.cpts[B]), atol=1e-14)
    assert cmc_check(joint_from_cpts(m), g).passed


def test_one_time_pad_passes_collider_checks():
    m = xor_model()
    t = joint_from_cpts(m)
    rep = cmc_check(t, m.dag)
    assert rep.passed and rep.checked > 0
    M, K, C = (m.dag.id_of(n) for n in "MKC")
    # the fine-tuned extra independence M _||_ C also holds
    assert ci_deviation(t, [M], [C]) < 1e-15


def test_injected_correlation_reported():
    g = Dag.from_edges([], names=["A", "B"])
    t = ProbTable((0, 1), [[0.5, 0.0], [0.0, 0.5]])
    rep = cmc_check(t, g)
    assert not rep.passed
    assert rep.max_deviation == pytest.approx(0.25)
    assert rep.violations[0][3] == pytest.approx(0.25)


def test_joint_cap():
    g = Dag.from_edges([], names=["A", "B"], dims={"A": 1000, "B": 1001})
    m = ClassicalModel(g, {0: np.full(1000, 1e-3), 1: np.full(1001, 1 / 1001)})
    with pytest.raises(ClassicalError, match="cap"):
        joint_from_cpts(m)
