from itertools import product

import numpy as np
import pytest

from qcausal.quantum import (Channel, InterventionInstrument, QuantumError, apply_channel, check_channel,
                             choi_from_map, comb_pair_probability, holevo_channel, random_unbiased_channel,
                             sic_instrument, sic_povm)
from qcausal.verify.demos import _circuit_functional, comb_from_functional


def overlaps(povm):
    P = povm.projectors
    return np.einsum("xij,yji->xy", P, P).real


def random_state(d, rng):
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = G @ G.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("d,off", [(2, 1 / 3), (3, 1 / 4), (4, 1 / 5)])
def test_sic_overlaps(d, off):
    G = overlaps(sic_povm(d))
    assert np.allclose(np.diag(G), 1, atol=1e-10)
    assert np.allclose(G[~np.eye(d * d, dtype=bool)], off, atol=1e-10)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_sic_completeness_and_rank(d):
    povm = sic_povm(d)
    assert np.allclose(povm.effects.sum(axis=0), np.eye(d), atol=1e-10)
    assert all(np.linalg.matrix_rank(P, tol=1e-8) == 1 for P in povm.projectors)


def test_sic_rejects_bad_fiducial():
    with pytest.raises(QuantumError, match="deviation"):
        sic_povm(2, [1, 0])
    with pytest.raises(QuantumError):
        sic_povm(5)
    with pytest.raises(QuantumError):
        sic_povm(3, [1, 0])


def test_sic_custom_fiducial_accepted():
    ref = sic_povm(2)
    again = sic_povm(2, ref.fiducial * np.exp(0.3j))
    assert np.allclose(again.projectors, ref.projectors, atol=1e-12)


def test_sic_instrument_examples():
    povm = sic_povm(2)
    p, post = sic_instrument(povm, np.eye(2) / 2)
    assert np.allclose(p, 0.25)
    p, post = sic_instrument(povm, povm.projectors[1])
    assert p[1] == pytest.approx(0.5)
    assert np.allclose(np.delete(p, 1), 1 / 6)
    assert sum(p) == pytest.approx(1)
    assert all(np.allclose(a, b) for a, b in zip(post, povm.projectors))


def test_sic_instrument_rejects_non_states():
    povm = sic_povm(2)
    with pytest.raises(QuantumError):
        sic_instrument(povm, np.eye(3) / 3)
    with pytest.raises(QuantumError):
        sic_instrument(povm, np.diag([1.5, -0.5]))
    with pytest.raises(QuantumError):
        sic_instrument(povm, np.eye(2))


def test_identity_channel():
    ch = Channel.identity(3)
    rho = random_state(3, np.random.default_rng(0))
    assert np.allclose(apply_channel(ch, rho), rho)
    rep = check_channel(ch)
    assert rep.cp and rep.tp and rep.unbiased


def test_pinning_channel_is_biased():
    ch = Channel.from_map(lambda r: np.trace(r) * np.diag([1, 0]), 2, 2)
    rep = check_channel(ch)
    assert rep.cp and rep.tp and not rep.unbiased


def test_non_cp_map_flagged():
    ch = Channel.from_map(lambda r: r.T, 2, 2)
    rep = check_channel(ch)
    assert not rep.cp and rep.tp


@pytest.mark.parametrize("d", [2, 3])
def test_holevo_channel(d):
    povm = sic_povm(d)
    ch = holevo_channel(povm)
    assert check_channel(ch).ok
    assert np.allclose(ch(np.eye(d) / d), np.eye(d) / d, atol=1e-12)
    rho = random_state(d, np.random.default_rng(d))
    expect = sum(np.trace(E @ rho) * P for E, P in zip(povm.effects, povm.projectors))
    assert np.allclose(ch(rho), expect, atol=1e-12)


def test_holevo_channel_on_projector():
    povm = sic_povm(2)
    P = povm.projectors
    out = holevo_channel(povm)(P[1])
    # direct arithmetic: weights tr(P_y P_1)/2
    expect = 0.5 * P[1] + sum(P[y] for y in (0, 2, 3)) / 6
    assert np.allclose(out, expect, atol=1e-12)


def test_composition_associativity():
    povm = sic_povm(2)
    ch = holevo_channel(povm)
    rho = random_state(2, np.random.default_rng(4))
    assert np.allclose(ch(ch(rho)), ch.then(ch)(rho), atol=1e-10)


def test_choi_round_trip():
    rng = np.random.default_rng(1)
    K = [rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)) for _ in range(2)]
    S = sum(k.conj().T @ k for k in K)
    w, v = np.linalg.eigh(S)
    root = v @ np.diag(w ** -0.5) @ v.conj().T
    K = [k @ root for k in K]
    ch = Channel.from_kraus(K)
    again = Channel(2, 3, choi_from_map(ch, 2, 3))
    for i, j in product(range(2), range(2)):
        E = np.zeros((2, 2))
        E[i, j] = 1
        direct = sum(k @ E @ k.conj().T for k in K)
        assert np.allclose(ch(E), direct, atol=1e-12)
        assert np.allclose(again(E), direct, atol=1e-12)
    assert check_channel(ch).cp and check_channel(ch).tp


def test_tensor_channel():
    a, b = random_unbiased_channel(2, 2, 0), random_unbiased_channel(2, 3, 1)
    rng = np.random.default_rng(2)
    r1, r2 = random_state(2, rng), random_state(2, rng)
    assert np.allclose(a.tensor(b)(np.kron(r1, r2)), np.kron(a(r1), b(r2)), atol=1e-12)


def test_random_unbiased_many_seeds():
    shapes = [(2, 2), (2, 4), (4, 2), (3, 2), (2, 3), (4, 4)]
    for seed in range(100):
        din, dout = shapes[seed % len(shapes)]
        rep = check_channel(random_unbiased_channel(din, dout, seed))
        assert rep.ok, (seed, din, dout, rep)


def test_random_unbiased_examples():
    ch = random_unbiased_channel(2, 2, 5)
    # a unitary channel: the Choi matrix has rank one
    assert np.linalg.matrix_rank(ch.choi, tol=1e-9) == 1
    ch = random_unbiased_channel(2, 4, 5)
    assert np.allclose(ch(np.eye(2) / 2), np.eye(4) / 4, atol=1e-12)
    assert np.array_equal(random_unbiased_channel(3, 2, 9).choi, random_unbiased_channel(3, 2, 9).choi)


def test_random_unbiased_ancilla_cap():
    with pytest.raises(QuantumError):
        random_unbiased_channel(2, 3 * 67, 0)


def test_intervention_instrument_validation():
    povm = sic_povm(2)
    with pytest.raises(QuantumError):
        InterventionInstrument.sic(povm, target=[0.5, 0.5, 0.5, -0.5])
    with pytest.raises(QuantumError):
        InterventionInstrument.fine(povm, 4)
    inst = InterventionInstrument.sic(povm, simple=False)
    total = sum(ch.choi for _, ch in inst.branches())
    assert check_channel(Channel(2, 2, total)).tp


def test_intervention_branches_ignore_input():
    povm = sic_povm(2)
    inst = InterventionInstrument.sic(povm, target=[0.1, 0.2, 0.3, 0.4])
    rho = random_state(2, np.random.default_rng(3))
    for (w,), ch in inst.branches():
        assert np.allclose(ch(rho), inst.target[w] * povm.projectors[w])


def identity_comb(d):
    I = Channel.identity(d)
    return comb_from_functional(_circuit_functional(I, I, d, 1), d)


def local_ops(povm):
    d, n = povm.d, povm.n_outcomes
    A = [choi_from_map(lambda r, P=P: r[0, 0] * P / n, 1, d) for P in povm.projectors]
    W = [choi_from_map(lambda r, P=P: P @ r @ P / d, d, d) for P in povm.projectors]
    D = [choi_from_map(lambda r, E=E: np.trace(E @ r).reshape(1, 1), d, 1) for E in povm.effects]
    return A, W, D


def test_comb_pairing_normalized():
    povm = sic_povm(2)
    K = identity_comb(2)
    A, W, D = local_ops(povm)
    P = np.zeros((4, 4, 4))
    for a, w, e in product(range(4), range(4), range(4)):
        P[a, w, e] = comb_pair_probability(K, [A[a], W[w], D[e]])
    assert P.sum() == pytest.approx(1, abs=1e-12)
    # identity wires: P(a, w, e) = tr(P_w P_a)/2 * tr(P_e P_w)/2 / 4
    G = overlaps(povm)
    assert np.allclose(P, np.einsum("wa,ew->awe", G, G) / 16, atol=1e-12)


def test_comb_pairing_errors():
    K = identity_comb(2)
    with pytest.raises(QuantumError):
        comb_pair_probability(K, [np.eye(2), np.eye(2)])
    with pytest.raises(QuantumError):
        comb_pair_probability(-np.eye(4), [np.eye(2), np.eye(2)])
