"""Two stand-alone demonstrations.

``impossibility_demo`` shows that reference statistics cannot fix the
response to an intervention once a node's input and output wires can be
correlated through a hidden memory: the operators paired with the comb in
the reference experiment span only part of the operator space, and a
perturbation in the remainder changes the intervened statistics.

``fcc_violation_demo`` shows a common cause whose children are correlated
given the cause but independent unconditionally.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from ..graph import Dag, Layering
from ..network import QuantumNetwork, SubChannel, reference_distribution
from ..quantum import Channel, InterventionInstrument, choi_from_map, random_unbiased_channel, sic_povm
from .ci import ci_deviation

RANK_RTOL = 1e-8
REF_TOL = 1e-12
POST_MIN = 1e-3


def op_rank(ops, rtol: float = RANK_RTOL) -> int:
    """Dimension of the linear span of a list of square matrices."""
    M = np.array([np.asarray(o).ravel() for o in ops])
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0


# --- comb tomography --------------------------------------------------------

def _apply(C: np.ndarray, rho: np.ndarray, din: int, dout: int) -> np.ndarray:
    return np.einsum("ji,iajb->ba", rho, C.reshape(din, dout, din, dout))


def _circuit_functional(T1: Channel, T2: Channel, d: int, e: int):
    """Probability of local operations (A prep, W map, D effect) around a memory wire E.

    The circuit is A -> T1 -> (W_in, E); W acts on W_in; (W_out, E) -> T2 -> D.
    """

    def f(CA, CW, CD):
        sigma = _apply(CA, np.ones((1, 1)), 1, d)
        tau = T1(sigma).reshape(d, e, d, e)
        tau = np.einsum("jeif,iajb->beaf", tau, CW.reshape(d, d, d, d)).reshape(d * e, d * e)
        rho = T2(tau)
        return _apply(CD, rho, d, 1)[0, 0]

    return f


def comb_from_functional(f, d: int) -> np.ndarray:
    """Matrix K on A (x) W_in (x) W_out (x) D with f(CA, CW, CD) = tr[(CA (x) CW (x) CD) K]."""
    n = d ** 4
    K = np.zeros((n, n), dtype=complex)
    units1 = [(k, l) for k in range(d) for l in range(d)]
    units2 = [(k, l) for k in range(d * d) for l in range(d * d)]

    def unit(m, k, l):
        E = np.zeros((m, m), dtype=complex)
        E[k, l] = 1
        return E

    for (ka, la), (kw, lw), (kd, ld) in product(units1, units2, units1):
        val = f(unit(d, ka, la), unit(d * d, kw, lw), unit(d, kd, ld))
        k = (ka * d * d + kw) * d + kd
        l = (la * d * d + lw) * d + ld
        K[l, k] = val
    return K


def _comb_residual(K: np.ndarray, d: int, homogeneous: bool) -> float:
    """Deviation from tr_D K = K1 (x) I_Wout and tr_Win K1 = I_A (or 0 when homogeneous)."""
    T = K.reshape((d,) * 8)
    trD = np.einsum("awodbxpd->awobxp", T).reshape(d ** 3, d ** 3)
    K1 = np.einsum("awodbxod->awbx", T).reshape(d * d, d * d) / d
    r1 = np.max(np.abs(trD - np.kron(K1, np.eye(d))))
    top = np.einsum("awbw->ab", K1.reshape(d, d, d, d))
    r2 = np.max(np.abs(top - (0 if homogeneous else np.eye(d))))
    return float(max(r1, r2))


def _herm_coords(M: np.ndarray) -> np.ndarray:
    """Coordinates of M in the orthonormal Hermitian basis, so tr(X N) = c(X) . c(N)."""
    n = M.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.diag(M).real, np.sqrt(2) * M[iu].real, np.sqrt(2) * M[iu].imag])


def _herm_from_coords(x: np.ndarray, n: int) -> np.ndarray:
    M = np.diag(x[:n]).astype(complex)
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    off = (x[n:n + m] - 1j * x[n + m:]) / np.sqrt(2)
    M[iu] = off
    M[iu[1], iu[0]] = off.conj()
    return M


@dataclass
class ImpossibilityReport:
    reference_rank: int
    intervention_rank: int
    ambient: int
    reference_difference: float
    post_difference: float
    min_eigenvalues: tuple
    comb_residuals: tuple
    scale: float
    ok: bool
    message: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["suite"] = "impossibility"
        return d

    def summary(self) -> str:
        return (f"impossibility: {'PASS' if self.ok else 'FAIL'} reference span {self.reference_rank}, "
                f"intervention span {self.intervention_rank} of {self.ambient}; "
                f"reference difference {self.reference_difference:.2e}, "
                f"post-intervention difference {self.post_difference:.3e}" + (f" ({self.message})" if self.message else ""))


def impossibility_demo(seed: int = 0, noise: float = 0.5, d: int = 2) -> ImpossibilityReport:
    """Two combs with identical reference statistics but different intervened statistics."""
    povm = sic_povm(d)
    n = d * d
    # local operations: A is measured on a maximally mixed input, D is measured, W is the SIC-instrument
    ops_A = [choi_from_map(lambda r, P=P: r[0, 0] * P / n, 1, d) for P in povm.projectors]
    ops_D = [choi_from_map(lambda r, E=E: np.trace(E @ r).reshape(1, 1), d, 1) for E in povm.effects]
    ops_W_ref = [choi_from_map(lambda r, P=P: P @ r @ P / d, d, d) for P in povm.projectors]
    ops_W_two = [ch.choi for _, ch in InterventionInstrument.sic(povm, simple=False).branches()]
    ops_W_do = [ch.choi for _, ch in InterventionInstrument.sic(povm).branches()]

    def products(ws):
        return [np.kron(np.kron(a, w), e) for a in ops_A for w in ws for e in ops_D]

    ref_ops, two_ops, do_ops = products(ops_W_ref), products(ops_W_two), products(ops_W_do)
    r_ref, r_two = op_rank(ref_ops), op_rank(two_ops)

    # a full-rank comb: memory circuit mixed with a fully depolarizing one
    T1 = random_unbiased_channel(d, d * d, seed)
    T2 = random_unbiased_channel(d * d, d, seed + 1)
    K_circ = comb_from_functional(_circuit_functional(T1, T2, d, d), d)
    dep1 = Channel.from_map(lambda r: np.trace(r) * np.eye(d * d) / (d * d), d, d * d)
    dep2 = Channel.from_map(lambda r: np.trace(r) * np.eye(d) / d, d * d, d)
    K_noise = comb_from_functional(_circuit_functional(dep1, dep2, d, d), d)
    K1 = (1 - noise) * K_circ + noise * K_noise
    K1 = (K1 + K1.conj().T) / 2

    # null-space perturbation: orthogonal to every reference operator and to the comb constraints
    dim = K1.shape[0]
    basis_coords = np.eye(dim * dim)
    rows = [_herm_coords(X) for X in ref_ops]
    cons = []
    for x in basis_coords:
        N = _herm_from_coords(x, dim)
        T = N.reshape((d,) * 8)
        trD = np.einsum("awodbxpd->awobxp", T).reshape(d ** 3, d ** 3)
        N1 = np.einsum("awodbxod->awbx", T).reshape(d * d, d * d) / d
        top = np.einsum("awbw->ab", N1.reshape(d, d, d, d))
        v = np.concatenate([(trD - np.kron(N1, np.eye(d))).ravel(), top.ravel()])
        cons.append(np.concatenate([v.real, v.imag]))
    A = np.vstack([np.array(rows), np.array(cons).T])
    _, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    Z = Vt[rank:].T
    report = dict(reference_rank=r_ref, intervention_rank=r_two, ambient=dim * dim)
    if Z.shape[1] == 0:
        return ImpossibilityReport(**report, reference_difference=0.0, post_difference=0.0, min_eigenvalues=(),
                                   comb_residuals=(), scale=0.0, ok=False, message="no admissible perturbation found")
    # pick the null direction that moves the intervened statistics most
    G = np.array([_herm_coords(X) for X in do_ops])
    _, _, gv = np.linalg.svd(G @ Z)
    x = Z @ gv[0]
    N = _herm_from_coords(x, dim)
    lam1 = float(np.linalg.eigvalsh(K1)[0])
    scale = 0.9 * lam1 / float(np.max(np.abs(np.linalg.eigvalsh(N))))
    K2 = K1 + scale * N

    def stats(K, ops):
        return np.array([np.trace(X @ K).real for X in ops])

    ref_diff = float(np.max(np.abs(stats(K1, ref_ops) - stats(K2, ref_ops))))
    post1, post2 = stats(K1, do_ops), stats(K2, do_ops)
    post_diff = float(np.max(np.abs(post1 - post2)))
    eig = (lam1, float(np.linalg.eigvalsh(K2)[0]))
    res = (_comb_residual(K1, d, False), _comb_residual(K2, d, False))
    ok = (r_ref == n ** 3 and r_two == n ** 4 and ref_diff < REF_TOL and post_diff >= POST_MIN
          and min(eig) >= 0 and max(res) < 1e-10)
    details = {
        "reference_sums": (float(stats(K1, ref_ops).sum()), float(stats(K2, ref_ops).sum())),
        "post_sums": (float(post1.sum()), float(post2.sum())),
        "null_dimension": int(Z.shape[1]),
    }
    return ImpossibilityReport(**report, reference_difference=ref_diff, post_difference=post_diff,
                               min_eigenvalues=eig, comb_residuals=res, scale=scale, ok=ok,
                               details=details, **({} if ok else {"message": "criteria not met"}))


# --- common-cause demo ----------------------------------------------------------

def _complete_unitary(first_in: np.ndarray, first_out: np.ndarray) -> np.ndarray:
    """A unitary sending the unit vector ``first_in`` to ``first_out``."""

    def frame(v):
        M = np.eye(v.size, dtype=complex)
        M[:, 0] = v
        Q, _ = np.linalg.qr(M)
        Q[:, 0] *= np.vdot(Q[:, 0], v)
        return Q

    A = frame(first_in / np.linalg.norm(first_in))
    B = frame(first_out / np.linalg.norm(first_out))
    return B @ A.conj().T


@dataclass
class FccReport:
    joint_deviation: float
    conditional_deviation: float
    per_cause: tuple
    identity_gap_deviation: float
    ok: bool

    @property
    def passed(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["suite"] = "fcc"
        return d

    def summary(self) -> str:
        return (f"fcc: {'PASS' if self.ok else 'FAIL'} unconditional joint off 1/16 by {self.joint_deviation:.2e}; "
                f"conditional factorization deviation {self.conditional_deviation:.3e} (entangling gap), "
                f"{self.identity_gap_deviation:.3e} (identity gap)")


def _common_cause_table(U: np.ndarray):
    g = Dag.from_edges([("C", "X1"), ("C", "X2")], dims={"C": 4, "X1": 2, "X2": 2}, names=["C", "X1", "X2"])
    lay = Layering.of(g, [["C"], ["X1", "X2"]])
    c, x1, x2 = (g.id_of(n) for n in ("C", "X1", "X2"))
    net = QuantumNetwork(g, lay, {}, ((SubChannel((c,), (x1, x2), Channel.unitary(U)),),))
    return reference_distribution(net), (c, x1, x2)


def fcc_violation_demo(cause: int = 0) -> FccReport:
    """Cause C (d=4) feeding two qubits through a unitary that maps Pi_cause to a Bell state."""
    povm = sic_povm(4)
    bell = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    _, vecs = np.linalg.eigh(povm.projectors[cause])
    U = _complete_unitary(vecs[:, -1], bell)
    P, (c, x1, x2) = _common_cause_table(U)
    joint = P.array((x1, x2))
    jdev = float(np.max(np.abs(joint - 1 / 16)))
    per = []
    for k in range(16):
        cond = P.conditional((x1, x2), (c,))[:, :, k]
        per.append(float(np.max(np.abs(cond - np.outer(cond.sum(1), cond.sum(0))))))
    cdev = ci_deviation(P, [x1], [x2], [c])
    Pid, ids = _common_cause_table(np.eye(4))
    iddev = ci_deviation(Pid, [ids[1]], [ids[2]], [ids[0]])
    ok = jdev < 1e-9 and max(per) > 1e-3
    return FccReport(jdev, cdev, tuple(per), iddev, ok)
