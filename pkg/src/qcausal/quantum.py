"""Small dense quantum objects: SIC-POVMs, instruments and channels.

Choi convention
---------------
A map ``M`` from a ``din``-dimensional input to a ``dout``-dimensional
output is stored as

    choi = sum_{ij} |i><j| (x) M(|j><i|)^T

with the input factor first. This is the full transpose of the textbook
Choi matrix ``sum_ij |i><j| (x) M(|i><j|)``, so it is positive
semidefinite exactly when ``M`` is completely positive. Under this
convention the probability of composing local operations with a process
``K`` is ``tr[(C_1 (x) C_2 (x) ...) K]``. In index form,
``choi[(i, a), (j, b)] = M(|j><i|)[b, a]`` and the action on an input
``rho`` is ``M(rho)[b, a] = sum_ij rho[j, i] choi[(i, a), (j, b)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import gcd
from typing import Callable, Sequence

import numpy as np

STRUCT_TOL = 1e-10
FIDUCIAL_TOL = 1e-8
ANCILLA_CAP = 64


class QuantumError(ValueError):
    pass


# --- SIC-POVMs -------------------------------------------------------------

def _builtin_fiducial(d: int) -> np.ndarray:
    if d == 2:
        # tetrahedral qubit SIC
        a = np.sqrt((3 + np.sqrt(3)) / 6)
        b = np.sqrt((3 - np.sqrt(3)) / 6)
        return np.array([a, b * np.exp(1j * np.pi / 4)])
    if d == 3:
        # Hesse configuration
        return np.array([0.0, 1.0, -1.0], dtype=complex) / np.sqrt(2)
    if d == 4:
        # numerically polished Weyl-Heisenberg fiducial, overlap error ~3e-16
        return np.array([0.40084839132434086, -0.15440391488017483 - 0.12898169793524522j,
                         -0.5578338408973449 + 0.5017457233224643j, -0.3113893644531789 + 0.372764025387219j])
    raise QuantumError(f"no built-in SIC fiducial for d={d}; supply one explicitly")


def weyl_heisenberg(d: int, a: int, b: int) -> np.ndarray:
    """Displacement operator X^a Z^b with X|k> = |k+1>, Z|k> = w^k |k>."""
    X = np.roll(np.eye(d), 1, axis=0)
    Z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)


def sic_overlap_deviation(projectors: np.ndarray) -> float:
    """max |tr(P_y P_y') - (d delta + 1)/(d + 1)| over all pairs."""
    d = projectors.shape[-1]
    gram = np.einsum("xij,yji->xy", projectors, projectors).real
    target = (d * np.eye(d * d) + 1) / (d + 1)
    return float(np.max(np.abs(gram - target)))


@dataclass(frozen=True, eq=False)
class SicPovm:
    """d^2 rank-one projectors Pi_y with effects E_y = Pi_y / d."""

    d: int
    fiducial: np.ndarray
    projectors: np.ndarray = field(repr=False)

    @property
    def n_outcomes(self) -> int:
        return self.d * self.d

    @cached_property
    def effects(self) -> np.ndarray:
        return self.projectors / self.d

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("yij,ji->y", self.effects, rho).real


def sic_povm(d: int, fiducial: Sequence[complex] | None = None) -> SicPovm:
    """Weyl-Heisenberg SIC generated from a fiducial; outcome y = a*d + b."""
    d = int(d)
    if d < 2:
        raise QuantumError("SIC dimension must be at least 2")
    psi = _builtin_fiducial(d) if fiducial is None else np.asarray(fiducial, dtype=complex).ravel()
    if psi.shape != (d,):
        raise QuantumError(f"fiducial has length {psi.size}, expected {d}")
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise QuantumError("fiducial is the zero vector")
    psi = psi / norm
    projs = []
    for a in range(d):
        for b in range(d):
            v = weyl_heisenberg(d, a, b) @ psi
            projs.append(np.outer(v, v.conj()))
    projs = np.array(projs)
    dev = sic_overlap_deviation(projs)
    if dev > FIDUCIAL_TOL:
        raise QuantumError(f"fiducial fails the SIC overlap test: max deviation {dev:.3e}")
    povm = SicPovm(d, psi, projs)
    check_sic(povm, STRUCT_TOL)
    return povm


def check_sic(povm: SicPovm, tol: float = STRUCT_TOL) -> dict:
    """Completeness, overlap and rank-one checks; raises if any fails."""
    d = povm.d
    P = povm.projectors
    report = {
        "completeness": float(np.max(np.abs(povm.effects.sum(axis=0) - np.eye(d)))),
        "overlap": sic_overlap_deviation(P),
        "idempotence": float(np.max(np.abs(np.einsum("yij,yjk->yik", P, P) - P))),
    }
    bad = {k: v for k, v in report.items() if v > tol}
    if bad:
        raise QuantumError(f"SIC invariants violated: {bad}")
    return report


def _check_state(rho: np.ndarray, d: int, tol: float = STRUCT_TOL):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d, d):
        raise QuantumError(f"state has shape {rho.shape}, expected ({d}, {d})")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise QuantumError("state is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise QuantumError(f"state has trace {np.trace(rho).real:.6g}")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -tol:
        raise QuantumError("state is not positive semidefinite")
    return rho


def sic_instrument(povm: SicPovm, rho: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Outcome probabilities tr(Pi_y rho)/d and the post-measurement states Pi_y."""
    rho = _check_state(rho, povm.d)
    return povm.probabilities(rho), list(povm.projectors)


# --- channels --------------------------------------------------------------

def choi_from_map(fn: Callable[[np.ndarray], np.ndarray], din: int, dout: int) -> np.ndarray:
    C = np.zeros((din, dout, din, dout), dtype=complex)
    for i in range(din):
        for j in range(din):
            E = np.zeros((din, din), dtype=complex)
            E[j, i] = 1
            out = np.asarray(fn(E), dtype=complex).reshape(dout, dout)
            C[i, :, j, :] = out.T
    return C.reshape(din * dout, din * dout)


@dataclass(frozen=True, eq=False)
class Channel:
    din: int
    dout: int
    choi: np.ndarray = field(repr=False)

    def __post_init__(self):
        C = np.asarray(self.choi, dtype=complex)
        n = self.din * self.dout
        if C.shape != (n, n):
            raise QuantumError(f"Choi matrix has shape {C.shape}, expected ({n}, {n})")
        object.__setattr__(self, "choi", C)

    @classmethod
    def from_map(cls, fn, din: int, dout: int) -> "Channel":
        return cls(din, dout, choi_from_map(fn, din, dout))

    @classmethod
    def from_kraus(cls, kraus: Sequence[np.ndarray]) -> "Channel":
        kraus = [np.asarray(K, dtype=complex) for K in kraus]
        dout, din = kraus[0].shape
        return cls.from_map(lambda r: sum(K @ r @ K.conj().T for K in kraus), din, dout)

    @classmethod
    def unitary(cls, U: np.ndarray) -> "Channel":
        return cls.from_kraus([U])

    @classmethod
    def identity(cls, d: int) -> "Channel":
        return cls.from_kraus([np.eye(d)])

    @cached_property
    def tensor4(self) -> np.ndarray:
        """Choi reshaped to indices [i, a, j, b]."""
        return self.choi.reshape(self.din, self.dout, self.din, self.dout)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return apply_channel(self, rho)

    def then(self, other: "Channel") -> "Channel":
        """Sequential composition: ``self`` first, then ``other``."""
        if other.din != self.dout:
            raise QuantumError(f"cannot compose dout={self.dout} with din={other.din}")
        return Channel.from_map(lambda r: other(self(r)), self.din, other.dout)

    def tensor(self, other: "Channel") -> "Channel":
        C = np.einsum("iajb,kcld->ikacjlbd", self.tensor4, other.tensor4)
        din, dout = self.din * other.din, self.dout * other.dout
        return Channel(din, dout, C.reshape(din * dout, din * dout))


def apply_channel(ch: Channel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.din, ch.din):
        raise QuantumError(f"input has shape {rho.shape}, channel expects ({ch.din}, {ch.din})")
    return np.einsum("ji,iajb->ba", rho, ch.tensor4)


def partial_trace_output(ch: Channel) -> np.ndarray:
    return np.einsum("iaja->ij", ch.tensor4)


@dataclass(frozen=True)
class ChannelReport:
    cp: bool
    tp: bool
    unbiased: bool
    min_eigenvalue: float
    tp_deviation: float
    unbiased_deviation: float

    @property
    def ok(self) -> bool:
        return self.cp and self.tp and self.unbiased


def check_channel(ch: Channel, tol: float = STRUCT_TOL) -> ChannelReport:
    C = ch.choi
    herm = float(np.max(np.abs(C - C.conj().T)))
    mineig = float(np.linalg.eigvalsh((C + C.conj().T) / 2).min())
    tp_dev = float(np.max(np.abs(partial_trace_output(ch) - np.eye(ch.din))))
    out = apply_channel(ch, np.eye(ch.din) / ch.din)
    ub_dev = float(np.max(np.abs(out - np.eye(ch.dout) / ch.dout)))
    return ChannelReport(
        cp=herm <= tol and mineig >= -tol,
        tp=tp_dev <= tol,
        unbiased=ub_dev <= tol,
        min_eigenvalue=mineig,
        tp_deviation=tp_dev,
        unbiased_deviation=ub_dev,
    )


def holevo_channel(povm: SicPovm) -> Channel:
    """rho -> sum_y tr(E_y rho) Pi_y, the summed SIC-instrument."""
    P, E = povm.projectors, povm.effects
    return Channel.from_map(lambda r: np.einsum("y,yij->ij", np.einsum("yij,ji->y", E, r), P), povm.d, povm.d)


def sic_branch_channel(povm: SicPovm, y: int) -> Channel:
    """Outcome map rho -> (1/d) Pi_y rho Pi_y of the SIC-instrument."""
    Pi = povm.projectors[y]
    return Channel.from_kraus([Pi / np.sqrt(povm.d)])


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def ancilla_size(din: int, dout: int, cap: int = ANCILLA_CAP) -> int:
    k = dout // gcd(din, dout)
    if k > cap:
        raise QuantumError(f"ancilla of size {k} needed for din={din}, dout={dout} exceeds cap {cap}")
    return k


def random_unbiased_channel(din: int, dout: int, seed: int, cap: int = ANCILLA_CAP) -> Channel:
    """rho -> tr_B[U (rho (x) I/k) U^dag] with U Haar on din*k = dout*m.

    k is the smallest ancilla size making dout divide din*k. The maximally
    mixed input goes to the maximally mixed output by construction.
    """
    k = ancilla_size(din, dout, cap)
    n = din * k
    m = n // dout
    U = haar_unitary(n, np.random.default_rng(seed))
    Ut = U.reshape(dout, m, din, k)
    kraus = [Ut[:, b, :, l] / np.sqrt(k) for b in range(m) for l in range(k)]
    return Channel.from_kraus(kraus)


def is_unbiased(ch: Channel, tol: float = STRUCT_TOL) -> bool:
    return check_channel(ch, tol).unbiased


# --- interventions ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InterventionInstrument:
    """Discard-and-reprepare instrument on a d-dimensional wire.

    Outcome w prepares ``states[w]`` with probability ``target[w]`` whatever
    the input. When ``simple`` is False the input is first measured with the
    POVM ``povm`` and that outcome u is recorded too, giving the map
    rho -> tr(rho F_u) P'(w) sigma_w.
    """

    d: int
    target: np.ndarray
    states: np.ndarray
    povm: np.ndarray | None = None
    simple: bool = True

    def __post_init__(self):
        t = np.asarray(self.target, dtype=float)
        if t.ndim != 1 or np.any(t < 0) or abs(t.sum() - 1) > 1e-12:
            raise QuantumError("intervention target must be a probability vector")
        object.__setattr__(self, "target", t)
        S = np.asarray(self.states, dtype=complex)
        if S.shape != (t.size, self.d, self.d):
            raise QuantumError(f"reprepared states have shape {S.shape}, expected {(t.size, self.d, self.d)}")
        for s in S:
            _check_state(s, self.d)
        object.__setattr__(self, "states", S)
        if not self.simple:
            F = np.asarray(self.povm, dtype=complex)
            if F.ndim != 3 or F.shape[1:] != (self.d, self.d):
                raise QuantumError("intervention POVM must be a stack of d x d effects")
            if np.max(np.abs(F.sum(axis=0) - np.eye(self.d))) > STRUCT_TOL:
                raise QuantumError("intervention POVM effects do not sum to the identity")
            object.__setattr__(self, "povm", F)

    @classmethod
    def sic(cls, povm: SicPovm, target=None, simple: bool = True) -> "InterventionInstrument":
        """Reprepare SIC states; target defaults to uniform, input POVM to the SIC effects."""
        n = povm.n_outcomes
        t = np.full(n, 1.0 / n) if target is None else target
        return cls(povm.d, t, povm.projectors, None if simple else povm.effects, simple)

    @classmethod
    def fine(cls, povm: SicPovm, k: int) -> "InterventionInstrument":
        n = povm.n_outcomes
        if not 0 <= k < n:
            raise QuantumError(f"outcome {k} out of range 0..{n - 1}")
        t = np.zeros(n)
        t[k] = 1.0
        return cls(povm.d, t, povm.projectors)

    def branches(self) -> list[tuple[tuple[int, ...], Channel]]:
        """Outcome labels with their CP maps; labels are (w,) or (u, w)."""
        d = self.d
        out = []
        if self.simple:
            for w, (p, s) in enumerate(zip(self.target, self.states)):
                out.append(((w,), Channel.from_map(lambda r, p=p, s=s: np.trace(r) * p * s, d, d)))
        else:
            for u, F in enumerate(self.povm):
                for w, (p, s) in enumerate(zip(self.target, self.states)):
                    fn = lambda r, F=F, p=p, s=s: np.trace(F @ r) * p * s
                    out.append(((u, w), Channel.from_map(fn, d, d)))
        return out


# --- combs -----------------------------------------------------------------

def comb_pair_probability(K: np.ndarray, local_ops: Sequence[np.ndarray], tol: float = 1e-9) -> float:
    """tr[(op_1 (x) op_2 (x) ...) K]."""
    K = np.asarray(K)
    dims = [np.asarray(op).shape[0] for op in local_ops]
    for op in local_ops:
        if np.asarray(op).shape[0] != np.asarray(op).shape[1]:
            raise QuantumError("local operations must be square")
    if int(np.prod(dims)) != K.shape[0]:
        raise QuantumError(f"local operations span dimension {int(np.prod(dims))}, comb has {K.shape[0]}")
    big = local_ops[0]
    for op in local_ops[1:]:
        big = np.kron(big, op)
    val = np.trace(big @ K)
    if val.real < -tol:
        raise QuantumError(f"negative pairing {val.real:.3e}: invalid comb")
    return float(val.real)
