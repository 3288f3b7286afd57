"""Counterfactual inference from reference tables.

All rules here read probabilities off a reference table (every node
SIC-measured) and return the distribution for a modified experiment: a
node intervened on (``quantum_do``) or a set of measurements removed
(``undo_*``). The un-measurement rules rest on the SIC reconstruction
identity rho = sum_y [(d+1) p(y) - 1/d] Pi_y, which is why the kernel
Delta below appears everywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import isqrt, prod
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import Dag, Layering, surgery_do, validate_layering
from .table import PROB_TOL, NegativityWarning, ProbTable, TableError, factor_product

GRAM_TOL = 1e-12


class InferenceError(ValueError):
    pass


class NonQuantumError(InferenceError):
    pass


# --- kernels ---------------------------------------------------------------

def delta_matrix(d: int) -> np.ndarray:
    """Single-node kernel (d+1) delta - 1/d on d^2 outcomes."""
    n = d * d
    return (d + 1) * np.eye(n) - np.full((n, n), 1.0 / d)


@dataclass(frozen=True, eq=False)
class DeltaKernel:
    dims: tuple[int, ...]
    factors: tuple[np.ndarray, ...]

    @property
    def matrix(self) -> np.ndarray:
        """Dense kernel over joint outcomes, row-major in ``dims`` order."""
        out = np.ones((1, 1))
        for f in self.factors:
            out = np.kron(out, f)
        return out


@dataclass(frozen=True, eq=False)
class SicGram:
    d: int
    M: np.ndarray
    Minv: np.ndarray


def sic_gram(d: int) -> SicGram:
    n = d * d
    M = (d * np.eye(n) + 1) / (d * d * (d + 1))
    Minv = d * (d + 1) * np.eye(n) - 1
    return SicGram(d, M, Minv)


def sic_gram_exact(d: int) -> tuple[list[list[Fraction]], list[list[Fraction]]]:
    """Gram matrix of the SIC effects and its inverse in rational arithmetic."""
    n = d * d
    M = [[Fraction(d * (i == k) + 1, d * d * (d + 1)) for k in range(n)] for i in range(n)]
    Minv = [[Fraction(d * (d + 1) * (i == k) - 1) for k in range(n)] for i in range(n)]
    return M, Minv


def delta_and_gram(dims: Sequence[int]) -> tuple[DeltaKernel, list[SicGram]]:
    dims = tuple(int(d) for d in dims)
    if not dims or min(dims) < 2:
        raise InferenceError("dims must be a nonempty list of integers >= 2")
    grams = [sic_gram(d) for d in dims]
    for g in grams:
        err = np.max(np.abs(g.M @ g.Minv - np.eye(g.d * g.d)))
        if err > GRAM_TOL:
            raise InferenceError(f"Gram inverse check failed for d={g.d}: {err:.3e}")
    kernel = DeltaKernel(dims, tuple(delta_matrix(d) for d in dims))
    for d, f in zip(dims, kernel.factors):
        if np.max(np.abs(f.sum(axis=1) - 1)) > GRAM_TOL or np.max(np.abs(f - f.T)) > 0:
            raise InferenceError(f"Delta kernel invariants failed for d={d}")
    return kernel, grams


def _sic_dim(domain: int) -> int:
    d = isqrt(domain)
    if d * d != domain or d < 2:
        raise InferenceError(f"domain size {domain} is not d^2 for a SIC with d >= 2")
    return d


def _primed(v):
    return ("'", v)


def _delta_factors(table: ProbTable, U: Sequence) -> list:
    return [((u, _primed(u)), delta_matrix(_sic_dim(table.domain(u)))) for u in U]


# --- result handling ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CondTable:
    """Conditional distribution P(target | given); axes are target then given."""

    target: tuple
    given: tuple
    values: np.ndarray
    names: tuple = ()


def _check_sign(values: np.ndarray, tol: float, what: str) -> np.ndarray:
    v = np.array(values, dtype=float)
    lo = float(v.min()) if v.size else 0.0
    if lo < -tol:
        raise NonQuantumError(f"non-quantum reference distribution: {what} has entry {lo:.3e} below -{tol:g}")
    if lo < 0:
        if lo < -1e-12:
            warnings.warn(f"{what}: clamped negative entries down to {lo:.3e}", NegativityWarning, stacklevel=3)
        v[v < 0] = 0.0
    return v


def _finish_joint(values, variables, table: ProbTable, tol: float, what: str) -> ProbTable:
    v = _check_sign(values, tol, what)
    s = v.sum()
    if s > 0:
        v = v / s
    names = tuple(table.name_of(x) for x in variables)
    try:
        return ProbTable(tuple(variables), v, names)
    except TableError as e:
        raise NonQuantumError(f"non-quantum reference distribution: {e}") from None


# --- Urgleichung for a chain -------------------------------------------------

def urgleichung_chain(table: ProbTable, x, y, z, dag: Dag | None = None, tol: float = PROB_TOL) -> ProbTable:
    """P(X, Z | Y un-measured) for a chain through Y.

    For X -> Y -> Z the rule is
    sum_y P(z|y) [(1+d_Y) P(y|x) - 1/d_Y] P(x). When the DAG says the chain
    runs Z -> Y -> X the roles of X and Z are exchanged.
    """
    if dag is not None:
        x, y, z = (dag.resolve(v) for v in (x, y, z))
        fwd = (x, y) in dag.edges and (y, z) in dag.edges
        back = (z, y) in dag.edges and (y, x) in dag.edges
        if not (fwd or back):
            raise InferenceError("x, y, z do not form a directed chain in the DAG")
        if back:
            src, dst = z, x
        else:
            src, dst = x, z
    else:
        src, dst = x, z
    d = _sic_dim(table.domain(y))
    p_dst_y = table.conditional([dst], [y])
    p_y_src = table.conditional([y], [src])
    p_src = table.array([src])
    bracket = (1 + d) * p_y_src - 1.0 / d
    vals = np.einsum("zy,yx,x->xz", p_dst_y, bracket, p_src)
    out_vars = (src, dst)
    order = tuple(v for v in table.variables if v in (x, z))
    if order != out_vars:
        vals = vals.T
    return _finish_joint(vals, order, table, tol, "Urgleichung output")


# --- un-measurement on layers --------------------------------------------------

def _layers_from(table: ProbTable, layering) -> list[tuple]:
    layers = layering.layers if isinstance(layering, Layering) else layering
    out = [tuple(v for v in table.variables if v in set(L)) for L in layers]
    return out


@dataclass(frozen=True, eq=False)
class UndoResult:
    conditional: CondTable   # P(L_{j+1} | L_{j-1}, W, un U)
    marginal: CondTable      # P(L_{j+1} | L_{j-1}, un U)
    joint: ProbTable         # every remaining variable


def _undo(table: ProbTable, layers: list[tuple], j: int, U: Sequence, condition_on_kept: bool, tol: float) -> UndoResult:
    if not 0 <= j < len(layers):
        raise InferenceError(f"layer index {j} out of range")
    mid = layers[j]
    U = tuple(v for v in mid if v in set(U))
    if not U:
        raise InferenceError(f"nothing to un-measure in layer {j}")
    Wk = tuple(v for v in mid if v not in U)
    prev = layers[j - 1] if j > 0 else ()
    nxt = layers[j + 1] if j + 1 < len(layers) else ()
    earlier = tuple(v for L in layers[:max(j - 1, 0)] for v in L)
    later = tuple(v for L in layers[j + 2:] for v in L)

    p_next = table.conditional(nxt, U + Wk)
    if condition_on_kept:
        p_u = table.conditional(U, prev + Wk)
        u_labels = tuple(_primed(u) for u in U) + prev + Wk
    else:
        p_u = table.conditional(U, prev)
        u_labels = tuple(_primed(u) for u in U) + prev
    factors = [(nxt + U + Wk, p_next), (u_labels, p_u)] + _delta_factors(table, U)
    cond = factor_product(factors, nxt + prev + Wk)
    cond = _check_sign(cond, tol, "un-measurement conditional")
    p_w_prev = table.conditional(Wk, prev)
    marg = factor_product([(nxt + prev + Wk, cond), (Wk + prev, p_w_prev)], nxt + prev)

    keep = tuple(v for v in table.variables if v not in U)
    head = earlier + prev + Wk
    p_head = table.array(head)
    parts = [(nxt + prev + Wk, cond), (head, p_head)]
    if later:
        parts.append((later + nxt, table.conditional(later, nxt)))
    joint = factor_product(parts, keep)
    names = lambda vs: tuple(table.name_of(v) for v in vs)
    return UndoResult(
        CondTable(nxt, prev + Wk, cond, names(nxt + prev + Wk)),
        CondTable(nxt, prev, marg, names(nxt + prev)),
        _finish_joint(joint, keep, table, tol, "un-measurement joint"),
    )


def undo_subset(table: ProbTable, layering, j: int, U: Iterable, condition_on_kept: bool = True,
                tol: float = PROB_TOL) -> UndoResult:
    """Remove the measurements on ``U``, a subset of layer ``j`` (0-based).

    The next layer's distribution is
    sum_{u,u'} P(L_{j+1} | u w) Delta_{u u'} P(u' | L_{j-1} w),
    where w are the layer-j nodes that stay measured. With
    ``condition_on_kept=False`` the last factor is P(u' | L_{j-1}) instead,
    which is only exact when U and w are independent given L_{j-1}.
    The joint keeps earlier layers and later layers as in the reference.
    """
    U = list(U)
    for u in U:
        table.axis(u)
    return _undo(table, _layers_from(table, layering), j, U, condition_on_kept, tol)


def undo_layer(table: ProbTable, layering, j: int, tol: float = PROB_TOL) -> tuple[CondTable, ProbTable]:
    """Un-measure all of layer j; returns P(L_{j+1} | L_{j-1}, un L_j) and the joint."""
    layers = _layers_from(table, layering)
    res = _undo(table, layers, j, layers[j], True, tol)
    return res.marginal, res.joint


def _group_by_layer(table: ProbTable, layers: list[tuple], targets) -> dict[int, tuple]:
    if isinstance(targets, Mapping):
        groups = {int(j): tuple(U) for j, U in targets.items()}
    else:
        groups: dict[int, list] = {}
        for v in targets:
            js = [j for j, L in enumerate(layers) if v in L]
            if not js:
                raise InferenceError(f"variable {v!r} is not in any layer")
            groups.setdefault(js[0], []).append(v)
        groups = {j: tuple(U) for j, U in groups.items()}
    return groups


def multi_undo(table: ProbTable, layering, targets, order: Sequence[int] | None = None,
               tol: float = PROB_TOL) -> ProbTable:
    """Un-measure subsets of several layers; the layers must be pairwise non-adjacent.

    ``targets`` maps layer index to the nodes to un-measure there, or is a
    plain collection of nodes grouped by their layers. ``order`` fixes the
    order in which layers are processed (ascending by default).
    """
    layers = _layers_from(table, layering)
    groups = _group_by_layer(table, layers, targets)
    js = sorted(groups)
    for a, b in zip(js, js[1:]):
        if b - a < 2:
            raise InferenceError(
                f"layers {a} and {b} are adjacent: each un-measured layer must sit between two "
                "fully measured layers")
    seq = list(order) if order is not None else js
    if sorted(seq) != js:
        raise InferenceError("order must list exactly the targeted layers")
    cur = table
    for j in seq:
        res = _undo(cur, _layers_from(cur, [L for L in layers]), j, groups[j], True, tol)
        cur = res.joint
    return cur


# --- interventions -----------------------------------------------------------

def _target_vector(target, n: int) -> np.ndarray:
    if target is None:
        return np.full(n, 1.0 / n)
    if isinstance(target, (int, np.integer)):
        if not 0 <= int(target) < n:
            raise InferenceError(f"outcome {target} out of range 0..{n - 1}")
        t = np.zeros(n)
        t[int(target)] = 1.0
        return t
    t = np.asarray(target, dtype=float)
    if t.shape != (n,) or np.any(t < 0) or abs(t.sum() - 1) > 1e-12:
        raise InferenceError(f"target must be a probability vector of length {n}")
    return t


@dataclass(frozen=True)
class InterventionParts:
    """Node groups around an intervened node W in layer j."""

    layer_mates: frozenset
    before: frozenset          # every node in a layer before j
    after: frozenset           # every node in a layer after j
    ancestors: frozenset       # ancestors of W
    descendants: frozenset     # descendants of W
    rest_before: frozenset     # before, minus ancestors of W
    rest_after: frozenset      # after, minus descendants of W


def intervention_parts(dag: Dag, layering: Layering, w) -> InterventionParts:
    w = dag.resolve(w)
    j = layering.layer_of(w)
    before = frozenset(v for L in layering.layers[:j] for v in L)
    after = frozenset(v for L in layering.layers[j + 1:] for v in L)
    anc, desc = dag.ancestors(w), dag.descendants(w)
    return InterventionParts(layering.layers[j] - {w}, before, after, anc, desc, before - anc, after - desc)


def quantum_do(table: ProbTable, dag: Dag, layering: Layering, w, target=None, tol: float = PROB_TOL) -> ProbTable:
    """P(all | do W) = P'(w) P(after | w, L) P(L, before).

    L are W's layer-mates, ``before``/``after`` the nodes of earlier and
    later layers. ``target`` is a distribution over W's outcomes (uniform by
    default) or an integer for the fine-grained intervention.
    """
    rep = validate_layering(dag, layering)
    if not rep:
        raise InferenceError(
            "the DAG is not layered under this layering, so the reference statistics cannot determine "
            "interventions (causal sufficiency fails): " + "; ".join(rep.problems))
    w = dag.resolve(w)
    parts = intervention_parts(dag, layering, w)
    order = table.variables
    L = tuple(v for v in order if v in parts.layer_mates)
    before = tuple(v for v in order if v in parts.before)
    after = tuple(v for v in order if v in parts.after)
    t = _target_vector(target, table.domain(w))
    vals = factor_product([
        ((w,), t),
        (after + (w,) + L, table.conditional(after, (w,) + L)),
        (L + before, table.array(L + before)),
    ], order)
    return _finish_joint(vals, order, table, tol, "intervention output")


def quantum_do_many(table: ProbTable, dag: Dag, layering: Layering, targets: Mapping, order=None,
                    tol: float = PROB_TOL) -> ProbTable:
    """Several interventions, applied one at a time (topological order by default)."""
    ids = {dag.resolve(k): v for k, v in targets.items()}
    seq = [v for v in dag.topological_order if v in ids] if order is None else [dag.resolve(v) for v in order]
    if sorted(seq) != sorted(ids):
        raise InferenceError("order must list exactly the intervened nodes")
    cur, g = table, dag
    for v in seq:
        cur = quantum_do(cur, g, layering, v, ids[v], tol)
        g = surgery_do(g, v)
    return cur
