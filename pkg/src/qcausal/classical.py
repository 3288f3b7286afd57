"""Classical causal models: factorized joints, interventions, marginalization."""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Mapping

import numpy as np

from .graph import CLASSICAL, Dag, implied_independences, surgery_do
from .table import PROB_TOL, ProbTable, factor_product

JOINT_CAP = 10**6
ROW_TOL = 1e-12


class ClassicalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClassicalModel:
    """DAG plus conditional tables.

    ``cpts[x]`` has axes (x, *sorted parents of x); every slice over x sums
    to one. Node ``dim`` is the number of outcomes.
    """

    dag: Dag
    cpts: Mapping[int, np.ndarray]

    def __post_init__(self):
        cpts = {}
        for v in self.dag.ids:
            if v not in self.cpts:
                raise ClassicalError(f"missing CPT for node {self.dag.name(v)!r}")
            t = np.asarray(self.cpts[v], dtype=float)
            shape = (self.dag.dim(v),) + tuple(self.dag.dim(p) for p in self.parents(v))
            if t.shape != shape:
                raise ClassicalError(f"CPT for {self.dag.name(v)!r} has shape {t.shape}, expected {shape}")
            if np.any(t < 0) or np.any(t > 1):
                raise ClassicalError(f"CPT for {self.dag.name(v)!r} has entries outside [0, 1]")
            if np.max(np.abs(t.sum(axis=0) - 1)) > ROW_TOL:
                raise ClassicalError(f"CPT rows for {self.dag.name(v)!r} do not sum to 1")
            t.setflags(write=False)
            cpts[v] = t
        object.__setattr__(self, "cpts", cpts)

    def parents(self, v: int) -> tuple[int, ...]:
        return tuple(sorted(self.dag.parents(v)))

    def factors(self, skip: int | None = None) -> list:
        return [((v,) + self.parents(v), self.cpts[v]) for v in self.dag.topological_order if v != skip]


def _table(dag: Dag, order, vals) -> ProbTable:
    return ProbTable(tuple(order), vals, tuple(dag.name(v) for v in order))


def joint_from_cpts(m: ClassicalModel, cap: int = JOINT_CAP) -> ProbTable:
    order = m.dag.topological_order
    size = prod(m.dag.dim(v) for v in order)
    if size > cap:
        raise ClassicalError(f"joint has {size} cells, above the cap of {cap}")
    return _table(m.dag, order, factor_product(m.factors(), order))


def _target(m: ClassicalModel, w: int, target) -> np.ndarray:
    n = m.dag.dim(w)
    if isinstance(target, (int, np.integer)) and not isinstance(target, bool):
        if not 0 <= target < n:
            raise ClassicalError(f"value {target} out of range for {m.dag.name(w)!r}")
        t = np.zeros(n)
        t[int(target)] = 1.0
        return t
    t = np.asarray(target, dtype=float)
    if t.shape != (n,) or np.any(t < 0) or abs(t.sum() - 1) > ROW_TOL:
        raise ClassicalError(f"target for {m.dag.name(w)!r} must be a distribution over {n} values")
    return t


def classical_do(m: ClassicalModel, w, target) -> ProbTable:
    """Truncated factorization P'(w) prod_{i != w} P(x_i | pa_i).

    ``target`` is a distribution over w's values, or an integer for the
    fine-grained do(W = w').
    """
    w = m.dag.resolve(w)
    order = m.dag.topological_order
    vals = factor_product(m.factors(skip=w) + [((w,), _target(m, w, target))], order)
    return _table(m.dag, order, vals)


def do_model(m: ClassicalModel, w, target) -> ClassicalModel:
    """The post-intervention model: W cut from its parents with CPT = target."""
    w = m.dag.resolve(w)
    cpts = dict(m.cpts)
    cpts[w] = _target(m, w, target)
    return ClassicalModel(surgery_do(m.dag, w), cpts)


def classical_undo(table: ProbTable, z) -> ProbTable:
    """Non-disturbing removal of a measurement: sum Z out."""
    if z not in table.variables:
        names = dict(zip(table.names, table.variables))
        if z in names:
            z = names[z]
        else:
            table.axis(z)
    return table.marginalize([z])


@dataclass(frozen=True)
class MarkovReport:
    passed: bool
    checked: int
    violations: tuple  # (U, V, W, deviation)
    max_deviation: float


def cmc_check(table: ProbTable, dag: Dag, tol: float = PROB_TOL, rules: str = CLASSICAL,
              max_set_size: int = 1) -> MarkovReport:
    """Check every independence the ruleset implies for ``dag`` against ``table``."""
    from .verify.ci import ci_deviation

    triples = implied_independences(dag, rules, max_set_size)
    worst = 0.0
    bad = []
    for U, V, W in triples:
        dev = ci_deviation(table, sorted(U), sorted(V), sorted(W))
        worst = max(worst, dev)
        if dev > tol:
            bad.append((U, V, W, dev))
    return MarkovReport(not bad, len(triples), tuple(bad), worst)
