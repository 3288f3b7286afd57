"""Conditional-independence measurement on probability tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..table import PROB_TOL, ZERO_MASS, ProbTable, TableError


@dataclass(frozen=True)
class CiReport:
    U: tuple
    V: tuple
    W: tuple
    deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tol


def _vars(table: ProbTable, xs) -> tuple:
    if isinstance(xs, (int, str)) or (isinstance(xs, tuple) and len(xs) == 2 and xs[1] == "U"):
        xs = [xs]
    out = []
    names = dict(zip(table.names, table.variables))
    for x in xs:
        if x in table.variables:
            out.append(x)
        elif x in names:
            out.append(names[x])
        else:
            raise TableError(f"unknown variable {x!r}")
    return tuple(out)


def ci_deviation(table: ProbTable, U, V, W=(), zero_mass: float = ZERO_MASS) -> float:
    """max over cells with P(w) > zero_mass of |P(u,v|w) - P(u|w) P(v|w)|."""
    U, V, W = _vars(table, U), _vars(table, V), _vars(table, W)
    if (set(U) & set(V)) or (set(U) & set(W)) or (set(V) & set(W)):
        raise TableError("U, V and W must be disjoint")
    if not U or not V:
        return 0.0
    j = table.array(U + V + W)
    su = [table.domain(x) for x in U]
    sv = [table.domain(x) for x in V]
    sw = [table.domain(x) for x in W]
    nu, nv, nw = int(np.prod(su)), int(np.prod(sv)), int(np.prod(sw)) if W else 1
    j = j.reshape(nu, nv, nw)
    pw = j.sum(axis=(0, 1))
    ok = pw > zero_mass
    if not ok.any():
        return 0.0
    cond = j[:, :, ok] / pw[ok]
    pu = cond.sum(axis=1, keepdims=True)
    pv = cond.sum(axis=0, keepdims=True)
    return float(np.max(np.abs(cond - pu * pv)))


def ci_check(table: ProbTable, U, V, W=(), tol: float = PROB_TOL) -> CiReport:
    U, V, W = _vars(table, U), _vars(table, V), _vars(table, W)
    return CiReport(U, V, W, ci_deviation(table, U, V, W), tol)
