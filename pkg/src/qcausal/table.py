"""Dense joint probability tables over labelled discrete variables."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Hashable, Sequence

import numpy as np

PROB_TOL = 1e-9
CLAMP_TOL = 1e-12
ZERO_MASS = 1e-12


class TableError(ValueError):
    pass


class NegativityWarning(RuntimeWarning):
    pass


def sanitize(values: np.ndarray, error_tol: float = PROB_TOL, warn_below: float = CLAMP_TOL,
             what: str = "table") -> np.ndarray:
    """Clamp floating-point dust below zero and renormalize.

    Entries below ``-error_tol`` raise. Entries in ``[-error_tol, 0)`` are
    set to zero; a warning is issued when any of them is below
    ``-warn_below``.
    """
    v = np.array(values, dtype=float)
    lo = float(v.min()) if v.size else 0.0
    if lo < -error_tol:
        raise TableError(f"{what} has a negative entry {lo:.3e} below -{error_tol:g}")
    if lo < 0:
        if lo < -warn_below:
            warnings.warn(f"{what}: clamped negative entries down to {lo:.3e}", NegativityWarning, stacklevel=3)
        v[v < 0] = 0.0
        s = v.sum()
        if s > 0:
            v = v / s
    return v


@dataclass(frozen=True, eq=False)
class ProbTable:
    """Joint distribution; axis k of ``values`` is variable ``variables[k]``.

    Variables are hashable labels (node ids for network tables). ``names``
    gives display names in the same order.
    """

    variables: tuple
    values: np.ndarray = field(repr=False)
    names: tuple = ()
    tol: float = PROB_TOL

    def __post_init__(self):
        vs = tuple(self.variables)
        if len(set(vs)) != len(vs):
            raise TableError(f"duplicate variables {vs}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != len(vs):
            raise TableError(f"values have {vals.ndim} axes for {len(vs)} variables")
        vals = sanitize(vals, self.tol)
        total = float(vals.sum())
        if abs(total - 1) > self.tol:
            raise TableError(f"probabilities sum to {total!r}, not 1")
        vals.setflags(write=False)
        names = tuple(self.names) if self.names else tuple(str(v) for v in vs)
        if len(names) != len(vs):
            raise TableError("names and variables differ in length")
        object.__setattr__(self, "variables", vs)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", names)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def domain(self, v) -> int:
        return self.values.shape[self.axis(v)]

    def axis(self, v) -> int:
        try:
            return self.variables.index(v)
        except ValueError:
            raise TableError(f"unknown variable {v!r}") from None

    def name_of(self, v) -> str:
        return self.names[self.axis(v)]

    def _axes(self, vs) -> list[int]:
        return [self.axis(v) for v in vs]

    def marginal(self, keep: Sequence) -> "ProbTable":
        keep = tuple(keep)
        axes = self._axes(keep)
        drop = tuple(i for i in range(len(self.variables)) if i not in axes)
        m = self.values.sum(axis=drop) if drop else self.values
        # sum keeps remaining axes in original order; permute to requested order
        remaining = [i for i in range(len(self.variables)) if i in axes]
        m = np.transpose(m, [remaining.index(a) for a in axes])
        return ProbTable(keep, m, tuple(self.names[a] for a in axes), self.tol)

    def array(self, vs: Sequence) -> np.ndarray:
        """Marginal over ``vs`` as a bare array with axes in that order."""
        if not len(vs):
            return np.array(float(self.values.sum()))
        return self.marginal(vs).values

    def marginalize(self, drop: Sequence) -> "ProbTable":
        drop = set(drop)
        for v in drop:
            self.axis(v)
        return self.marginal([v for v in self.variables if v not in drop])

    def reorder(self, order: Sequence) -> "ProbTable":
        if set(order) != set(self.variables) or len(order) != len(self.variables):
            raise TableError("reorder needs a permutation of the variables")
        return self.marginal(order)

    def conditional(self, target: Sequence, given: Sequence, zero_mass: float = ZERO_MASS) -> np.ndarray:
        """P(target | given) with axes target..., given...; zero where P(given) <= zero_mass."""
        target, given = tuple(target), tuple(given)
        if set(target) & set(given):
            raise TableError("target and conditioning sets overlap")
        joint = self.array(target + given)
        den = self.array(given)
        safe = np.where(den > zero_mass, den, 1.0)
        out = joint / safe.reshape((1,) * len(target) + den.shape)
        return np.where(den.reshape((1,) * len(target) + den.shape) > zero_mass, out, 0.0)

    def max_abs_diff(self, other: "ProbTable") -> float:
        if set(self.variables) != set(other.variables):
            raise TableError(f"variable sets differ: {self.variables} vs {other.variables}")
        o = other.reorder(self.variables).values
        if o.shape != self.values.shape:
            raise TableError("domain sizes differ")
        return float(np.max(np.abs(self.values - o)))

    def rows(self):
        for idx in product(*(range(n) for n in self.shape)):
            yield idx, float(self.values[idx])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.names) + ["probability"])
        for idx, p in self.rows():
            w.writerow([str(i) for i in idx] + [f"{p:.17g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "format_version": 1,
            "variables": [{"name": n, "domain": int(s)} for n, s in zip(self.names, self.shape)],
            "probabilities": [float(f"{p:.17g}") for _, p in self.rows()],
        }
        return json.dumps(doc, indent=1) + "\n"

    def dump(self, path: str):
        text = self.to_json() if str(path).endswith(".json") else self.to_csv()
        with open(path, "w", newline="") as fh:
            fh.write(text)


def from_csv(text: str, variables: Sequence | None = None) -> ProbTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][-1] != "probability":
        raise TableError("CSV table must have a header ending in 'probability'")
    names = rows[0][:-1]
    body = rows[1:]
    idx = np.array([[int(x) for x in r[:-1]] for r in body], dtype=int).reshape(len(body), len(names))
    shape = tuple(int(c) + 1 for c in idx.max(axis=0)) if len(body) else ()
    vals = np.zeros(shape)
    for r, i in zip(body, idx):
        vals[tuple(i)] = float(r[-1])
    return ProbTable(tuple(variables) if variables is not None else tuple(names), vals, tuple(names))


def load_table(path: str) -> ProbTable:
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        doc = json.loads(text)
        names = [v["name"] for v in doc["variables"]]
        shape = [int(v["domain"]) for v in doc["variables"]]
        return ProbTable(tuple(names), np.array(doc["probabilities"], dtype=float).reshape(shape), tuple(names))
    return from_csv(text)


def factor_product(factors: Sequence[tuple[Sequence, np.ndarray]], out: Sequence) -> np.ndarray:
    """Multiply labelled arrays and sum out every label not in ``out``."""
    labels: dict[Hashable, int] = {}

    def ids(vs):
        return [labels.setdefault(v, len(labels)) for v in vs]

    args = []
    for vs, arr in factors:
        arr = np.asarray(arr)
        if arr.ndim != len(vs):
            raise TableError(f"factor over {tuple(vs)} has {arr.ndim} axes")
        args += [arr, ids(vs)]
    return np.einsum(*args, ids(out), optimize=True)
