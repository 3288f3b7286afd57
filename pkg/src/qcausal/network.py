"""Reference experiments on layered DAGs and their exact simulation.

Every node carries a SIC-instrument. Exogenous inputs are maximally mixed
and adjacent layers are linked by unbiased channels. The simulator
propagates unnormalized density operators through the layers, one batch
entry per outcome prefix. The same engine serves as the counterfactual
oracle when node instruments are swapped for interventions or removed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Mapping, Sequence

import numpy as np

from .graph import EXOGENOUS, Dag, Layering, validate_layering
from .quantum import (STRUCT_TOL, Channel, InterventionInstrument, SicPovm, check_channel,
                      random_unbiased_channel, sic_branch_channel, sic_povm)
from .table import PROB_TOL, ProbTable, sanitize

OUTCOME_CAP = 10**6
SIGNAL_TOL = 1e-9


class NetworkError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SubChannel:
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    channel: Channel

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(v) for v in self.inputs))
        object.__setattr__(self, "outputs", tuple(int(v) for v in self.outputs))


def preparation(d: int) -> Channel:
    """Channel from nothing (din = 1) to the maximally mixed state."""
    return Channel(1, d, np.eye(d) / d)


def discard(d: int) -> Channel:
    return Channel(d, 1, np.eye(d))


# --- multi-wire tensor plumbing ---------------------------------------------

def apply_to_wires(S: np.ndarray, dims: Sequence[int], positions: Sequence[int], ch: Channel,
                   out_dims: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    """Apply ``ch`` to the wires at ``positions`` of a batch of operators.

    ``S`` has shape (N, D, D) with D = prod(dims). The consumed wires are
    removed and the output wires (``out_dims``) are appended at the end.
    """
    dims = list(dims)
    n = len(dims)
    N = S.shape[0]
    din = prod(dims[p] for p in positions)
    dout = prod(out_dims)
    if din != ch.din or dout != ch.dout:
        raise NetworkError(f"channel {ch.din}->{ch.dout} applied to wires {din}->{dout}")
    rest = [k for k in range(n) if k not in positions]
    R = prod(dims[r] for r in rest)
    T = S.reshape((N,) + tuple(dims) * 2)
    perm = [0] + [1 + p for p in positions] + [1 + r for r in rest] \
        + [1 + n + p for p in positions] + [1 + n + r for r in rest]
    T = T.transpose(perm).reshape(N, din, R, din, R)
    out = np.einsum("njris,iajb->nrbsa", T, ch.tensor4)
    return out.reshape(N, R * dout, R * dout), [dims[r] for r in rest] + list(out_dims)


def reduced_choi(ch: Channel, in_dims: Sequence[int], out_dims: Sequence[int], keep_out: Sequence[int]) -> np.ndarray:
    """Choi tensor with all outputs except ``keep_out`` traced away.

    Returns an array of shape (*in_dims, *kept_out_dims, *in_dims, *kept_out_dims).
    """
    m, q = len(in_dims), len(out_dims)
    T = ch.choi.reshape(tuple(in_dims) + tuple(out_dims) + tuple(in_dims) + tuple(out_dims))
    half = m + q
    for o in sorted((o for o in range(q) if o not in keep_out), reverse=True):
        T = np.trace(T, axis1=m + o, axis2=half + m + o)
        half -= 1
    return T


def signalling(ch: Channel, in_dims: Sequence[int], out_dims: Sequence[int]) -> np.ndarray:
    """Matrix of how strongly input wire i can influence output wire o.

    Input i cannot signal to output o exactly when the reduced Choi matrix
    on (inputs, o) factorizes as I_i (x) (its partial trace over i)/d_i.
    """
    m, q = len(in_dims), len(out_dims)
    S = np.zeros((m, q))
    for o in range(q):
        T = reduced_choi(ch, in_dims, out_dims, [o])
        k = m + 1
        for i in range(m):
            tr_i = np.trace(T, axis1=i, axis2=k + i)
            rebuilt = np.expand_dims(np.expand_dims(tr_i, i), k + i) / in_dims[i]
            eye_shape = [1] * (2 * k)
            eye_shape[i] = eye_shape[k + i] = in_dims[i]
            rebuilt = rebuilt * np.eye(in_dims[i]).reshape(eye_shape)
            S[i, o] = float(np.max(np.abs(T - rebuilt)))
    return S


# --- the network ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuantumNetwork:
    """An LDAG with SIC-instruments on the nodes and unbiased gap channels.

    ``gaps[j]`` lists the sub-channels from layer j to layer j+1. Missing
    wires are filled in at construction: a childless node's output is
    discarded and a parentless node in a later layer receives a maximally
    mixed input.
    """

    dag: Dag
    layering: Layering
    povms: Mapping[int, SicPovm]
    gaps: tuple[tuple[SubChannel, ...], ...]
    tol: float = STRUCT_TOL

    def __post_init__(self):
        dag, lay = self.dag, self.layering
        rep = validate_layering(dag, lay)
        if not rep:
            raise NetworkError("invalid layering: " + "; ".join(rep.problems))
        for a, b in dag.edges:
            if lay.layer_of(b) != lay.layer_of(a) + 1:
                raise NetworkError(f"edge {dag.name(a)}->{dag.name(b)} must point from a layer to the next one")
        povms = dict(self.povms)
        for v in dag.ids:
            if v not in povms:
                povms[v] = sic_povm(dag.dim(v))
            if povms[v].d != dag.dim(v):
                raise NetworkError(f"node {dag.name(v)} has dim {dag.dim(v)} but its SIC has d={povms[v].d}")
        object.__setattr__(self, "povms", povms)
        if len(self.gaps) != len(lay) - 1:
            raise NetworkError(f"{len(self.gaps)} gaps given for {len(lay)} layers")
        object.__setattr__(self, "gaps", tuple(self._complete_gap(j, tuple(g)) for j, g in enumerate(self.gaps)))
        for j, gap in enumerate(self.gaps):
            self._check_gap(j, gap)

    def _complete_gap(self, j, gap):
        dag, lay = self.dag, self.layering
        used_in = [v for sc in gap for v in sc.inputs]
        used_out = [v for sc in gap for v in sc.outputs]
        extra = []
        for v in lay.ordered(j):
            if v not in used_in and not dag.children(v):
                extra.append(SubChannel((v,), (), discard(dag.dim(v))))
        for v in lay.ordered(j + 1):
            if v not in used_out and not dag.parents(v):
                extra.append(SubChannel((), (v,), preparation(dag.dim(v))))
        return gap + tuple(extra)

    def _check_gap(self, j, gap):
        dag, lay = self.dag, self.layering
        ins = [v for sc in gap for v in sc.inputs]
        outs = [v for sc in gap for v in sc.outputs]
        if sorted(ins) != sorted(lay.layers[j]) or len(set(ins)) != len(ins):
            raise NetworkError(f"gap {j}: sub-channel inputs do not partition layer {j}")
        if sorted(outs) != sorted(lay.layers[j + 1]) or len(set(outs)) != len(outs):
            raise NetworkError(f"gap {j}: sub-channel outputs do not partition layer {j + 1}")
        where_in = {v: k for k, sc in enumerate(gap) for v in sc.inputs}
        where_out = {v: k for k, sc in enumerate(gap) for v in sc.outputs}
        for a, b in dag.edges:
            if a in where_in and b in where_out and where_in[a] != where_out[b]:
                raise NetworkError(f"gap {j}: edge {dag.name(a)}->{dag.name(b)} crosses two sub-channels")
        for k, sc in enumerate(gap):
            in_dims = [dag.dim(v) for v in sc.inputs]
            out_dims = [dag.dim(v) for v in sc.outputs]
            ch = sc.channel
            if ch.din != prod(in_dims) or ch.dout != prod(out_dims):
                raise NetworkError(
                    f"gap {j} sub-channel {k}: channel is {ch.din}->{ch.dout}, wires need {prod(in_dims)}->{prod(out_dims)}")
            rep = check_channel(ch, self.tol)
            if not rep.cp or not rep.tp:
                raise NetworkError(f"gap {j} sub-channel {k}: not CPTP "
                                   f"(min eigenvalue {rep.min_eigenvalue:.3e}, trace deviation {rep.tp_deviation:.3e})")
            if not rep.unbiased:
                raise NetworkError(f"gap {j} sub-channel {k}: channel is biased, deviation {rep.unbiased_deviation:.3e}")
            if sc.inputs and sc.outputs:
                sig = signalling(ch, in_dims, out_dims)
                for i, a in enumerate(sc.inputs):
                    for o, b in enumerate(sc.outputs):
                        edge = (a, b) in set(dag.edges)
                        sends = sig[i, o] > SIGNAL_TOL
                        if edge != sends:
                            what = "has no effect along edge" if edge else "signals without an edge"
                            raise NetworkError(
                                f"gap {j} sub-channel {k}: channel {what} {dag.name(a)}->{dag.name(b)} "
                                f"(signalling {sig[i, o]:.3e})")

    def name(self, v) -> str:
        return self.dag.name(v)

    @property
    def order(self) -> tuple[int, ...]:
        return self.layering.order


# --- random networks ------------------------------------------------------

def _components(dag: Dag, left: Sequence[int], right: Sequence[int]):
    """Connected components of the bipartite edge graph between two layers."""
    parent = {v: v for v in list(left) + list(right)}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in dag.edges:
        if a in parent and b in parent:
            parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for v in list(left) + list(right):
        groups.setdefault(find(v), []).append(v)
    comps = []
    for g in groups.values():
        ins = tuple(v for v in left if v in g)
        outs = tuple(v for v in right if v in g)
        if ins and outs:
            comps.append((ins, outs))
    return sorted(comps)


def structured_channel(dag: Dag, inputs: Sequence[int], outputs: Sequence[int], rng: np.random.Generator) -> Channel:
    """Random unbiased channel whose signalling pattern is exactly the DAG's edges.

    A complete bipartite block gets one Haar-random channel. Otherwise each
    parent first splits its wire into one message per child, and each child
    then combines the messages addressed to it.
    """
    inputs, outputs = list(inputs), list(outputs)
    edges = set(dag.edges)
    dims = {v: dag.dim(v) for v in inputs + outputs}
    din = prod(dims[v] for v in inputs)
    dout = prod(dims[v] for v in outputs)
    if all((a, b) in edges for a in inputs for b in outputs):
        return random_unbiased_channel(din, dout, int(rng.integers(2**31)))
    kids = {a: [b for b in outputs if (a, b) in edges] for a in inputs}
    pars = {b: [a for a in inputs if (a, b) in edges] for b in outputs}
    split = {a: random_unbiased_channel(dims[a], dims[a] ** len(kids[a]), int(rng.integers(2**31)))
             if kids[a] else discard(dims[a]) for a in inputs}
    merge = {b: random_unbiased_channel(prod(dims[a] for a in pars[b]), dims[b], int(rng.integers(2**31)))
             if pars[b] else preparation(dims[b]) for b in outputs}

    def fn(X):
        S = X[None]
        wires = list(inputs)
        wdims = [dims[v] for v in inputs]
        for a in inputs:
            msgs = [(a, b) for b in kids[a]]
            S, wdims = apply_to_wires(S, wdims, [wires.index(a)], split[a], [dims[a]] * len(msgs))
            wires = [w for w in wires if w != a] + msgs
        for b in outputs:
            pos = [wires.index((a, b)) for a in pars[b]]
            S, wdims = apply_to_wires(S, wdims, pos, merge[b], [dims[b]])
            wires = [w for w in wires if w not in [(a, b) for a in pars[b]]] + [b]
        return S[0]

    return Channel.from_map(fn, din, dout)


def random_network(dag: Dag, layering: Layering, seed: int, fiducials: Mapping[int, Sequence[complex]] | None = None) -> QuantumNetwork:
    """Network with seeded random unbiased channels, one per connected block of each gap."""
    rng = np.random.default_rng(seed)
    fiducials = fiducials or {}
    povm_cache: dict[int, SicPovm] = {}
    povms = {}
    for v in dag.ids:
        d = dag.dim(v)
        if d not in povm_cache:
            povm_cache[d] = sic_povm(d, fiducials.get(d))
        povms[v] = povm_cache[d]
    gaps = []
    for j in range(len(layering) - 1):
        gap = []
        for ins, outs in _components(dag, layering.ordered(j), layering.ordered(j + 1)):
            gap.append(SubChannel(ins, outs, structured_channel(dag, ins, outs, rng)))
        gaps.append(tuple(gap))
    return QuantumNetwork(dag, layering, povms, tuple(gaps))


def build_network(desc: Mapping) -> QuantumNetwork:
    """Network from a parsed model description (see :mod:`qcausal.modelfile`)."""
    from .modelfile import parse_quantum
    return parse_quantum(desc)


# --- controls -------------------------------------------------------------

@dataclass(frozen=True)
class Reference:
    pass


@dataclass(frozen=True)
class Undo:
    pass


@dataclass(frozen=True, eq=False)
class Do:
    """Intervention; ``target`` over d^2 outcomes defaults to uniform.

    ``instrument`` overrides the default SIC re-preparation, for instance
    with a non-simple intervention that also records the input.
    """

    target: Sequence[float] | None = None
    instrument: InterventionInstrument | None = None


@dataclass(frozen=True)
class DoFine:
    value: int


def _instrument_for(net: QuantumNetwork, v: int, control):
    """Outcome variables and branch maps of node v under its control."""
    povm = net.povms[v]
    if isinstance(control, Reference):
        return (v,), [((y,), sic_branch_channel(povm, y)) for y in range(povm.n_outcomes)]
    if isinstance(control, Undo):
        if net.dag.kind(v) == EXOGENOUS:
            raise NetworkError(f"cannot un-measure exogenous node {net.name(v)!r}")
        return (), None
    if isinstance(control, DoFine):
        inst = InterventionInstrument.fine(povm, int(control.value))
    elif isinstance(control, Do):
        if control.instrument is not None:
            inst = control.instrument
            if inst.d != povm.d:
                raise NetworkError(f"intervention on {net.name(v)!r} has d={inst.d}, node has d={povm.d}")
        else:
            target = control.target
            if target is not None:
                target = np.asarray(target, dtype=float)
                if target.shape != (povm.n_outcomes,):
                    raise NetworkError(f"target for {net.name(v)!r} needs {povm.n_outcomes} entries")
            try:
                inst = InterventionInstrument.sic(povm, target)
            except ValueError as e:
                raise NetworkError(f"invalid intervention on {net.name(v)!r}: {e}") from None
    else:
        raise NetworkError(f"unknown control {control!r} for node {net.name(v)!r}")
    labels = (v,) if inst.simple else ((v, "U"), v)
    return labels, inst.branches()


def _propagate(net: QuantumNetwork, controls: Mapping[int, object], cap: int) -> ProbTable:
    dag = net.dag
    plan = {v: _instrument_for(net, v, controls.get(v, Reference())) for v in net.order}
    variables = [lab for v in net.order for lab in plan[v][0]]
    domains = []
    for v in net.order:
        labels, branches = plan[v]
        if branches is None:
            continue
        if len(labels) == 1:
            domains.append(len(branches))
        else:
            nw = net.povms[v].n_outcomes
            domains += [len(branches) // nw, nw]
    total = prod(domains)
    if total > cap:
        raise NetworkError(f"{total} outcome tuples exceed the cap of {cap}")

    S = np.ones((1, 1, 1), dtype=complex)
    dims: list[int] = []
    wires: list[int] = []
    outcomes = np.zeros((1, 0), dtype=int)
    for j in range(len(net.layering)):
        if j == 0:
            for v in net.layering.ordered(0):
                S, dims = apply_to_wires(S, dims, [], preparation(dag.dim(v)), [dag.dim(v)])
                wires.append(v)
        else:
            for sc in net.gaps[j - 1]:
                pos = [wires.index(v) for v in sc.inputs]
                S, dims = apply_to_wires(S, dims, pos, sc.channel, [dag.dim(v) for v in sc.outputs])
                wires = [w for w in wires if w not in sc.inputs] + list(sc.outputs)
        for v in net.layering.ordered(j):
            labels, branches = plan[v]
            if branches is None:
                continue
            pos = [wires.index(v)]
            parts = []
            for _, ch in branches:
                out, new_dims = apply_to_wires(S, dims, pos, ch, [dag.dim(v)])
                parts.append(out)
            N = S.shape[0]
            K = len(branches)
            S = np.stack(parts, axis=1).reshape(N * K, *parts[0].shape[1:])
            dims = new_dims
            wires = [w for w in wires if w != v] + [v]
            labs = np.array([lab for lab, _ in branches], dtype=int)
            outcomes = np.concatenate([np.repeat(outcomes, K, axis=0), np.tile(labs, (N, 1))], axis=1)
            # rows with exactly zero weight (deterministic interventions) carry nothing
            keep = np.abs(np.einsum("nii->n", S)) > 0
            if not keep.all():
                S, outcomes = S[keep], outcomes[keep]
    probs = np.einsum("nii->n", S).real
    values = np.zeros(domains)
    values[tuple(outcomes.T)] = probs
    values = sanitize(values, PROB_TOL, what="simulated distribution")
    names = tuple(dag.name(lab) if isinstance(lab, int) else dag.name(lab[0]) + "_U" for lab in variables)
    return ProbTable(tuple(variables), values, names)


def reference_distribution(net: QuantumNetwork, cap: int = OUTCOME_CAP) -> ProbTable:
    """Exact joint distribution of all SIC outcomes in the reference experiment."""
    return _propagate(net, {}, cap)


def counterfactual_oracle(net: QuantumNetwork, controls: Mapping, cap: int = OUTCOME_CAP) -> ProbTable:
    """Simulate the circuit with the given nodes intervened on or un-measured.

    ``controls`` maps node ids (or names) to Reference(), Undo(), Do(...) or
    DoFine(k). Un-measured nodes become identity wires and leave the table.
    """
    resolved = {}
    for k, c in controls.items():
        v = net.dag.resolve(k)
        if v in resolved:
            raise NetworkError(f"node {net.name(v)!r} controlled twice")
        resolved[v] = c
    return _propagate(net, resolved, cap)


def parse_controls(text: str, dag: Dag) -> dict[int, object]:
    """Parse ``do:NODE[=k]`` and ``undo:NODE`` items separated by commas."""
    out: dict[int, object] = {}
    for item in [s.strip() for s in text.split(",") if s.strip()]:
        kind, _, rest = item.partition(":")
        if not rest:
            raise NetworkError(f"control {item!r} should look like do:NODE, do:NODE=k or undo:NODE")
        name, _, val = rest.partition("=")
        try:
            v = dag.resolve(name.strip())
        except ValueError as e:
            raise NetworkError(str(e)) from None
        if v in out:
            raise NetworkError(f"node {name!r} controlled twice")
        if kind == "undo" and not val:
            out[v] = Undo()
        elif kind == "do":
            if val:
                try:
                    out[v] = DoFine(int(val))
                except ValueError:
                    raise NetworkError(f"outcome in {item!r} is not an integer") from None
            else:
                out[v] = Do()
        else:
            raise NetworkError(f"unknown control {item!r}")
    return out
