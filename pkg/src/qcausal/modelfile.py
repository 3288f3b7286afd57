"""JSON model files for quantum networks and classical models.

Layout (``format_version`` 1)::

    {
      "format_version": 1,
      "model": "quantum",                      # or "classical"
      "nodes": [{"name": "X", "dim": 2, "layer": 0, "kind": "exogenous"}, ...],
      "edges": [["X", "Y"], ...],
      "seed": 7,                               # optional: seeded random channels everywhere
      "channels": [                            # optional: one entry per gap between layers
        {"random_unbiased": {"seed": 3}},
        {"subchannels": [{"inputs": ["Y"], "outputs": ["Z"], "choi": [re, im, re, im, ...]}]}
      ],
      "fiducials": {"2": [re, im, re, im]},    # optional SIC fiducials per dimension
      "cpts": {"X": [...], "Y": [[...], ...]}  # classical models only
    }

``choi`` lists the Choi matrix row-major with real and imaginary parts
interleaved, in the convention of :mod:`qcausal.quantum`. ``kind`` and
``layer`` are optional for classical models; ``kind`` is derived from the
edges when missing. CPT axes are (node, *parents in node order).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .classical import ClassicalError, ClassicalModel
from .graph import KINDS, Dag, GraphError, Layering, Node, validate_layering
from .network import NetworkError, QuantumNetwork, SubChannel, _components, random_network, structured_channel
from .quantum import Channel, QuantumError, sic_povm

FORMAT_VERSION = 1


class ModelError(ValueError):
    """Malformed model file; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _need(obj: Mapping, key: str, path: str, typ=None):
    if not isinstance(obj, Mapping) or key not in obj:
        raise ModelError(path, f"missing field {key!r}")
    val = obj[key]
    if typ is not None and not isinstance(val, typ):
        raise ModelError(f"{path}.{key}" if path else key, f"expected {getattr(typ, '__name__', typ)}")
    return val


def _complex_vector(vals, path: str) -> np.ndarray:
    if not isinstance(vals, list) or not vals or len(vals) % 2:
        raise ModelError(path, "expected a non-empty list of interleaved real/imaginary parts")
    try:
        a = np.asarray(vals, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(path, "entries must be numbers") from None
    if a.ndim != 1:
        raise ModelError(path, "expected a flat list")
    return a[0::2] + 1j * a[1::2]


def _check_version(desc: Mapping):
    if not isinstance(desc, Mapping):
        raise ModelError("", "model must be a JSON object")
    v = _need(desc, "format_version", "")
    if v != FORMAT_VERSION:
        raise ModelError("format_version", f"unsupported version {v!r}, expected {FORMAT_VERSION}")


def _dag(desc: Mapping, need_layers: bool) -> tuple[Dag, Layering | None]:
    nodes = _need(desc, "nodes", "", list)
    names, dims, kinds, layers = [], {}, {}, {}
    for i, n in enumerate(nodes):
        p = f"nodes[{i}]"
        name = _need(n, "name", p, str)
        if name in dims:
            raise ModelError(f"{p}.name", f"duplicate node {name!r}")
        dim = n.get("dim", 2)
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
            raise ModelError(f"{p}.dim", "dimension must be an integer >= 2")
        kind = n.get("kind")
        if kind is not None and kind not in KINDS:
            raise ModelError(f"{p}.kind", f"unknown kind {kind!r}")
        if "layer" in n:
            lay = n["layer"]
            if not isinstance(lay, int) or isinstance(lay, bool) or lay < 0:
                raise ModelError(f"{p}.layer", "layer must be a non-negative integer")
            layers[name] = lay
        elif need_layers:
            raise ModelError(p, "missing field 'layer'")
        names.append(name)
        dims[name] = dim
        kinds[name] = kind
    ix = {nm: i for i, nm in enumerate(names)}
    edges = []
    for i, e in enumerate(_need(desc, "edges", "", list)):
        if not isinstance(e, list) or len(e) != 2:
            raise ModelError(f"edges[{i}]", "edge must be a pair of node names")
        for k, v in enumerate(e):
            if v not in ix:
                raise ModelError(f"edges[{i}][{k}]", f"unknown node {v!r}")
        edges.append((ix[e[0]], ix[e[1]]))
    try:
        dag = Dag(tuple(Node(ix[nm], nm, dims[nm], kinds[nm]) for nm in names), tuple(edges))
    except GraphError as e:
        raise ModelError("edges", str(e)) from None
    if not layers:
        return dag, None
    if set(layers) != set(names):
        raise ModelError("nodes", "either every node or no node has a layer")
    top = max(layers.values())
    groups = [[nm for nm in names if layers[nm] == j] for j in range(top + 1)]
    for j, g in enumerate(groups):
        if not g:
            raise ModelError("nodes", f"layer {j} is empty")
    try:
        return dag, Layering.of(dag, groups)
    except (GraphError, ValueError) as e:
        raise ModelError("nodes", str(e)) from None


def parse_quantum(desc: Mapping) -> QuantumNetwork:
    """Build a QuantumNetwork from a decoded model description."""
    _check_version(desc)
    if desc.get("model", "quantum") != "quantum":
        raise ModelError("model", "expected a quantum model")
    dag, lay = _dag(desc, need_layers=True)
    rep = validate_layering(dag, lay)
    if not rep:
        raise ModelError("nodes", "invalid layering: " + "; ".join(rep.problems))
    for a, b in dag.edges:
        if lay.layer_of(b) != lay.layer_of(a) + 1:
            raise ModelError("edges", f"edge {dag.name(a)}->{dag.name(b)} must point from a layer to the next one")
    fid = {}
    for key, vals in (desc.get("fiducials") or {}).items():
        p = f"fiducials.{key}"
        try:
            d = int(key)
        except ValueError:
            raise ModelError(p, "keys must be dimensions") from None
        fid[d] = _complex_vector(vals, p)
        try:
            sic_povm(d, fid[d])
        except QuantumError as e:
            raise ModelError(p, str(e)) from None
    ix = {dag.name(v): v for v in dag.ids}
    try:
        if "channels" not in desc:
            if "seed" not in desc:
                raise ModelError("", "need either 'channels' or 'seed'")
            seed = desc["seed"]
            if not isinstance(seed, int) or isinstance(seed, bool):
                raise ModelError("seed", "seed must be an integer")
            return random_network(dag, lay, seed, fid)
        chans = _need(desc, "channels", "", list)
        if len(chans) != len(lay) - 1:
            raise ModelError("channels", f"expected {len(lay) - 1} gap entries, found {len(chans)}")
        gaps = []
        for j, entry in enumerate(chans):
            p = f"channels[{j}]"
            if isinstance(entry, Mapping) and "random_unbiased" in entry:
                seed = _need(entry["random_unbiased"], "seed", f"{p}.random_unbiased", int)
                rng = np.random.default_rng(seed)
                gaps.append(tuple(SubChannel(i, o, structured_channel(dag, i, o, rng))
                                  for i, o in _components(dag, lay.ordered(j), lay.ordered(j + 1))))
                continue
            subs = _need(entry, "subchannels", p, list)
            gap = []
            for k, sc in enumerate(subs):
                q = f"{p}.subchannels[{k}]"
                io = []
                for key in ("inputs", "outputs"):
                    vs = _need(sc, key, q, list)
                    for m, v in enumerate(vs):
                        if v not in ix:
                            raise ModelError(f"{q}.{key}[{m}]", f"unknown node {v!r}")
                    io.append(tuple(ix[v] for v in vs))
                din = int(np.prod([dag.dim(v) for v in io[0]]))
                dout = int(np.prod([dag.dim(v) for v in io[1]]))
                c = _complex_vector(_need(sc, "choi", q, list), f"{q}.choi")
                n = din * dout
                if c.size != n * n:
                    raise ModelError(f"{q}.choi", f"has {c.size} complex entries, expected {n * n} "
                                                  f"for input dim {din} and output dim {dout}")
                gap.append(SubChannel(io[0], io[1], Channel(din, dout, c.reshape(n, n))))
            gaps.append(tuple(gap))
        povms = {v: sic_povm(dag.dim(v), fid.get(dag.dim(v))) for v in dag.ids}
        return QuantumNetwork(dag, lay, povms, tuple(gaps))
    except (NetworkError, QuantumError) as e:
        raise ModelError("channels", str(e)) from None


def parse_classical(desc: Mapping) -> ClassicalModel:
    _check_version(desc)
    if desc.get("model") != "classical":
        raise ModelError("model", "expected a classical model")
    dag, _ = _dag(desc, need_layers=False)
    raw = _need(desc, "cpts", "", dict)
    cpts = {}
    for v in dag.ids:
        name = dag.name(v)
        if name not in raw:
            raise ModelError("cpts", f"missing CPT for {name!r}")
        try:
            cpts[v] = np.asarray(raw[name], dtype=float)
        except (TypeError, ValueError):
            raise ModelError(f"cpts.{name}", "CPT must be a nested numeric array") from None
    try:
        return ClassicalModel(dag, cpts)
    except ClassicalError as e:
        raise ModelError("cpts", str(e)) from None


def parse_model(desc: Mapping) -> QuantumNetwork | ClassicalModel:
    _check_version(desc)
    kind = desc.get("model", "quantum")
    if kind == "quantum":
        return parse_quantum(desc)
    if kind == "classical":
        return parse_classical(desc)
    raise ModelError("model", f"unknown model type {kind!r}")


def load_model(path) -> QuantumNetwork | ClassicalModel:
    text = Path(path).read_text()
    try:
        desc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"line {e.lineno}, column {e.colno}", e.msg) from None
    return parse_model(desc)


def channel_entry(inputs, outputs, ch: Channel) -> dict[str, Any]:
    """Serialize a sub-channel for the ``subchannels`` list."""
    flat = np.stack([ch.choi.real.ravel(), ch.choi.imag.ravel()], axis=1).ravel()
    return {"inputs": list(inputs), "outputs": list(outputs), "choi": [float(x) for x in flat]}
