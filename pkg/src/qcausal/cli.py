"""Command-line front end (``qcm``).

Exit codes: 0 success, 1 verification failure, 2 input error.
The environment variable QCM_TOL overrides the default tolerance.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .classical import ClassicalError, ClassicalModel, classical_do, classical_undo, joint_from_cpts
from .graph import CLASSICAL, EXOGENOUS, QUANTUM, GraphError, separated
from .inference import InferenceError, multi_undo, quantum_do_many, undo_subset
from .modelfile import ModelError, load_model
from .network import NetworkError, counterfactual_oracle, parse_controls, reference_distribution
from .table import PROB_TOL, ProbTable, TableError, load_table

SUITES = ("lemmas", "theorem", "markov", "impossibility", "fcc", "all")

CONTROLS_HELP = """controls: comma-separated items
  do:NODE      SIC-intervention with a uniform target
  do:NODE=k    fine-grained intervention preparing outcome k
  undo:NODE    remove the measurement on NODE
example: --controls do:W,undo:Y"""


class InputError(Exception):
    pass


def _tol() -> float:
    raw = os.environ.get("QCM_TOL")
    if raw is None:
        return PROB_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise InputError(f"QCM_TOL={raw!r} is not a number") from None
    if not tol > 0:
        raise InputError("QCM_TOL must be positive")
    return tol


def _emit(table: ProbTable, out: str | None, fmt: str):
    text = table.to_json() if fmt == "json" else table.to_csv()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _reference(model, args) -> ProbTable:
    if getattr(args, "table", None):
        ref = load_table(args.table)
        names = tuple(model.dag.name(v) for v in model.dag.topological_order)
        if set(ref.names) != set(names):
            raise InputError(f"table {args.table} has variables {ref.names}, model has {names}")
        # rename columns to node ids, in the model's order
        ids = {model.dag.name(v): v for v in model.dag.ids}
        return ProbTable(tuple(ids[n] for n in ref.names), ref.values, ref.names)
    if isinstance(model, ClassicalModel):
        return joint_from_cpts(model)
    return reference_distribution(model)


def _nodes(model, text: str) -> list[int]:
    out = []
    for name in [s.strip() for s in text.split(",") if s.strip()]:
        out.append(model.dag.resolve(name))
    if not out:
        raise InputError("no nodes given")
    return out


def _target(args):
    if args.value is not None and args.target is not None:
        raise InputError("use either --value or --target")
    if args.value is not None:
        return args.value
    if args.target is not None:
        try:
            return [float(x) for x in args.target.split(",")]
        except ValueError:
            raise InputError(f"--target {args.target!r} must be comma-separated numbers") from None
    return None


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    _emit(_reference(model, args), args.output, args.format)
    return 0


def cmd_infer(args) -> int:
    if (args.do is None) == (args.undo is None):
        raise InputError("give exactly one of --do or --undo")
    tol = _tol()
    model = load_model(args.model)
    ref = _reference(model, args)
    if args.do is not None:
        ws = _nodes(model, args.do)
        target = _target(args)
        if isinstance(model, ClassicalModel):
            if len(ws) != 1:
                raise InputError("classical --do takes a single node")
            t = target if target is not None else np.full(model.dag.dim(ws[0]), 1 / model.dag.dim(ws[0]))
            out = classical_do(model, ws[0], t)
        else:
            out = quantum_do_many(ref, model.dag, model.layering, {w: target for w in ws}, tol=tol)
    else:
        if args.value is not None or args.target is not None:
            raise InputError("--value and --target only apply to --do")
        us = _nodes(model, args.undo)
        if isinstance(model, ClassicalModel):
            out = ref
            for u in us:
                out = classical_undo(out, u)
        else:
            for u in us:
                if model.dag.kind(u) == EXOGENOUS:
                    raise InputError(f"cannot un-measure exogenous node {model.dag.name(u)!r}")
            js = sorted({model.layering.layer_of(u) for u in us})
            if len(js) == 1:
                out = undo_subset(ref, model.layering, js[0], us, tol=tol).joint
            else:
                out = multi_undo(ref, model.layering, us, tol=tol)
    _emit(out, args.output, args.format)
    return 0


def cmd_oracle(args) -> int:
    model = load_model(args.model)
    if isinstance(model, ClassicalModel):
        raise InputError("the oracle needs a quantum model")
    controls = parse_controls(args.controls, model.dag)
    out = counterfactual_oracle(model, controls)
    if args.output:
        _emit(out, args.output, args.format)
    if args.compare:
        other = load_table(args.compare)
        if set(other.names) != set(out.names):
            raise InputError(f"{args.compare} has variables {other.names}, oracle has {out.names}")
        ids = dict(zip(out.names, out.variables))
        other = ProbTable(tuple(ids[n] for n in other.names), other.values, other.names)
        diff = out.max_abs_diff(other)
        tol = _tol()
        print(f"max abs difference {diff:.3e} ({'within' if diff <= tol else 'above'} tolerance {tol:.1e})")
        return 0 if diff <= tol else 1
    if not args.output:
        _emit(out, None, args.format)
    return 0


def cmd_sep(args) -> int:
    model = load_model(args.model)
    sets = []
    for text in (args.u, args.v, args.w or ""):
        sets.append([model.dag.resolve(s.strip()) for s in text.split(",") if s.strip()])
    U, V, W = sets
    if not U or not V:
        raise InputError("--u and --v must name at least one node")
    verdict = separated(model.dag, U, V, W, args.rules)
    print("separated" if verdict else "not separated")
    return 0


def run_suites(names, seeds, tol) -> list:
    from .verify import demos, suites

    results = []
    for name in names:
        if name == "lemmas":
            results.append(suites.lemma_suite(seeds, tol))
        elif name == "theorem":
            results.append(suites.theorem_case_suite(seeds, tol))
        elif name == "markov":
            results.append(suites.markov_suite(seeds=seeds, tol=tol, nft_seeds=range(20)))
        elif name == "impossibility":
            results.append(demos.impossibility_demo())
        elif name == "fcc":
            results.append(demos.fcc_violation_demo())
    return results


def cmd_verify(args) -> int:
    tol = _tol()
    names = [s for s in SUITES if s != "all"] if args.suite == "all" else [args.suite]
    seeds = tuple(range(args.seed, args.seed + args.n_seeds))
    results = run_suites(names, seeds, tol)
    ok = True
    blob = []
    for r in results:
        print(r.summary())
        ok = ok and r.passed
        blob.append(r.to_dict())
    if args.json:
        Path(args.json).write_text(json.dumps(blob, indent=1, sort_keys=True, default=str))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcm", description="Quantum causal models: simulation, inference and checks.",
                                formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CONTROLS_HELP)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, table=False):
        sp.add_argument("model", help="JSON model file")
        sp.add_argument("-o", "--output", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        if table:
            sp.add_argument("--table", help="reference table to use instead of simulating the model")

    sp = sub.add_parser("simulate", help="reference distribution of a model")
    common(sp, table=False)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("infer", help="infer an intervention or un-measurement from reference statistics")
    common(sp, table=True)
    sp.add_argument("--do", help="node(s) to intervene on, comma-separated")
    sp.add_argument("--undo", help="node(s) to un-measure, comma-separated")
    sp.add_argument("--value", type=int, help="fine-grained intervention outcome")
    sp.add_argument("--target", help="intervention distribution, comma-separated")
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("oracle", help="simulate a counterfactual experiment directly",
                        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CONTROLS_HELP)
    common(sp)
    sp.add_argument("--controls", required=True, help="control spec, e.g. do:W=3,undo:Y")
    sp.add_argument("--compare", help="table file to compare against; prints the max-norm difference")
    sp.set_defaults(fn=cmd_oracle)

    sp = sub.add_parser("sep", help="graphical separation verdict")
    sp.add_argument("model")
    sp.add_argument("--u", required=True)
    sp.add_argument("--v", required=True)
    sp.add_argument("--w", default="")
    sp.add_argument("--rules", choices=(QUANTUM, CLASSICAL), default=QUANTUM)
    sp.set_defaults(fn=cmd_sep)

    sp = sub.add_parser("verify", help="run verification suites")
    sp.add_argument("--suite", choices=SUITES, default="all")
    sp.add_argument("--seed", type=int, default=1, help="first seed of the random draws")
    sp.add_argument("--n-seeds", type=int, default=5)
    sp.add_argument("--json", help="write machine-readable results here")
    sp.set_defaults(fn=cmd_verify)
    return p


INPUT_ERRORS = (InputError, ModelError, TableError, GraphError, NetworkError, InferenceError, ClassicalError,
                OSError, ValueError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.fn(args)
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def run_command(argv) -> int:
    try:
        return main(argv)
    except SystemExit as e:
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
