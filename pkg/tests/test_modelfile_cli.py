import json
from pathlib import Path

import numpy as np
import pytest

from qcausal.cli import main, run_command
from qcausal.classical import ClassicalModel
from qcausal.modelfile import ModelError, channel_entry, load_model, parse_model
from qcausal.network import QuantumNetwork, Undo, counterfactual_oracle, reference_distribution
from qcausal.quantum import Channel
from qcausal.table import load_table

MODELS = Path(__file__).resolve().parent.parent / "models"


def model(name):
    return str(MODELS / name)


def write(tmp_path, desc, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(desc))
    return str(p)


def chain_desc():
    return json.loads((MODELS / "chain.json").read_text())


def test_load_bundled_models():
    for p in MODELS.glob("*.json"):
        m = load_model(p)
        assert isinstance(m, (QuantumNetwork, ClassicalModel))


def test_identity_pair_values():
    net = load_model(model("identity_pair.json"))
    P = reference_distribution(net).values
    assert np.allclose(np.diag(P), 1 / 8)
    assert np.allclose(P[~np.eye(4, dtype=bool)], 1 / 24)


def test_channel_entry_round_trip(tmp_path):
    desc = {"format_version": 1, "nodes": [{"name": "X", "layer": 0}, {"name": "Y", "layer": 1}],
            "edges": [["X", "Y"]], "channels": [{"subchannels": [channel_entry(["X"], ["Y"], Channel.identity(2))]}]}
    a = reference_distribution(parse_model(desc))
    b = reference_distribution(load_model(model("identity_pair.json")))
    assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d.pop("format_version"), ""),
    (lambda d: d.update(format_version=2), "format_version"),
    (lambda d: d["nodes"][1].update(dim=1), "nodes[1].dim"),
    (lambda d: d["edges"].append(["X", "Q"]), "edges[2][1]"),
    (lambda d: d["nodes"][2].update(layer=1), "nodes"),
    (lambda d: d.update(seed="x"), "seed"),
    (lambda d: d.update(model="other"), "model"),
])
def test_model_errors_carry_field_path(mutate, path):
    d = chain_desc()
    mutate(d)
    with pytest.raises(ModelError) as e:
        parse_model(d)
    assert e.value.path == path


def test_bad_choi_size_reported():
    d = chain_desc()
    d.pop("seed")
    d["channels"] = [{"random_unbiased": {"seed": 1}},
                     {"subchannels": [{"inputs": ["Y"], "outputs": ["Z"], "choi": [0.0] * 30}]}]
    with pytest.raises(ModelError) as e:
        parse_model(d)
    assert e.value.path == "channels[1].subchannels[0].choi"
    assert "expected 16" in str(e.value)


def test_json_syntax_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "format_version": 1,\n "nodes": [\n')
    with pytest.raises(ModelError, match="line 4"):
        load_model(p)


def test_biased_channel_in_file_rejected():
    d = chain_desc()
    d.pop("seed")
    pin = Channel.from_map(lambda r: np.trace(r) * np.diag([1.0, 0.0]), 2, 2)
    d["channels"] = [{"subchannels": [channel_entry(["X"], ["Y"], pin)]}, {"random_unbiased": {"seed": 1}}]
    with pytest.raises(ModelError, match="biased"):
        parse_model(d)


def test_classical_model_file():
    m = load_model(model("classical_fork.json"))
    assert m.cpts[m.dag.id_of("X2")][0, 0] == 0.875


# --- command line -----------------------------------------------------------

def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_command(["simulate", model("chain.json"), "-o", str(a)]) == 0
    assert run_command(["simulate", model("chain.json"), "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    t = load_table(str(a))
    assert t.names == ("X", "Y", "Z") and t.shape == (4, 4, 4)


def test_simulate_json_stdout(capsys):
    assert run_command(["simulate", model("identity_pair.json"), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["probabilities"]) == 16


def test_infer_undo_then_oracle_compare(tmp_path, capsys):
    out = tmp_path / "undo.csv"
    assert run_command(["infer", model("chain.json"), "--undo", "Y", "-o", str(out)]) == 0
    assert run_command(["oracle", model("chain.json"), "--controls", "undo:Y", "--compare", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("max abs difference") and "within tolerance" in line
    assert float(line.split()[3]) < 1e-9


def test_infer_do_matches_oracle(tmp_path, capsys):
    out = tmp_path / "do.csv"
    assert run_command(["infer", model("fig5.json"), "--do", "W", "--value", "2", "-o", str(out)]) == 0
    assert run_command(["oracle", model("fig5.json"), "--controls", "do:W=2", "--compare", str(out)]) == 0
    t = load_table(str(out))
    assert np.allclose(t.array(["W"]), [0, 0, 1, 0], atol=1e-12)


def test_infer_from_table(tmp_path):
    ref = tmp_path / "ref.csv"
    out = tmp_path / "undo.csv"
    assert run_command(["simulate", model("chain.json"), "-o", str(ref)]) == 0
    assert run_command(["infer", model("chain.json"), "--table", str(ref), "--undo", "Y", "-o", str(out)]) == 0
    net = load_model(model("chain.json"))
    want = counterfactual_oracle(net, {"Y": Undo()})
    got = load_table(str(out))
    assert np.max(np.abs(got.values - want.values)) < 1e-9


def test_infer_classical_do(tmp_path):
    out = tmp_path / "do.csv"
    assert run_command(["infer", model("classical_fork.json"), "--do", "X1", "--value", "0", "-o", str(out)]) == 0
    t = load_table(str(out))
    # X1 is cut from C, so C and X2 keep their joint
    assert np.allclose(t.array(["C", "X2"]), [[0.4375, 0.0625], [0.25, 0.25]])
    assert np.allclose(t.array(["X1"]), [1, 0])


def test_infer_input_errors(tmp_path):
    assert run_command(["infer", model("chain.json"), "--undo", "X"]) == 2
    assert run_command(["infer", model("chain.json")]) == 2
    assert run_command(["infer", model("chain.json"), "--do", "Y", "--undo", "Z"]) == 2
    assert run_command(["infer", model("chain.json"), "--do", "Q"]) == 2
    assert run_command(["infer", str(tmp_path / "missing.json"), "--do", "Y"]) == 2


def test_adjacent_undo_refused(tmp_path, capsys):
    d = {"format_version": 1, "seed": 1, "edges": [["A", "B"], ["B", "C"], ["C", "D"]],
         "nodes": [{"name": n, "layer": i} for i, n in enumerate("ABCD")]}
    assert run_command(["infer", write(tmp_path, d), "--undo", "B,C"]) == 2
    assert "adjacent" in capsys.readouterr().err


def test_sep_verdicts(capsys):
    assert run_command(["sep", model("fork.json"), "--u", "X1", "--v", "X2"]) == 0
    assert capsys.readouterr().out.strip() == "separated"
    assert run_command(["sep", model("fork.json"), "--u", "X1", "--v", "X2", "--rules", "classical"]) == 0
    assert capsys.readouterr().out.strip() == "not separated"
    assert run_command(["sep", model("fork.json"), "--u", "X1", "--v", "X2", "--w", "C"]) == 0
    assert capsys.readouterr().out.strip() == "not separated"


def test_bad_model_exit_code(tmp_path, capsys):
    d = chain_desc()
    d["nodes"][0]["dim"] = "two"
    assert run_command(["simulate", write(tmp_path, d)]) == 2
    assert "nodes[0].dim" in capsys.readouterr().err


def test_qcm_tol(tmp_path, monkeypatch, capsys):
    out = tmp_path / "undo.csv"
    assert run_command(["infer", model("chain.json"), "--undo", "Y", "-o", str(out)]) == 0
    monkeypatch.setenv("QCM_TOL", "1e-30")
    assert run_command(["oracle", model("chain.json"), "--controls", "undo:Y", "--compare", str(out)]) == 1
    assert "above tolerance 1.0e-30" in capsys.readouterr().out
    monkeypatch.setenv("QCM_TOL", "abc")
    assert run_command(["oracle", model("chain.json"), "--controls", "undo:Y", "--compare", str(out)]) == 2


def test_verify_fcc_json(tmp_path, capsys):
    js = tmp_path / "v.json"
    assert run_command(["verify", "--suite", "fcc", "--json", str(js)]) == 0
    assert capsys.readouterr().out.startswith("fcc: PASS")
    assert json.loads(js.read_text())[0]["suite"] == "fcc"


def test_help_documents_controls(capsys):
    with pytest.raises(SystemExit):
        main(["oracle", "--help"])
    assert "do:NODE=k" in capsys.readouterr().out


def test_usage_error_exit_code():
    assert run_command(["frobnicate"]) == 2
