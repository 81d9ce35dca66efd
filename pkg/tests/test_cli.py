import csv
import io
import json
import math

import pytest

from capfb.cli import SWEEP_HEADER, main


def _write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _scalar(C, Q=0.0, kappa=7.0):
    return {"schemaVersion": 1, "kind": "gaussianScalar",
            "gaussian": {"C": C, "D": 1, "R": 1, "Q": Q, "K_V": 1, "kappa": kappa}}


BSC = {"schemaVersion": 1, "kind": "finite",
       "finite": {"inputSize": 2, "outputSize": 2, "memoryM": 0, "kernel": [[[0.9, 0.1], [0.1, 0.9]]]}}


def _capacity(capsys, path, *extra):
    code = main(["capacity", "--spec", path, *extra])
    return code, capsys.readouterr()


def test_capacity_gaussian_scalar(tmp_path, capsys):
    code, out = _capacity(capsys, _write(tmp_path, "g.json", _scalar(2.0)))
    doc = json.loads(out.out)
    assert code == 0
    assert doc["capacityBits"] == pytest.approx(0.5, abs=1e-12)
    assert doc["kappaMin"] == 3.0 and doc["regime"] == "active"


def test_capacity_bsc_and_policy_dump(tmp_path, capsys):
    pol = tmp_path / "pol.csv"
    code, out = _capacity(capsys, _write(tmp_path, "b.json", BSC), "--emit-policy", str(pol))
    assert code == 0
    assert json.loads(out.out)["capacityBits"] == pytest.approx(0.531004, abs=1e-6)
    rows = list(csv.reader(io.StringIO(pol.read_text())))
    assert rows[0] == ["state_index", "window_symbols", "prob_input_0", "prob_input_1"]
    assert float(rows[1][2]) == pytest.approx(0.5, abs=1e-9)


def test_capacity_finite_with_memory_and_cost(tmp_path, capsys):
    doc = {"schemaVersion": 1, "kind": "finite",
           "finite": {"inputSize": 2, "outputSize": 2, "memoryM": 1,
                      "kernel": [[[0.9, 0.1], [0.1, 0.9]], [[0.7, 0.3], [0.3, 0.7]]],
                      "cost": {"memoryK": 0, "table": [[0, 1]], "kappa": 0.3}}}
    pol = tmp_path / "pol.csv"
    code, out = _capacity(capsys, _write(tmp_path, "u.json", doc), "--emit-policy", str(pol))
    res = json.loads(out.out)
    assert code == 0 and res["regime"] == "active"
    assert res["avgCost"] == pytest.approx(0.3, abs=1e-6)
    assert [r[1] for r in csv.reader(io.StringIO(pol.read_text()))][1:] == ["0", "1"]


def test_capacity_gaussian_matrix(tmp_path, capsys):
    doc = {"schemaVersion": 1, "kind": "gaussianMatrix",
           "gaussian": {"C": [[2.0]], "D": [[1.0]], "R": [[1.0]], "Q": [[0.0]], "K_V": [[1.0]], "kappa": 7.0}}
    code, out = _capacity(capsys, _write(tmp_path, "m.json", doc))
    assert code == 0
    assert json.loads(out.out)["capacityBits"] == pytest.approx(0.5, abs=1e-9)


def test_malformed_kernel_row(tmp_path, capsys):
    doc = json.loads(json.dumps(BSC))
    doc["finite"]["kernel"][0][1] = [0.4, 0.4]
    code, out = _capacity(capsys, _write(tmp_path, "bad.json", doc))
    assert code == 2
    assert "(state=0, input=1)" in out.err and "0.8" in out.err


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(schemaVersion=2),
    lambda d: d.update(kind="quantum"),
    lambda d: d["finite"].update(kernel=[[0.9, 0.1]]),
    lambda d: d["finite"].pop("outputSize"),
])
def test_validation_errors(tmp_path, capsys, mutate):
    doc = json.loads(json.dumps(BSC))
    mutate(doc)
    assert _capacity(capsys, _write(tmp_path, "bad.json", doc))[0] == 2


def test_invalid_json_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "x.json"
    bad.write_text("{not json")
    assert _capacity(capsys, str(bad))[0] == 2
    assert _capacity(capsys, str(tmp_path / "missing.json"))[0] == 5


def test_non_convergence_exit(tmp_path, capsys):
    doc = {"schemaVersion": 1, "kind": "finite",
           "finite": {"inputSize": 2, "outputSize": 2, "memoryM": 1,
                      "kernel": [[[0.9, 0.1], [0.1, 0.9]], [[0.7, 0.3], [0.3, 0.7]]]}}
    assert _capacity(capsys, _write(tmp_path, "u.json", doc), "--max-iter", "1")[0] == 3


def test_ergodicity_exit(tmp_path, capsys):
    # outputs copy the previous output regardless of the input: two closed classes
    doc = {"schemaVersion": 1, "kind": "finite",
           "finite": {"inputSize": 2, "outputSize": 2, "memoryM": 1,
                      "kernel": [[[1, 0], [1, 0]], [[0, 1], [0, 1]]],
                      "cost": {"memoryK": 0, "table": [[0, 1]], "kappa": 0.2}}}
    assert _capacity(capsys, _write(tmp_path, "e.json", doc))[0] == 4


def _sweep(tmp_path, doc, lo, hi, steps):
    out = tmp_path / "s.csv"
    code = main(["sweep", "--spec", _write(tmp_path, "g.json", doc), "--kappa-min", str(lo),
                 "--kappa-max", str(hi), "--steps", str(steps), "--out", str(out)])
    return code, out.read_bytes() if out.exists() else b""


def test_sweep_unstable_threshold(tmp_path):
    code, raw = _sweep(tmp_path, _scalar(2.0), 0, 10, 11)
    assert code == 0 and b"\r" not in raw
    rows = list(csv.DictReader(io.StringIO(raw.decode())))
    assert tuple(rows[0]) == SWEEP_HEADER and len(rows) == 11
    for r in rows:
        if float(r["kappa"]) <= 3:
            assert float(r["capacity_nats"]) == 0.0 and r["regime"] == "belowMin"
        else:
            assert r["regime"] == "active"


def test_sweep_stable_curve_and_round_trip(tmp_path):
    code, raw = _sweep(tmp_path, _scalar(0.5), 0, 10, 21)
    rows = list(csv.DictReader(io.StringIO(raw.decode())))
    for r in rows:
        k = float(r["kappa"])
        assert float(r["capacity_bits"]) == pytest.approx(0.5 * math.log2(1 + k), abs=1e-12)
        # 17 significant digits round-trip exactly
        assert format(float(r["capacity_nats"]), ".17g") == r["capacity_nats"]
    _, again = _sweep(tmp_path, _scalar(0.5), 0, 10, 21)
    assert again == raw


def test_sweep_two_steps_and_errors(tmp_path, capsys):
    code, raw = _sweep(tmp_path, _scalar(0.5), 0, 1, 2)
    assert code == 0 and len(raw.decode().strip().split("\n")) == 3
    assert _sweep(tmp_path, _scalar(0.5), 0, 1, 1)[0] == 2
    assert _sweep(tmp_path, _scalar(0.5), 2, 1, 3)[0] == 2
    code = main(["sweep", "--spec", _write(tmp_path, "g.json", _scalar(0.5)), "--kappa-min", "0",
                 "--kappa-max", "1", "--steps", "2", "--out", str(tmp_path / "no" / "dir" / "x.csv")])
    assert code == 5
    assert _sweep(tmp_path, BSC, 0, 1, 3)[0] == 2


def test_verify_gaussian_passes(capsys):
    assert main(["verify", "--suite", "gaussian"]) == 0
    assert capsys.readouterr().out.count("PASS") == 4


def test_verify_unknown_suite():
    with pytest.raises(SystemExit) as info:
        main(["verify", "--suite", "nonsense"])
    assert info.value.code == 2


def test_verify_mis_restricted_window_fails(capsys):
    assert main(["verify", "--suite", "oracle", "--restrict-j", "0"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "gap=0.022" in out
