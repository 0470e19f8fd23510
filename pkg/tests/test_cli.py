import csv
import json

import pytest

from abandonq.cli import COLUMNS, main
from abandonq.config import dump_config, load_config, parse_config, write_rows
from abandonq.errors import Inadmissible, SchemaError

QUEUE = {"id": "A",
         "arrival": {"type": "mix_exp", "weights": [0.6, 0.4], "rates": [30.0, 5.0]},
         "patience": {"type": "trunc_mix_exp", "weights": [0.5, 0.5], "rates": [2.0, 0.5],
                      "bound": 4.0}}
QUEUE_B = dict(QUEUE, id="B", arrival={"type": "exp", "rate": 12.0})


def _write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj, indent=2))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().err


def test_config_roundtrip_is_byte_stable(tmp_path):
    cfg = load_config(_write(tmp_path, {"queues": [QUEUE], "r": 7}))
    text = dump_config(cfg)
    again = load_config(_write(tmp_path, json.loads(text), "again.json"))
    assert dump_config(again) == text


def test_schema_errors_name_field_and_line(tmp_path):
    bad = json.loads(json.dumps(QUEUE))
    bad["patience"]["weights"] = [0.5, 0.6]
    with pytest.raises(SchemaError) as exc:
        load_config(_write(tmp_path, {"queues": [bad]}))
    assert exc.value.field == "weights" and exc.value.line is not None
    with pytest.raises(SchemaError) as exc:
        parse_config({"queues": [QUEUE], "typo": 1})
    assert exc.value.field == "typo"


def test_inadmissible_gamma_is_explained(tmp_path):
    q = dict(QUEUE, arrival={"type": "gamma", "shape": 1.5, "scale": 0.05})
    with pytest.raises(Inadmissible) as exc:
        load_config(_write(tmp_path, {"queues": [q]}))
    assert "bounded first and second" in str(exc.value)


def test_evaluate_happy_path(tmp_path, capsys):
    cfg = _write(tmp_path, {"queues": [QUEUE, QUEUE_B]})
    out = tmp_path / "res"
    code, _ = _run(capsys, "evaluate", "--config", cfg, "--r", 7, "--out", out,
                   "--dump-chain", tmp_path / "chain.npz")
    assert code == 0
    rows = _rows(out / "evaluate.csv")
    assert list(rows[0]) == COLUMNS
    assert {r["queue_id"] for r in rows} == {"A", "B"}
    assert (tmp_path / "chain_A.npz").exists()


def test_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "queues": [\n    {"id": "A",,}\n  ]\n}\n')
    code, err = _run(capsys, "evaluate", "--config", path, "--out", tmp_path)
    assert code == 1
    diag = json.loads(err.strip().splitlines()[-1])
    assert diag["line"] == 3


def test_usage_errors(capsys, tmp_path):
    assert _run(capsys, "nonsense")[0] == 1
    assert _run(capsys, "evaluate")[0] == 1
    assert _run(capsys, "evaluate", "--config", tmp_path / "missing.json")[0] == 1


def test_infeasible_budget_exits_two(tmp_path, capsys):
    cfg = _write(tmp_path, {"queues": [QUEUE, QUEUE_B],
                            "optimize": {"template": "equity_ost", "mu_total": 1.0,
                                         "knots": 5, "r": 5}})
    code, err = _run(capsys, "optimize", "--config", cfg, "--out", tmp_path)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "infeasible"


def test_optimize_writes_solution(tmp_path, capsys):
    cfg = _write(tmp_path, {"queues": [QUEUE, QUEUE_B],
                            "optimize": {"template": "equity_ab", "knots": 5, "r": 5,
                                         "r_check": 6, "eps": 0.01}})
    code, _ = _run(capsys, "optimize", "--config", cfg, "--out", tmp_path)
    assert code == 0
    rows = _rows(tmp_path / "solution.csv")
    assert len(rows) == 2 and {"intensity_cluster", "risk_cluster"} <= set(rows[0])
    report = json.loads((tmp_path / "solution.json").read_text())
    assert report["Z"] >= 0 and "verification" in report


def test_simulate_compare_bound_fit(tmp_path, capsys):
    cfg = _write(tmp_path, {"queues": [QUEUE], "r": 7, "seed": 3,
                            "sim": {"n": 20000, "burn_in": 1000},
                            "bound": {"r": 5, "measure": "abandonment"},
                            "fit": {"samples": [0.1, 0.4, 0.2, 1.5, 0.05, 0.3, 2.2, 0.8]}})
    for cmd in ("simulate", "compare", "bound", "fit"):
        assert _run(capsys, cmd, "--config", cfg, "--out", tmp_path)[0] == 0
    sim = _rows(tmp_path / "simulate.csv")
    assert {"ci95_lo", "ci99_hi"} <= set(sim[0])
    comp = _rows(tmp_path / "compare.csv")
    assert {r["method"] for r in comp} == {"simulation", "finite", "fluid", "diffusion"}
    bound = json.loads((tmp_path / "bound.json").read_text())
    assert bound[0]["bound"] > 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert set(fit) == {"exponential", "hyperexp2"}


def test_bound_gate_needs_flag(tmp_path, capsys):
    cfg = _write(tmp_path, {"queues": [QUEUE], "bound": {"r": 9}})
    assert _run(capsys, "bound", "--config", cfg, "--out", tmp_path)[0] == 1


def test_reruns_and_threads_are_byte_identical(tmp_path, capsys):
    cfg = _write(tmp_path, {"queues": [QUEUE, QUEUE_B], "r": 8,
                            "sim": {"n": 20000, "burn_in": 1000}})
    outs = []
    for i, threads in enumerate((1, 1, 3)):
        out = tmp_path / f"o{i}"
        assert _run(capsys, "compare", "--config", cfg, "--seed", 9, "--threads", threads,
                    "--out", out)[0] == 0
        outs.append((out / "compare.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_write_rows_format(tmp_path):
    path = tmp_path / "x.csv"
    write_rows(path, [{"a": 0.1, "b": "x,y", "c": 3, "d": True}], ["a", "b", "c", "d"])
    assert path.read_text() == 'a,b,c,d\n0.10000000000000001,"x,y",3,true\n'
