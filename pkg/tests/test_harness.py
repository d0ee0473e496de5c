import json
import math

import numpy as np
import pytest

from relusgd.cli import main
from relusgd.datagen import write_idx
from relusgd.harness import (CSV_HEADER, CellResult, ConfigError, GridResult,
                             cell_dataset, emit_csv, grid_csv, load_config, parse_config,
                             run_bounds_report, run_grid)
from relusgd.reportio import load_report, save_report
from relusgd.trainer import TrainConfig, train
from relusgd.datagen import gen_adversarial

HEADER = ",".join(CSV_HEADER)


# ---- config ---------------------------------------------------------------

def test_parse_key_value():
    spec = parse_config("""
        # grid
        source = uniform
        d = 8
        n_values = 10, 20 ,30
        k_values = 2,4
        variants = noisy, vanilla
        rho = inf
        bias: true
    """)
    assert spec.source == "uniform" and spec.d == 8
    assert spec.n_values == (10, 20, 30) and spec.k_values == (2, 4)
    assert spec.variants == ("noisy", "vanilla")
    assert spec.rho == math.inf and spec.bias is True


def test_parse_json_equivalent():
    a = parse_config('{"d": 8, "n_values": [10, 20], "k_values": "2,4", "trials": 3}')
    b = parse_config("d=8\nn_values=10,20\nk_values=2,4\ntrials=3\n")
    assert a == b


@pytest.mark.parametrize("text", [
    "n_values =\n",                 # empty grid
    "trials = 0",
    "variants = noisy, sgd",
    "colour = blue",
    "d = eight",
    "just some words",
    "{not json",
    "eta = -1",
    "source = csv",
    "bias = maybe",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_eta_rule_mnist():
    spec = parse_config("eta_rule = mnist")
    assert spec.eta_for(4) == 0.001 and spec.eta_for(6) == 0.01


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="missing.cfg"):
        load_config(tmp_path / "missing.cfg")


def test_overrides_apply(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 1\n")
    assert load_config(p, {"seed": 9}).seed == 9


# ---- grid -----------------------------------------------------------------

SMALL = "d=16\nn_values=20,40\nk_values=2,4\ntrials=3\nvariants=noisy\n"


def test_grid_cells_and_success_rate():
    res = run_grid(parse_config(SMALL))
    assert [(c.variant, c.n, c.k) for c in res.cells] == [
        ("noisy", 20, 2), ("noisy", 20, 4), ("noisy", 40, 2), ("noisy", 40, 4)]
    for c in res.cells:
        rs = [t for t in res.trials if (t.variant, t.n, t.k) == (c.variant, c.n, c.k)]
        assert c.trials == 3
        assert c.success_rate == sum(t.success for t in rs) / 3
        assert c.mean_tau == np.mean([t.tau for t in rs])
    assert all(c.success_rate == 1.0 for c in res.cells)
    # converged noisy runs respect the worst-case cap
    for t in res.trials:
        assert t.tau <= t.Tk


def test_grid_csv_format():
    text = grid_csv(run_grid(parse_config(SMALL)))
    lines = text.splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 5
    row = lines[1].split(",")
    assert row[:4] == ["noisy", "20", "2", "3"]
    assert row[-1] == ""
    for cell in row[4:10]:
        float(cell)
        if "e" not in cell and cell != "nan":
            assert len(cell.replace(".", "").replace("-", "").lstrip("0")) <= 9


def test_empty_grid_is_header_only(tmp_path):
    emit_csv(GridResult(), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == HEADER + "\n"


def test_emit_sorted_and_timing(tmp_path):
    cells = [CellResult("vanilla", 20, 2, 1, 0.0, 1.0, 1.0, 1.0, 1.0, math.nan, 3.25),
             CellResult("noisy", 40, 2, 1, 1.0, 1.0, 1.0, 1.0, 1.0, math.nan, 1.0),
             CellResult("noisy", 20, 4, 1, 1.0, 1.0, 1.0, 1.0, 1.0, math.nan, 2.0)]
    text = grid_csv(GridResult(cells), timing=True)
    keys = [tuple(line.split(",")[:3]) for line in text.splitlines()[1:]]
    assert keys == [("noisy", "20", "4"), ("noisy", "40", "2"), ("vanilla", "20", "2")]
    assert text.splitlines()[3].endswith(",3.25")
    emit_csv(GridResult(cells), tmp_path / "a.csv")
    emit_csv(GridResult(cells), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_grid_deterministic_across_threads():
    spec = parse_config(SMALL + "variants=noisy,vanilla\ntrials=2\n")
    a = grid_csv(run_grid(spec, threads=1))
    b = grid_csv(run_grid(spec, threads=1))
    c = grid_csv(run_grid(spec, threads=3))
    assert a == b == c


def test_variants_share_data_and_init():
    spec = parse_config("d=8\nn_values=10\nk_values=2\ntrials=1\nvariants=noisy,vanilla\n")
    d1 = cell_dataset(spec, 10, 0)
    d2 = cell_dataset(spec, 10, 0)
    assert d1.X.tobytes() == d2.X.tobytes()
    assert cell_dataset(spec, 10, 1).X.tobytes() != d1.X.tobytes()


def test_adversarial_grid_requires_n_equals_d():
    spec = parse_config("source=adversarial\nd=4\nn_values=5\nk_values=2\ntrials=1\n")
    with pytest.raises(ConfigError):
        run_grid(spec)


def test_csv_source_grid(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 3))
    y = np.where(X @ [1.0, -2.0, 0.5] >= 0, 1, -1)
    (tmp_path / "d.csv").write_text("".join(f"{a},{b},{c},{l}\n" for (a, b, c), l in zip(X, y)))
    spec = parse_config(f"source=csv\ncsv_path={tmp_path / 'd.csv'}\nn_values=20\nk_values=2\n"
                        "trials=2\nmax_passes=50\n")
    res = run_grid(spec)
    assert res.cells[0].n == 20 and math.isnan(res.cells[0].Tk0)
    too_big = parse_config(f"source=csv\ncsv_path={tmp_path / 'd.csv'}\nn_values=31\n")
    with pytest.raises(ValueError, match="30 samples"):
        run_grid(too_big)


def test_idx_source_grid(tmp_path):
    rng = np.random.default_rng(1)
    images = rng.integers(0, 256, (12, 4, 4), dtype=np.uint8)
    labels = [3, 5] * 6
    write_idx(tmp_path / "i", tmp_path / "l", images, labels)
    spec = parse_config(f"source=idx\nidx_images={tmp_path / 'i'}\nidx_labels={tmp_path / 'l'}\n"
                        "n_values=6\nk_values=2\ntrials=1\nmax_passes=20\nrelabel=3:-1,5:1\n")
    assert run_grid(spec).cells[0].n == 6


# ---- bounds report --------------------------------------------------------

def test_bounds_report_adversarial():
    spec = parse_config("source=adversarial\nd=8\neta=0.01\nv=1,-1\n")
    rep = run_bounds_report(spec)
    assert rep.lower_bound == pytest.approx(400, rel=1e-12)
    assert rep.Tk0 == pytest.approx(3232, rel=1e-12)
    assert rep.tau_k is None and rep.compression_bound is None


def test_bounds_report_with_run():
    spec = parse_config("source=adversarial\nd=8\neta=0.01\nv=1,-1\nrho=0\n")
    rep = train(gen_adversarial(8), 2, TrainConfig(rho=0.0))
    out = run_bounds_report(spec, rep)
    assert out.tau_k == rep.tau_k
    assert out.compression_bound == "precondition n>=2tau_k violated"
    assert out.prop1_confidence is not None


def test_report_round_trip(tmp_path):
    rep = train(gen_adversarial(4), 2, TrainConfig(rho=0.0, audit=True))
    save_report(rep, tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back.final_net.W.tobytes() == rep.final_net.W.tobytes()
    assert np.array_equal(back.phi_trace, rep.phi_trace)
    assert back.config == rep.config and back.tau_k == rep.tau_k


def test_report_round_trip_infinite_rho(tmp_path):
    rep = train(gen_adversarial(3), 2, TrainConfig(rho=math.inf))
    save_report(rep, tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["config"]["rho"] == "inf"
    assert load_report(tmp_path / "r.json").config.rho == math.inf


# ---- CLI ------------------------------------------------------------------

def test_cli_missing_config(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert "missing.cfg" in capsys.readouterr().err


def test_cli_bad_arguments(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["grid"]) == 1


def test_cli_gen_adversarial(tmp_path):
    out = tmp_path / "s1.csv"
    assert main(["gen", "--adversarial", "--d", "3", "--out", str(out)]) == 0
    assert out.read_text().splitlines() == ["1.0,0.0,0.0,1", "0.0,1.0,0.0,1", "0.0,0.0,1.0,1"]


def test_cli_gen_gaussian(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["gen", "--d", "4", "--n", "7", "--seed", "3", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 7
    assert main(["gen", "--d", "4", "--out", str(out)]) == 1


def test_cli_grid_seed_and_threads(tmp_path):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("d=8\nn_values=10\nk_values=2\ntrials=2\n")
    a, b, c = (tmp_path / f"{x}.csv" for x in "abc")
    assert main(["grid", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["grid", "--config", str(cfg), "--out", str(b), "--threads", "4"]) == 0
    assert main(["grid", "--config", str(cfg), "--out", str(c), "--seed", "5"]) == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_cli_train_audit_bounds(tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("source=adversarial\nd=4\nn=4\nk=2\nrho=0\n")
    rep = tmp_path / "r.json"
    assert main(["train", "--config", str(cfg), "--out", str(rep)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["converged"] and summary["tau_k"] >= 200
    assert main(["audit", str(rep)]) == 0
    assert "0 violations" in capsys.readouterr().out
    out = tmp_path / "b.json"
    assert main(["bounds", "--config", str(cfg), "--report", str(rep), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["tau_k"] == summary["tau_k"]


def test_cli_audit_flags_tampered_trace(tmp_path, capsys):
    rep = train(gen_adversarial(4), 2, TrainConfig(rho=0.0, audit=True))
    save_report(rep, tmp_path / "r.json")
    obj = json.loads((tmp_path / "r.json").read_text())
    obj["phi_trace"][5] = obj["phi_trace"][4] + 0.005  # half-eta step
    (tmp_path / "r.json").write_text(json.dumps(obj))
    assert main(["audit", str(tmp_path / "r.json")]) == 3
    assert "phi_increment" in capsys.readouterr().out


def test_cli_audit_unreadable(tmp_path):
    (tmp_path / "x.json").write_text("{}")
    assert main(["audit", str(tmp_path / "x.json")]) == 1


def test_cli_runtime_error_exit_2(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"source=csv\ncsv_path={tmp_path / 'nope.csv'}\nn_values=5\n")
    assert main(["grid", "--config", str(cfg)]) == 2
