import json

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from powerweight.cli import RunConfig, ValidationError, main
from powerweight.data import DATA_DIR_ENV, IngestError, ingest
from powerweight.synthetic import PRESETS, gen_hier_capm, replication_rngs

HEADER = "date,MKT,SMB,HML,MOM,RF,P1,P2\n"


def write_factor_file(path, T=60, seed=0, sentinel_at=None):
    rng = np.random.default_rng(seed)
    F = rng.normal(0.5, 4.0, (T, 4))
    rf = np.full(T, 0.3)
    P = np.column_stack([0.2 + F @ [1.0, 0.5, 0.0, 0.0], 0.1 + F @ [0.8, 0.0, 0.3, 0.0]])
    P += rng.normal(0, 2.0, P.shape)
    k = np.arange(T)
    dates = (1990 + k // 12) * 100 + k % 12 + 1
    frame = pd.DataFrame(np.column_stack([F, rf, P]), columns=["MKT", "SMB", "HML", "MOM", "RF", "P1", "P2"])
    frame.insert(0, "date", dates)
    if sentinel_at is not None:
        frame.loc[sentinel_at[0], sentinel_at[1]] = -99.99
    with open(path, "w") as fh:
        fh.write("# monthly percent returns\n")
        frame.to_csv(fh, index=False, float_format="%.10g")
    return frame


def test_ingest_three_rows(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text(HEADER + "199001,1,2,3,4,0.5,10,20\n199002,1,2,3,4,0.5,11,21\n199003,1,2,3,4,0.5,12,22\n")
    panel = ingest(path, factors=["MKT"], portfolios=["P1", "P2"], rf="RF", excess=True, scale=0.01)
    assert panel.X.shape == (2, 3, 1) and panel.y.shape == (2, 3)
    npt.assert_allclose(panel.y[0], [0.095, 0.105, 0.115])
    npt.assert_array_equal(panel.dates, [199001, 199002, 199003])
    assert panel.groups == ("P1", "P2")


def test_ingest_default_portfolios_and_intercept(tmp_path):
    path = tmp_path / "f.csv"
    write_factor_file(path)
    panel = ingest(path, factors=["MKT", "SMB"], rf="RF", intercept=True)
    assert panel.groups == ("HML", "MOM", "P1", "P2")
    assert panel.covariates == ("const", "MKT", "SMB")
    npt.assert_array_equal(panel.X[:, :, 0], 1.0)


def test_ingest_date_range(tmp_path):
    path = tmp_path / "f.csv"
    write_factor_file(path)
    panel = ingest(path, portfolios=["P1"], start=199101, end=199112)
    assert panel.T == 12 and panel.dates[0] == 199101


def test_sentinel_rejected_with_location(tmp_path):
    path = tmp_path / "f.csv"
    write_factor_file(path, sentinel_at=(5, "P2"))
    with pytest.raises(IngestError, match="199006:P2"):
        ingest(path, portfolios=["P1", "P2"])
    # unselected columns may hold missing values
    assert ingest(path, portfolios=["P1"]).J == 1
    # rows outside the date range are dropped before the check
    assert ingest(path, portfolios=["P2"], start=199007).T == 54


@pytest.mark.parametrize(
    "body, message",
    [
        ("199001,1,2,3,4,0.5,10,20\n199001,1,2,3,4,0.5,11,21\n", "strictly increasing"),
        ("199013,1,2,3,4,0.5,10,20\n", "malformed date"),
        ("1990-01,1,2,3,4,0.5,10,20\n", "malformed date"),
    ],
)
def test_bad_dates(tmp_path, body, message):
    path = tmp_path / "f.csv"
    path.write_text(HEADER + body)
    with pytest.raises(IngestError, match=message):
        ingest(path)


def test_missing_column_and_file(tmp_path):
    path = tmp_path / "f.csv"
    write_factor_file(path)
    with pytest.raises(IngestError, match="UMD"):
        ingest(path, factors=["UMD"])
    with pytest.raises(IngestError, match="not found"):
        ingest(tmp_path / "nope.csv")
    with pytest.raises(IngestError):
        ingest(path, excess=True)


def test_data_dir_env(tmp_path, monkeypatch):
    write_factor_file(tmp_path / "factors.csv")
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    assert ingest("factors.csv", portfolios=["P1"]).T == 60


def test_run_config_validation():
    with pytest.raises(ValidationError):
        RunConfig(command="simulate", grid_lo=0.0)
    with pytest.raises(ValidationError):
        RunConfig(command="backtest", methods=("stationary",), benchmark="window")
    with pytest.raises(ValidationError):
        RunConfig.from_mapping({"command": "fit", "colour": "red"})
    a = RunConfig(command="simulate", seed=1)
    assert a.digest() == RunConfig.from_mapping(a.to_dict()).digest()
    assert a.digest() != RunConfig(command="simulate", seed=2).digest()


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.err


def test_simulate_outputs_are_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, _ = run_cli(["simulate", "--setting", "stationary", "--reps", "3", "--seed", "4", "--out", str(out)],
                          capsys)
        assert code == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert {"replications.csv", "summary.json", "timings.json"} <= set(files)
    for f in files:
        if f != "timings.json":
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    first = (outs[0] / "replications.csv").read_text().splitlines()[0]
    assert first.startswith("# config_hash=") and "seed=4" in first and "version=" in first
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert set(summary["table"]) == {"Stationary", "PWD", "EWMA", "State-Space"}
    assert summary["provenance"]["seed"] == 4


def test_simulate_dump_round_trip(tmp_path, capsys):
    out = tmp_path / "sim"
    code, _ = run_cli(["simulate", "--setting", "setting2", "--reps", "1", "--iterations", "30", "--burn-in", "5",
                       "--grid-size", "6", "--grid-lo", "0.9", "--dump-panels", "1", "--out", str(out)], capsys)
    assert code == 0
    sim = gen_hier_capm(PRESETS["setting2"], replication_rngs(0, 1)[0])
    panel = ingest(out / "panel_0000.csv", factors=["MKT"])
    assert np.abs(panel.y - sim.panel.y).max() <= 1e-12
    assert "config_hash=" in (out / "panel_0000.csv").read_text().splitlines()[0]
    summary = json.loads((out / "summary.json").read_text())
    assert "table_signal" in summary and summary["target"] == "observed"


def test_backtest_benchmark_delta_zero(tmp_path, capsys):
    data = tmp_path / "f.csv"
    write_factor_file(data, T=40)
    out = tmp_path / "bt"
    code, err = run_cli(["backtest", "--data", str(data), "--factors", "MKT", "--portfolios", "P1,P2",
                         "--methods", "stationary,window,sep-pwd", "--window", "12", "--grid-size", "5",
                         "--grid-lo", "0.9", "--out", str(out)], capsys)
    assert code == 0, err
    delta = pd.read_csv(out / "delta_sspe.csv", comment="#", index_col="date")
    npt.assert_array_equal(delta["Stationary"], 0.0)
    assert delta.index[0] == 199101
    assert (out / "alpha_sep-pwd.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 40 - 12


def test_bma_probabilities_sum_to_one(tmp_path, capsys):
    data = tmp_path / "f.csv"
    write_factor_file(data, T=50)
    out = tmp_path / "bma"
    code, err = run_cli(["bma", "--data", str(data), "--factors", "MKT,SMB,HML", "--portfolios", "P1",
                         "--grid-size", "5", "--grid-lo", "0.9", "--out", str(out)], capsys)
    assert code == 0, err
    probs = pd.read_csv(out / "model_probs.csv", comment="#")
    assert probs.shape[1] == 2 + 8
    npt.assert_allclose(probs.iloc[:, 2:].sum(axis=1), 1.0, atol=1e-9)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_inclusion"]["mean:MKT"] > 0.9


def test_report_indexes_runs(tmp_path, capsys):
    out = tmp_path / "s"
    assert run_cli(["simulate", "--reps", "2", "--out", str(out)], capsys)[0] == 0
    code, _ = run_cli(["report", str(out), "--out", str(tmp_path / "r.json")], capsys)
    assert code == 0
    index = json.loads((tmp_path / "r.json").read_text())
    assert "summary.json" in index["runs"]["s"]["files"]


def test_exit_code_one_for_bad_input(tmp_path, capsys):
    code, err = run_cli(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)], capsys)
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["error"] == "IngestError"
    code, err = run_cli(["simulate", "--grid-lo", "1.5", "--out", str(tmp_path)], capsys)
    assert code == 1 and json.loads(err.strip().splitlines()[-1])["exit_code"] == 1
    assert run_cli(["simulate", "--reps", "many"], capsys)[0] == 1


def test_exit_code_two_for_degenerate_fit(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    rows = "".join(f"{1990 + k // 12}{k % 12 + 1:02d},{(-1) ** k},0,0,0,0,1.0,1.0\n" for k in range(24))
    path.write_text(HEADER + rows)
    code, err = run_cli(["fit", "--data", str(path), "--portfolios", "P1,P2", "--method", "sep-pwd",
                         "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "DegenerateError"
