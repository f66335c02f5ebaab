import csv
import json
import time

import numpy as np
import pytest

from proxydfm.cli import _resolve_threads, main
from proxydfm.dgp_sim import simulate_planted
from proxydfm.panel import TimeSeriesPanel, save_csv
from proxydfm.proxy_ident import save_instrument_csv


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def planted_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("planted")
    pp = simulate_planted(N=20, T=300, seed=1, H=12)
    x = pp.panel.values
    # an extra random walk whose differences are exactly orthogonal to the panel's
    dx = np.diff(x, axis=0)
    dx = dx - dx.mean(0)
    e = np.random.default_rng(0).standard_normal(len(dx))
    e -= e.mean()
    e -= dx @ np.linalg.lstsq(dx, e, rcond=None)[0]
    orth = np.concatenate([[0.0], np.cumsum(e)])
    panel = TimeSeriesPanel(np.column_stack([x, orth]), (*pp.panel.names, "orth"), pp.panel.dates,
                            tcodes=(2,) * (x.shape[1] + 1))
    save_csv(panel, d / "panel.csv")
    save_instrument_csv(pp.instrument, d / "instrument.csv")
    return d, pp


def estimate_args(d, out, cfg):
    return ["estimate", "--panel", str(d / "panel.csv"), "--instrument", str(d / "instrument.csv"),
            "--config", write_json(d / f"{out}.json", cfg), "--out", str(d / out)]


class TestSimulate:
    def test_defaults(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "panel.csv")
        assert len(rows) - 1 == 200
        assert len(rows[0]) - 1 == 102
        for name in ("observables.csv", "instrument.csv", "manifest.json", "truth/true_irf.csv",
                     "truth/true_shocks.csv", "truth/true_factors.csv", "truth/noise_sd.csv"):
            assert (tmp_path / name).is_file()

    def test_bad_param(self, tmp_path, capsys):
        code = main(["simulate", "--config", write_json(tmp_path / "c.json", {"alpha": 1.5}),
                     "--out", str(tmp_path / "o")])
        assert code != 0
        assert "alpha" in capsys.readouterr().err

    def test_unknown_field(self, tmp_path):
        assert main(["simulate", "--config", write_json(tmp_path / "c.json", {"alpah": 0.3}),
                     "--out", str(tmp_path / "o")]) == 2

    def test_repeated_seed_identical(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"T": 60, "n_extra": 5, "nu": 1.0})
        for out in ("a", "b"):
            assert main(["simulate", "--config", cfg, "--seed", "7", "--out", str(tmp_path / out)]) == 0
        for name in ("panel.csv", "instrument.csv", "truth/true_shocks.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_csv_round_trip_fidelity(self, tmp_path):
        from proxydfm.dgp_sim import LeeperParams, simulate, substream
        main(["simulate", "--config", write_json(tmp_path / "c.json", {"T": 40, "n_extra": 3}),
              "--out", str(tmp_path / "o")])
        back = np.array([[float(v) for v in r[1:]] for r in read_rows(tmp_path / "o" / "panel.csv")[1:]])
        ds = simulate(LeeperParams(T=40, n_extra=3), substream(0, 0, 0), 20)
        np.testing.assert_array_equal(back, ds.noisy_panel)


class TestMontecarlo:
    def test_smoke_runtime_and_reproducibility(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"n_reps": 10, "dgp": {"nu": 0.5}})
        t0 = time.perf_counter()
        assert main(["montecarlo", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
        assert time.perf_counter() - t0 < 60
        assert main(["montecarlo", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
        for f in sorted((tmp_path / "a").glob("*.csv")):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["command"] == "montecarlo" and manifest["seed"] == 0

    def test_empty_estimators(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"estimators": []})
        assert main(["montecarlo", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_excess_failures_exit_3(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"n_reps": 2, "estimators": ["favar"], "horizon": 4,
                                               "dgp": {"nu": 0.0, "n_extra": 20, "T": 100}})
        assert main(["montecarlo", "--config", cfg, "--out", str(tmp_path / "o")]) == 3

    def test_malformed_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{\"n_reps\": ")
        assert main(["montecarlo", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 2


class TestEstimate:
    def test_outputs(self, planted_files):
        d, pp = planted_files
        cfg = {"r": 3, "q": 2, "p": 2, "horizon": 12, "fevd_horizons": [0, 6, 12], "target": "x001",
               "var_core": ["x001", "x002"], "sweep": True, "sweep_candidates": ["x003", "x004"]}
        assert main(estimate_args(d, "est", cfg)) == 0
        out = d / "est"
        for name in ("manifest.json", "irf.csv", "irf_normalized.csv", "fevd.csv", "shock.csv", "report.json",
                     "var_irf.csv", "sweep_irf.csv", "sweep_failures.log"):
            assert (out / name).is_file(), name
        norm = [r for r in read_rows(out / "irf_normalized.csv")[1:] if r[0] == "0" and r[1] == "x001"]
        assert float(norm[0][2]) == pytest.approx(1.0)
        shares = [float(r[2]) for r in read_rows(out / "fevd.csv")[1:]]
        assert all(0 <= s <= 1 for s in shares)
        report = json.loads((out / "report.json").read_text())
        assert report["first_stage_F"] > 10 and "invertibility" in report

    def test_bootstrap_bands_in_output(self, planted_files):
        d, _ = planted_files
        cfg = {"r": 3, "q": 2, "p": 2, "horizon": 6, "fevd_horizons": [0, 6], "bootstrap": 50}
        assert main(estimate_args(d, "boot", cfg)) == 0
        header = read_rows(d / "boot" / "irf.csv")[0]
        assert header == ["horizon", "variable", "value", "lower68", "upper68", "lower95", "upper95"]

    def test_missing_instrument(self, planted_files):
        d, _ = planted_files
        code = main(["estimate", "--panel", str(d / "panel.csv"), "--instrument", str(d / "nope.csv"),
                     "--out", str(d / "miss")])
        assert code == 2

    def test_zero_impact_target(self, planted_files, capsys):
        d, _ = planted_files
        cfg = {"r": 1, "q": 1, "p": 2, "horizon": 6, "fevd_horizons": [0], "target": "orth"}
        assert main(estimate_args(d, "zero", cfg)) == 4
        assert "orth" in capsys.readouterr().err

    def test_unknown_target(self, planted_files):
        d, _ = planted_files
        assert main(estimate_args(d, "unk", {"r": 3, "q": 2, "p": 2, "horizon": 6, "fevd_horizons": [0],
                                             "target": "gdp"})) == 2

    def test_deterministic(self, planted_files):
        d, _ = planted_files
        cfg = {"r": 3, "q": 2, "p": 2, "horizon": 6, "fevd_horizons": [0, 6]}
        main(estimate_args(d, "det_a", cfg))
        main(estimate_args(d, "det_b", cfg))
        for name in ("irf.csv", "fevd.csv", "shock.csv"):
            assert (d / "det_a" / name).read_bytes() == (d / "det_b" / name).read_bytes()


class TestOtherCommands:
    def test_invertibility(self, planted_files):
        d, _ = planted_files
        code = main(["invertibility-test", "--panel", str(d / "panel.csv"), "--instrument",
                     str(d / "instrument.csv"), "--vars", "x001", "x002", "x003", "--out", str(d / "inv")])
        assert code == 0
        res = json.loads((d / "inv" / "invertibility.json").read_text())
        assert res["variables"] == ["x001", "x002", "x003"] and 0 <= res["pvalue"] <= 1

    def test_spec_sweep(self, planted_files):
        d, _ = planted_files
        cfg = write_json(d / "sw.json", {"core": ["x001", "x002"], "candidates": ["x003", "x004", "x002"],
                                         "p": 2, "horizon": 6})
        code = main(["spec-sweep", "--panel", str(d / "panel.csv"), "--instrument", str(d / "instrument.csv"),
                     "--config", cfg, "--out", str(d / "sw")])
        assert code == 0
        rows = read_rows(d / "sw" / "sweep_irf.csv")
        assert {r[0] for r in rows[1:]} == {"x003", "x004"}
        failures = (d / "sw" / "sweep_failures.log").read_text().splitlines()
        assert json.loads(failures[0])["candidate"] == "x002"

    def test_sweep_needs_core(self, planted_files):
        d, _ = planted_files
        code = main(["spec-sweep", "--panel", str(d / "panel.csv"), "--instrument", str(d / "instrument.csv"),
                     "--config", write_json(d / "sw0.json", {}), "--out", str(d / "sw0")])
        assert code == 2


class TestThreads:
    def test_flag_wins(self, monkeypatch):
        monkeypatch.setenv("PROXYDFM_THREADS", "3")
        assert _resolve_threads(5) == 5

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("PROXYDFM_THREADS", "3")
        assert _resolve_threads(None) == 3

    def test_default(self, monkeypatch):
        monkeypatch.delenv("PROXYDFM_THREADS", raising=False)
        assert _resolve_threads(None) == 1

    def test_bad_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("PROXYDFM_THREADS", "many")
        cfg = write_json(tmp_path / "c.json", {"n_reps": 1})
        assert main(["montecarlo", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
