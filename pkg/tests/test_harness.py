import csv
import io
import json

import numpy as np
import pytest

from ialign.channel import ChannelSet, NetworkDims, gen_rayleigh, save_channels
from ialign.harness import cli, runner
from ialign.harness import scenario as scn


def scenario_dict(**changes):
    d = {
        "schema_version": 1,
        "name": "unit",
        "dims": {"K": 3, "M": 2, "N_rx": 2},
        "channel": {"model": "rayleigh"},
        "snr": "0:20:40",
        "strategies": ["closed_ia", "tdma"],
        "trials": 6,
        "seed": 7,
    }
    d.update(changes)
    return d


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


class TestScenario:
    @pytest.mark.parametrize("name", scn.BUILTINS)
    def test_builtins_load(self, name):
        s = scn.load(name)
        assert s.name == name
        assert s.trials == 500 and s.seed == 2010
        assert s.dims.closed_form_solvable

    def test_fig7(self):
        s = scn.load("fig7")
        assert list(s.snr) == list(range(0, 51, 5))
        assert {"closed_ia", "tdma"} <= set(s.strategies)

    def test_round_trip(self):
        s = scn.from_dict(scenario_dict(solver={"eig_choice": "best", "restarts": 2}))
        again = scn.from_dict(s.to_dict())
        assert again == s

    @pytest.mark.parametrize("change, field", [
        ({"trials": 0}, "trials"),
        ({"strategies": []}, "strategies"),
        ({"strategies": ["magic"]}, "strategies[0]"),
        ({"schema_version": 2}, "schema_version"),
        ({"dims": {"K": 3, "M": 2}}, "dims"),
        ({"channel": {"model": "kronecker", "rho_tx": 0.2}}, "channel"),
        ({"channel": {"model": "rayleigh", "bogus": 1}}, "channel"),
        ({"snr": "10:-5:0"}, "snr"),
        ({"solver": {"tol": -1}}, "solver.tol"),
        ({"dims": {"K": 3, "M": 3, "N_rx": 3}}, "strategies"),
        ({"dims": {"K": 3, "M": [2, 2], "N_rx": 2}}, "dims.M"),
        ({"channel": {"model": "selective", "taps": 5}}, "channel.taps"),
        ({"solver": {"dof_window": [50, 30]}}, "solver.dof_window"),
    ])
    def test_field_errors(self, change, field):
        with pytest.raises(scn.ScenarioError) as exc:
            scn.from_dict(scenario_dict(**change))
        assert exc.value.field == field

    def test_iter_ia_needs_room(self):
        with pytest.raises(scn.ScenarioError):
            scn.from_dict(scenario_dict(dims={"K": 3, "M": 2, "N_rx": 2, "Ns": 2},
                                        strategies=["iter_ia"]))

    def test_bad_json(self):
        with pytest.raises(scn.ScenarioError) as exc:
            scn.loads("{not json")
        assert exc.value.field == "<document>"

    def test_missing_file(self, tmp_path):
        with pytest.raises(scn.ScenarioError):
            scn.load(tmp_path / "absent.json")


class TestRunScenario:
    def test_rows_and_aggregates(self):
        s = scn.from_dict(scenario_dict())
        rep = runner.run_scenario(s)
        assert rep.successful_trials + rep.failed_trials == rep.requested_trials == 6
        assert len(rep.rows) == 2 * 3 * rep.successful_trials
        for r in rep.rows:
            assert r.sum_rate >= 0 and np.isfinite(r.sum_rate)
        assert rep.mean_rate("closed_ia", 40) == pytest.approx(rep.trial_rates("closed_ia", 40).mean())
        ia = [r for r in rep.rows if r.strategy == "closed_ia"]
        assert max(r.leakage_rel for r in ia) <= 1e-18
        tdma_rows = [r for r in rep.rows if r.strategy == "tdma"]
        assert all(r.d_hf == r.d_h for r in tdma_rows)

    def test_csv_layout(self):
        rep = runner.run_scenario(scn.from_dict(scenario_dict(trials=2)))
        rows = list(csv.reader(io.StringIO(rep.csv())))
        assert tuple(rows[0]) == runner.CSV_COLUMNS
        assert len(rows) == 1 + len(rep.rows)

    def test_single_user_smoke(self):
        s = scn.from_dict(scenario_dict(dims={"K": 1, "M": 2, "N_rx": 2}, strategies=["tdma"], trials=1))
        rep = runner.run_scenario(s)
        assert rep.successful_trials == 1
        assert len(rep.rows) == 3

    def test_all_strategies_small(self):
        s = scn.from_dict(scenario_dict(strategies=list(scn.STRATEGIES), trials=3, snr="20",
                                        solver={"max_iter": 200, "restarts": 1}))
        rep = runner.run_scenario(s)
        assert {r.strategy for r in rep.rows} == set(scn.STRATEGIES)

    def test_selective_and_kronecker(self):
        for channel in ({"model": "selective", "taps": 3}, {"model": "kronecker", "rho_tx": 0.3, "rho_rx": 0.5}):
            s = scn.from_dict(scenario_dict(dims={"K": 3, "M": 2, "N_rx": 2, "N_sc": 4}, channel=channel,
                                            trials=3))
            rep = runner.run_scenario(s)
            assert rep.successful_trials == 3

    def test_parallel_matches_sequential(self):
        s = scn.from_dict(scenario_dict(trials=60, strategies=["closed_ia", "max_sinr"], snr="0,30",
                                        solver={"max_iter": 50}))
        assert runner.run_scenario(s, workers=1).csv() == runner.run_scenario(s, workers=3).csv()

    def test_failures_are_counted(self, tmp_path):
        d = NetworkDims.uniform(3)
        good = gen_rayleigh(d, 1)
        bad = good.map_links(lambda k, m, h: np.ones_like(h) if (k, m) == (2, 0) else h)
        save_channels(good, tmp_path / "a.iach")
        save_channels(bad, tmp_path / "b.iach")
        path = write_json(tmp_path / "s.json", scenario_dict(
            channel={"model": "file", "paths": ["a.iach", "b.iach"]}, trials=2))
        rep = runner.run_scenario(scn.load(path))
        assert rep.failed_trials == 1 and rep.successful_trials == 1
        assert rep.budget_exceeded
        assert {r.trial for r in rep.rows} == {0}
        assert rep.summary()["failures"][0]["trial"] == 1


class TestExperiments:
    def test_crossover_table(self):
        s = scn.from_dict(scenario_dict(strategies=["closed_ia", "max_sinr"], trials=10, snr="0,20",
                                        solver={"max_iter": 300}))
        rep = runner.run_crossover(s)
        assert [row["snr_db"] for row in rep.table] == [0.0, 20.0]
        low, high = rep.table
        assert low["mean_iterations"] <= high["mean_iterations"]
        assert all(0 <= r["crossing"] <= 300 for r in rep.rows)
        assert rep.csv().splitlines()[0].startswith("snr_db,trials,mean_iterations")

    def test_sweep_table(self):
        s = scn.from_dict(scenario_dict(strategies=["closed_ia"], trials=40, snr="40"))
        rep = runner.run_correlation_sweep(s, [0.3, 0.8])
        assert [row["target_c"] for row in rep.table] == [0.3, 0.8]
        for row in rep.table:
            assert abs(row["realized_c"] - row["target_c"]) <= 0.05
        assert rep.requested_trials == 80

    def test_sweep_keeps_cross_only(self, monkeypatch):
        seen = []
        real = runner.gen_collinear_batch

        def spy(*args, **kwargs):
            seen.append(kwargs.get("cross_only"))
            return real(*args, **kwargs)

        monkeypatch.setattr(runner, "gen_collinear_batch", spy)
        s = scn.from_dict(scenario_dict(strategies=["closed_ia"], trials=20, snr="40",
                                        channel={"model": "collinear", "target_c": 0.5, "cross_only": True}))
        runner.run_correlation_sweep(s, [0.6])
        assert seen == [True]

    def test_sweep_needs_targets(self):
        with pytest.raises(scn.ScenarioError):
            runner.run_correlation_sweep(scn.from_dict(scenario_dict()), [])


class TestCli:
    def test_run_writes_outputs(self, tmp_path, capsys):
        path = write_json(tmp_path / "fig.json", scenario_dict(name="fig7"))
        code = cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "fig7_rates.csv").exists()
        summary = json.loads((tmp_path / "out" / "fig7_summary.json").read_text())
        assert summary["requested_trials"] == summary["successful_trials"] + summary["failed_trials"]
        assert "closed_ia" in summary["dof"]

    def test_builtin_with_overrides(self, tmp_path):
        code = cli.main(["run", "--scenario", "fig7", "--trials", "3", "--snr", "10:10:30",
                         "--strategies", "closed_ia,tdma", "--format", "json", "--out", str(tmp_path)])
        assert code == 0
        data = json.loads((tmp_path / "fig7_rates.json").read_text())
        assert len(data) == 2 * 3 * 3

    def test_same_seed_same_bytes(self, tmp_path):
        args = ["run", "--scenario", "fig10", "--trials", "8", "--snr", "0,40", "--seed", "3"]
        cli.main(args + ["--out", str(tmp_path / "a")])
        cli.main(args + ["--out", str(tmp_path / "b"), "--workers", "2"])
        assert (tmp_path / "a" / "fig10_rates.csv").read_bytes() == (tmp_path / "b" / "fig10_rates.csv").read_bytes()

    def test_malformed_scenario(self, tmp_path, capsys):
        path = write_json(tmp_path / "bad.json", scenario_dict(trials=-3))
        assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path)]) == 2
        assert "trials" in capsys.readouterr().err

    def test_bad_override(self, tmp_path, capsys):
        assert cli.main(["run", "--snr", "a:b:c", "--out", str(tmp_path)]) == 2
        assert "--snr" in capsys.readouterr().err

    def test_failure_budget_exit(self, tmp_path):
        d = NetworkDims.uniform(3)
        good = gen_rayleigh(d, 1)
        bad = good.map_links(lambda k, m, h: np.ones_like(h) if (k, m) == (0, 1) else h)
        save_channels(good, tmp_path / "a.iach")
        save_channels(bad, tmp_path / "b.iach")
        path = write_json(tmp_path / "s.json", scenario_dict(
            channel={"model": "file", "paths": ["a.iach", "b.iach"]}, trials=2))
        assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 3

    def test_generate_and_reload(self, tmp_path):
        assert cli.main(["generate", "--scenario", "fig7", "--trials", "3", "--out", str(tmp_path)]) == 0
        files = sorted(tmp_path.glob("fig7_*.iach"))
        assert len(files) == 3
        path = write_json(tmp_path / "from_files.json", scenario_dict(
            channel={"model": "file", "paths": [f.name for f in files]}, trials=3))
        assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 0

    def test_generate_json(self, tmp_path):
        assert cli.main(["generate", "--scenario", "fig7", "--trials", "2", "--format", "json",
                         "--out", str(tmp_path)]) == 0
        assert len(list(tmp_path.glob("fig7_*.json"))) == 2

    def test_validate(self, capsys):
        code = cli.main(["validate", "--scenario", "fig7", "--check-trials", "5"])
        out = capsys.readouterr().out
        assert code == 0
        assert "FAIL" not in out and "PASS determinism" in out

    def test_crossover_and_sweep_commands(self, tmp_path):
        assert cli.main(["crossover", "--trials", "4", "--snr", "0,10", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "fig13_crossover.csv").exists()
        assert cli.main(["corr-sweep", "--trials", "30", "--snr", "40", "--targets", "0.5",
                         "--out", str(tmp_path)]) == 0
        assert (tmp_path / "fig11_sweep.csv").exists()
        assert cli.main(["corr-sweep", "--targets", "1.5", "--out", str(tmp_path)]) == 2
