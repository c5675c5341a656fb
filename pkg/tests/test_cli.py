import json

import pytest

from behaviorshift import cli, pipeline
from behaviorshift.config import load_config
from behaviorshift.exceptions import ConfigError

ARTIFACTS = ("features.csv", "models.json", "trace.csv", "alarms.csv",
             "events_truth.csv", "events_truth.csv.changepoints.csv", "report.json")

GOOD = "p1\t2021-03-01T01:00:00Z\tLocationFix\t40.0\t-3.0\np1\t2021-03-01T09:00:00Z\tStepCount\t120\n"


def write_config(tmp_path, body="", name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def sim_config(tmp_path, patients=3, n_days=60, k_max=2, scenario="inversion", seed=5):
    return write_config(tmp_path, f"""
[run]
seed = {seed}

[simulate]
scenario = {scenario}
patients = {patients}
n_days = {n_days}

[mixture]
k_max = {k_max}
restarts = 2
""")


def snapshot(directory):
    return {name: (directory / name).read_bytes() for name in ARTIFACTS
            if (directory / name).exists()}


class TestFeaturize:
    def test_empty_event_file(self, tmp_path):
        (tmp_path / "events.tsv").write_text("")
        cfg = write_config(tmp_path, "[paths]\nevents = events.tsv\n")
        assert cli.main(["featurize", "--config", cfg]) == 0
        lines = (tmp_path / "features.csv").read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("patient_id,date,")

    def test_malformed_line_goes_to_sidecar(self, tmp_path):
        (tmp_path / "events.tsv").write_text(GOOD + "p1\tyesterday\tStepCount\t4\n")
        cfg = write_config(tmp_path, "[paths]\nevents = events.tsv\n")
        assert cli.main(["featurize", "--config", cfg]) == 0
        sidecar = (tmp_path / "features.csv.errors.tsv").read_text().splitlines()
        assert len(sidecar) == 2 and sidecar[1].startswith("3\t")
        assert len((tmp_path / "features.csv").read_text().splitlines()) == 2

    def test_only_malformed_lines_fail(self, tmp_path, capsys):
        (tmp_path / "events.tsv").write_text("garbage\n")
        cfg = write_config(tmp_path, "[paths]\nevents = events.tsv\n")
        assert cli.main(["featurize", "--config", cfg]) != 0
        assert "malformed" in capsys.readouterr().err

    def test_unreadable_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[paths]\nevents = nowhere/events.tsv\n")
        assert cli.main(["featurize", "--config", cfg]) != 0
        assert "behaviorshift featurize" in capsys.readouterr().err

    def test_patient_filter(self, tmp_path):
        (tmp_path / "events.tsv").write_text(GOOD + GOOD.replace("p1", "p2"))
        cfg = write_config(tmp_path, "[paths]\nevents = events.tsv\n")
        assert cli.main(["featurize", "--config", cfg, "--patients", "p2"]) == 0
        rows = (tmp_path / "features.csv").read_text().splitlines()[1:]
        assert [r.split(",")[0] for r in rows] == ["p2"]


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert (cfg.cpd.samples, cfg.cpd.hazard, cfg.detector.min_drop) == (100, 0.01, 5)
        assert (cfg.mixture.k_min, cfg.mixture.k_max, cfg.evaluation.window) == (1, 8, 7)

    def test_relative_paths_and_overrides(self, tmp_path):
        cfg = load_config(write_config(tmp_path, "[run]\nseed = 3\n[paths]\nmodel = m.json\n"),
                          seed=9, patients=["a"])
        assert cfg.paths.model == tmp_path / "m.json"
        assert cfg.seed == 9 and cfg.patients == ["a"]

    @pytest.mark.parametrize("body", ["[cpd]\nhazard = 1.5\n", "[cpd]\nbogus = 1\n",
                                      "[nowhere]\nx = 1\n", "[mixture]\nk_max = two\n",
                                      "[mixture]\nk_min = 3\nk_max = 2\n"])
    def test_rejected(self, tmp_path, body):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, body))

    def test_bad_config_exit_code(self, tmp_path):
        assert cli.main(["fit", "--config", write_config(tmp_path, "[cpd]\nhazard = 0\n")]) == 1

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "absent.ini")]) == 1


class TestStages:
    def test_fit_singleton_range(self, tmp_path):
        cfg = sim_config(tmp_path, patients=2)
        with open(cfg, "a") as f:
            f.write("k_min = 2\n")
        assert cli.main(["simulate", "--config", cfg]) == 0
        assert cli.main(["fit", "--config", cfg]) == 0
        doc = json.loads((tmp_path / "models.json").read_text())
        assert doc["seed"] == 5
        assert [m["n_components"] for m in doc["patients"].values()] == [2, 2]

    def test_fit_rerun_identical_bytes(self, tmp_path):
        cfg = sim_config(tmp_path, patients=2)
        assert cli.main(["simulate", "--config", cfg]) == 0
        assert cli.main(["fit", "--config", cfg]) == 0
        first = (tmp_path / "models.json").read_bytes()
        assert cli.main(["fit", "--config", cfg]) == 0
        assert (tmp_path / "models.json").read_bytes() == first
        assert cli.main(["fit", "--config", cfg, "--seed", "6"]) == 0
        assert (tmp_path / "models.json").read_bytes() != first

    def test_detect_without_model(self, tmp_path):
        cfg = sim_config(tmp_path, patients=1)
        assert cli.main(["simulate", "--config", cfg]) == 0
        assert cli.main(["detect", "--config", cfg]) == 1

    def test_run_equals_composed_stages(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        cfg_a, cfg_b = sim_config(a), sim_config(b)
        assert cli.main(["run", "--config", cfg_a]) == 0
        for stage in ("simulate", "fit", "detect", "evaluate"):
            assert cli.main([stage, "--config", cfg_b]) == 0
        snap = snapshot(a)
        assert set(snap) == set(ARTIFACTS)
        assert snap == snapshot(b)

    def test_run_twice_byte_identical(self, tmp_path):
        cfg = sim_config(tmp_path)
        assert cli.main(["run", "--config", cfg]) == 0
        first = snapshot(tmp_path)
        assert cli.main(["run", "--config", cfg]) == 0
        assert snapshot(tmp_path) == first

    def test_report_contents(self, tmp_path):
        cfg = sim_config(tmp_path)
        assert cli.main(["run", "--config", cfg]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["window"] == 7
        assert report["config"]["seed"] == 5
        assert report["config"]["paths"]["model"] == "models.json"
        assert len(report["patients"]) == 3
        assert 0 <= report["pooled"]["auroc"] <= 1

    def test_run_from_existing_features(self, tmp_path):
        cfg = sim_config(tmp_path, patients=1)
        assert cli.main(["simulate", "--config", cfg]) == 0
        plain = write_config(tmp_path, "[mixture]\nk_max = 2\nrestarts = 1\n", "plain.ini")
        assert cli.main(["run", "--config", plain]) == 0
        assert (tmp_path / "report.json").exists()

    def test_run_without_source(self, tmp_path):
        assert cli.main(["run", "--config", write_config(tmp_path)]) == 1

    def test_unknown_scenario(self, tmp_path):
        assert cli.main(["simulate", "--config", sim_config(tmp_path, scenario="nope")]) == 1


def test_perfect_and_empty_alarms(tmp_path):
    cfg = load_config(sim_config(tmp_path, patients=2))
    pipeline.simulate(cfg)
    pipeline.fit(cfg)
    pipeline.detect(cfg)
    truth = (tmp_path / "events_truth.csv").read_text().splitlines()[1:]
    alarm_lines = ["patient_id,date,drop,r_star,score"]
    alarm_lines += [f"{row.split(',')[0]},{row.split(',')[1]},9,0,1" for row in truth]
    (tmp_path / "alarms.csv").write_text("\n".join(alarm_lines) + "\n")
    pooled = pipeline.evaluate(cfg).pooled()
    assert pooled["sensitivity"] == 1.0 and pooled["false_positives"] == 0

    (tmp_path / "alarms.csv").write_text(alarm_lines[0] + "\n")
    pooled = pipeline.evaluate(cfg).pooled()
    assert pooled["sensitivity"] == 0.0 and pooled["false_positives"] == 0


def test_log_level_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.LOG_ENV, "debug")
    assert cli.main(["simulate", "--config", sim_config(tmp_path, patients=1)]) == 0


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for stage in ("featurize", "fit", "detect", "evaluate", "simulate", "run"):
        assert stage in out
