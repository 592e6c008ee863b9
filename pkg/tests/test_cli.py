import json
import subprocess
import sys

import numpy as np
import pytest

from pera import adapter as adp
from pera.cli import load_toy_model, main

FAST = ["--steps", "40"]


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def single_error(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


class TestCommands:
    def test_verify(self, tmp_path, capsys):
        code, out, _ = run(["verify", "--out", str(tmp_path)], capsys)
        assert code == 0
        assert "12 passed, 0 failed" in out
        rows = (tmp_path / "verify.csv").read_text().splitlines()
        assert rows[0] == "check,passed,detail" and len(rows) == 13

    def test_fit_matrix(self, tmp_path, capsys):
        argv = ["fit-matrix", "--m", "32", "--n", "32", "--target-rank", "12", "--r", "4", "--variant", "full"]
        code, out, _ = run(argv + ["--seed", "1", "--out", str(tmp_path), *FAST], capsys)
        assert code == 0
        line = json.loads(out)
        assert line["command"] == "fit-matrix" and line["seed"] == 1
        assert (tmp_path / "run.csv").read_text().splitlines()[0] == "step,loss"
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["config"]["task"]["params"]["target_rank"] == 12
        assert summary["steps"] == 40
        ad = adp.load(tmp_path / "adapter.json")
        assert (ad.m, ad.n, ad.r, ad.config.variant) == (32, 32, 4, "full")

    def test_fit_poly(self, tmp_path, capsys):
        code, out, _ = run(["fit-poly", "--out", str(tmp_path), *FAST], capsys)
        assert code == 0
        assert adp.load(tmp_path / "adapter.json").r == 1
        assert len((tmp_path / "run.csv").read_text().splitlines()) == 41

    def test_train_toy_then_interactions(self, tmp_path, capsys):
        toy = tmp_path / "toy"
        code, _, _ = run(["train-toy", "--out", str(toy), "--r", "2", "--steps", "30"], capsys)
        assert code == 0
        for name in ("run.csv", "summary.json", "model.json", "adapter_layer1.json", "adapter_layer2.json"):
            assert (toy / name).exists()
        task, adapters = load_toy_model(toy / "model.json")
        assert adapters[0].b.tobytes() == adp.load(toy / "adapter_layer1.json").b.tobytes()

        inter = tmp_path / "inter"
        code, out, _ = run(["interactions", "--model", str(toy / "model.json"), "--samples", "4", "--out", str(inter)], capsys)
        assert code == 0
        rows = (inter / "interactions.csv").read_text().splitlines()
        assert rows[0] == "index," + ",".join(f"h{j}" for j in range(8))
        assert len(rows) == 9
        assert json.loads(out)["sample_count"] == 4

    def test_ablate(self, tmp_path, capsys):
        argv = ["ablate", "--task", "matrix", "--m", "8", "--n", "8", "--target-rank", "4", "--r", "2"]
        code, _, _ = run(argv + ["--seeds", "1,2,3", "--out", str(tmp_path), "--steps", "20"], capsys)
        assert code == 0
        assert len((tmp_path / "ablation.csv").read_text().splitlines()) == 5
        assert len((tmp_path / "ablation_runs.csv").read_text().splitlines()) == 13
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary["wins_over_lora"]) == {"square_only", "cross_only", "full"}

    def test_rank_report(self, tmp_path, capsys):
        code, out, _ = run(["rank-report", "--r", "2", "--out", str(tmp_path)], capsys)
        assert code == 0
        report = json.loads(out)
        assert report["satisfied"] and report["bound_pera"] == 5
        assert json.loads((tmp_path / "rank_report.json").read_text())["numeric_rank_delta_w"] == report["numeric_rank_delta_w"]

    def test_rank_report_from_file(self, tmp_path, capsys):
        ad = adp.random_adapter(adp.AdapterConfig(r=3, variant="lora"), 6, 6, np.random.default_rng(0))
        adp.save(ad, tmp_path / "a.json")
        code, out, _ = run(["rank-report", "--adapter", str(tmp_path / "a.json"), "--out", str(tmp_path)], capsys)
        assert code == 0
        assert json.loads(out)["numeric_rank_delta_w"] == 3


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv,files",
        [
            (["fit-matrix", "--m", "12", "--n", "12", "--target-rank", "5", "--r", "2", *FAST], ["run.csv", "adapter.json"]),
            (["fit-poly", *FAST], ["run.csv", "adapter.json"]),
            (["train-toy", "--steps", "30", "--dropout", "0.1"], ["run.csv", "model.json"]),
            (["ablate", "--m", "6", "--n", "6", "--target-rank", "3", "--r", "1", "--steps", "10"], ["ablation.csv", "ablation_runs.csv"]),
        ],
    )
    def test_byte_identical(self, tmp_path, capsys, argv, files):
        for name in ("a", "b"):
            assert run(argv + ["--seed", "3", "--out", str(tmp_path / name)], capsys)[0] == 0
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


class TestConfig:
    def test_sections_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"adapter": {"r": 2, "variant": "lora"}, "optimizer": {"steps": 10}, "m": 6}))
        code, _, _ = run(["fit-matrix", "--config", str(cfg), "--steps", "7", "--target-rank", "3", "--out", str(tmp_path)], capsys)
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["steps"] == 7
        assert summary["config"]["adapter"]["r"] == 2
        assert summary["config"]["adapter"]["variant"] == "lora"
        assert summary["config"]["task"]["params"]["m"] == 6

    @pytest.mark.parametrize(
        "doc",
        [{"depth": 3}, {"r": "four"}, {"variant": "cubic"}, [1, 2]],
    )
    def test_bad_config(self, tmp_path, capsys, doc):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(doc))
        code, _, err = run(["fit-matrix", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 2
        assert single_error(err)["error"] == "ConfigError"

    def test_malformed_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"steps": ')
        code, _, err = run(["fit-matrix", "--config", str(cfg)], capsys)
        assert code == 2
        doc = single_error(err)
        assert doc["error"] == "ParseError" and "at byte 10" in doc["message"]

    def test_missing_config(self, tmp_path, capsys):
        code, _, err = run(["verify", "--config", str(tmp_path / "nope.json")], capsys)
        assert code == 2 and single_error(err)["error"] == "ConfigError"


class TestErrors:
    @pytest.mark.parametrize(
        "argv,kind",
        [
            (["fit-matrix", "--r", "0"], "ConfigError"),
            (["fit-matrix", "--bogus", "1"], "UsageError"),
            (["fit-matrix", "--variant", "cubic"], "UsageError"),
            (["nonsense"], "UsageError"),
            ([], "UsageError"),
            (["ablate", "--seeds", "1,2"], "ConfigError"),
            (["ablate", "--seeds", "1,x,3"], "ConfigError"),
            (["interactions"], "ConfigError"),
            (["fit-matrix", "--target-rank", "99"], "ConfigError"),
        ],
    )
    def test_usage_errors(self, tmp_path, capsys, argv, kind):
        code, _, err = run(argv + (["--out", str(tmp_path)] if argv and argv[0] != "nonsense" else []), capsys)
        assert code == 2
        assert single_error(err)["error"] == kind

    def test_truncated_adapter(self, tmp_path, capsys):
        payload = adp.serialize(adp.random_adapter(adp.AdapterConfig(r=2), 4, 4, np.random.default_rng(0)))
        (tmp_path / "t.json").write_bytes(payload[:50])
        code, _, err = run(["rank-report", "--adapter", str(tmp_path / "t.json"), "--out", str(tmp_path)], capsys)
        assert code == 2
        assert single_error(err)["error"] == "ParseError"

    def test_wrong_model_file(self, tmp_path, capsys):
        (tmp_path / "m.json").write_text(json.dumps({"format": "other"}))
        code, _, err = run(["interactions", "--model", str(tmp_path / "m.json"), "--out", str(tmp_path)], capsys)
        assert code == 2 and single_error(err)["error"] == "ParseError"

    def test_divergence_exit(self, tmp_path, capsys):
        code, _, err = run(["fit-matrix", "--lr", "1e90", "--steps", "20", "--out", str(tmp_path)], capsys)
        assert code == 1
        assert single_error(err)["error"] == "DivergenceError"

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "pera", "fit-matrix", "--r", "0", "--out", str(tmp_path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert json.loads(proc.stderr.strip())["error"] == "ConfigError"
        assert proc.stdout == ""
