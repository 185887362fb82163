import csv
import io
import json

import numpy as np
import pytest

from lmakit.cli import main
from lmakit.config import load_config, parse_config
from lmakit.errors import ConfigurationError
from lmakit.experiment import AGGREGATE, aggregate, run_experiment, summarize_csv, sweep_segments
from lmakit.model import MLP, ArchSpec, param_digest

QUICK = {
    "n_samples": 300,
    "teacher": {"hidden": [16]},
    "student": {"hidden": [4]},
    "activations": ["relu", "lma"],
    "segments": 4,
    "train": {"epochs": 4, "batch_size": 32},
    "seeds": [1, 2],
}


@pytest.fixture(scope="module")
def quick_report():
    return run_experiment(parse_config(QUICK))


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({})
        assert cfg.seeds == (1, 2, 3, 4, 5)
        assert cfg.distill.alpha == 0.7 and cfg.distill.tau == 2.0
        assert cfg.train.epochs == 200 and cfg.train.batch_size == 64

    @pytest.mark.parametrize("doc", [
        {"sedes": [1]},
        {"train": {"epoch": 3}},
        {"distill": {"temperature": 2}},
        {"student": {"width": 8}},
        {"activations": ["gelu"]},
        {"quant_bits": 12},
        {"seeds": []},
        {"task": "idx"},
    ])
    def test_rejects_bad_documents(self, doc):
        with pytest.raises(ConfigurationError):
            parse_config(doc)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(QUICK))
        assert load_config(path).student_arch(load_config(path).dataset(), "lma").hidden == (4,)
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_config(path)


class TestReport:
    def test_rows_and_aggregates(self, quick_report):
        rows = quick_report.rows
        assert [(r["arm"], r["seed"]) for r in rows] == [("relu", 1), ("lma", 1), ("relu", 2), ("lma", 2)]
        for arm in ("relu", "lma"):
            acc = quick_report.arm_accuracies(arm)
            agg = quick_report.aggregates[arm]
            assert abs(agg["mean"] - sum(acc) / 2) < 1e-12
            assert abs(agg["std"] - float(np.std(acc, ddof=1))) < 1e-12

    def test_csv_has_seed_rows_plus_aggregate(self, quick_report):
        rows = list(csv.DictReader(io.StringIO(quick_report.to_csv())))
        assert [r["seed"] for r in rows] == ["1", "2", AGGREGATE, "1", "2", AGGREGATE]
        assert rows[2]["workspace_elems"] == "0" and rows[5]["workspace_elems"] == "4"
        assert rows[5]["params_added"] == "8"

    def test_aggregates_recompute_from_csv(self, quick_report):
        again = summarize_csv(quick_report.to_csv())
        for arm, agg in quick_report.aggregates.items():
            assert abs(again[arm]["mean"] - agg["mean"]) < 1e-12
            assert abs(again[arm]["std"] - agg["std"]) < 1e-12

    def test_teacher_shared_and_init_identical_across_arms(self, quick_report):
        for seed in (1, 2):
            rows = [r for r in quick_report.rows if r["seed"] == seed]
            assert len({r["teacher_digest"] for r in rows}) == 1
            assert len({r["init_digest"] for r in rows}) == 1

    def test_same_config_same_bytes(self, quick_report):
        assert run_experiment(parse_config(QUICK)).to_csv() == quick_report.to_csv()

    def test_failed_seed_is_excluded_with_warning(self):
        rows = [{"status": "ok", "test_accuracy": 0.5, "final_loss": 1.0},
                {"status": "failed", "test_accuracy": float("nan"), "final_loss": float("nan")}]
        agg = aggregate(rows)
        assert agg["n"] == 1 and agg["failed"] == 1 and agg["mean"] == 0.5 and np.isnan(agg["std"])


def test_dense_init_shared_between_activations():
    a = MLP(ArchSpec(hidden=(8,), activation="relu"), 3)
    b = MLP(ArchSpec(hidden=(8,), activation="aplu", segments=6), 3)
    assert param_digest(a.dense_parameters()) == param_digest(b.dense_parameters())


def test_sweep_rejects_odd_lma_and_other_kinds():
    cfg = parse_config(QUICK)
    with pytest.raises(ConfigurationError):
        sweep_segments(cfg, [5])
    with pytest.raises(ConfigurationError):
        sweep_segments(cfg, [4], ("relu",))


def test_sweep_workspace_column():
    cfg = parse_config({**QUICK, "seeds": [1], "train": {"epochs": 1}})
    report = sweep_segments(cfg, [4, 6], ("lma", "aplu"))
    ws = {r["arm"]: r["workspace_elems"] for r in report.rows}
    assert ws["lma-4"] == ws["lma-6"] == 4
    assert ws["aplu-4"] < ws["aplu-6"]


class TestCLI:
    def config(self, tmp_path, **extra):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({**QUICK, "seeds": [1], "train": {"epochs": 2}, **extra}))
        return str(path)

    def test_distill_writes_reports_and_is_deterministic(self, tmp_path, capsys):
        cfg = self.config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["distill", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["distill", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
        doc = json.loads((out1 / "results.json").read_text())
        assert set(doc["aggregates"]) == {"relu", "lma"}
        assert main(["report", "--out", str(out1)]) == 0
        assert "relu" in json.loads((out1 / "summary.json").read_text())["results"]

    def test_train_teacher_and_quant(self, tmp_path, capsys):
        cfg = self.config(tmp_path)
        assert main(["train-teacher", "--config", cfg, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "teacher_seed1.lmak").exists()
        assert main(["quant-distill", "--config", cfg, "--quant-bits", "4", "--activation", "lma",
                     "--out", str(tmp_path)]) == 0
        assert (tmp_path / "quant4.csv").exists()
        assert main(["quant-distill", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_sweep(self, tmp_path, capsys):
        cfg = self.config(tmp_path)
        assert main(["sweep-segments", "--config", cfg, "--segments", "4,6", "--out", str(tmp_path)]) == 0
        text = (tmp_path / "sweep.csv").read_text()
        assert "lma-4" in text and "lma-6" in text

    def test_count_regions(self, capsys):
        assert main(["count-regions", "--activation", "lma", "--segments", "8", "--width", "1"]) == 0
        record = json.loads(capsys.readouterr().out)
        assert record["regions"] == 8 and record["method"] == "exact-1d"
        assert set(record) >= {"arch", "k", "method", "regions", "bound"}
        assert main(["count-regions", "--dim", "2", "--width", "2", "--box", "8", "--grid", "300"]) == 0
        assert json.loads(capsys.readouterr().out)["regions"] == 4
        assert main(["count-regions", "--activation", "swish"]) == 2

    def test_bench_memory(self, tmp_path, capsys):
        assert main(["bench-memory", "--n", "4", "--segments", "8", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "bench_memory.csv").read_text().splitlines()
        assert lines[0] == "activation,n,k,params_added,workspace_elems"
        assert "lma,4,8,16,4" in lines and "aplu,4,8,48,24" in lines and "maxout,4,8,140,32" in lines
