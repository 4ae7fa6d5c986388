import csv
import json
import math

import numpy as np
import pytest

from w2slab.data import EpisodeSpec, synth_blobs
from w2slab.errors import ConfigError, TrainingAborted
from w2slab.harness import (CSV_COLUMNS, ExperimentConfig, RunResult, centroid_predict, emit_report,
                            load_results, mean_ci, nearest_centroid_eval, run_experiment)
from w2slab.harness.cli import main
from w2slab.harness.config import load_data

TINY_DATA = {"source": "synth", "num_classes": 4, "per_class": 40, "test_per_class": 10,
             "shape": 16, "spread": 0.3, "modes": 2, "seed": 1}


def tiny(kind="w2s_nogt", **over):
    d = {
        "kind": kind,
        "run_id": f"tiny-{kind}",
        "dataset": dict(TINY_DATA),
        "weak": {"family": "mlp", "input_shape": [16], "num_classes": 4, "hidden": [4]},
        "strong": {"family": "mlp", "input_shape": [16], "num_classes": 4, "hidden": [16]},
        "weak_fraction": 0.5,
        "loss": {"method": "AdaptConf", "gt_weight": 0.0 if kind == "w2s_nogt" else 1.0},
        "optim": {"lr_max": 0.1, "lr_min": 0.01, "epochs": 2, "batch_size": 32},
        "seeds": [0, 1],
    }
    if kind == "scratch":
        d.pop("weak")
    if kind == "noisy":
        d["noise"] = {"kind": "symmetric", "ratio": 0.2, "seed": 0}
    if kind == "fewshot":
        d["dataset"].update(num_classes=12, per_class=30, shape=24, modes=1)
        for role in ("weak", "strong"):
            d[role].update(input_shape=[24], num_classes=12)
        d["class_split"] = [6, 3, 3]
        d["episodes"] = {"n_way": 3, "k_shot": 1, "q_query": 5, "episode_count": 20}
    d.update(over)
    return d


def write_config(tmp_path, d, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return path


class TestConfig:
    def test_roundtrip(self):
        cfg = ExperimentConfig.from_dict(tiny())
        again = ExperimentConfig.from_dict({**cfg.to_dict(), "seeds": cfg.seeds})
        assert again.to_dict() == cfg.to_dict()
        assert cfg.name == "tiny-w2s_nogt"

    @pytest.mark.parametrize("bad", [
        {"kind": "meta"}, {"seeds": []}, {"weak": None}, {"loss": {"method": "CE"}},
        {"loss": {"alpha": 2.0}}, {"dataset": {}}, {"weak_fraction": 0},
        {"optim": {"momentum": 1.5}}, {"strong": {"family": "mlp"}},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(tiny(**bad))

    def test_kind_specific_fields(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({k: v for k, v in tiny("noisy").items() if k != "noise"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({k: v for k, v in tiny("fewshot").items() if k != "episodes"})

    def test_synth_split(self):
        train, test = load_data(TINY_DATA)
        assert len(train) == 160 and len(test) == 40
        assert np.all(test.label_histogram() == 10)

    def test_real_data_needs_root(self, monkeypatch):
        monkeypatch.delenv("W2S_DATA_DIR", raising=False)
        with pytest.raises(ConfigError):
            load_data({"source": "idx"})
        with pytest.raises(ConfigError):
            load_data({"source": "imagenet"})


class TestFewShot:
    def test_lone_support(self):
        support = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 5.0]])
        assert centroid_predict(support, np.array([0, 1]), support[1:]).tolist() == [1]

    def test_orthogonal_axes(self):
        support = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert centroid_predict(support, np.array([0, 1]), np.array([[0.0, 3.0]])).tolist() == [1]

    def test_ci_example(self):
        m, ci = mean_ci([1.0, 0.5])
        assert m == 0.75
        assert ci == pytest.approx(1.96 * 0.3536 / math.sqrt(2), abs=1e-4)
        assert ci == pytest.approx(0.49, abs=5e-3)

    def test_ci_closed_form(self):
        acc = np.random.default_rng(0).uniform(size=800)
        expected = 1.96 * math.sqrt(sum((a - acc.mean()) ** 2 for a in acc) / 799) / math.sqrt(800)
        assert abs(mean_ci(acc)[1] - expected) <= 1e-12

    def test_zero_norm_is_clamped(self):
        pred = centroid_predict(np.eye(2), np.array([0, 1]), np.zeros((1, 2)))
        assert pred.tolist() == [0]

    def test_separable_embedding_scores_perfectly(self):
        ds = synth_blobs(8, 25, shape=16, spread=0.01, seed=2)
        res = nearest_centroid_eval(lambda x: x, ds, EpisodeSpec(5, 1, 15, episode_count=50))
        assert res.mean == 1.0 and res.ci95 == 0.0 and res.accuracies.size == 50


class TestRunResult:
    def make(self):
        r = RunResult("r", "w2s_nogt", "AdaptConf", [0, 1, 2], "student", "teacher")
        for s, (t, st) in enumerate([(0.5, 0.7), (0.6, 0.8), (0.7, 0.6)]):
            r.add("teacher", "CE", s, "test", {"top1": t, "top5": 1.0, "epoch": 1})
            r.add("student", "AdaptConf", s, "test", {"top1": st, "top5": 1.0, "epoch": 1,
                                                      "beta_mean": 0.4, "beta_frac_half": 0.5})
        return r

    def test_delta_and_aggregate(self):
        r = self.make()
        assert r.delta()["test"]["top1"] == pytest.approx(0.7 - 0.6)
        agg = r.aggregate()["student"]["test"]["top1"]
        assert agg["mean"] == pytest.approx(0.7) and agg["std"] == pytest.approx(0.1) and agg["n"] == 3

    def test_no_reference(self):
        r = RunResult("r", "scratch", "CE", [0], "scratch", None)
        r.add("scratch", "CE", 0, "test", {"top1": 1.0})
        assert r.delta() is None

    def test_report_schema(self, tmp_path):
        r = self.make()
        emit_report([r], tmp_path)
        with open(tmp_path / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == CSV_COLUMNS
        student = [row for row in rows if row["run_id"] == "r/student"]
        assert [row["seed"] for row in student] == ["0", "1", "2", "mean"]
        assert float(student[-1]["top1"]) == pytest.approx(np.mean([float(x["top1"]) for x in student[:3]]))
        teacher = [row for row in rows if row["run_id"] == "r/teacher"]
        assert teacher[0]["beta_mean"] == ""
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["format_version"] == 1
        assert summary["runs"][0]["delta"]["test"]["top1"] == pytest.approx(0.1)
        assert "wall_clock_seconds" in summary["runs"][0]
        back = load_results([tmp_path])
        assert back[0].to_dict() == r.to_dict()

    def test_empty_report(self, tmp_path):
        emit_report([], tmp_path)
        assert (tmp_path / "results.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_overwrite_is_idempotent(self, tmp_path):
        emit_report([self.make()], tmp_path)
        first = (tmp_path / "results.csv").read_bytes()
        emit_report([self.make()], tmp_path)
        assert (tmp_path / "results.csv").read_bytes() == first


class TestExperiments:
    def test_w2s_nogt(self, tmp_path):
        cfg = ExperimentConfig.from_dict(tiny(out_dir=str(tmp_path)))
        r = run_experiment(cfg)
        assert set(r.roles) == {"teacher", "student"} and r.reference == "teacher"
        t = np.mean(r.seed_values("teacher", "test", "top1"))
        s = np.mean(r.seed_values("student", "test", "top1"))
        assert r.delta()["test"]["top1"] == pytest.approx(s - t)
        rows = (tmp_path / "tiny-w2s_nogt" / "beta_hist.csv").read_text().strip().splitlines()
        assert len(rows) - 1 == 2 * 20
        assert sum(int(x.split(",")[-1]) for x in rows[1:3 + 18]) == 2 * 40

    def test_scratch_has_no_delta(self, tmp_path):
        r = run_experiment(ExperimentConfig.from_dict(tiny("scratch", out_dir=str(tmp_path))))
        assert set(r.roles) == {"scratch"} and r.delta() is None
        assert not (tmp_path / "tiny-scratch" / "beta_hist.csv").exists()

    def test_noisy_zero_ratio_equals_clean(self, tmp_path):
        noisy = tiny("noisy", noise={"kind": "symmetric", "ratio": 0.0})
        clean = tiny("w2s_gt")
        a = run_experiment(ExperimentConfig.from_dict(noisy), emit=False)
        b = run_experiment(ExperimentConfig.from_dict(clean), emit=False)
        assert a.roles == b.roles
        assert set(a.roles) == {"teacher", "student", "scratch"}

    def test_fewshot_splits(self):
        r = run_experiment(ExperimentConfig.from_dict(tiny("fewshot", seeds=[0])), emit=False)
        splits = r.splits("student")
        assert splits == ["base-test", "val-3way1shot", "val-3way5shot", "novel-3way1shot",
                          "novel-3way5shot"]
        m = r.roles["student"]["per_seed"]["0"]["novel-3way5shot"]
        assert 0 <= m["top1"] <= 1 and m["episodes"] == 20
        assert sorted(sum(r.extra["class_split"], [])) == list(range(12))

    def test_results_csv_reproducible(self, tmp_path):
        cfg = tiny(seeds=[0])
        run_experiment(ExperimentConfig.from_dict({**cfg, "out_dir": str(tmp_path / "a")}))
        run_experiment(ExperimentConfig.from_dict({**cfg, "out_dir": str(tmp_path / "b")}))
        assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_abort_persists_partial(self, tmp_path):
        cfg = tiny("scratch", optim={"lr_max": 1e30, "lr_min": 1e30, "epochs": 2, "batch_size": 32},
                   out_dir=str(tmp_path))
        with pytest.raises(TrainingAborted):
            run_experiment(ExperimentConfig.from_dict(cfg))
        saved = json.loads((tmp_path / "tiny-scratch" / "run_result.json").read_text())
        assert saved["status"] == "aborted" and saved["error"]


class TestCLI:
    def test_distill_ok(self, tmp_path, capsys):
        path = write_config(tmp_path, tiny(seeds=[0, 1]))
        assert main(["distill", "--config", str(path), "--seed", "1", "--out", str(tmp_path / "o")]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["run_id"] == "tiny-w2s_nogt"
        saved = json.loads((tmp_path / "o" / "tiny-w2s_nogt" / "run_result.json").read_text())
        assert saved["seeds"] == [1]

    def test_config_errors_exit_2(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["train", "--config", str(bad)]) == 2
        assert main(["train", "--config", str(write_config(tmp_path, tiny()))]) == 2  # wrong kind
        assert main(["distill"]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_abort_exits_3(self, tmp_path):
        cfg = tiny("scratch", optim={"lr_max": 1e30, "lr_min": 1e30, "epochs": 2, "batch_size": 32},
                   out_dir=str(tmp_path / "o"))
        assert main(["train", "--config", str(write_config(tmp_path, cfg))]) == 3

    def test_report_and_eval(self, tmp_path, capsys):
        cfg = tiny("scratch", seeds=[0], out_dir=str(tmp_path / "run"))
        path = write_config(tmp_path, cfg)
        assert main(["train", "--config", str(path)]) == 0
        assert main(["report", str(tmp_path / "run"), "--out", str(tmp_path / "rep")]) == 0
        assert (tmp_path / "rep" / "results.csv").read_bytes() == (tmp_path / "run" / "results.csv").read_bytes()

        from w2slab.models import ModelConfig, build
        from w2slab.training import save_checkpoint
        ckpt = save_checkpoint(build(ModelConfig.from_dict(cfg["strong"]), 0), None, tmp_path / "m.w2sc")
        capsys.readouterr()
        assert main(["eval", "--config", str(path), "--checkpoint", str(ckpt)]) == 0
        assert set(json.loads(capsys.readouterr().out)) == {"top1", "top5", "loss"}
        (tmp_path / "junk.w2sc").write_bytes(b"nope")
        assert main(["eval", "--config", str(path), "--checkpoint", str(tmp_path / "junk.w2sc")]) == 2
