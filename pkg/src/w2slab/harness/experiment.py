"""Experiment pipelines: scratch, weak-to-strong (with / without ground truth), noisy labels, few-shot."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..data import Dataset, fraction_subset, inject_noise, random_class_partition, split_classes
from ..errors import TrainingAborted
from ..losses import LossConfig
from ..models import Model, build, num_params, predict_features
from ..training import evaluate, train
from .config import ExperimentConfig, load_data
from .fewshot import nearest_centroid_eval

logger = logging.getLogger(__name__)

DELTA_METRICS = ("top1", "top5")


@dataclass
class RunResult:
    """Per-seed metrics for every trained role of one experiment.

    ``roles[role]["per_seed"][seed][split]`` is a metric dict;
    ``roles[role]["series"][seed]`` the per-epoch log of that role. ``primary`` is
    the model under study, ``reference`` the role the delta is measured against.
    """

    run_id: str
    kind: str
    method: str
    seeds: list[int]
    primary: str
    reference: str | None
    roles: dict[str, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    status: str = "complete"
    error: str | None = None
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    def add(self, role: str, method: str, seed: int, split: str, metrics: dict) -> None:
        entry = self.roles.setdefault(role, {"method": method, "per_seed": {}, "series": {}})
        entry["per_seed"].setdefault(str(seed), {})[split] = dict(metrics)

    def add_series(self, role: str, seed: int, series: list[dict]) -> None:
        self.roles[role]["series"][str(seed)] = series

    def splits(self, role: str) -> list[str]:
        out: list[str] = []
        for per_split in self.roles[role]["per_seed"].values():
            for s in per_split:
                if s not in out:
                    out.append(s)
        return out

    def seed_values(self, role: str, split: str, metric: str) -> list[float]:
        vals = []
        for seed in self.seeds:
            m = self.roles.get(role, {}).get("per_seed", {}).get(str(seed), {}).get(split, {})
            if m.get(metric) is not None:
                vals.append(float(m[metric]))
        return vals

    def aggregate(self) -> dict:
        agg: dict = {}
        for role in self.roles:
            for split in self.splits(role):
                metrics: dict = {}
                keys = []
                for seed in self.seeds:
                    for k in self.roles[role]["per_seed"].get(str(seed), {}).get(split, {}):
                        if k not in keys:
                            keys.append(k)
                for k in keys:
                    vals = self.seed_values(role, split, k)
                    if vals:
                        metrics[k] = {"mean": float(np.mean(vals)),
                                      "std": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                                      "n": len(vals)}
                agg.setdefault(role, {})[split] = metrics
        return agg

    def delta(self) -> dict | None:
        """Primary mean minus reference mean, per split and metric."""
        if self.reference is None or self.reference not in self.roles:
            return None
        agg = self.aggregate()
        out: dict = {}
        for split, metrics in agg.get(self.primary, {}).items():
            ref = agg[self.reference].get(split)
            if ref is None:
                continue
            for k in DELTA_METRICS:
                if k in metrics and k in ref:
                    out.setdefault(split, {})[k] = metrics[k]["mean"] - ref[k]["mean"]
        return out

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id, "kind": self.kind, "method": self.method, "seeds": self.seeds,
            "primary": self.primary, "reference": self.reference, "roles": self.roles,
            "config": self.config, "status": self.status, "error": self.error,
            "wall_clock": self.wall_clock, "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)


def _metrics(model: Model, ds: Dataset, log) -> dict:
    m = evaluate(model, ds)
    m["epoch"] = log[-1].epoch if log else None
    if log and log[-1].beta is not None:
        m["beta_mean"] = log[-1].beta.mean
        m["beta_frac_half"] = log[-1].beta.frac_half
    return m


def _series(log) -> list[dict]:
    return [e.to_dict() for e in log]


def _teacher(cfg: ExperimentConfig, ds: Dataset, test: Dataset, seed: int):
    weak_ds = ds if cfg.weak_fraction >= 1 else fraction_subset(ds, cfg.weak_fraction, seed)
    weak = build(cfg.weak, seed)
    out = train(weak, weak_ds, LossConfig("CE", prob_clamp=cfg.loss.prob_clamp),
                cfg.weak_optim or cfg.optim, seed=seed, eval_ds=test)
    return weak, out.log


def _scratch(cfg: ExperimentConfig, ds: Dataset, test: Dataset, seed: int):
    model = build(cfg.strong, seed)
    out = train(model, ds, LossConfig("CE", prob_clamp=cfg.loss.prob_clamp), cfg.optim,
                seed=seed, eval_ds=test)
    return model, out.log


def _student(cfg: ExperimentConfig, ds: Dataset, test: Dataset, teacher: Model, seed: int,
             with_gt: bool):
    model = build(cfg.strong, seed)
    loss = cfg.loss if with_gt else replace(cfg.loss, gt_weight=0.0)
    out = train(model, ds, loss, cfg.optim, teacher=teacher, seed=seed, eval_ds=test,
                use_labels=with_gt)
    return model, out.log


def run_experiment(cfg: ExperimentConfig, data_dir=None, out_dir=None, emit: bool = True) -> RunResult:
    """Run every seed of ``cfg`` and (optionally) write the report files.

    If a training run aborts, the partial result is written with
    ``status="aborted"`` and :class:`TrainingAborted` is re-raised.
    """
    from .report import emit_report

    cfg.validate()
    start = time.perf_counter()
    train_ds, test_ds = load_data(cfg.dataset, data_dir)
    method = "CE" if cfg.kind == "scratch" else cfg.loss.method
    primary = "scratch" if cfg.kind == "scratch" else "student"
    reference = {"scratch": None, "w2s_nogt": "teacher"}.get(cfg.kind, "scratch")
    result = RunResult(run_id=cfg.name, kind=cfg.kind, method=method, seeds=list(cfg.seeds),
                       primary=primary, reference=reference, config=cfg.to_dict())
    if cfg.weak is not None:
        result.extra["num_params"] = {"weak": num_params(build(cfg.weak, 0)),
                                      "strong": num_params(build(cfg.strong, 0))}
    try:
        if cfg.kind == "fewshot":
            _run_fewshot(cfg, train_ds, test_ds, result)
        else:
            _run_classification(cfg, train_ds, test_ds, result)
    except TrainingAborted as exc:
        result.status = "aborted"
        result.error = str(exc)
        result.wall_clock = time.perf_counter() - start
        if emit:
            emit_report([result], out_dir or cfg.out_dir)
        raise
    result.wall_clock = time.perf_counter() - start
    if emit:
        emit_report([result], out_dir or cfg.out_dir)
    return result


def _run_classification(cfg: ExperimentConfig, train_ds: Dataset, test_ds: Dataset,
                        result: RunResult) -> None:
    if cfg.kind == "noisy":
        train_ds, report = inject_noise(train_ds, cfg.noise)
        result.extra["noise"] = {"selected": report.selected, "flipped": report.count,
                                 "realized_rate": report.count / len(train_ds)}
    for seed in cfg.seeds:
        logger.info("%s seed %d", cfg.name, seed)
        if cfg.kind == "scratch":
            model, log = _scratch(cfg, train_ds, test_ds, seed)
            result.add("scratch", "CE", seed, "test", _metrics(model, test_ds, log))
            result.add_series("scratch", seed, _series(log))
            continue
        teacher, tlog = _teacher(cfg, train_ds, test_ds, seed)
        result.add("teacher", "CE", seed, "test", _metrics(teacher, test_ds, tlog))
        result.add_series("teacher", seed, _series(tlog))
        with_gt = cfg.kind != "w2s_nogt"
        student, slog = _student(cfg, train_ds, test_ds, teacher, seed, with_gt)
        result.add("student", cfg.loss.method, seed, "test", _metrics(student, test_ds, slog))
        result.add_series("student", seed, _series(slog))
        if with_gt:
            scratch, clog = _scratch(cfg, train_ds, test_ds, seed)
            result.add("scratch", "CE", seed, "test", _metrics(scratch, test_ds, clog))
            result.add_series("scratch", seed, _series(clog))


def _run_fewshot(cfg: ExperimentConfig, train_ds: Dataset, test_ds: Dataset, result: RunResult) -> None:
    split_seed = int(cfg.dataset.get("seed", 0))
    class_lists = random_class_partition(train_ds.num_classes, cfg.class_split, seed=split_seed)
    base, val, novel = split_classes(train_ds, *class_lists)
    base_test, _, _ = split_classes(test_ds, *class_lists)
    result.extra["class_split"] = class_lists
    base_cfg = replace(cfg, strong=replace(cfg.strong, num_classes=base.num_classes),
                       weak=replace(cfg.weak, num_classes=base.num_classes))
    for seed in cfg.seeds:
        teacher, tlog = _teacher(base_cfg, base, base_test, seed)
        student, slog = _student(base_cfg, base, base_test, teacher, seed, with_gt=True)
        scratch, clog = _scratch(base_cfg, base, base_test, seed)
        for role, model, log, method in (("teacher", teacher, tlog, "CE"),
                                         ("student", student, slog, cfg.loss.method),
                                         ("scratch", scratch, clog, "CE")):
            result.add(role, method, seed, "base-test", _metrics(model, base_test, log))
            result.add_series(role, seed, _series(log))
            for split_name, split_ds in (("val", val), ("novel", novel)):
                for k in cfg.shots:
                    spec = replace(cfg.episodes, k_shot=int(k))
                    fs = nearest_centroid_eval(lambda x, m=model: predict_features(m, x), split_ds, spec)
                    result.add(role, method, seed, f"{split_name}-{spec.n_way}way{k}shot",
                               {"top1": fs.mean, "ci95": fs.ci95, "episodes": spec.episode_count,
                                "epoch": log[-1].epoch})
