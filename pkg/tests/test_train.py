import json

import numpy as np
import pytest

from meganet.agg import AggSpec
from meganet.data import generate_planted_task
from meganet.model import ModelConfig
from meganet.nn import TrainConfig
from meganet.train import (
    TaskData,
    TrainingError,
    evaluate_model,
    random_item_split,
    run_seeds,
    train_model,
)


def small_task(seed=0, num_nodes=60):
    g, labels = generate_planted_task(num_nodes, 2, 2, "max_of_sums", seed)
    items = np.flatnonzero(labels >= 0)
    tr, va, te = random_item_split(items.size, seed + 1)
    return TaskData(graph=g, labels=labels[items], items=items,
                    task_type="node", train_idx=tr, val_idx=va, test_idx=te)


def fast_configs():
    mc = ModelConfig(num_layers=1, bidirectional=False, readout="node",
                     hidden_node=8, hidden_edge=8, mlp_hidden=8)
    tc = TrainConfig(learning_rate=0.01, hidden_size=8, batch_size=1024,
                     dropout=0.0, class_weights=(1.0, 3.0), num_layers=1,
                     epochs=4, patience=10)
    return mc, tc


def test_random_item_split_partitions():
    tr, va, te = random_item_split(100, seed=0)
    joined = np.concatenate([tr, va, te])
    assert sorted(joined.tolist()) == list(range(100))
    assert len(tr) == 60 and len(va) == 20 and len(te) == 20


def test_train_model_record_shape():
    task = small_task()
    mc, tc = fast_configs()
    model, rec = train_model(task, mc, tc, seed=0)
    assert len(rec.train_losses) == len(rec.val_losses) == len(rec.val_f1s)
    assert 0 < len(rec.train_losses) <= tc.epochs
    assert set(rec.final_metrics) >= {"f1", "precision", "recall", "pr_auc"}
    assert rec.best_epoch >= 0
    assert rec.wall_clock > 0
    assert rec.config["model"]["num_layers"] == 1


def test_train_deterministic_given_seed():
    task = small_task()
    mc, tc = fast_configs()
    _, rec1 = train_model(task, mc, tc, seed=3)
    _, rec2 = train_model(task, mc, tc, seed=3)
    d1, d2 = rec1.to_dict(), rec2.to_dict()
    d1.pop("wall_clock"), d2.pop("wall_clock")
    assert d1 == d2


def test_train_seed_changes_trajectory():
    task = small_task()
    mc, tc = fast_configs()
    _, rec1 = train_model(task, mc, tc, seed=0)
    _, rec2 = train_model(task, mc, tc, seed=1)
    assert rec1.train_losses != rec2.train_losses


def test_record_save_is_json(tmp_path):
    task = small_task()
    mc, tc = fast_configs()
    _, rec = train_model(task, mc, tc, seed=0)
    p = tmp_path / "rec.json"
    rec.save(p)
    loaded = json.loads(p.read_text())
    assert loaded["seed"] == 0
    assert loaded["final_metrics"] == rec.final_metrics


def test_evaluate_model_matches_record():
    task = small_task()
    mc, tc = fast_configs()
    model, rec = train_model(task, mc, tc, seed=0)
    again = evaluate_model(model, task, split="test")
    assert again == rec.final_metrics


def test_run_seeds_summary():
    mc, tc = fast_configs()
    records, summary = run_seeds(lambda s: small_task(seed=s), mc, tc,
                                 seeds=(0, 1))
    assert len(records) == 2
    assert summary["seeds"] == [0, 1]
    assert summary["f1_mean"] == pytest.approx(np.mean(summary["f1_per_seed"]))


def test_two_stage_learns_planted_task():
    task = small_task(num_nodes=200)
    mc = ModelConfig(num_layers=2, bidirectional=False, readout="node",
                     hidden_node=16, hidden_edge=16, mlp_hidden=32,
                     edge_agg=AggSpec("sum"), node_agg=AggSpec("sum"))
    tc = TrainConfig(learning_rate=0.01, hidden_size=16, batch_size=4096,
                     dropout=0.0, class_weights=(1.0, 3.0), num_layers=2,
                     epochs=120, patience=40)
    _, rec = train_model(task, mc, tc, seed=0)
    assert rec.final_metrics["f1"] >= 0.8


def test_training_error_on_divergence():
    task = small_task()
    mc, _ = fast_configs()
    tc = TrainConfig(learning_rate=1e154, hidden_size=8, batch_size=1024,
                     dropout=0.0, class_weights=(1.0, 3.0), num_layers=1,
                     epochs=10, patience=10)
    with np.errstate(all="ignore"), pytest.raises(TrainingError):
        train_model(task, mc, tc, seed=0)
