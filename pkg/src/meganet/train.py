"""Training and evaluation driver for node- and edge-level tasks.

Desk-scale trainer: the whole graph fits in memory, mini-batches partition
the labeled items (nodes or edges) and every step runs a full-graph
forward pass with the loss restricted to the batch. Model selection keeps
the parameters with the best validation minority-class F1.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import Multigraph, build_reverse_index, build_support_index
from .metrics import evaluate_scores
from .model import Model, ModelConfig
from .nn import AdamState, TrainConfig, adam_step, weighted_bce_loss


class TrainingError(RuntimeError):
    pass


@dataclass
class ExperimentRecord:
    """Everything needed to reproduce and audit one training run."""

    config: dict
    seed: int
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    val_f1s: list[float] = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)
    best_epoch: int = -1
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "val_f1s": self.val_f1s,
            "final_metrics": self.final_metrics,
            "best_epoch": self.best_epoch,
            "wall_clock": self.wall_clock,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


@dataclass
class TaskData:
    """A graph plus labeled items and their split."""

    graph: Multigraph
    labels: np.ndarray        # aligned with items
    items: np.ndarray         # node ids (node task) or edge ids (edge task)
    task_type: str            # "node" or "edge"
    train_idx: np.ndarray     # indices into items
    val_idx: np.ndarray
    test_idx: np.ndarray


def random_item_split(num_items: int, seed: int,
                      fractions=(0.6, 0.2, 0.2)):
    rng = np.random.default_rng(seed)
    order = rng.permutation(num_items)
    n1 = int(num_items * fractions[0])
    n2 = int(num_items * (fractions[0] + fractions[1]))
    return order[:n1], order[n1:n2], order[n2:]


def _logits_for_items(logits: np.ndarray, items: np.ndarray) -> np.ndarray:
    return logits[items]


def train_model(task: TaskData, model_config: ModelConfig,
                train_config: TrainConfig, seed: int):
    """Train one model; returns (model, ExperimentRecord)."""
    start = time.perf_counter()
    g = task.graph
    supp = build_support_index(g)
    rev = (build_reverse_index(g, supp)
           if model_config.two_stage and model_config.bidirectional else None)
    roots = task.items if task.task_type == "node" else None

    model = Model(model_config, g.node_features.shape[1],
                  g.edge_features.shape[1], seed=seed)
    params = model.flat_params()
    adam = AdamState.zeros(params.size)
    rng = np.random.default_rng(seed + 1)
    weights = train_config.class_weights

    record = ExperimentRecord(
        config={"model": model_config.to_dict(),
                "train": _train_config_dict(train_config),
                "task_type": task.task_type},
        seed=seed,
    )
    best_f1 = -1.0
    best_params = params.copy()
    stale = 0
    step = 0

    for epoch in range(train_config.epochs):
        order = rng.permutation(task.train_idx.size)
        epoch_losses = []
        for lo in range(0, order.size, train_config.batch_size):
            batch = task.train_idx[order[lo:lo + train_config.batch_size]]
            items = task.items[batch]
            model.set_flat_params(params)
            logits, cache = model.forward(g, supp, rev, roots=roots,
                                          train_mode=True, seed=seed * 7919 + step)
            step += 1
            batch_logits = _logits_for_items(logits, items)
            if not np.isfinite(batch_logits).all():
                raise TrainingError(f"non-finite logits at epoch {epoch}")
            loss, dlogits_batch = weighted_bce_loss(batch_logits,
                                                    task.labels[batch], weights)
            if not np.isfinite(loss):
                record.final_metrics = {"aborted": True, "loss": float(loss)}
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            dlogits = np.zeros_like(logits)
            dlogits[items] = dlogits_batch
            store = model.backward(cache, dlogits)
            grads = model.flat_grads(store)
            params = adam_step(params, grads, adam, train_config.learning_rate)
            epoch_losses.append(loss)
        record.train_losses.append(float(np.mean(epoch_losses)))

        model.set_flat_params(params)
        val_logits, _ = model.forward(g, supp, rev, roots=roots)
        val_items = task.items[task.val_idx]
        if not np.isfinite(val_logits).all():
            raise TrainingError(f"non-finite logits at epoch {epoch}")
        val_loss, _ = weighted_bce_loss(_logits_for_items(val_logits, val_items),
                                        task.labels[task.val_idx], weights)
        val_metrics = evaluate_scores(_logits_for_items(val_logits, val_items),
                                      task.labels[task.val_idx])
        record.val_losses.append(float(val_loss))
        record.val_f1s.append(val_metrics["f1"])
        if val_metrics["f1"] > best_f1:
            best_f1 = val_metrics["f1"]
            best_params = params.copy()
            record.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > train_config.patience:
                break

    model.set_flat_params(best_params)
    test_logits, _ = model.forward(g, supp, rev, roots=roots)
    test_items = task.items[task.test_idx]
    record.final_metrics = evaluate_scores(
        _logits_for_items(test_logits, test_items), task.labels[task.test_idx])
    record.wall_clock = time.perf_counter() - start
    return model, record


def _train_config_dict(tc: TrainConfig) -> dict:
    return {
        "learning_rate": tc.learning_rate,
        "hidden_size": tc.hidden_size,
        "batch_size": tc.batch_size,
        "dropout": tc.dropout,
        "class_weights": list(tc.class_weights),
        "num_layers": tc.num_layers,
        "seed": tc.seed,
        "epochs": tc.epochs,
        "patience": tc.patience,
    }


def run_seeds(task_factory, model_config: ModelConfig,
              train_config: TrainConfig, seeds) -> tuple[list, dict]:
    """Repeat an experiment across seeds; returns (records, summary).

    task_factory(seed) supplies the (possibly regenerated) TaskData so the
    dataset itself can be seed-swept along with the model.
    """
    records = []
    for seed in seeds:
        _, rec = train_model(task_factory(seed), model_config, train_config,
                             seed=seed)
        records.append(rec)
    f1s = np.array([r.final_metrics["f1"] for r in records])
    summary = {
        "seeds": list(seeds),
        "f1_mean": float(f1s.mean()),
        "f1_std": float(f1s.std()),
        "f1_per_seed": f1s.tolist(),
    }
    return records, summary


def evaluate_model(model: Model, task: TaskData, split: str = "test") -> dict:
    g = task.graph
    supp = build_support_index(g)
    rev = (build_reverse_index(g, supp)
           if model.config.two_stage and model.config.bidirectional else None)
    roots = task.items if task.task_type == "node" else None
    logits, _ = model.forward(g, supp, rev, roots=roots)
    idx = {"train": task.train_idx, "val": task.val_idx,
           "test": task.test_idx}[split]
    items = task.items[idx]
    return evaluate_scores(_logits_for_items(logits, items), task.labels[idx])
