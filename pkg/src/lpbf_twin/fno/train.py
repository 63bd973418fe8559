"""Mini-batch Adam training with a stepped learning-rate schedule."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..optim import Adam
from .model import FnoConfig, SurrogateModel

log = logging.getLogger(__name__)


class TrainingConfigError(ValueError):
    pass


@dataclass
class TrainReport:
    plane: str
    train_mse: list = field(default_factory=list)
    train_rel_l2: list = field(default_factory=list)
    val_rel_l2: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1
    wall_time: float = 0.0
    stopped_early: bool = False

    @property
    def best_val(self) -> float:
        return self.val_rel_l2[self.best_epoch]

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, csv_path, json_path=None):
        """Loss curve as CSV; the full report as JSON next to it unless given."""
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "lr", "train_mse", "train_rel_l2", "val_rel_l2"])
            for e, row in enumerate(zip(self.lr, self.train_mse, self.train_rel_l2,
                                        self.val_rel_l2)):
                w.writerow([e, *(repr(float(v)) for v in row)])
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.to_dict(), indent=1))
        return csv_path, json_path


def relative_l2(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample ||pred - target|| / ||target|| over the grid (kelvin fields)."""
    axes = tuple(range(1, pred.ndim))
    return np.sqrt(np.sum((pred - target) ** 2, axis=axes) / np.sum(target ** 2, axis=axes))


def learning_rate(config: FnoConfig, epoch: int) -> float:
    return config.lr * config.lr_decay ** (epoch // config.lr_step)


def train(dataset, config: FnoConfig, plane: str = "xy", epochs: int | None = None,
          target_val: float | None = None, log_every: int = 10, callback=None):
    """Fit one plane's surrogate; returns the best-by-validation model and its report.

    ``target_val`` stops once the validation relative L2 falls below it.
    Everything is seeded from ``config.seed``: the same inputs give bitwise
    identical reports.
    """
    grid, fields = dataset.plane(plane)
    tr, va = dataset.train_index, dataset.val_index
    if len(tr) == 0 or len(va) == 0:
        raise TrainingConfigError("training needs non-empty train and validation splits")
    epochs = config.epochs if epochs is None else epochs
    model = SurrogateModel(config, grid)
    opt = Adam(model.params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    xi_tr, T_tr = dataset.params[tr], fields[tr]
    xi_va, T_va = dataset.params[va], fields[va]
    report = TrainReport(plane)
    best = None
    t0 = time.perf_counter()
    for epoch in range(epochs):
        opt.lr = learning_rate(config, epoch)
        order = rng.permutation(len(tr))
        sq, rel = 0.0, 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads, pred = model.loss_and_gradients(xi_tr[idx], T_tr[idx], return_pred=True)
            sq += loss * len(idx)
            rel += float(relative_l2(model.to_kelvin(pred), T_tr[idx]).sum())
            opt.step(grads)
        val = float(relative_l2(model.predict_kelvin(xi_va), T_va).mean())
        report.train_mse.append(sq / len(tr))
        report.train_rel_l2.append(rel / len(tr))
        report.val_rel_l2.append(val)
        report.lr.append(opt.lr)
        if best is None or val < report.val_rel_l2[report.best_epoch]:
            report.best_epoch = epoch
            best = {k: v.copy() for k, v in model.params.items()}
        if log_every and epoch % log_every == 0:
            log.info("%s epoch %d lr %.3g mse %.3e val %.4f", plane, epoch, opt.lr,
                     report.train_mse[-1], val)
        if callback is not None:
            callback(epoch, report)
        if target_val is not None and val < target_val:
            report.stopped_early = True
            break
    report.wall_time = time.perf_counter() - t0
    model.params = best
    return model, report
