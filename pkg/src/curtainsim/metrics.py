"""Forecast accuracy metrics against rasterized ground truth.

Evaluation is restricted to cells with line of sight from the sensor, since
the belief cannot be graded on space no measurement could ever reach.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DynamicOccupancyGrid

__all__ = ["EvalReport", "binarize", "eval_forecast"]


@dataclass(frozen=True)
class EvalReport:
    """Confusion counts and derived scores for one forecast comparison."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    iou: float
    tp: int
    fp: int
    fn: int
    tn: int
    n_los: int
    horizon: float = 0.0

    def __post_init__(self) -> None:
        if self.tp + self.fp + self.fn + self.tn != self.n_los:
            raise ValueError("confusion counts do not sum to the graded cells")
        if self.iou > self.f1 + 1e-12:
            raise ValueError("iou cannot exceed f1")

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "iou": self.iou,
        }


def binarize(grid: DynamicOccupancyGrid, tau: float = 0.5) -> np.ndarray:
    """Occupancy >= tau as a boolean mask; tau must be strictly inside (0, 1)."""
    if not 0.0 < tau < 1.0:
        raise ValueError("binarization threshold must lie strictly in (0, 1)")
    return grid.occupancy >= tau


def eval_forecast(
    pred_occ: np.ndarray,
    gt_occ: np.ndarray,
    los: np.ndarray,
    horizon: float = 0.0,
) -> EvalReport:
    """Score a binary forecast against ground truth over cells in line of sight.

    Degenerate cases: an empty line-of-sight mask is an error; when neither side marks any
    masked cell occupied, precision/recall/f1/iou are all 1. Ratios with an
    empty denominator otherwise score 0.
    """
    pred_occ = np.asarray(pred_occ, dtype=bool)
    gt_occ = np.asarray(gt_occ, dtype=bool)
    los = np.asarray(los, dtype=bool)
    if not pred_occ.shape == gt_occ.shape == los.shape:
        raise ValueError("prediction, ground truth, and mask shapes differ")
    n_los = int(np.count_nonzero(los))
    if n_los == 0:
        raise ValueError("no cells to evaluate")
    p = pred_occ[los]
    g = gt_occ[los]
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = n_los - tp - fp - fn
    if tp + fp + fn == 0:
        precision = recall = f1 = iou = 1.0
    else:
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)
        iou = tp / (tp + fp + fn)
    return EvalReport(
        accuracy=(tp + tn) / n_los,
        precision=precision,
        recall=recall,
        f1=f1,
        iou=iou,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        n_los=n_los,
        horizon=horizon,
    )
