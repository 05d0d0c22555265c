"""Precision/recall evaluation of predicted boundary masks.

Predicted pixels are matched one-to-one to ground-truth pixels greedily in
raster order: each prediction takes the nearest unmatched truth pixel
within the tolerance radius (ties broken by truth raster order). The
threshold sweep reports the full PR curve and the best F-measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataFormatError

N_THRESHOLDS = 64


def _raster_points(mask):
    ys, xs = np.nonzero(mask)
    return np.stack([xs, ys], axis=1).astype(float)


def match_masks(pred_mask, truth_mask, rho=2.0):
    """Number of greedy one-to-one matches within ``rho`` pixels."""
    pred = _raster_points(pred_mask)
    truth = _raster_points(truth_mask)
    if len(pred) == 0 or len(truth) == 0:
        return 0, len(pred), len(truth)
    tree = cKDTree(truth)
    taken = np.zeros(len(truth), dtype=bool)
    matches = 0
    for p in pred:
        candidates = tree.query_ball_point(p, rho)
        best = -1
        best_key = None
        for c in candidates:
            if taken[c]:
                continue
            key = (np.hypot(*(truth[c] - p)), c)
            if best_key is None or key < best_key:
                best_key, best = key, c
        if best >= 0:
            taken[best] = True
            matches += 1
    return matches, len(pred), len(truth)


def precision_recall(matches, n_pred, n_truth):
    precision = matches / n_pred if n_pred else 1.0
    recall = matches / n_truth if n_truth else 1.0
    f = 2 * precision * recall / (precision + recall) if precision + recall \
        else 0.0
    return precision, recall, f


@dataclass
class PRPoint:
    threshold: float
    precision: float
    recall: float
    f: float


@dataclass
class PRCurve:
    points: List[PRPoint]

    @property
    def best(self) -> PRPoint:
        return max(self.points, key=lambda p: p.f)


def evaluate_masks(pred, truth, rho=2.0) -> PRCurve:
    """Sweep the probability threshold over k/64, k = 1..64.

    ``pred`` holds probabilities in [0, 1]; ``truth`` is binary (any
    nonzero value marks a true pixel)."""
    pred = np.asarray(pred, dtype=float)
    truth_mask = np.asarray(truth) > 0
    if pred.shape != truth_mask.shape:
        raise DataFormatError(
            f"mask size mismatch: {pred.shape} vs {truth_mask.shape}")
    points = []
    for k in range(1, N_THRESHOLDS + 1):
        t = k / N_THRESHOLDS
        matches, n_pred, n_truth = match_masks(pred >= t, truth_mask, rho)
        p, r, f = precision_recall(matches, n_pred, n_truth)
        points.append(PRPoint(t, p, r, f))
    return PRCurve(points)
