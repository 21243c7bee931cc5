"""Fairness-confusion direction rules and Taylor ground-truth recovery.

Given the loss gradients g (on an instance) and g' (on its most-diverging
similar counterpart), three rules pick per-attribute perturbation
directions that steer toward false-fair, true-biased, or false-biased
predictions. Sensitive coordinates are never perturbed.

sign(0) counts as different from any nonzero sign and equal only to
another zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nncore
from .errors import NumericError, ShapeError

FF = "FF"
TB = "TB"
FB = "FB"
LOSS_ASCENT = "loss_ascent"

DIRECTION_KINDS = (FF, TB, FB)


@dataclass(frozen=True)
class DirectionVector:
    values: np.ndarray
    kind: str


def _check_pair(g: np.ndarray, gp: np.ndarray, mask: np.ndarray):
    g = np.asarray(g, dtype=np.float64)
    gp = np.asarray(gp, dtype=np.float64)
    if g.shape != gp.shape:
        raise ShapeError(f"gradient shapes differ: {g.shape} vs {gp.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != g.shape[-1:]:
        raise ShapeError(f"sensitive mask shape {mask.shape} does not match {g.shape}")
    return g, gp, mask


def directions_ff(g: np.ndarray, gp: np.ndarray, sensitive_mask: np.ndarray) -> np.ndarray:
    """False-fair rule: |g_i| wherever the gradient signs agree.

    Works on single vectors or (n, d) batches.
    """
    g, gp, mask = _check_pair(g, gp, sensitive_mask)
    same = np.sign(g) == np.sign(gp)
    return np.where(same & ~mask, np.abs(g), 0.0)


def directions_tb(g: np.ndarray, gp: np.ndarray, sensitive_mask: np.ndarray) -> np.ndarray:
    """True-biased rule: where signs differ, -|g_i| (or |g'_i| if g_i is 0)."""
    g, gp, mask = _check_pair(g, gp, sensitive_mask)
    differ = np.sign(g) != np.sign(gp)
    inner = np.where(np.sign(g) != 0.0, -np.abs(g), np.abs(gp))
    return np.where(differ & ~mask, inner, 0.0)


def directions_fb(g: np.ndarray, gp: np.ndarray, sensitive_mask: np.ndarray) -> np.ndarray:
    """False-biased rule: the elementwise opposite of the true-biased rule."""
    g, gp, mask = _check_pair(g, gp, sensitive_mask)
    differ = np.sign(g) != np.sign(gp)
    inner = np.where(np.sign(g) != 0.0, np.abs(g), -np.abs(gp))
    return np.where(differ & ~mask, inner, 0.0)


def dir_ff(g: np.ndarray, gp: np.ndarray, sensitive_mask: np.ndarray) -> DirectionVector:
    return DirectionVector(directions_ff(g, gp, sensitive_mask), FF)


def dir_tb(g: np.ndarray, gp: np.ndarray, sensitive_mask: np.ndarray) -> DirectionVector:
    return DirectionVector(directions_tb(g, gp, sensitive_mask), TB)


def dir_fb(g: np.ndarray, gp: np.ndarray, sensitive_mask: np.ndarray) -> DirectionVector:
    return DirectionVector(directions_fb(g, gp, sensitive_mask), FB)


def taylor_loss_estimate(
    loss_v: np.ndarray | float,
    g_dot_step: np.ndarray | float,
) -> np.ndarray | float:
    """First-order estimate of the perturbed loss; the absolute value guards
    the square root."""
    return np.abs(loss_v + g_dot_step)


def _pick_closer(y: np.ndarray, f_vp: np.ndarray, sqrt_l: np.ndarray) -> np.ndarray:
    y_plus = f_vp + sqrt_l
    y_minus = f_vp - sqrt_l
    # Strict inequality: ties resolve to y_plus.
    return np.where(np.abs(y_minus - y) < np.abs(y_plus - y), y_minus, y_plus)


def ground_truth(
    v: np.ndarray,
    y: float,
    g: np.ndarray,
    net: nncore.DenseNetwork,
    v_p: np.ndarray,
) -> float:
    """Approximate the ground truth of the perturbed instance v_p.

    Solves the first-order Taylor estimate of the squared-error loss at v_p
    for the label: of f(v_p) +- sqrt(|loss(y, f(v)) + g.(v_p - v)|), returns
    the root closer to y (ties take the + root).
    """
    v = np.asarray(v, dtype=np.float64)
    v_p = np.asarray(v_p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if v.shape != v_p.shape or g.shape != v.shape:
        raise ShapeError(f"shape mismatch: v {v.shape}, v_p {v_p.shape}, g {g.shape}")
    loss_v = nncore.loss_mse(y, nncore.forward(net, v))
    est = taylor_loss_estimate(loss_v, float(g @ (v_p - v)))
    if not np.isfinite(est):
        raise NumericError("ground_truth: Taylor loss estimate is not finite")
    sqrt_l = float(np.sqrt(est))
    f_vp = nncore.forward(net, v_p)
    y_p = float(_pick_closer(np.float64(y), np.float64(f_vp), np.float64(sqrt_l)))
    if not np.isfinite(y_p):
        raise NumericError("ground_truth: recovered label is not finite")
    return y_p


def ground_truth_batch(
    loss_v: np.ndarray,
    g_dot_step: np.ndarray,
    f_vp: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """Vectorized ground-truth recovery from precomputed pieces.

    loss_v: squared-error loss at each source instance; g_dot_step: gradient
    dotted with (v_p - v); f_vp: prediction at each perturbed instance.
    """
    est = taylor_loss_estimate(np.asarray(loss_v), np.asarray(g_dot_step))
    if not np.isfinite(est).all():
        raise NumericError("ground_truth_batch: Taylor loss estimate is not finite")
    return _pick_closer(np.asarray(y, dtype=np.float64), np.asarray(f_vp), np.sqrt(est))


def binarize_ground_truth(y_p: float) -> int:
    """Hard label for an approximated ground truth; 0.5 rounds up, matching
    the prediction threshold convention."""
    return int(y_p >= 0.5)
