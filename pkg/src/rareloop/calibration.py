"""Score calibration: bootstrap logistic fits and the balanced threshold.

Labeled evaluation scores are resampled class-balanced with replacement;
each resample gets a two-parameter logistic fit of label on score. The
calibrated threshold x* is the root in [0, 1] of the mean fitted sigmoid
minus one half, found by Brent's method when the interval brackets a sign
change and by the endpoint closest to balance otherwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

__all__ = [
    "CalibrationResult",
    "LogisticParams",
    "bootstrap_params",
    "calibrated_threshold",
    "fit_logistic",
    "write_calibration_report",
]

BETA_CLIP = 30.0


@dataclass(slots=True)
class LogisticParams:
    beta0: float
    beta1: float
    clipped: bool = False


def _nll(b0: float, b1: float, x: np.ndarray, y: np.ndarray) -> float:
    z = b0 + b1 * x
    return float(np.logaddexp(0.0, z).sum() - y @ z)


def fit_logistic(
    points: Sequence[tuple[float, bool]],
    tol: float = 1e-8,
    max_iter: int = 50,
    clip: float = BETA_CLIP,
) -> LogisticParams:
    """Two-parameter logistic fit of binary label on score.

    Damped Newton with coefficients clipped to ``[-clip, clip]``; hitting the
    bound (separation, or a single-label sample) sets the clipped flag.
    """
    if not points:
        raise ValueError("cannot fit on an empty sample")
    x = np.asarray([p[0] for p in points], dtype=np.float64)
    y = np.asarray([bool(p[1]) for p in points], dtype=np.float64)
    if y.all() or not y.any():
        return LogisticParams(clip if y.all() else -clip, 0.0, clipped=True)
    b = np.zeros(2)
    nll = _nll(b[0], b[1], x, y)
    for _ in range(max_iter):
        mu = expit(b[0] + b[1] * x)
        resid = y - mu
        grad = np.array([resid.sum(), resid @ x])
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        sw, swx, swxx = w.sum(), w @ x, w @ (x * x)
        det = sw * swxx - swx * swx
        if det <= 0 or not np.isfinite(det):
            break
        step = np.array(
            [(swxx * grad[0] - swx * grad[1]) / det,
             (sw * grad[1] - swx * grad[0]) / det]
        )
        scale, improved = 1.0, False
        while scale >= 2.0 ** -20:
            cand = np.clip(b + scale * step, -clip, clip)
            cand_nll = _nll(cand[0], cand[1], x, y)
            if cand_nll <= nll + 1e-12:
                improved = True
                break
            scale /= 2.0
        if not improved:
            break
        delta = float(np.max(np.abs(cand - b)))
        b, nll = cand, cand_nll
        if delta < tol:
            break
    clipped = bool(np.max(np.abs(b)) >= clip - 1e-9)
    return LogisticParams(float(b[0]), float(b[1]), clipped=clipped)


def bootstrap_params(
    eval_labels: Sequence[tuple[float, bool]], B: int = 10000, seed=0
) -> list[LogisticParams]:
    """Class-balanced bootstrap logistic fits.

    Each replicate draws m positives and m negatives with replacement, where
    m is the smaller class count, and fits a logistic curve. Replicate b uses
    its own seeded substream, so results are independent of evaluation order.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    pos = [p for p in eval_labels if p[1]]
    neg = [p for p in eval_labels if not p[1]]
    if not pos or not neg:
        raise ValueError("balanced bootstrap needs both labels")
    m = min(len(pos), len(neg))
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    out = []
    for b in range(B):
        rng = np.random.default_rng([*base, b])
        pi = rng.integers(0, len(pos), m)
        ni = rng.integers(0, len(neg), m)
        sample = [pos[i] for i in pi] + [neg[i] for i in ni]
        out.append(fit_logistic(sample))
    return out


@dataclass(slots=True)
class CalibrationResult:
    x_star: float
    bracketed: bool


def calibrated_threshold(
    params: Sequence[LogisticParams], tol: float = 1e-9
) -> CalibrationResult:
    """Root of the mean fitted sigmoid minus 1/2 on [0, 1].

    With a sign change over the interval the root comes from Brent's method
    and satisfies |mean sigmoid(x*) - 1/2| <= tol. Without a bracket the
    endpoint with the smaller imbalance is returned, flagged unbracketed.
    """
    if not params:
        raise ValueError("calibrated threshold needs at least one fit")
    b0 = np.asarray([p.beta0 for p in params])
    b1 = np.asarray([p.beta1 for p in params])

    def f(x: float) -> float:
        return float(expit(b0 + b1 * x).mean() - 0.5)

    f0, f1 = f(0.0), f(1.0)
    if f0 == 0.0:
        return CalibrationResult(0.0, True)
    if f1 == 0.0:
        return CalibrationResult(1.0, True)
    if (f0 < 0.0) != (f1 < 0.0):
        root = float(brentq(f, 0.0, 1.0, xtol=min(tol * 1e-2, 1e-11)))
        if abs(f(root)) > tol:
            # the mean-sigmoid slope is bounded, so this is defensive only
            lo, hi = (0.0, root) if (f0 < 0.0) != (f(root) < 0.0) else (root, 1.0)
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if (f(lo) < 0.0) != (f(mid) < 0.0):
                    hi = mid
                else:
                    lo = mid
            root = 0.5 * (lo + hi)
        return CalibrationResult(root, True)
    pick = 0.0 if abs(f0) <= abs(f1) else 1.0
    return CalibrationResult(pick, False)


def write_calibration_report(
    path: str,
    result: CalibrationResult,
    params: Sequence[LogisticParams],
    quantiles: Sequence[float] = (0.05, 0.25, 0.5, 0.75, 0.95),
) -> None:
    """JSON report: x*, bracket flag, B, coefficient summary quantiles."""
    b0 = np.asarray([p.beta0 for p in params])
    b1 = np.asarray([p.beta1 for p in params])
    payload = {
        "x_star": result.x_star,
        "bracketed": result.bracketed,
        "B": len(params),
        "beta0": {repr(q): float(np.quantile(b0, q)) for q in quantiles},
        "beta1": {repr(q): float(np.quantile(b1, q)) for q in quantiles},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
