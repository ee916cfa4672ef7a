"""Agreement metrics between predicted and ground-truth affect sequences.

Population (divide-by-n) moments are used everywhere so that the correlation
and the standard deviations inside the concordance coefficient come from the
same estimator.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, LengthMismatch, NonFiniteValue, ZeroVariance


@dataclass(frozen=True)
class MetricsReport:
    r: float
    ccc: float
    mu_pred: float
    mu_truth: float
    sd_pred: float
    sd_truth: float


def _as_pair(predictions, ground_truth):
    x = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(ground_truth, dtype=float).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"predictions ({x.size}) and ground truth ({y.size}) differ in length")
    if x.size < 2:
        raise LengthMismatch("need at least 2 values to compare sequences")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteValue("metric inputs must be finite")
    return x, y


def _moments(x, y):
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy = np.mean(dx * dx), np.mean(dy * dy)
    cov = np.mean(dx * dy)
    return mx, my, vx, vy, cov


def pearson(predictions, ground_truth):
    """Product-moment correlation. Raises ZeroVariance naming the flat side."""
    x, y = _as_pair(predictions, ground_truth)
    _, _, vx, vy, cov = _moments(x, y)
    if vx == 0.0:
        raise ZeroVariance("predictions")
    if vy == 0.0:
        raise ZeroVariance("ground_truth")
    r = cov / np.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0))


def ccc(predictions, ground_truth):
    """Concordance correlation coefficient.

    2*rho*sx*sy / (sx^2 + sy^2 + (mx - my)^2), which reduces to
    2*cov / (sx^2 + sy^2 + (mx - my)^2). The covariance form is used so that
    a flat sequence with a different mean gives 0 instead of an error.
    """
    x, y = _as_pair(predictions, ground_truth)
    mx, my, vx, vy, cov = _moments(x, y)
    denom = vx + vy + (mx - my) ** 2
    if denom <= 0.0:
        raise DegenerateDenominator("both sequences are constant with equal means")
    return float(np.clip(2.0 * cov / denom, -1.0, 1.0))


def evaluate(predictions, ground_truth):
    """Full report: r, CCC and the moments that enter them."""
    x, y = _as_pair(predictions, ground_truth)
    mx, my, vx, vy, _ = _moments(x, y)
    return MetricsReport(
        r=pearson(x, y),
        ccc=ccc(x, y),
        mu_pred=float(mx),
        mu_truth=float(my),
        sd_pred=float(np.sqrt(vx)),
        sd_truth=float(np.sqrt(vy)),
    )


def evaluate_by_group(predictions, ground_truth, groups):
    """Metrics per group label (e.g. per recording), in first-seen order."""
    x, y = _as_pair(predictions, ground_truth)
    groups = list(groups)
    if len(groups) != x.size:
        raise LengthMismatch("groups must label every value")
    out = {}
    for g in dict.fromkeys(groups):
        mask = np.array([h == g for h in groups])
        out[g] = evaluate(x[mask], y[mask])
    return out
