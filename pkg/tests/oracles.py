"""Independent reference implementations used to check the production code.

These deliberately avoid the production code paths: gradients come from
central finite differences of the forward loss, and the interval metrics are
scored by a plain per-prediction linear scan instead of binary search.
"""

from __future__ import annotations

import numpy as np

from stepwave import neural


def finite_difference_grads(
    model: neural.LstmModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    mode: neural.LossMode,
    eps: float = 1e-5,
    dropout_seed: int | None = None,
) -> dict[str, np.ndarray]:
    """Central-difference loss gradients for every parameter element.

    When ``dropout_seed`` is given the same mask is redrawn for every
    evaluation, so the dropout path is differentiated too.
    """

    def loss_at() -> float:
        rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
        out, _ = neural.lstm_forward(model, inputs, dropout_rng=rng, want_cache=False)
        return neural.loss(out, targets, mode)

    grads: dict[str, np.ndarray] = {}
    for name, p in model.parameters().items():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            ix = it.multi_index
            orig = p[ix]
            p[ix] = orig + eps
            plus = loss_at()
            p[ix] = orig - eps
            minus = loss_at()
            p[ix] = orig
            g[ix] = (plus - minus) / (2.0 * eps)
            it.iternext()
        grads[name] = g
    return grads


def max_relative_error(
    analytic: dict[str, np.ndarray], reference: dict[str, np.ndarray]
) -> float:
    """Largest per-tensor normwise relative error: ||a-b||_inf / max(||a||_inf, ||b||_inf)."""
    worst = 0.0
    for name, a in analytic.items():
        b = reference[name]
        scale = max(float(np.abs(a).max()), float(np.abs(b).max()), 1e-12)
        worst = max(worst, float(np.abs(a - b).max()) / scale)
    return worst


def _count_linear(pred, lo, hi, closed):
    k = 0
    for p in pred:
        if closed:
            if lo <= p <= hi:
                k += 1
        elif lo <= p < hi:
            k += 1
    return k


def _tally(counts):
    under = sum(1 for k in counts if k == 0)
    over = sum(k - 1 for k in counts if k >= 2)
    return under, over


def oracle_strike_split(gt, pred, span, boundary="extend"):
    """Linear-scan reference for the strike-split rule."""
    gt = list(gt)
    pred = list(pred)
    n = len(gt)
    assert n >= 1
    counts = [_count_linear(pred, gt[i], gt[i + 1], closed=False) for i in range(n - 1)]
    if boundary == "strict":
        return _tally(counts)
    counts.append(_count_linear(pred, gt[-1], span[1], closed=True))
    under, over = _tally(counts)
    before = _count_linear(pred, span[0], gt[0], closed=False)
    return under, over + before


def oracle_midpoint_split(gt, pred, span):
    """Linear-scan reference for the midpoint-split rule."""
    gt = list(gt)
    pred = list(pred)
    n = len(gt)
    assert n >= 1
    counts = []
    for i in range(n):
        lo = span[0] if i == 0 else (gt[i - 1] + gt[i]) / 2.0
        hi = span[1] if i == n - 1 else (gt[i] + gt[i + 1]) / 2.0
        counts.append(_count_linear(pred, lo, hi, closed=(i == n - 1)))
    return _tally(counts)


def oracle_count_diff(gt, pred):
    n, p = len(gt), len(pred)
    return (n - p, 0) if n > p else (0, p - n)


def random_segment_eval(rng: np.random.Generator, max_strikes: int = 20, max_pred: int = 40):
    """One random scored-slice instance: (gt times, predicted times, span)."""
    length = rng.uniform(5.0, 50.0)
    span = (0.0, length)
    n = int(rng.integers(1, max_strikes + 1))
    gt = np.sort(rng.uniform(0.05 * length, 0.95 * length, size=n))
    if rng.random() < 0.5:
        # perturbed copies of the truth, with drops and spurious extras
        keep = rng.random(n) > 0.15
        pred = gt[keep] + rng.normal(0.0, 0.08 * length / max(n, 1), size=int(keep.sum()))
        extra = rng.uniform(0.0, length, size=int(rng.integers(0, 4)))
        pred = np.concatenate([pred, extra])
        pred = np.clip(pred, 0.0, length)
    else:
        m = int(rng.integers(0, max_pred + 1))
        pred = rng.uniform(0.0, length, size=m)
    return gt, np.sort(pred), span
