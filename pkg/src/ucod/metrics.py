"""COD evaluation metrics: MAE, S-measure, weighted/mean F-measure, mean E-measure,
and the foreground-size bucket report.

Predictions are probabilities in [0, 1] used as-is; ground truth is binary.
Threshold sweeps use the 255 thresholds k/256, k = 1..255, binarising with
``pred >= threshold``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InputError
from .masks import SoftMask

BETA2 = 0.3
ALPHA = 0.5
N_THRESHOLDS = 255
THRESHOLDS = np.arange(1, N_THRESHOLDS + 1) / (N_THRESHOLDS + 1)
EPS = np.finfo(np.float64).eps
METRIC_NAMES = ("s_measure", "f_weighted", "f_mean", "e_mean", "mae")
E_MEASURE_VARIANT = "mean over thresholds"


@dataclass
class EvalPair:
    pred: np.ndarray
    gt: np.ndarray
    name: str = ""

    def __post_init__(self):
        if isinstance(self.pred, SoftMask):
            self.pred = self.pred.values
        pred = np.asarray(self.pred, dtype=np.float64)
        gt = np.asarray(self.gt)
        if pred.shape != gt.shape:
            raise InputError(f"{self.name}: pred shape {pred.shape} != gt shape {gt.shape}")
        if not np.all((gt == 0) | (gt == 1)):
            raise InputError(f"{self.name}: ground truth must be binary")
        if not np.all(np.isfinite(pred)) or pred.min() < 0 or pred.max() > 1:
            raise InputError(f"{self.name}: predictions must be finite and in [0, 1]")
        self.pred, self.gt = pred, gt.astype(bool)


@dataclass
class MetricReport:
    s_measure: float
    f_weighted: float
    f_mean: float
    e_mean: float
    mae: float
    n_images: int

    def as_dict(self) -> dict:
        return asdict(self)


def _pair(pred, gt) -> EvalPair:
    return pred if isinstance(pred, EvalPair) else EvalPair(pred, gt)


def mae(pred, gt=None) -> float:
    p = _pair(pred, gt)
    return float(np.mean(np.abs(p.pred - p.gt)))


# -- S-measure ----------------------------------------------------------------

def _s_object(values: np.ndarray) -> float:
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    x, y = pred.mean(), gt.mean()
    if n > 1:
        sigma_x = np.sum((pred - x) ** 2) / (n - 1)
        sigma_y = np.sum((gt - y) ** 2) / (n - 1)
        sigma_xy = np.sum((pred - x) * (gt - y)) / (n - 1)
    else:
        sigma_x = sigma_y = sigma_xy = 0.0
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x + sigma_y)
    if alpha != 0:
        return alpha / (beta + EPS)
    return 1.0 if beta == 0 else 0.0


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    """Split point (x, y), counted like 1-based Matlab indices."""
    h, w = gt.shape
    if not gt.any():
        return int(np.round(w / 2)), int(np.round(h / 2))
    rows, cols = np.nonzero(gt)
    return int(np.round(cols.mean())) + 1, int(np.round(rows.mean())) + 1


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    x, y = _centroid(gt)
    area = h * w
    weights = (x * y / area, (w - x) * y / area, x * (h - y) / area)
    weights = weights + (1.0 - sum(weights),)
    quads = ((slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
             (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w)))
    total = 0.0
    for wt, (rs, cs) in zip(weights, quads):
        p, g = pred[rs, cs], gt[rs, cs].astype(np.float64)
        if p.size:
            total += wt * _ssim(p, g)
    return total


def s_measure(pred, gt=None, alpha: float = ALPHA) -> float:
    p = _pair(pred, gt)
    pred, gt = p.pred, p.gt
    fg_ratio = gt.mean()
    if fg_ratio == 0:
        return float(1.0 - pred.mean())
    if fg_ratio == 1:
        return float(pred.mean())
    u = fg_ratio
    s_obj = u * _s_object(pred[gt]) + (1.0 - u) * _s_object(1.0 - pred[~gt])
    score = alpha * s_obj + (1.0 - alpha) * _s_region(pred, gt)
    return float(max(score, 0.0))


# -- threshold sweeps -----------------------------------------------------------

def _sweep_counts(pred: np.ndarray, gt: np.ndarray):
    """Per-threshold counts of predicted-foreground pixels on gt-fg and gt-bg."""
    fg_vals = np.sort(pred[gt])
    bg_vals = np.sort(pred[~gt])
    tp = fg_vals.size - np.searchsorted(fg_vals, THRESHOLDS, side="left")
    fp = bg_vals.size - np.searchsorted(bg_vals, THRESHOLDS, side="left")
    return tp.astype(np.float64), fp.astype(np.float64)


def f_curve(pred, gt=None, beta2: float = BETA2) -> np.ndarray:
    p = _pair(pred, gt)
    tp, fp = _sweep_counts(p.pred, p.gt)
    n_fg = p.gt.sum()
    if n_fg == 0:
        return (tp + fp == 0).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = tp / n_fg
        denom = beta2 * precision + recall
        return np.where(denom > 0, (1 + beta2) * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)


def _gauss_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    m = (size - 1) / 2
    y, x = np.ogrid[-m:m + 1, -m:m + 1]
    k = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    k[k < np.finfo(k.dtype).eps * k.max()] = 0
    return k / k.sum()


def nearest_foreground(gt: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance from every pixel to the nearest gt-foreground pixel, and that pixel's (row, col).

    Equidistant candidates resolve to the lowest row-major index.
    """
    dist = ndimage.distance_transform_edt(~gt)
    rows = np.arange(gt.shape[0])[:, None].repeat(gt.shape[1], 1)
    cols = np.arange(gt.shape[1])[None, :].repeat(gt.shape[0], 0)
    fg = np.argwhere(gt)
    bg = np.argwhere(~gt)
    if len(bg):
        tree = cKDTree(fg)
        radius = dist[~gt] + 1e-6
        k = min(16, len(fg))
        d, idx = tree.query(bg, k=k)
        d, idx = d.reshape(len(bg), k), idx.reshape(len(bg), k)
        tied = d <= radius[:, None]
        best = np.where(tied, idx, len(fg)).min(axis=1)
        # every one of the k neighbours tied: there may be more beyond k
        overflow = np.nonzero(tied.all(axis=1) & (k < len(fg)))[0]
        for i, hits in zip(overflow, tree.query_ball_point(bg[overflow], radius[overflow])):
            best[i] = min(hits)
        rows[bg[:, 0], bg[:, 1]] = fg[best, 0]
        cols[bg[:, 0], bg[:, 1]] = fg[best, 1]
    return dist, rows, cols


def weighted_f_measure(pred, gt=None, beta2: float = BETA2) -> float:
    p = _pair(pred, gt)
    pred, gt = p.pred, p.gt
    if not gt.any():
        return float(pred.max() < THRESHOLDS[0])
    err = np.abs(pred - gt)
    dist, rows, cols = nearest_foreground(gt)
    err_t = err[rows, cols]
    err_a = ndimage.convolve(err_t, _gauss_kernel(), mode="constant", cval=0.0)
    min_e = np.where(gt & (err_a < err), err_a, err)
    importance = np.where(gt, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    ew = min_e * importance
    tpw = gt.sum() - ew[gt].sum()
    fpw = ew[~gt].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tpw / (tpw + fpw + EPS)
    return float((1 + beta2) * recall * precision / (recall + beta2 * precision + EPS))


def f_measures(pred, gt=None) -> tuple[float, float]:
    """(weighted F, mean F over the threshold sweep)."""
    p = _pair(pred, gt)
    return weighted_f_measure(p), float(f_curve(p).mean())


def e_curve(pred, gt=None) -> np.ndarray:
    p = _pair(pred, gt)
    tp, fp = _sweep_counts(p.pred, p.gt)
    n = p.gt.size
    n_fg = float(p.gt.sum())
    pred_fg = tp + fp
    if n_fg == 0:
        return (n - pred_fg) / n
    if n_fg == n:
        return pred_fg / n
    mu_p = pred_fg / n
    mu_g = n_fg / n
    fn = n_fg - tp
    tn = n - n_fg - fp
    total = np.zeros_like(tp)
    # (count, demeaned pred value, demeaned gt value) for the four pixel classes
    for count, a, b in ((tp, 1 - mu_p, 1 - mu_g), (fp, 1 - mu_p, -mu_g),
                        (fn, -mu_p, 1 - mu_g), (tn, -mu_p, -mu_g)):
        align = 2.0 * a * b / (a * a + b * b + EPS)
        total += count * (align + 1.0) ** 2 / 4.0
    return total / n


def e_measure(pred, gt=None) -> float:
    return float(e_curve(pred, gt).mean())


# -- aggregation ----------------------------------------------------------------

def evaluate_pair(pred, gt=None) -> dict[str, float]:
    p = _pair(pred, gt)
    f_w, f_m = f_measures(p)
    return {"s_measure": s_measure(p), "f_weighted": f_w, "f_mean": f_m,
            "e_mean": e_measure(p), "mae": mae(p)}


def aggregate(per_image: list[dict[str, float]]) -> MetricReport:
    if not per_image:
        raise InputError("cannot aggregate an empty list of results")
    means = {k: float(np.mean([r[k] for r in per_image])) for k in METRIC_NAMES}
    return MetricReport(**means, n_images=len(per_image))


def evaluate(pairs: list[EvalPair]) -> tuple[MetricReport, list[dict[str, float]]]:
    per_image = [evaluate_pair(p) for p in pairs]
    return aggregate(per_image), per_image


@dataclass
class BucketRow:
    lo: float
    hi: float
    count: int
    report: MetricReport | None

    def as_dict(self) -> dict:
        d = {"lo": self.lo, "hi": self.hi, "count": self.count}
        d.update(self.report.as_dict() if self.report else {k: None for k in METRIC_NAMES})
        return d


def bucket_index(ratio: float, interval: float) -> int:
    n_buckets = math.ceil(1.0 / interval - 1e-9)
    return min(int(math.floor(ratio / interval + 1e-9)), n_buckets - 1)


def bucket_report(pairs: list[EvalPair], interval: float = 0.02,
                  per_image: list[dict[str, float]] | None = None) -> list[BucketRow]:
    """Group images by gt foreground ratio into [k*interval, (k+1)*interval)."""
    if not 0.0 < interval <= 1.0:
        raise InputError("bucket interval must lie in (0, 1]")
    if not pairs:
        return []
    if per_image is None:
        per_image = [evaluate_pair(p) for p in pairs]
    n_buckets = math.ceil(1.0 / interval - 1e-9)
    groups: list[list[dict]] = [[] for _ in range(n_buckets)]
    for pair, res in zip(pairs, per_image):
        groups[bucket_index(float(pair.gt.mean()), interval)].append(res)
    return [BucketRow(round(k * interval, 10), round(min((k + 1) * interval, 1.0), 10), len(g),
                      aggregate(g) if g else None)
            for k, g in enumerate(groups)]
