"""Slow, literal reference implementations used only by the tests.

Each oracle is written from the metric/algorithm definition with plain
loops and shares no code with the package.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

EPS = np.finfo(np.float64).eps
THRESHOLDS = [k / 256 for k in range(1, 256)]


# -- connected components ---------------------------------------------------------

def flood_fill_components(binary: np.ndarray, connectivity: int = 8) -> list[frozenset]:
    h, w = binary.shape
    if connectivity == 8:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    else:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    seen = np.zeros_like(binary, dtype=bool)
    comps = []
    for i in range(h):
        for j in range(w):
            if binary[i, j] and not seen[i, j]:
                comp, queue = set(), deque([(i, j)])
                seen[i, j] = True
                while queue:
                    y, x = queue.popleft()
                    comp.add((y, x))
                    for dy, dx in steps:
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w and binary[yy, xx] and not seen[yy, xx]:
                            seen[yy, xx] = True
                            queue.append((yy, xx))
                comps.append(frozenset(comp))
    return comps


# -- background seed ----------------------------------------------------------------

def background_seed_oracle(vectors: list[np.ndarray], threshold: float = 0.0) -> list[int]:
    """Foreground flags for row-major patch vectors, by explicit enumeration."""
    n = len(vectors)

    def cos(a, b):
        na, nb = math.sqrt(sum(x * x for x in a)), math.sqrt(sum(x * x for x in b))
        if na == 0 or nb == 0:
            return 0.0
        return sum(x * y for x, y in zip(a, b)) / (na * nb)

    best, seed = -1, 0
    for i in range(n):
        deg = sum(1 for j in range(n) if j != i and cos(vectors[i], vectors[j]) > threshold)
        if deg > best:
            best, seed = deg, i
    return [0 if (j == seed or cos(vectors[seed], vectors[j]) > threshold) else 1 for j in range(n)]


# -- S-measure ----------------------------------------------------------------------

def _mean(vals):
    return sum(vals) / len(vals)


def _std1(vals):
    if len(vals) < 2:
        return 0.0
    m = _mean(vals)
    return math.sqrt(sum((v - m) ** 2 for v in vals) / (len(vals) - 1))


def _obj(vals):
    x = _mean(vals)
    return 2 * x / (x * x + 1 + _std1(vals) + EPS)


def _ssim_region(pred, gt):
    vals_p = [float(v) for v in pred.ravel()]
    vals_g = [float(v) for v in gt.ravel()]
    n = len(vals_p)
    x, y = _mean(vals_p), _mean(vals_g)
    if n > 1:
        sx = sum((a - x) ** 2 for a in vals_p) / (n - 1)
        sy = sum((b - y) ** 2 for b in vals_g) / (n - 1)
        sxy = sum((a - x) * (b - y) for a, b in zip(vals_p, vals_g)) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    if beta == 0:
        return 1.0
    return 0.0


def s_measure_oracle(pred: np.ndarray, gt: np.ndarray, alpha: float = 0.5) -> float:
    gt = gt.astype(bool)
    h, w = gt.shape
    y_ratio = gt.sum() / gt.size
    if y_ratio == 0:
        return 1 - pred.mean()
    if y_ratio == 1:
        return pred.mean()
    fg_vals = [pred[i, j] for i in range(h) for j in range(w) if gt[i, j]]
    bg_vals = [1 - pred[i, j] for i in range(h) for j in range(w) if not gt[i, j]]
    s_object = y_ratio * _obj(fg_vals) + (1 - y_ratio) * _obj(bg_vals)
    # centroid, 1-based like the reference Matlab code
    ys = [i for i in range(h) for j in range(w) if gt[i, j]]
    xs = [j for i in range(h) for j in range(w) if gt[i, j]]
    cx = int(round(_mean(xs))) + 1
    cy = int(round(_mean(ys))) + 1
    area = h * w
    w1 = cx * cy / area
    w2 = (w - cx) * cy / area
    w3 = cx * (h - cy) / area
    w4 = 1 - w1 - w2 - w3
    s_region = 0.0
    for wt, (r0, r1, c0, c1) in ((w1, (0, cy, 0, cx)), (w2, (0, cy, cx, w)),
                                 (w3, (cy, h, 0, cx)), (w4, (cy, h, cx, w))):
        p = pred[r0:r1, c0:c1]
        if p.size == 0:
            continue
        s_region += wt * _ssim_region(p, gt[r0:r1, c0:c1].astype(float))
    return max(alpha * s_object + (1 - alpha) * s_region, 0.0)


# -- threshold F / E ----------------------------------------------------------------------

def f_mean_oracle(pred, gt, beta2=0.3):
    gt = gt.astype(bool)
    scores = []
    for t in THRESHOLDS:
        binary = pred >= t
        tp = int(np.sum(binary & gt))
        fp = int(np.sum(binary & ~gt))
        if gt.sum() == 0:
            scores.append(1.0 if tp + fp == 0 else 0.0)
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / gt.sum()
        denom = beta2 * precision + recall
        scores.append((1 + beta2) * precision * recall / denom if denom else 0.0)
    return sum(scores) / len(scores)


def e_mean_oracle(pred, gt):
    gt_f = gt.astype(float)
    n = gt.size
    scores = []
    for t in THRESHOLDS:
        fm = (pred >= t).astype(float)
        if gt_f.sum() == 0:
            enhanced = 1 - fm
        elif gt_f.sum() == n:
            enhanced = fm
        else:
            a = fm - fm.mean()
            b = gt_f - gt_f.mean()
            align = 2 * a * b / (a * a + b * b + EPS)
            enhanced = (align + 1) ** 2 / 4
        scores.append(enhanced.sum() / n)
    return sum(scores) / len(scores)


def _gaussian(size=7, sigma=5.0):
    m = (size - 1) / 2
    k = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            k[i, j] = math.exp(-((i - m) ** 2 + (j - m) ** 2) / (2 * sigma * sigma))
    k[k < EPS * k.max()] = 0
    return k / k.sum()


def weighted_f_oracle(pred, gt, beta2=0.3):
    gt = gt.astype(bool)
    h, w = gt.shape
    if not gt.any():
        return float(pred.max() < THRESHOLDS[0])
    err = np.abs(pred - gt)
    fg = [(i, j) for i in range(h) for j in range(w) if gt[i, j]]  # row-major order
    dist = np.zeros((h, w))
    err_t = err.copy()
    for i in range(h):
        for j in range(w):
            if gt[i, j]:
                continue
            best_d, best = None, None
            for (y, x) in fg:
                d = math.hypot(i - y, j - x)
                if best_d is None or d < best_d - 1e-9:
                    best_d, best = d, (y, x)
            dist[i, j] = best_d
            err_t[i, j] = err[best]
    k = _gaussian()
    r = k.shape[0] // 2
    err_a = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    y, x = i + di, j + dj
                    if 0 <= y < h and 0 <= x < w:
                        acc += k[r - di, r - dj] * err_t[y, x]
            err_a[i, j] = acc
    min_e = err.copy()
    for i in range(h):
        for j in range(w):
            if gt[i, j] and err_a[i, j] < err[i, j]:
                min_e[i, j] = err_a[i, j]
    ew = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            b = 1.0 if gt[i, j] else 2.0 - math.exp(math.log(0.5) / 5 * dist[i, j])
            ew[i, j] = min_e[i, j] * b
    tpw = gt.sum() - ew[gt].sum()
    fpw = ew[~gt].sum()
    recall = 1 - ew[gt].mean()
    precision = tpw / (tpw + fpw + EPS)
    return (1 + beta2) * recall * precision / (recall + beta2 * precision + EPS)


# -- gradients ----------------------------------------------------------------------

def central_difference(fn, tensors, step=1e-5):
    """Numerical gradient of scalar ``fn()`` w.r.t. each tensor in ``tensors`` (edited in place)."""
    grads = []
    for t in tensors:
        g = np.zeros(tuple(t.shape))
        flat = t.data.view(-1)
        for idx in range(flat.numel()):
            orig = float(flat[idx])
            flat[idx] = orig + step
            up = float(fn())
            flat[idx] = orig - step
            down = float(fn())
            flat[idx] = orig
            g.reshape(-1)[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def relative_error(analytic, numeric) -> float:
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    return float(np.max(np.abs(a - n)) / max(np.max(np.abs(n)), np.max(np.abs(a)), 1e-8))


# -- EMA ----------------------------------------------------------------------------

def ema_trace(initial: dict, student_iterates: list[dict], eta: float) -> dict:
    teacher = {k: np.array(v, dtype=np.float64) for k, v in initial.items()}
    for student in student_iterates:
        for k in teacher:
            teacher[k] = eta * teacher[k] + (1 - eta) * student[k]
    return teacher
