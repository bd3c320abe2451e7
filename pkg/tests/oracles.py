"""Independent brute-force transcriptions of the five foreground-map measures.

These are deliberately written as literal, loop-based readings of the
published definitions and share no code with covis.metrics.  The test suite
compares the package implementations against these on enumerated and seeded
grids.

Conventions pinned by the contract (identical on both sides):
  * 256 threshold levels k/255 for k = 0..255; sweep slices use the strict
    comparison pred > t so the top slice is empty and a complement
    prediction scores zero.
  * ratios take explicit zero-denominator branches instead of additive
    epsilons, so perfect inputs score exactly 1.
  * nearest-foreground lookups break distance ties toward the smaller row,
    then the smaller column.
"""
import math

import numpy as np


def _thresholds():
    return [k / 255.0 for k in range(256)]


def oracle_mae(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=bool)
    total = 0.0
    for r in range(pred.shape[0]):
        for c in range(pred.shape[1]):
            total += abs(pred[r, c] - (1.0 if gt[r, c] else 0.0))
    return total / pred.size


def oracle_f_max(pred, gt, beta2=0.3):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=bool)
    nfg = int(gt.sum())
    if nfg == 0:
        raise ValueError("undefined on empty ground truth")
    best = 0.0
    for t in _thresholds():
        pb = pred > t
        tp = float(np.logical_and(pb, gt).sum())
        pp = float(pb.sum())
        if pp == 0.0 or tp == 0.0:
            f = 0.0
        else:
            prec = tp / pp
            rec = tp / nfg
            f = (1.0 + beta2) * prec * rec / (beta2 * prec + rec)
        if f > best:
            best = f
    return best


def _gauss_kernel_7x5():
    # fspecial('gaussian', 7, 5): normalized 7x7 kernel, sigma 5
    k = [[math.exp(-(i * i + j * j) / (2.0 * 25.0)) for j in range(-3, 4)]
         for i in range(-3, 4)]
    s = sum(sum(row) for row in k)
    return [[v / s for v in row] for row in k]


def _nearest_fg(gt):
    """Per-pixel nearest foreground pixel: (dist2, row, col), row-major ties."""
    h, w = gt.shape
    fg = [(r, c) for r in range(h) for c in range(w) if gt[r, c]]
    out = {}
    for r in range(h):
        for c in range(w):
            if gt[r, c]:
                out[(r, c)] = (0, r, c)
                continue
            best = None
            for (fr, fc) in fg:  # fg is in row-major order; strict < keeps the first
                d2 = (r - fr) * (r - fr) + (c - fc) * (c - fc)
                if best is None or d2 < best[0]:
                    best = (d2, fr, fc)
            out[(r, c)] = best
    return out


def oracle_weighted_f(pred, gt):
    """Literal weighted F-beta (beta^2 = 1): diffused errors, distance decay."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=bool)
    h, w = gt.shape
    nfg = int(gt.sum())
    if nfg == 0:
        raise ValueError("undefined on empty ground truth")

    E = [[abs(pred[r, c] - (1.0 if gt[r, c] else 0.0)) for c in range(w)] for r in range(h)]
    near = _nearest_fg(gt)

    # background errors replaced by the error at the nearest foreground pixel
    Et = [[E[r][c] for c in range(w)] for r in range(h)]
    for r in range(h):
        for c in range(w):
            if not gt[r, c]:
                _, fr, fc = near[(r, c)]
                Et[r][c] = E[fr][fc]

    # zero-padded 7x7 Gaussian diffusion
    K = _gauss_kernel_7x5()
    EA = [[0.0] * w for _ in range(h)]
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for i in range(-3, 4):
                for j in range(-3, 4):
                    rr, cc = r + i, c + j
                    if 0 <= rr < h and 0 <= cc < w:
                        acc += K[i + 3][j + 3] * Et[rr][cc]
            EA[r][c] = acc

    ln_half = math.log(0.5)
    sum_fg = 0.0
    sum_bg = 0.0
    for r in range(h):
        for c in range(w):
            if gt[r, c]:
                e = EA[r][c] if EA[r][c] < E[r][c] else E[r][c]
                sum_fg += e  # B = 1 on foreground
            else:
                d = math.sqrt(near[(r, c)][0])
                b = 2.0 - math.exp(ln_half / 5.0 * d)
                sum_bg += E[r][c] * b

    R = 1.0 - sum_fg / nfg
    tpw = nfg - sum_fg
    fpw = sum_bg
    P = tpw / (tpw + fpw) if (tpw + fpw) > 0.0 else 0.0
    q = 2.0 * P * R / (P + R) if (P + R) > 0.0 else 0.0
    return min(1.0, max(0.0, q))


def _ssim_quadrant(p, g):
    n = p.size
    x = float(p.mean())
    y = float(g.mean())
    if n > 1:
        sx = float(((p - x) ** 2).sum()) / (n - 1)
        sy = float(((g - y) ** 2).sum()) / (n - 1)
        sxy = float(((p - x) * (g - y)).sum()) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if beta == 0.0:
        return 1.0 if alpha == 0.0 else 0.0
    return alpha / beta


def _object_score(vals):
    if vals.size == 0:
        return 0.0
    x = float(vals.mean())
    sigma = float(vals.std())
    return 2.0 * x / (x * x + 1.0 + 2.0 * sigma)


def oracle_s_measure(pred, gt):
    """Structure measure, alpha = 0.5, lambda = 1, round-half-up centroid."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=bool)
    h, w = gt.shape
    nfg = int(gt.sum())
    if nfg == 0:
        return min(1.0, max(0.0, 1.0 - float(pred.mean())))
    if nfg == gt.size:
        return min(1.0, max(0.0, float(pred.mean())))

    # object term
    u = nfg / gt.size
    o_fg = _object_score(pred[gt])
    o_bg = _object_score(1.0 - pred[~gt])
    s_object = u * o_fg + (1.0 - u) * o_bg

    # region term: split at the GT centroid (round half up, 0-based),
    # centroid row/column kept with the top/left quadrants
    rows, cols = np.nonzero(gt)
    cy = int(math.floor(rows.mean() + 0.5))
    cx = int(math.floor(cols.mean() + 0.5))
    area = float(h * w)
    quads = [
        (pred[: cy + 1, : cx + 1], gt[: cy + 1, : cx + 1]),
        (pred[: cy + 1, cx + 1:], gt[: cy + 1, cx + 1:]),
        (pred[cy + 1:, : cx + 1], gt[cy + 1:, : cx + 1]),
        (pred[cy + 1:, cx + 1:], gt[cy + 1:, cx + 1:]),
    ]
    w1 = quads[0][0].size / area
    w2 = quads[1][0].size / area
    w3 = quads[2][0].size / area
    w4 = 1.0 - w1 - w2 - w3
    weights = [w1, w2, w3, w4]
    s_region = 0.0
    for wt, (pq, gq) in zip(weights, quads):
        if pq.size == 0:
            continue
        s_region += wt * _ssim_quadrant(pq, gq.astype(float))

    s = 0.5 * s_object + 0.5 * s_region
    return min(1.0, max(0.0, s))


def oracle_e_measure(pred, gt):
    """Enhanced-alignment measure: max over 256 thresholds of the mean
    enhanced alignment map."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=bool)
    gtf = gt.astype(float)
    n = gt.size
    nfg = int(gt.sum())
    best = 0.0
    for t in _thresholds():
        pb = (pred > t).astype(float)
        if nfg == 0:
            score = 1.0 - float(pb.mean())
        elif nfg == n:
            score = float(pb.mean())
        else:
            phi_p = pb - pb.mean()
            phi_g = gtf - gtf.mean()
            num = 2.0 * phi_p * phi_g
            den = phi_p * phi_p + phi_g * phi_g  # > 0 everywhere for mixed GT
            align = num / den
            enhanced = ((align + 1.0) ** 2) / 4.0
            score = float(enhanced.mean())
        if score > best:
            best = score
    return best
