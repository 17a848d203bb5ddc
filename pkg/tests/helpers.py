"""Shared oracles and inputs for the test suite.

Oracles are deliberately written as plain loops with no code shared with
the implementation, so the two can only agree by computing the same
thing.
"""

import itertools
import math

import numpy as np

from roadalign.imagecore import gaussian_smooth


def textured_image(seed, shape=(120, 160)):
    """Smooth random field rescaled to [0, 1]; rich gradient signal."""
    rng = np.random.default_rng(seed)
    img = gaussian_smooth(rng.random(shape), 3.0)
    return (img - img.min()) / (img.max() - img.min())


def naive_monotone_best(table, beta):
    """Best non-decreasing labeling by literal enumeration.

    A sequence scores uniform-prior / n_labels times the product of its
    per-row likelihoods times beta per transition. Ties resolve to the
    lexicographically smallest sequence (enumeration order).
    """
    rows, n = table.shape
    best_seq = None
    best_score = -math.inf
    for seq in itertools.combinations_with_replacement(range(n), rows):
        score = 1.0 / n * beta ** (rows - 1)
        for k in range(rows):
            score *= table[k, seq[k]]
        if score > best_score:
            best_seq = seq
            best_score = score
    return [s + 1 for s in best_seq], best_score


def naive_similarity(a, b, max_shift=2):
    """Descriptor similarity by explicit per-cell overlap loops."""
    if a.is_zero or b.is_zero:
        return 0.0
    h, w = a.shape
    best = -math.inf
    for v in range(-max_shift, max_shift + 1):
        for u in range(-max_shift, max_shift + 1):
            num = na = nb = 0.0
            hit = False
            for y in range(h):
                for x in range(w):
                    yb, xb = y - v, x - u
                    if 0 <= yb < h and 0 <= xb < w:
                        hit = True
                        num += a.dx[y, x] * b.dx[yb, xb]
                        num += a.dy[y, x] * b.dy[yb, xb]
                        na += a.dx[y, x] ** 2 + a.dy[y, x] ** 2
                        nb += b.dx[yb, xb] ** 2 + b.dy[yb, xb] ** 2
            if not hit:
                continue
            score = num / math.sqrt(na) / math.sqrt(nb) if na > 0 and nb > 0 else 0.0
            best = max(best, score)
    if best == -math.inf:
        return 0.0
    return min(1.0, max(-1.0, best))


def naive_otsu(values, bins=256):
    """Between-class variance maximization, one candidate edge at a time."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.min() == values.max():
        return float(values.min())
    hist, _ = np.histogram(values, bins=bins, range=(0.0, 1.0))
    centers = (np.arange(bins) + 0.5) / bins
    total = hist.sum()
    best_k, best_var = None, -math.inf
    for k in range(1, bins):
        w0 = int(hist[:k].sum())
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        mu0 = float((hist[:k] * centers[:k]).sum()) / w0
        mu1 = float((hist[k:] * centers[k:]).sum()) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_k, best_var = k, var
    return best_k / bins


def naive_downsample(img, factor):
    """Block means with partial edge blocks, straight nested loops."""
    h, w = img.shape
    oh = -(-h // factor)
    ow = -(-w // factor)
    out = np.empty((oh, ow))
    for i in range(oh):
        for j in range(ow):
            block = img[i * factor:(i + 1) * factor, j * factor:(j + 1) * factor]
            out[i, j] = block.mean()
    return out
