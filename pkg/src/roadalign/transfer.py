"""Road mask transfer with dynamic background subtraction.

The reference road annotation is warped onto the observed frame, then
pixels that disagree with the warped reference appearance (vehicles,
pedestrians, anything that moved) are detected by thresholding the
absolute difference image and removed from the mask. Refinement only
ever removes pixels.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .spatial import warp_image, warp_mask

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class RefineSettings:
    fill_hole_connectivity: int = 4
    min_blob_px: int = 25
    histogram_bins: int = 256

    def __post_init__(self):
        if self.fill_hole_connectivity not in (4, 8):
            raise ValueError("fill_hole_connectivity must be 4 or 8")
        if self.min_blob_px < 0:
            raise ValueError("min_blob_px must be non-negative")
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be at least 2")


def otsu_threshold(img, bins=256):
    """Bin-edge threshold maximizing between-class variance.

    The histogram uses `bins` equal-width cells over [0, 1]; candidate
    thresholds are the interior bin edges and ties resolve to the lowest
    edge. Foreground is everything strictly above the threshold, so a
    constant image (returned unchanged as the threshold) yields an empty
    foreground.
    """
    values = np.asarray(img, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("empty input")
    lo = values.min()
    if lo == values.max():
        return float(lo)
    hist, _ = np.histogram(values, bins=bins, range=(0.0, 1.0))
    centers = (np.arange(bins) + 0.5) / bins
    total = hist.sum()
    weighted = hist * centers
    s_total = weighted.sum()
    w0 = np.cumsum(hist)[:-1]
    s0 = np.cumsum(weighted)[:-1]
    w1 = total - w0
    s1 = s_total - s0
    ok = (w0 > 0) & (w1 > 0)
    variance = np.zeros(bins - 1)
    mu0 = np.where(w0 > 0, s0 / np.where(w0 > 0, w0, 1), 0.0)
    mu1 = np.where(w1 > 0, s1 / np.where(w1 > 0, w1, 1), 0.0)
    variance[ok] = (w0 * w1)[ok] * (mu0 - mu1)[ok] ** 2
    k = int(np.argmax(variance)) + 1  # first max = lowest edge
    return k / bins


def fill_holes(mask, connectivity=4):
    """Fill background regions not connected to the image border."""
    mask = np.asarray(mask, dtype=bool)
    structure = _STRUCTURES[connectivity]
    labels, _ = ndimage.label(~mask, structure=structure)
    border = np.concatenate([
        labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]
    ])
    border_labels = np.unique(border[border != 0])
    holes = ~mask & ~np.isin(labels, border_labels)
    return mask | holes


def remove_small_components(mask, min_px, connectivity=4):
    """Drop connected components smaller than min_px pixels."""
    mask = np.asarray(mask, dtype=bool)
    if min_px <= 1 or not mask.any():
        return mask.copy()
    labels, count = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    keep = sizes >= min_px
    keep[0] = False
    return keep[labels]


def detect_foreground(reference_warped, observed, valid, settings=RefineSettings()):
    """Foreground of the observed frame against the warped reference.

    Thresholds |warped - observed| over the valid pixels with Otsu,
    fills enclosed holes, and drops blobs below min_blob_px. Invalid
    pixels never enter the histogram and are never foreground.
    """
    ref = np.asarray(reference_warped, dtype=np.float64)
    obs = np.asarray(observed, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if ref.shape != obs.shape or ref.shape != valid.shape:
        raise ValueError("shapes differ")
    if not valid.any():
        return np.zeros_like(valid)
    diff = np.abs(ref - obs)
    threshold = otsu_threshold(diff[valid], settings.histogram_bins)
    raw = (diff > threshold) & valid
    filled = fill_holes(raw, settings.fill_hole_connectivity)
    return remove_small_components(filled, settings.min_blob_px,
                                   settings.fill_hole_connectivity)


def transfer_and_refine(reference_mask, reference_frame, observed_frame,
                        omega, intrinsics, settings=RefineSettings()):
    """Warp the reference road mask and subtract detected foreground.

    The output is always a subset of the warped mask.
    """
    transferred = warp_mask(reference_mask, omega, intrinsics)
    warped, valid = warp_image(reference_frame, omega, intrinsics)
    foreground = detect_foreground(warped, observed_frame, valid, settings)
    return transferred & ~foreground
