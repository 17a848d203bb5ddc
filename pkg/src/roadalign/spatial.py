"""Spatial registration under a small-rotation conjugate homography.

Two frames taken from (nearly) the same position differ by a camera
rotation, so pixels move along the field of the conjugated rotation
K R K^-1. For small angles that field is quadratic in the image
coordinates and linear in the three rotation angles, which makes
Gauss-Newton refinement over the angles cheap and stable.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import AlignmentError
from .imagecore import build_pyramid

MAX_ROTATION = 0.35  # radians; beyond this the small-angle model is meaningless
MIN_PIXELS = 16
MAX_STEP_HALVINGS = 8


@dataclass(frozen=True)
class RotationParams:
    """Rotation angles (radians) about the camera x, y, z axes."""

    omega_x: float = 0.0
    omega_y: float = 0.0
    omega_z: float = 0.0

    def __post_init__(self):
        for v in (self.omega_x, self.omega_y, self.omega_z):
            if not math.isfinite(v):
                raise ValueError("rotation angles must be finite")
            if abs(v) >= MAX_ROTATION:
                raise ValueError(
                    f"|angle| must stay below {MAX_ROTATION} rad, got {v}"
                )

    def as_array(self):
        return np.array([self.omega_x, self.omega_y, self.omega_z])

    def __neg__(self):
        return RotationParams(-self.omega_x, -self.omega_y, -self.omega_z)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole focal length and principal point, in pixels."""

    focal_px: float
    cx: float
    cy: float

    def __post_init__(self):
        if not self.focal_px > 0:
            raise ValueError("focal_px must be positive")
        for v in (self.cx, self.cy):
            if not math.isfinite(v):
                raise ValueError("principal point must be finite")

    def scaled(self, factor):
        """Intrinsics of a pyramid level downscaled by `factor`."""
        return CameraIntrinsics(self.focal_px / factor, self.cx / factor,
                                self.cy / factor)


@dataclass(frozen=True)
class LKSettings:
    pyramid_levels: int = 3
    max_iterations: int = 50
    convergence_eps: float = 1e-7
    robust_skip: int = 2

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.convergence_eps > 0:
            raise ValueError("convergence_eps must be positive")
        if self.robust_skip < 0:
            raise ValueError("robust_skip must be non-negative")


def motion_field(x, y, omega, intrinsics):
    """Displacement (u, v) of the rotation flow at pixel positions (x, y).

    Linear in the angles; quadratic in the re-centered coordinates.
    Accepts scalars or arrays.
    """
    f = intrinsics.focal_px
    xb = np.asarray(x, dtype=np.float64) - intrinsics.cx
    yb = np.asarray(y, dtype=np.float64) - intrinsics.cy
    wx, wy, wz = omega.omega_x, omega.omega_y, omega.omega_z
    u = (-xb * yb / f) * wx + (f + xb * xb / f) * wy - yb * wz
    v = (-f - yb * yb / f) * wx + (xb * yb / f) * wy + xb * wz
    return u, v


def warp_image(src, omega, intrinsics):
    """Backward-warp src by the rotation flow with bilinear sampling.

    Returns (warped, valid); pixels whose sampling position leaves the
    image are zero and marked invalid.
    """
    src = np.asarray(src, dtype=np.float64)
    return _kernels.warp_bilinear(
        src, omega.omega_x, omega.omega_y, omega.omega_z,
        intrinsics.focal_px, intrinsics.cx, intrinsics.cy,
    )


def warp_mask(mask, omega, intrinsics):
    """Backward-warp a boolean mask with nearest sampling; outside is False."""
    mask = np.asarray(mask, dtype=bool)
    return _kernels.warp_nearest(
        mask, omega.omega_x, omega.omega_y, omega.omega_z,
        intrinsics.focal_px, intrinsics.cx, intrinsics.cy,
    )


def ssd_objective(reference_frame, observed_frame, omega, intrinsics, border_skip=2):
    """Sum of squared residuals of warp(reference) against observed.

    Returns (sse, pixel count) over valid pixels inside the border skip.
    """
    return _kernels.warp_sse(
        reference_frame, observed_frame,
        omega.omega_x, omega.omega_y, omega.omega_z,
        intrinsics.focal_px, intrinsics.cx, intrinsics.cy, border_skip,
    )


def ssd_gradient(reference_frame, observed_frame, omega, intrinsics, border_skip=2):
    """Analytic gradient of the SSD objective with respect to the angles.

    Uses the warped-image gradients, so it equals the true derivative at
    omega = 0 and degrades gracefully nearby. The pixel set matches
    `ssd_objective` whenever the whole skip region warps validly.
    """
    _, grad, _, _ = _kernels.lk_accumulate(
        reference_frame, observed_frame,
        omega.omega_x, omega.omega_y, omega.omega_z,
        intrinsics.focal_px, intrinsics.cx, intrinsics.cy, border_skip,
    )
    return 2.0 * grad


def _mse(ref, obs, omega_arr, f, cx, cy, skip):
    sse, n = _kernels.warp_sse(ref, obs, omega_arr[0], omega_arr[1],
                               omega_arr[2], f, cx, cy, skip)
    if n == 0:
        return math.inf, 0
    return sse / n, n


def lk_align(reference_frame, observed_frame, intrinsics, settings=None, init=None):
    """Estimate the rotation aligning reference onto observed.

    Coarse-to-fine Gauss-Newton over the three angles. Each candidate
    step must not increase the mean squared residual; on increase the
    step is halved up to 8 times, after which the level ends. A level
    also ends once the accepted step norm drops below convergence_eps.

    Returns (RotationParams, mean squared residual on the finest level).
    Raises AlignmentError on singular normal equations, non-finite
    values, or estimates leaving the small-rotation range.
    """
    settings = settings or LKSettings()
    ref = np.asarray(reference_frame, dtype=np.float64)
    obs = np.asarray(observed_frame, dtype=np.float64)
    if ref.shape != obs.shape:
        raise ValueError("frame shapes differ")
    omega = (init or RotationParams()).as_array().copy()
    skip = settings.robust_skip

    pyr_ref = build_pyramid(ref, settings.pyramid_levels)
    pyr_obs = build_pyramid(obs, settings.pyramid_levels)
    levels = min(len(pyr_ref), len(pyr_obs))

    mse = math.inf
    for level in range(levels - 1, -1, -1):
        k = intrinsics.scaled(2 ** level)
        r_img = pyr_ref[level]
        o_img = pyr_obs[level]
        f, cx, cy = k.focal_px, k.cx, k.cy
        mse, n = _mse(r_img, o_img, omega, f, cx, cy, skip)
        if n < MIN_PIXELS:
            raise AlignmentError("too few valid pixels for alignment")
        for _ in range(settings.max_iterations):
            hess, grad, _, n_acc = _kernels.lk_accumulate(
                r_img, o_img, omega[0], omega[1], omega[2], f, cx, cy, skip
            )
            if n_acc < MIN_PIXELS:
                raise AlignmentError("too few valid pixels for alignment")
            try:
                delta = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                raise AlignmentError(
                    "singular normal equations (textureless input)"
                ) from None
            if not np.all(np.isfinite(delta)):
                raise AlignmentError("non-finite update step")
            accepted = False
            for _ in range(MAX_STEP_HALVINGS + 1):
                candidate = omega + delta
                cand_mse, cand_n = _mse(r_img, o_img, candidate, f, cx, cy, skip)
                if cand_n >= MIN_PIXELS and cand_mse <= mse:
                    omega = candidate
                    mse = cand_mse
                    accepted = True
                    break
                delta = delta / 2.0
            if not accepted:
                break
            if np.linalg.norm(delta) < settings.convergence_eps:
                break

    if not math.isfinite(mse):
        raise AlignmentError("non-finite residual")
    if np.any(np.abs(omega) >= MAX_ROTATION):
        raise AlignmentError("estimate left the small-rotation range")
    return RotationParams(*omega), float(mse)
