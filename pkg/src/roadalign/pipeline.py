"""Ride-level orchestration: synchronize, register, transfer, evaluate.

Frame directories hold frame_%06d.ppm images and, for the reference
ride, mask_%06d.pgm road annotations. Labels are 1-based; reference
label x corresponds to the 0-based reference frame index x - 1.
"""

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .descriptor import DescriptorBank, compute_descriptor
from .errors import AlignmentError, DataError, SyncLossError
from .evaluate import (MEASURES, aggregate, contingency, format_mean_std,
                       metrics)
from .imagecore import load_image, load_mask, rgb_to_gray, save_mask
from .invariant import InvariantDirection, rgb_to_invariant
from .spatial import RotationParams, lk_align, warp_mask
from .temporal import SyncConfig, build_likelihood_table, map_sequence
from .temporal import OnlineSynchronizer
from .transfer import transfer_and_refine

logger = logging.getLogger(__name__)

SYNC_HEADER = "observed_index,reference_label,score,omega_x,omega_y,omega_z,residual"

_FRAME_RE = re.compile(r"frame_(\d+)\.ppm$")
_MASK_RE = re.compile(r"mask_(\d+)\.pgm$")


def list_frames(directory):
    """Sorted (index, path) pairs of frame files; empty dir is a DataError."""
    return _list_indexed(directory, _FRAME_RE, "frame")


def list_masks(directory):
    return _list_indexed(directory, _MASK_RE, "mask")


def _list_indexed(directory, pattern, kind):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    found = []
    for path in directory.iterdir():
        m = pattern.search(path.name)
        if m:
            found.append((int(m.group(1)), path))
    if not found:
        raise DataError(f"no {kind} files in {directory}")
    found.sort()
    return found


def convert_frame(img, space, direction):
    """Project a loaded frame into the requested working space."""
    if space == "invariant":
        if img.ndim != 3:
            raise DataError("invariant space requires color frames")
        return rgb_to_invariant(img, direction)
    return rgb_to_gray(img) if img.ndim == 3 else img


@dataclass
class ReferenceRide:
    feature: list   # per-frame image in the sync/registration space
    diff: list      # per-frame image in the background-subtraction space
    masks: list
    bank: DescriptorBank


def load_reference(ref_dir, cfg):
    """Load reference frames + masks and precompute their descriptors."""
    direction = InvariantDirection(cfg.theta)
    params = cfg.descriptor_params()
    feature, diff, masks = [], [], []
    for index, path in list_frames(ref_dir):
        img = load_image(path)
        feat = convert_frame(img, cfg.feature_space, direction)
        feature.append(feat)
        diff.append(feat if cfg.diff_space == cfg.feature_space
                    else convert_frame(img, cfg.diff_space, direction))
        mask_path = path.with_name(f"mask_{index:06d}.pgm")
        if not mask_path.exists():
            raise DataError(f"missing reference mask: {mask_path}")
        mask = load_mask(mask_path)
        if mask.shape != feat.shape:
            raise DataError(f"mask/frame shape mismatch at index {index}")
        masks.append(mask)
    bank = DescriptorBank([compute_descriptor(f, params) for f in feature])
    return ReferenceRide(feature, diff, masks, bank)


@dataclass(frozen=True)
class AlignRow:
    observed_index: int
    label: int
    score: float
    omega: RotationParams
    residual: float

    def csv_line(self):
        return (f"{self.observed_index},{self.label},{self.score:.9g},"
                f"{self.omega.omega_x:.9g},{self.omega.omega_y:.9g},"
                f"{self.omega.omega_z:.9g},{self.residual:.9g}")


def _register_and_transfer(ref, obs_feat, obs_diff, label, cfg, intrinsics,
                           refine):
    """LK-align one matched pair and carry the road mask across."""
    ref_feat = ref.feature[label - 1]
    try:
        omega, residual = lk_align(ref_feat, obs_feat, intrinsics,
                                   cfg.lk_settings())
    except AlignmentError as exc:
        logger.warning("registration failed (%s); falling back to identity",
                       exc)
        omega, residual = RotationParams(), math.nan
    if refine:
        mask = transfer_and_refine(ref.masks[label - 1], ref.diff[label - 1],
                                   obs_diff, omega, intrinsics,
                                   cfg.refine_settings())
    else:
        mask = warp_mask(ref.masks[label - 1], omega, intrinsics)
    return omega, residual, mask


def _write_sync_csv(out_dir, rows):
    lines = [SYNC_HEADER] + [r.csv_line() for r in rows]
    (Path(out_dir) / "sync.csv").write_text("\n".join(lines) + "\n")


def run_align(ref_dir, obs_dir, out_dir, cfg, refine=True, on_emit=None):
    """On-line mode: stream observed frames with a fixed lag.

    The mask for observed frame t is produced while frame t + lag is
    being processed and lands in out_dir/mask_%06d.pgm under t's index;
    the trailing lag frames therefore get no mask. Sync losses and
    registration failures skip the frame and the stream continues.
    `on_emit(push_index, emission)` runs as each label is emitted.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ref = load_reference(ref_dir, cfg)
    direction = InvariantDirection(cfg.theta)
    params = cfg.descriptor_params()
    intrinsics = None
    sync = OnlineSynchronizer(ref.bank, cfg.sync_config(len(ref.bank)), params)

    rows = []
    pending = {}
    losses = 0
    for t, path in list_frames(obs_dir):
        img = load_image(path)
        feat = convert_frame(img, cfg.feature_space, direction)
        obs_diff = (feat if cfg.diff_space == cfg.feature_space
                    else convert_frame(img, cfg.diff_space, direction))
        if intrinsics is None:
            intrinsics = cfg.intrinsics(feat.shape[1], feat.shape[0])
        pending[t] = (feat, obs_diff)
        try:
            emission = sync.push(compute_descriptor(feat, params))
        except SyncLossError as exc:
            losses += 1
            logger.warning("sync lost at frame %d (%s); frame skipped", t, exc)
            emission = None
        if emission is not None:
            if on_emit is not None:
                on_emit(t, emission)
            obs_feat, diff_img = pending[emission.observed_index]
            omega, residual, mask = _register_and_transfer(
                ref, obs_feat, diff_img, emission.label, cfg, intrinsics,
                refine)
            save_mask(mask, out / f"mask_{emission.observed_index:06d}.pgm")
            rows.append(AlignRow(emission.observed_index, emission.label,
                                 emission.score, omega, residual))
        for k in [k for k in pending if k <= t - cfg.lag]:
            del pending[k]
    _write_sync_csv(out, rows)
    if losses:
        logger.warning("%d frame(s) skipped due to sync loss", losses)
    return rows


def run_groundtruth(ref_dir, obs_dir, out_dir, cfg, refine=True):
    """Off-line mode: decode the whole sequence jointly, mask every frame.

    The label window spans the full observed ride, so there is no lag
    and no candidate band (a configured band is ignored with a warning).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.band is not None:
        logger.warning("candidate band ignored in ground-truth mode")
    ref = load_reference(ref_dir, cfg)
    direction = InvariantDirection(cfg.theta)
    params = cfg.descriptor_params()

    indexed = list_frames(obs_dir)
    feats, diffs = [], []
    for _, path in indexed:
        img = load_image(path)
        feat = convert_frame(img, cfg.feature_space, direction)
        feats.append(feat)
        diffs.append(feat if cfg.diff_space == cfg.feature_space
                     else convert_frame(img, cfg.diff_space, direction))
    intrinsics = cfg.intrinsics(feats[0].shape[1], feats[0].shape[0])

    full_cfg = SyncConfig(label_count_nr=len(ref.bank), lag_l=0,
                          window_L=max(len(feats) - 1, 0), beta=cfg.beta,
                          candidate_band=None)
    descs = [compute_descriptor(f, params) for f in feats]
    table = build_likelihood_table(descs, ref.bank, full_cfg, params)
    labels = map_sequence(table, full_cfg)

    rows = []
    for (t, _), feat, diff_img, label in zip(indexed, feats, diffs, labels):
        label = int(label)
        omega, residual, mask = _register_and_transfer(
            ref, feat, diff_img, label, cfg, intrinsics, refine)
        save_mask(mask, out / f"mask_{t:06d}.pgm")
        rows.append(AlignRow(t, label, float(table[len(rows), label - 1]),
                             omega, residual))
    _write_sync_csv(out, rows)
    return rows


def run_eval(result_dir, truth_dir, out_dir=None):
    """Score result masks against truth masks sharing their frame index.

    Every result mask must have a matching truth mask; missing truths
    are a DataError listing the offending frames. Returns (per-frame
    MetricSet list, aggregate dict). Writes metrics.csv when out_dir is
    given.
    """
    results = list_masks(result_dir)
    truth_paths = dict(list_masks(truth_dir))
    missing = [str(i) for i, _ in results if i not in truth_paths]
    if missing:
        raise DataError("no truth mask for frame(s): " + ", ".join(missing))

    per_frame = []
    lines = ["frame," + ",".join(MEASURES)]
    for i, path in results:
        result = load_mask(path)
        truth = load_mask(truth_paths[i])
        if result.shape != truth.shape:
            raise DataError(f"mask shape mismatch at frame {i}")
        m = metrics(contingency(result, truth))
        per_frame.append(m)
        cells = ["" if getattr(m, name) is None else f"{getattr(m, name):.6f}"
                 for name in MEASURES]
        lines.append(f"{i}," + ",".join(cells))
    agg = aggregate(per_frame)
    lines.append("summary," + ",".join(
        format_mean_std(*agg[name]) for name in MEASURES))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    return per_frame, agg
