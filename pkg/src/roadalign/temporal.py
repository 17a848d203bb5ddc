"""On-line temporal synchronization by fixed-lag smoothing.

Observed frames are matched to reference frame labels with a hidden
chain model: the label of frame k+1 is never smaller than the label of
frame k (the vehicle does not drive backward), and each frame emits its
descriptor with a Gaussian density in the similarity to the labeled
reference frame. Inference runs max-product over a sliding window of the
most recent frames and commits the label of the frame `lag_l` steps in
the past, so every frame's answer arrives with a fixed small latency.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .descriptor import (
    DescriptorBank,
    DescriptorParams,
    compute_descriptor,
    likelihood_from_similarity,
    similarity_to_bank,
)
from .errors import SyncLossError

BRUTE_FORCE_MAX_ROWS = 6
BRUTE_FORCE_MAX_LABELS = 8


@dataclass(frozen=True)
class SyncConfig:
    label_count_nr: int
    lag_l: int = 5
    window_L: int = 10
    beta: float = 1.0
    candidate_band: int | None = None

    def __post_init__(self):
        if self.label_count_nr < 1:
            raise ValueError("label_count_nr must be at least 1")
        if self.lag_l < 0:
            raise ValueError("lag_l must be non-negative")
        if self.window_L < self.lag_l:
            raise ValueError("window_L must be at least lag_l")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.candidate_band is not None and self.candidate_band < 0:
            raise ValueError("candidate_band must be non-negative")


def transition_prior(x_next, x_prev, beta, n_r=None):
    """Monotone transition weight: beta when x_next >= x_prev, else 0."""
    for x in (x_next, x_prev):
        if x < 1 or (n_r is not None and x > n_r):
            raise ValueError(f"label {x} out of range")
    return beta if x_next >= x_prev else 0.0


class ObservationWindow:
    """Ring buffer of the most recent (frame index, descriptor) pairs."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self._items = deque(maxlen=capacity)

    def push(self, index, descriptor):
        if self._items and index != self._items[-1][0] + 1:
            raise ValueError("window indices must be contiguous")
        self._items.append((index, descriptor))

    def __len__(self):
        return len(self._items)

    @property
    def indices(self):
        return [i for i, _ in self._items]

    @property
    def descriptors(self):
        return [d for _, d in self._items]


def build_likelihood_table(window, reference_descriptors, cfg, params, center=None):
    """Observation likelihood of every window frame against every label.

    Row k scores window frame k, column j scores reference label j+1.
    When `cfg.candidate_band` is set and a band center label is given,
    entries outside [center - band, center + band] are zeroed.
    """
    if isinstance(reference_descriptors, DescriptorBank):
        bank = reference_descriptors
    else:
        bank = DescriptorBank(reference_descriptors)
    if len(bank) != cfg.label_count_nr:
        raise ValueError("reference count does not match label_count_nr")
    descs = window.descriptors if isinstance(window, ObservationWindow) else list(window)
    if not descs:
        raise ValueError("empty observation window")
    rows = [
        likelihood_from_similarity(similarity_to_bank(d, bank, params.max_shift), params)
        for d in descs
    ]
    table = np.stack(rows)
    if cfg.candidate_band is not None and center is not None:
        labels = np.arange(1, cfg.label_count_nr + 1)
        outside = np.abs(labels - center) > cfg.candidate_band
        table[:, outside] = 0.0
    return table


def _log_messages_forward(log_table, log_beta, log_prior):
    rows = np.empty_like(log_table)
    rows[0] = log_table[0] + log_prior
    for k in range(1, log_table.shape[0]):
        rows[k] = log_table[k] + log_beta + np.maximum.accumulate(rows[k - 1])
    return rows


def fixed_lag_infer(table, cfg, min_label=1):
    """MAP label and score of the lagged frame of a window.

    The lagged frame is `cfg.lag_l` rows before the newest row (the
    oldest row during warm-up when fewer rows exist). Products are
    evaluated as sums of logarithms; the start label carries a uniform
    prior over all labels, each step a factor beta, and the whole table a
    monotone label constraint. Ties break toward the smallest label.
    Labels below `min_label` are excluded from the final argmax.

    Raises SyncLossError when no feasible monotone labeling remains.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] == 0:
        raise ValueError("table must be a non-empty 2-d array")
    if table.shape[1] != cfg.label_count_nr:
        raise ValueError("table width does not match label_count_nr")
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        raise ValueError("table entries must be finite and non-negative")
    rows, n = table.shape
    lag_index = max(0, rows - 1 - cfg.lag_l)
    with np.errstate(divide="ignore"):
        lt = np.log(table)
    log_beta = math.log(cfg.beta)
    log_prior = -math.log(n)

    fwd = _log_messages_forward(lt, log_beta, log_prior)
    bwd = np.zeros(n)
    for k in range(rows - 2, lag_index - 1, -1):
        t = lt[k + 1] + log_beta + bwd
        bwd = np.maximum.accumulate(t[::-1])[::-1]
    scores = fwd[lag_index] + bwd
    if min_label > 1:
        scores = scores.copy()
        scores[: min_label - 1] = -np.inf
    best = scores.max()
    if best == -np.inf:
        raise SyncLossError("no feasible monotone labeling for this window")
    label = int(np.argmax(scores)) + 1
    return label, float(np.exp(best))


def map_sequence(table, cfg):
    """Whole-window MAP label sequence (offline decode).

    Same chain model as `fixed_lag_infer` but decodes every row at once
    by backtracking; used when the label window spans the full sequence.
    Ties prefer smaller labels at each step.
    """
    table = np.asarray(table, dtype=np.float64)
    rows, n = table.shape
    with np.errstate(divide="ignore"):
        lt = np.log(table)
    log_beta = math.log(cfg.beta)
    fwd = lt[0] - math.log(n)
    pointers = []
    for k in range(1, rows):
        best_val = -np.inf
        best_idx = 0
        prefix_val = np.empty(n)
        prefix_idx = np.empty(n, dtype=np.int64)
        for j in range(n):
            if fwd[j] > best_val:
                best_val = fwd[j]
                best_idx = j
            prefix_val[j] = best_val
            prefix_idx[j] = best_idx
        pointers.append(prefix_idx)
        fwd = lt[k] + log_beta + prefix_val
    if fwd.max() == -np.inf:
        raise SyncLossError("no feasible monotone labeling for this window")
    labels = np.empty(rows, dtype=np.int64)
    labels[-1] = int(np.argmax(fwd))
    for k in range(rows - 2, -1, -1):
        labels[k] = pointers[k][labels[k + 1]]
    return labels + 1


def brute_force_map(table, cfg):
    """Exhaustive MAP oracle over all non-decreasing label sequences.

    Only meant for small instances: at most 6 rows and 8 labels. Ties
    resolve to the lexicographically smallest sequence. Returns 1-based
    labels.
    """
    table = np.asarray(table, dtype=np.float64)
    rows, n = table.shape
    if rows > BRUTE_FORCE_MAX_ROWS or n > BRUTE_FORCE_MAX_LABELS:
        raise ValueError("instance too large for the brute-force oracle")
    seqs = np.array(list(combinations_with_replacement(range(n), rows)))
    with np.errstate(divide="ignore"):
        lt = np.log(table)
    totals = lt[np.arange(rows), seqs].sum(axis=1)
    totals += (rows - 1) * math.log(cfg.beta) - math.log(n)
    best = int(np.argmax(totals))  # first max = lexicographically smallest
    return [int(x) + 1 for x in seqs[best]]


@dataclass(frozen=True)
class SyncEmission:
    observed_index: int
    label: int
    score: float


@dataclass
class SyncResult:
    """Emitted (observed frame, reference label, score) triples, in order."""

    emitted: list = field(default_factory=list)

    def append(self, emission):
        # indices may gap when a frame's inference was lost, but they
        # must advance, and labels must never decrease
        if self.emitted:
            last = self.emitted[-1]
            if emission.observed_index <= last.observed_index:
                raise ValueError("emissions must advance the observed index")
            if emission.label < last.label:
                raise ValueError("emitted labels must be non-decreasing")
        self.emitted.append(emission)

    def labels(self):
        return [e.label for e in self.emitted]

    def csv_lines(self):
        yield "observed_index,reference_label,score"
        for e in self.emitted:
            yield f"{e.observed_index},{e.label},{e.score:.9g}"


class OnlineSynchronizer:
    """Incremental fixed-lag synchronizer.

    Push descriptors in frame order; once at least lag_l + 1 frames have
    arrived, each push emits the label of the frame lag_l steps back.
    Labels never decrease across emissions: the previous emission both
    floors the final argmax and, when a candidate band is configured,
    centers it.
    """

    def __init__(self, reference_descriptors, cfg, params=DescriptorParams()):
        if isinstance(reference_descriptors, DescriptorBank):
            self._bank = reference_descriptors
        else:
            self._bank = DescriptorBank(reference_descriptors)
        if len(self._bank) != cfg.label_count_nr:
            raise ValueError("reference count does not match label_count_nr")
        self._cfg = cfg
        self._params = params
        self._window = ObservationWindow(cfg.window_L + 1)
        self._next_index = 0
        self._last_label = None
        self.result = SyncResult()

    def push(self, descriptor):
        index = self._next_index
        self._next_index += 1
        self._window.push(index, descriptor)
        if index < self._cfg.lag_l:
            return None
        table = build_likelihood_table(
            self._window, self._bank, self._cfg, self._params,
            center=self._last_label,
        )
        label, score = fixed_lag_infer(
            table, self._cfg, min_label=self._last_label or 1
        )
        emission = SyncEmission(index - self._cfg.lag_l, label, score)
        self.result.append(emission)
        self._last_label = label
        return emission


def synchronize_online(frames, reference_descriptors, cfg, params=DescriptorParams()):
    """Synchronize a stream of grayscale frames against a reference ride.

    Descriptors are computed per frame and fed through an
    OnlineSynchronizer; sync-loss propagates to the caller. Streams
    shorter than lag_l + 1 frames emit nothing.
    """
    sync = OnlineSynchronizer(reference_descriptors, cfg, params)
    for frame in frames:
        sync.push(compute_descriptor(frame, params))
    return sync.result
