import numpy as np
import pytest
from helpers import naive_monotone_best, textured_image

from roadalign.descriptor import DescriptorParams, compute_descriptor
from roadalign.errors import SyncLossError
from roadalign.temporal import (ObservationWindow, OnlineSynchronizer,
                                SyncConfig, SyncEmission, SyncResult,
                                brute_force_map, build_likelihood_table,
                                fixed_lag_infer, map_sequence,
                                synchronize_online, transition_prior)

PARAMS = DescriptorParams(smooth_sigma=1.5, downsample_factor=8, max_shift=2)


def _frames(count, start=0, step=1, shape=(60, 80)):
    """Distinct textured frames; frame i is deterministic in i alone."""
    return [textured_image(1000 + start + step * i, shape) for i in range(count)]


def _descriptors(frames):
    return [compute_descriptor(f, PARAMS) for f in frames]


# --- transition prior -------------------------------------------------------

def test_transition_prior_monotone_rule():
    assert transition_prior(5, 5, 2.0) == 2.0
    assert transition_prior(6, 5, 2.0) == 2.0
    assert transition_prior(3, 5, 2.0) == 0.0
    with pytest.raises(ValueError):
        transition_prior(0, 1, 1.0)
    with pytest.raises(ValueError):
        transition_prior(9, 1, 1.0, n_r=8)


# --- config and window ------------------------------------------------------

def test_sync_config_validation():
    SyncConfig(label_count_nr=5, lag_l=0, window_L=0)
    with pytest.raises(ValueError):
        SyncConfig(label_count_nr=0)
    with pytest.raises(ValueError):
        SyncConfig(label_count_nr=5, lag_l=-1)
    with pytest.raises(ValueError):
        SyncConfig(label_count_nr=5, lag_l=6, window_L=5)
    with pytest.raises(ValueError):
        SyncConfig(label_count_nr=5, beta=0.0)
    with pytest.raises(ValueError):
        SyncConfig(label_count_nr=5, candidate_band=-2)


def test_observation_window_evicts_oldest():
    w = ObservationWindow(3)
    for i in range(5):
        w.push(i, f"d{i}")
    assert len(w) == 3
    assert w.indices == [2, 3, 4]
    assert w.descriptors == ["d2", "d3", "d4"]


def test_observation_window_requires_contiguous_indices():
    w = ObservationWindow(3)
    w.push(0, "a")
    with pytest.raises(ValueError):
        w.push(2, "b")
    with pytest.raises(ValueError):
        ObservationWindow(0)


# --- likelihood table -------------------------------------------------------

def test_table_diagonal_dominates_for_self_sync():
    frames = _frames(4)
    descs = _descriptors(frames)
    cfg = SyncConfig(label_count_nr=4, lag_l=1, window_L=3)
    table = build_likelihood_table(descs, descs, cfg, PARAMS)
    assert table.shape == (4, 4)
    assert np.all(table > 0)
    for k in range(4):
        assert np.argmax(table[k]) == k


def test_table_constant_frames_score_equally():
    flat = [np.full((60, 80), 0.5)] * 3
    ref = _descriptors(_frames(4))
    cfg = SyncConfig(label_count_nr=4, lag_l=1, window_L=3)
    table = build_likelihood_table(_descriptors(flat), ref, cfg, PARAMS)
    # a constant frame has the zero descriptor: same similarity (0) everywhere
    assert np.allclose(table, table[0, 0])


def test_table_candidate_band_zeroes_far_labels():
    descs = _descriptors(_frames(2))
    ref = _descriptors(_frames(9))
    cfg = SyncConfig(label_count_nr=9, lag_l=1, window_L=3, candidate_band=2)
    table = build_likelihood_table(descs, ref, cfg, PARAMS, center=5)
    labels = np.arange(1, 10)
    assert np.all(table[:, np.abs(labels - 5) > 2] == 0.0)
    assert np.all(table[:, np.abs(labels - 5) <= 2] > 0.0)
    # without a center the band is inactive
    full = build_likelihood_table(descs, ref, cfg, PARAMS)
    assert np.all(full > 0)


def test_table_validates_reference_count():
    descs = _descriptors(_frames(2))
    cfg = SyncConfig(label_count_nr=5, lag_l=1, window_L=3)
    with pytest.raises(ValueError):
        build_likelihood_table(descs, descs, cfg, PARAMS)
    with pytest.raises(ValueError):
        build_likelihood_table([], _descriptors(_frames(5)), cfg, PARAMS)


# --- fixed-lag inference ----------------------------------------------------

def test_fixed_lag_three_frame_case():
    table = np.array([[0.9, 0.05, 0.05],
                      [0.05, 0.9, 0.05],
                      [0.05, 0.05, 0.9]])
    cfg = SyncConfig(label_count_nr=3, lag_l=1, window_L=2)
    label, score = fixed_lag_infer(table, cfg)
    assert label == 2
    best_labels, best_score = naive_monotone_best(table, 1.0)
    assert best_labels == [1, 2, 3]
    assert score == pytest.approx(best_score, rel=1e-12)


def test_fixed_lag_warm_up_uses_oldest_row():
    table = np.array([[0.1, 0.8, 0.1]])
    cfg = SyncConfig(label_count_nr=3, lag_l=2, window_L=4)
    label, score = fixed_lag_infer(table, cfg)
    assert label == 2
    assert score == pytest.approx(0.8 / 3)


def test_fixed_lag_matches_enumeration_on_random_tables():
    rng = np.random.default_rng(20)
    for _ in range(150):
        rows = int(rng.integers(1, 5))
        n = int(rng.integers(1, 6))
        lag = int(rng.integers(0, 4))
        beta = float(rng.uniform(0.5, 2.0))
        table = rng.uniform(0.05, 1.0, size=(rows, n))
        cfg = SyncConfig(label_count_nr=n, lag_l=lag, window_L=max(lag, 4),
                         beta=beta)
        label, score = fixed_lag_infer(table, cfg)
        best_labels, best_score = naive_monotone_best(table, beta)
        lag_index = max(0, rows - 1 - lag)
        assert label == best_labels[lag_index]
        assert score == pytest.approx(best_score, rel=1e-9)


def test_fixed_lag_tie_breaks_to_smallest_label():
    table = np.ones((2, 4))
    cfg = SyncConfig(label_count_nr=4, lag_l=1, window_L=2)
    label, _ = fixed_lag_infer(table, cfg)
    assert label == 1
    label, _ = fixed_lag_infer(table, cfg, min_label=3)
    assert label == 3


def test_fixed_lag_scale_invariance():
    rng = np.random.default_rng(21)
    table = rng.uniform(0.05, 1.0, size=(4, 5))
    cfg = SyncConfig(label_count_nr=5, lag_l=2, window_L=4)
    label, score = fixed_lag_infer(table, cfg)
    label2, score2 = fixed_lag_infer(table * 137.0, cfg)
    assert label2 == label
    assert score2 == pytest.approx(score * 137.0 ** 4, rel=1e-9)


def test_fixed_lag_signals_sync_loss():
    cfg = SyncConfig(label_count_nr=3, lag_l=1, window_L=2)
    with pytest.raises(SyncLossError):
        fixed_lag_infer(np.zeros((3, 3)), cfg)
    # feasible labelings exist but the monotone constraint kills them all
    with pytest.raises(SyncLossError):
        fixed_lag_infer(np.array([[0.0, 1.0], [1.0, 0.0]]),
                        SyncConfig(label_count_nr=2, lag_l=1, window_L=2))
    # min_label floor can exclude every feasible label
    with pytest.raises(SyncLossError):
        fixed_lag_infer(np.array([[1.0, 0.0]]),
                        SyncConfig(label_count_nr=2, lag_l=0, window_L=2),
                        min_label=2)


def test_fixed_lag_input_validation():
    cfg = SyncConfig(label_count_nr=3, lag_l=1, window_L=2)
    with pytest.raises(ValueError):
        fixed_lag_infer(np.ones((0, 3)), cfg)
    with pytest.raises(ValueError):
        fixed_lag_infer(np.ones((2, 4)), cfg)
    with pytest.raises(ValueError):
        fixed_lag_infer(np.array([[0.5, -0.1, 0.2]]), cfg)
    with pytest.raises(ValueError):
        fixed_lag_infer(np.array([[0.5, np.inf, 0.2]]), cfg)


# --- offline decodes --------------------------------------------------------

def test_brute_force_matches_enumeration():
    rng = np.random.default_rng(22)
    for _ in range(60):
        rows = int(rng.integers(1, 5))
        n = int(rng.integers(1, 6))
        beta = float(rng.uniform(0.5, 2.0))
        table = rng.uniform(0.0, 1.0, size=(rows, n))
        table[table < 0.15] = 0.0  # exercise infeasible entries
        if not np.all(table.max(axis=1) > 0):
            continue
        cfg = SyncConfig(label_count_nr=n, lag_l=1, window_L=4, beta=beta)
        assert brute_force_map(table, cfg) == naive_monotone_best(table, beta)[0]


def test_brute_force_rejects_large_instances():
    cfg = SyncConfig(label_count_nr=9, lag_l=1, window_L=10)
    with pytest.raises(ValueError):
        brute_force_map(np.ones((3, 9)), cfg)
    with pytest.raises(ValueError):
        brute_force_map(np.ones((7, 5)),
                        SyncConfig(label_count_nr=5, lag_l=1, window_L=10))


def test_map_sequence_matches_brute_force():
    rng = np.random.default_rng(23)
    for _ in range(80):
        rows = int(rng.integers(1, 6))
        n = int(rng.integers(1, 7))
        beta = float(rng.uniform(0.5, 2.0))
        table = rng.uniform(0.05, 1.0, size=(rows, n))
        cfg = SyncConfig(label_count_nr=n, lag_l=1, window_L=8, beta=beta)
        got = map_sequence(table, cfg)
        assert list(got) == brute_force_map(table, cfg)
        assert np.all(np.diff(got) >= 0)


def test_map_sequence_uniform_table_returns_ones():
    cfg = SyncConfig(label_count_nr=4, lag_l=1, window_L=6)
    assert list(map_sequence(np.ones((5, 4)), cfg)) == [1, 1, 1, 1, 1]
    assert brute_force_map(np.ones((4, 4)), cfg) == [1, 1, 1, 1]


def test_map_sequence_signals_sync_loss():
    cfg = SyncConfig(label_count_nr=2, lag_l=1, window_L=4)
    with pytest.raises(SyncLossError):
        map_sequence(np.array([[0.0, 1.0], [1.0, 0.0]]), cfg)


# --- emission bookkeeping ---------------------------------------------------

def test_sync_result_invariants():
    r = SyncResult()
    r.append(SyncEmission(0, 1, 0.5))
    r.append(SyncEmission(1, 3, 0.4))
    r.append(SyncEmission(3, 3, 0.4))  # gap after a lost frame is fine
    assert r.labels() == [1, 3, 3]
    with pytest.raises(ValueError):
        r.append(SyncEmission(3, 4, 0.1))
    with pytest.raises(ValueError):
        r.append(SyncEmission(4, 2, 0.1))
    lines = list(r.csv_lines())
    assert lines[0] == "observed_index,reference_label,score"
    assert lines[1] == "0,1,0.5"


# --- online synchronizer ----------------------------------------------------

def test_online_self_sync_recovers_identity():
    frames = _frames(10)
    ref = _descriptors(frames)
    cfg = SyncConfig(label_count_nr=10, lag_l=2, window_L=4)
    sync = OnlineSynchronizer(ref, cfg, PARAMS)
    emitted = []
    for i, d in enumerate(ref):
        e = sync.push(d)
        if i < 2:
            assert e is None
        else:
            emitted.append(e)
    assert [e.observed_index for e in emitted] == list(range(8))
    assert [e.label for e in emitted] == list(range(1, 9))


def test_online_half_speed_tracks_slow_ride():
    frames = _frames(12)
    ref = _descriptors(frames)
    # observed ride revisits each reference frame twice
    obs = [ref[t // 2] for t in range(20)]
    cfg = SyncConfig(label_count_nr=12, lag_l=2, window_L=4)
    sync = OnlineSynchronizer(ref, cfg, PARAMS)
    for d in obs:
        sync.push(d)
    for e in sync.result.emitted:
        assert abs(e.label - (e.observed_index // 2 + 1)) <= 1
    assert np.all(np.diff(sync.result.labels()) >= 0)


def test_online_double_speed_advances_two_per_frame():
    frames = _frames(20)
    ref = _descriptors(frames)
    obs = [ref[2 * t] for t in range(10)]
    cfg = SyncConfig(label_count_nr=20, lag_l=2, window_L=4)
    sync = OnlineSynchronizer(ref, cfg, PARAMS)
    for d in obs:
        sync.push(d)
    labels = sync.result.labels()
    increments = np.diff(labels)
    assert increments.mean() == pytest.approx(2.0, abs=0.4)


def test_online_labels_never_decrease_under_noise():
    rng = np.random.default_rng(24)
    frames = _frames(15)
    ref = _descriptors(frames)
    obs_frames = [np.clip(f + rng.normal(0, 0.08, f.shape), 0, 1)
                  for f in frames]
    cfg = SyncConfig(label_count_nr=15, lag_l=2, window_L=4, candidate_band=4)
    sync = OnlineSynchronizer(ref, cfg, PARAMS)
    for f in obs_frames:
        sync.push(compute_descriptor(f, PARAMS))
    labels = sync.result.labels()
    assert len(labels) == 13
    assert np.all(np.diff(labels) >= 0)


def test_online_validates_reference_count():
    ref = _descriptors(_frames(4))
    with pytest.raises(ValueError):
        OnlineSynchronizer(ref, SyncConfig(label_count_nr=9), PARAMS)


def test_synchronize_online_stream():
    frames = _frames(8)
    result = synchronize_online(
        frames, _descriptors(frames),
        SyncConfig(label_count_nr=8, lag_l=2, window_L=4), PARAMS)
    assert [e.observed_index for e in result.emitted] == list(range(6))
    assert result.labels() == list(range(1, 7))
    short = synchronize_online(
        frames[:2], _descriptors(frames),
        SyncConfig(label_count_nr=8, lag_l=2, window_L=4), PARAMS)
    assert short.emitted == []
