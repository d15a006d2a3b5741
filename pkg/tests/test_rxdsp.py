"""Tests for stitching, synchronisation, the MIMO LMS equaliser and estimates."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from mdmlink.errors import (
    DivergenceError,
    EstimateUnreliableError,
    InvalidArgumentError,
    StaleStateError,
    SyncAmbiguityError,
    SyncError,
)
from mdmlink.mdmchannel import (
    EMPTY,
    TdmPlan,
    apply_mode_coupling,
    gate,
    jones_matrices,
    mode_labels,
    pair_polarizations,
    synthesize_transfer_matrix,
    CrosstalkProfile,
    tdm_combine,
)
from mdmlink.metrics import evm
from mdmlink.rxdsp import (
    EqualizerConfig,
    TributarySet,
    estimate_channel_ls,
    estimate_freq_offset,
    estimate_intensity_transfer_matrix,
    extract_impulse_response,
    fd_lms_equalize,
    frame_sync,
    phase_track,
    remove_freq_offset,
    td_lms_reference,
    tdm_stitch,
)
from mdmlink.sigproc import (
    QAM16,
    QPSK,
    SymbolFrame,
    Waveform,
    add_awgn,
    decide_symbols,
    generate_prbs,
    map_bits,
    matched_filter_downsample,
    phase_noise_trace,
    shape_pulses,
)

BAUD = 30e9
SPAN = 128  # short filters keep the stitching tests quick


def _symbols(fmt, n, seed):
    return map_bits(generate_prbs(seed, n * fmt.bits_per_symbol), fmt, BAUD)


def _mixed_link(h, n_sym=8192, fmt=QPSK, seed=0, echo=None):
    """Tributaries ``h @ s`` (optionally plus a circular echo on every input)."""
    n = h.shape[1]
    frames = [_symbols(fmt, n_sym, seed + k) for k in range(n)]
    s = np.stack([f.symbols for f in frames])
    x = h @ s
    if echo is not None:
        lag, level_db = echo
        x = x + 10 ** (level_db / 20) * np.roll(x, lag, axis=1)
    labels = [f"TE{k}" for k in range(n)]
    tribs = TributarySet.from_arrays(list(x), labels, BAUD)
    training = {lab: f for lab, f in zip(labels, frames)}
    return tribs, training, s


def _fd_cfg(**kw):
    base = dict(num_taps=32, step=0.1, training_symbols=4096, passes=3)
    base.update(kw)
    return EqualizerConfig(**base)


# ---------------------------------------------------------------------------
# frame sync
# ---------------------------------------------------------------------------


class TestFrameSync:
    def test_known_shift(self):
        tr = _symbols(QPSK, 1024, 1)
        x = np.roll(np.r_[tr.symbols, _symbols(QPSK, 7168, 2).symbols], 777)
        assert frame_sync(x, tr) == 777

    def test_monte_carlo_zero_db(self):
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            tr = _symbols(QPSK, 1024, 1000 + seed)
            body = np.r_[tr.symbols, _symbols(QPSK, 7168, 5000 + seed).symbols]
            off = int(rng.integers(0, 8192))
            x = add_awgn(Waveform(np.roll(body, off), BAUD), 0.0, seed).samples
            hits += frame_sync(x, tr) == off
        assert hits >= 99

    @given(st.floats(0, 2 * np.pi))
    @settings(max_examples=20, deadline=None)
    def test_phase_invariant(self, theta):
        tr = _symbols(QAM16, 512, 3)
        x = np.roll(np.r_[tr.symbols, _symbols(QAM16, 3584, 4).symbols], 1234)
        assert frame_sync(x * np.exp(1j * theta), tr) == 1234

    def test_short_training(self):
        with pytest.raises(InvalidArgumentError):
            frame_sync(np.ones(1000), np.ones(100))

    def test_ambiguous_peaks(self):
        tr = _symbols(QPSK, 512, 1)
        x = np.tile(tr.symbols, 4)
        with pytest.raises(SyncAmbiguityError):
            frame_sync(x, tr)


# ---------------------------------------------------------------------------
# TDM stitching
# ---------------------------------------------------------------------------


def _tdm_record(n_sym=4096, jones="identity", jitter=None, seed=0, n_modes=11):
    """Per-slot (x, y) waveforms, their training frames and the combined record."""
    labels = mode_labels(n_modes)
    frames = {lab: _symbols(QPSK, n_sym, seed + k) for k, lab in enumerate(labels)}
    wfs = [Waveform(shape_pulses(frames[lab], 2, 0.01, SPAN).samples, 2 * BAUD, lab) for lab in labels]
    plan = TdmPlan.default(labels, n_sym / BAUD)
    pairs = pair_polarizations(wfs, plan, jones, labels)
    fs = 2 * BAUD

    def gated():
        for x, y in pairs:
            yield (gate(Waveform(np.tile(x.samples, plan.n_slots), fs), plan.duty, plan.period, 0, BAUD),
                   gate(Waveform(np.tile(y.samples, plan.n_slots), fs), plan.duty, plan.period, 0, BAUD))

    j = None if jitter is None else np.asarray(jitter) / fs
    record = tdm_combine(gated(), plan, j)
    return plan, pairs, frames, record


class TestStitch:
    def test_exact_round_trip(self):
        plan, pairs, frames, record = _tdm_record()
        tribs = tdm_stitch(record, plan, frames, BAUD, 0.01, SPAN)
        assert len(tribs) == 12
        assert tribs.offsets == [0] * 6
        for k, (s, p, lab) in enumerate(tribs.mapping):
            ref = matched_filter_downsample(pairs[s][p], BAUD, 0.01, 0, SPAN).symbols
            rms = np.sqrt(np.mean(np.abs(tribs.tributaries[k] - ref) ** 2))
            assert rms < 1e-9, (k, lab, rms)

    def test_tributaries_match_transmitted_symbols(self):
        plan, _, frames, record = _tdm_record()
        tribs = tdm_stitch(record, plan, frames, BAUD, 0.01, SPAN)
        for k, (_, _, lab) in enumerate(tribs.mapping):
            if lab is not EMPTY:
                err = np.abs(tribs.tributaries[k] - frames[lab].symbols)
                # residual is the RRC-cascade ISI of the short SPAN filters
                assert np.sqrt(np.mean(err**2)) < 5e-2

    @pytest.mark.parametrize("jitter", [
        [0.5, -0.5, 0.5, -0.5, 0.5, -0.5],
        [0.3, -0.2, 0.45, -0.45, 0.1, 0.0],
    ])
    def test_half_sample_jitter(self, jitter):
        plan, _, frames, record = _tdm_record(jitter=jitter)
        tribs = tdm_stitch(record, plan, frames, BAUD, 0.01, SPAN)
        for off, j in zip(tribs.offsets, jitter):
            assert abs(off - j) <= 1

    @pytest.mark.parametrize("jitter", [[3] * 6, [0, 1, 0, 1, 0, 1], [-1, 0, -1, 0, -1, 0]])
    def test_integer_spool_error_recovered(self, jitter):
        plan, pairs, frames, record = _tdm_record(jitter=jitter)
        tribs = tdm_stitch(record, plan, frames, BAUD, 0.01, SPAN)
        assert tribs.offsets == jitter
        ref = matched_filter_downsample(pairs[2][0], BAUD, 0.01, 0, SPAN).symbols
        # relative shifts push one guard sample of a neighbour into the window
        tol = 1e-9 if len(set(jitter)) == 1 else 1e-2
        assert np.sqrt(np.mean(np.abs(tribs.tributaries[4] - ref) ** 2)) < tol

    def test_empty_tributary_is_dark(self):
        plan, _, frames, record = _tdm_record()
        tribs = tdm_stitch(record, plan, frames, BAUD, 0.01, SPAN)
        p = np.mean(np.abs(tribs.tributaries) ** 2, axis=1) + 1e-300
        empty = [k for k, lab in enumerate(tribs.labels) if lab is EMPTY]
        active = [k for k, lab in enumerate(tribs.labels) if lab is not EMPTY]
        assert 10 * np.log10(p[empty].max() / p[active].min()) < -20

    def test_oscilloscope_rate_record(self):
        from mdmlink.sigproc import resample

        plan, _, frames, record = _tdm_record(n_sym=3072)
        slow = (resample(record[0], 40e9), resample(record[1], 40e9))
        tribs = tdm_stitch(slow, plan, frames, BAUD, 0.01, SPAN)
        k = tribs.labels.index("TE3")
        err = np.abs(tribs.tributaries[k] - frames["TE3"].symbols)
        assert np.sqrt(np.mean(err**2)) < 5e-2

    def test_sync_failure_names_slot(self):
        plan, _, frames, record = _tdm_record()
        wrong = {lab: _symbols(QPSK, 4096, 999 + k) for k, lab in enumerate(frames)}
        with pytest.raises(SyncError) as info:
            tdm_stitch(record, plan, wrong, BAUD, 0.01, SPAN)
        assert info.value.slot == 0

    def test_short_record(self):
        plan, _, frames, record = _tdm_record()
        short = (Waveform(record[0].samples[:1000], record[0].sample_rate),
                 Waveform(record[1].samples[:1000], record[1].sample_rate))
        with pytest.raises(InvalidArgumentError):
            tdm_stitch(short, plan, frames, BAUD, 0.01, SPAN)


# ---------------------------------------------------------------------------
# frequency offset
# ---------------------------------------------------------------------------


class TestFreqOffset:
    N = 2**16
    RES = BAUD / (4 * 2**16)

    def _rotated(self, fmt, offset, seed=1, snr=20.0):
        s = _symbols(fmt, self.N, seed).symbols
        s = add_awgn(Waveform(s, BAUD), snr, seed).samples
        return remove_freq_offset(s, -offset, BAUD)

    def test_zero(self):
        assert abs(estimate_freq_offset(self._rotated(QPSK, 0.0), QPSK, BAUD)) <= self.RES

    def test_qpsk_100mhz(self):
        est = estimate_freq_offset(self._rotated(QPSK, 100e6), QPSK, BAUD)
        assert est == pytest.approx(100e6, abs=self.RES)

    @pytest.mark.parametrize("fmt", [QPSK, QAM16])
    def test_shift_property(self, fmt):
        base = estimate_freq_offset(self._rotated(fmt, 37e6, 3), fmt, BAUD)
        moved = estimate_freq_offset(self._rotated(fmt, 37e6 - 250e6, 3), fmt, BAUD)
        assert base - moved == pytest.approx(250e6, abs=2 * self.RES)

    def test_removal_restores_constellation(self):
        x = self._rotated(QAM16, -80e6, 5, snr=30.0)
        est = estimate_freq_offset(x, QAM16, BAUD)
        y = remove_freq_offset(x, est, BAUD)
        tracked = phase_track(SymbolFrame(y, QAM16, BAUD), _symbols(QAM16, self.N, 5), 64)
        assert evm(tracked, _symbols(QAM16, self.N, 5)) < 5.0

    def test_noise_is_unreliable(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(self.N) + 1j * rng.standard_normal(self.N)
        with pytest.raises(EstimateUnreliableError):
            estimate_freq_offset(x, QPSK, BAUD)

    def test_too_short(self):
        with pytest.raises(InvalidArgumentError):
            estimate_freq_offset(np.ones(100), QPSK, BAUD)


# ---------------------------------------------------------------------------
# equaliser
# ---------------------------------------------------------------------------


def _per_output_phase_error(h_est, h_true):
    """Largest entry error after aligning each column's phase."""
    err = 0.0
    for j in range(h_true.shape[1]):
        phi = np.angle(np.vdot(h_est[:, j], h_true[:, j]))
        err = max(err, np.max(np.abs(h_est[:, j] * np.exp(1j * phi) - h_true[:, j])))
    return err


class TestFdLms:
    def test_identity_single_mode(self):
        tribs, training, s = _mixed_link(np.eye(1))
        frames, state = fd_lms_equalize(tribs, training, _fd_cfg())
        taps = np.abs(state.taps()[0, 0])
        assert np.argmax(taps) == state.delay
        assert np.sort(taps)[-2] < 1e-2 * taps.max()
        assert state.mse_history[-1] < 1e-4
        assert state.converged

    def test_matches_time_domain_oracle(self):
        u = np.array([[0.8, 0.6j], [0.6j, 0.8]])
        tribs, training, s = _mixed_link(u)
        fd_frames, fd_state = fd_lms_equalize(tribs, training, _fd_cfg())
        td_frames, td_state = td_lms_reference(tribs, training, 32, 0.05, passes=3,
                                               training_symbols=4096, normalized=True)
        assert fd_state.mse_history[-1] < 1e-3
        assert td_state.mse_history[-1] < 1e-3
        for frames in (fd_frames, td_frames):
            y = np.stack([f.symbols for f in frames])
            h = estimate_channel_ls(y, tribs.tributaries, 1)[..., 0]
            assert _per_output_phase_error(h, u) < 1e-2
        fd_y = np.stack([f.symbols for f in fd_frames])
        td_y = np.stack([f.symbols for f in td_frames])
        for a, b in zip(fd_y, td_y):
            rot = np.exp(1j * np.angle(np.vdot(a, b)))
            assert np.sqrt(np.mean(np.abs(a * rot - b) ** 2)) < 1e-2

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_random_unitary_4x4_with_memory(self, seed):
        u = unitary_group.rvs(4, random_state=seed)
        tribs, training, s = _mixed_link(u, seed=seed, echo=(3, -15.0))
        frames, state = fd_lms_equalize(tribs, training, _fd_cfg())
        assert state.converged
        for f, ref in zip(frames, s):
            assert np.all(decide_symbols(f.symbols, QPSK) == ref)

    def test_mse_monotone_across_passes(self):
        u = unitary_group.rvs(3, random_state=4)
        tribs, training, _ = _mixed_link(u, echo=(2, -12.0))
        _, state = fd_lms_equalize(tribs, training, _fd_cfg(passes=4, step=0.05))
        per_pass = np.array(state.mse_history).reshape(4, -1).mean(axis=1)
        assert np.all(per_pass[1:] <= per_pass[:-1] * 1.01)

    def test_input_scaling_invariance(self):
        u = unitary_group.rvs(3, random_state=5)
        tribs, training, s = _mixed_link(u, fmt=QAM16)
        noisy = np.stack([add_awgn(Waveform(r, BAUD), 14.0, k).samples
                          for k, r in enumerate(tribs.tributaries)])
        a = TributarySet(noisy, tribs.mapping, BAUD)
        b = TributarySet(noisy * 7.5, tribs.mapping, BAUD)
        fa, _ = fd_lms_equalize(a, training, _fd_cfg())
        fb, _ = fd_lms_equalize(b, training, _fd_cfg())
        for x, y in zip(fa, fb):
            np.testing.assert_array_equal(decide_symbols(x.symbols, QAM16), decide_symbols(y.symbols, QAM16))

    def test_permutation_equivariance(self):
        u = unitary_group.rvs(3, random_state=6)
        tribs, training, _ = _mixed_link(u)
        perm = [2, 0, 1]
        t2 = TributarySet(tribs.tributaries[perm], [tribs.mapping[k] for k in perm], BAUD)
        tr2 = {lab: training[lab] for lab in ["TE2", "TE0", "TE1"]}
        fa, _ = fd_lms_equalize(tribs, training, _fd_cfg())
        fb, _ = fd_lms_equalize(t2, tr2, _fd_cfg())
        for lab_b, fb_k in zip(tr2, fb):
            k = list(training).index(lab_b)
            np.testing.assert_allclose(fb_k.symbols, fa[k].symbols, atol=1e-9)

    def test_divergence_raises_with_history(self):
        tribs, training, _ = _mixed_link(unitary_group.rvs(4, random_state=1))
        with pytest.raises(DivergenceError) as info:
            fd_lms_equalize(tribs, training, _fd_cfg(step=3.0))
        assert len(info.value.mse_history) >= 2

    def test_diagonal_only_cannot_unmix(self):
        u = np.array([[0.8, 0.6j], [0.6j, 0.8]])
        tribs, training, s = _mixed_link(u, fmt=QAM16)
        frames, _ = fd_lms_equalize(tribs, training, _fd_cfg(mimo=False))
        errs = sum(np.count_nonzero(decide_symbols(f.symbols, QAM16) != r) for f, r in zip(frames, s))
        assert errs > 0.1 * s.size

    def test_decision_directed_payload(self):
        u = unitary_group.rvs(2, random_state=9)
        tribs, training, s = _mixed_link(u, n_sym=16384, fmt=QAM16)
        phi = phase_noise_trace(16384, 1e6, BAUD, 3)
        drifting = TributarySet(tribs.tributaries * np.exp(1j * phi), tribs.mapping, BAUD)
        frames, state = fd_lms_equalize(drifting, training, _fd_cfg(payload_mode="dd"))
        for f, ref in zip(frames, s):
            assert np.all(decide_symbols(f.symbols[4096:], QAM16) == ref[4096:])

    def test_training_shorter_than_taps(self):
        tribs, training, _ = _mixed_link(np.eye(2), n_sym=1024)
        with pytest.raises(InvalidArgumentError):
            fd_lms_equalize(tribs, training, _fd_cfg(num_taps=512, training_symbols=256))

    def test_bad_config(self):
        with pytest.raises(InvalidArgumentError):
            EqualizerConfig(num_taps=31)
        with pytest.raises(InvalidArgumentError):
            EqualizerConfig(payload_mode="blind")


class TestTdLms:
    def test_identity(self):
        tribs, training, _ = _mixed_link(np.eye(2), n_sym=4096)
        _, state = td_lms_reference(tribs, training, 16, 0.05, passes=2, training_symbols=2048)
        assert state.mse_history[-1] < 1e-4

    def test_unit_step_diverges(self):
        u = unitary_group.rvs(2, random_state=3)
        tribs, training, _ = _mixed_link(u, n_sym=4096)
        with pytest.raises(DivergenceError):
            td_lms_reference(tribs, training, 16, 1.0, passes=1, training_symbols=2048)

    def test_size_limit(self):
        tribs, training, _ = _mixed_link(np.eye(5), n_sym=1024)
        with pytest.raises(InvalidArgumentError):
            td_lms_reference(tribs, training, 16, 0.01)


# ---------------------------------------------------------------------------
# phase tracking
# ---------------------------------------------------------------------------


class TestPhaseTrack:
    def test_constant_rotation_removed(self):
        ref = _symbols(QPSK, 4096, 1)
        rotated = SymbolFrame(ref.symbols * np.exp(1j * np.pi / 5), QPSK, BAUD)
        assert evm(phase_track(rotated), ref) < 0.1

    def test_with_reference(self):
        ref = _symbols(QAM16, 4096, 1)
        rotated = SymbolFrame(ref.symbols * np.exp(1j * 2.9), QAM16, BAUD)
        assert evm(phase_track(rotated, ref), ref) < 0.1

    def test_identity_without_phase_noise(self):
        ref = _symbols(QAM16, 4096, 2)
        out = phase_track(ref)
        np.testing.assert_allclose(out.symbols, ref.symbols, atol=1e-12)

    def test_tracking_improves_laser_phase_noise(self):
        for seed in range(20):
            ref = _symbols(QAM16, 2**14, 100 + seed)
            phi = phase_noise_trace(2**14, 100e3, BAUD, seed)
            rx = add_awgn(Waveform(ref.symbols * np.exp(1j * phi), BAUD), 20.0, seed).samples
            frame = SymbolFrame(rx, QAM16, BAUD)
            assert evm(phase_track(frame), ref) < evm(frame, ref)

    def test_small_block(self):
        with pytest.raises(InvalidArgumentError):
            phase_track(_symbols(QPSK, 64, 1), block=8)


# ---------------------------------------------------------------------------
# estimates
# ---------------------------------------------------------------------------


class TestImpulseResponse:
    def test_identity_channel(self):
        tribs, training, _ = _mixed_link(np.eye(2))
        _, state = fd_lms_equalize(tribs, training, _fd_cfg())
        ir = extract_impulse_response(state)
        assert ir.intensity_profile_db.max() == 0.0
        peak = int(np.argmax(ir.intensity_profile_db))
        assert ir.lags[peak] == 0
        assert np.delete(ir.intensity_profile_db, peak).max() < -30

    def test_echo_side_lobe(self):
        u = unitary_group.rvs(2, random_state=2)
        tribs, training, _ = _mixed_link(u, echo=(5, -20.0))
        _, state = fd_lms_equalize(tribs, training, _fd_cfg())
        ir = extract_impulse_response(state)
        p = dict(zip(ir.lags.tolist(), ir.intensity_profile_db))
        assert p[0] == 0.0
        assert -25 <= p[5] <= -15
        others = [v for lag, v in p.items() if lag not in (0, 5, 10)]
        assert max(others) < -25

    def test_stale_state(self):
        tribs, training, _ = _mixed_link(unitary_group.rvs(2, random_state=2))
        _, state = fd_lms_equalize(tribs, training, _fd_cfg())
        state.converged = False
        with pytest.raises(StaleStateError):
            extract_impulse_response(state)
        with pytest.raises(StaleStateError):
            estimate_intensity_transfer_matrix(state, tribs, training)


class TestChannelEstimates:
    def test_identity_link(self):
        tribs, training, _ = _mixed_link(np.eye(4))
        _, state = fd_lms_equalize(tribs, training, _fd_cfg())
        p = estimate_intensity_transfer_matrix(state, tribs, training)
        off = p[~np.eye(4, dtype=bool)]
        assert np.min(np.diag(p)) - off.max() >= 30

    def test_known_matrix(self):
        prof = CrosstalkProfile.flat(np.full(4, -9.0))
        m = synthesize_transfer_matrix(prof, 1550.0, 3).entries
        tribs, training, _ = _mixed_link(m)
        _, state = fd_lms_equalize(tribs, training, _fd_cfg())
        p = estimate_intensity_transfer_matrix(state, tribs, training)
        truth = 10 * np.log10(np.abs(m) ** 2)
        truth -= truth.max()
        sel = truth > -30
        np.testing.assert_allclose(p[sel], truth[sel], atol=0.5)

    def test_random_jones_blocks_not_diagonal(self):
        # two slots of dual-pol tributaries built from a near-diagonal chip
        m = synthesize_transfer_matrix(CrosstalkProfile.flat(np.full(4, -30.0)), 1550.0, 1).entries
        sm = np.zeros((4, 4), complex)
        for s, u in enumerate(jones_matrices(2, 21)):
            sm[2 * s : 2 * s + 2] = u @ m[2 * s : 2 * s + 2]
        tribs, training, _ = _mixed_link(sm)
        _, state = fd_lms_equalize(tribs, training, _fd_cfg())
        p = estimate_intensity_transfer_matrix(state, tribs, training)
        for s in range(2):
            blk = p[2 * s : 2 * s + 2, 2 * s : 2 * s + 2]
            assert blk[0, 1] - blk[0, 0] > -20 and blk[1, 0] - blk[1, 1] > -20

    def test_ls_reproduces_outputs(self):
        u = unitary_group.rvs(3, random_state=8)
        tribs, training, s = _mixed_link(u, echo=(2, -18.0))
        h = estimate_channel_ls(s, tribs.tributaries, n_taps=5)
        pred = sum(np.einsum("ij,jn->in", h[..., k], np.roll(s, k - 2, axis=1)) for k in range(5))
        rel = np.linalg.norm(pred - tribs.tributaries) / np.linalg.norm(tribs.tributaries)
        assert rel < 1e-3

    def test_rank_deficient(self):
        s = np.ones((2, 500))
        with pytest.raises(EstimateUnreliableError):
            estimate_channel_ls(s, s, 1)
