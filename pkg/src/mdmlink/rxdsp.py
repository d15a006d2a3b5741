"""Receiver DSP: TDM stitching, synchronisation, MIMO equalisation, estimates.

Equaliser conventions
---------------------
Taps are symbol spaced.  Output ``i`` at time ``n`` is

    y_i[n] = sum_j sum_k w_ij[k] * x_j[n + D - k],   D = num_taps // 2

so a memoryless channel is inverted by taps concentrated at ``k = D`` and a
post-cursor echo at ``+d`` symbols is cancelled by a tap at ``k = D + d``.
All sequences are circular (one period of a repeating frame), which lets the
first block borrow its history from the end of the frame.

The frequency-domain equaliser is the gradient-constrained overlap-save
block LMS: block length ``num_taps``, FFT length ``2 * num_taps``.  Weights
live in the frequency domain as ``W_ij = FFT([w_ij, 0])``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DivergenceError,
    EstimateUnreliableError,
    InvalidArgumentError,
    StaleStateError,
    SyncAmbiguityError,
    SyncError,
)
from .mdmchannel import EMPTY
from .sigproc import (
    DEFAULT_ROLLOFF,
    DEFAULT_SPAN,
    QAM16,
    QPSK,
    SymbolFrame,
    Waveform,
    circular_filter,
    decide_symbols,
    get_format,
    matched_filter_downsample,
    resample,
    rrc_taps,
)


@dataclass
class TributarySet:
    tributaries: np.ndarray
    mapping: list
    baud: float = 1.0
    offsets: list = field(default_factory=list)

    def __post_init__(self):
        self.tributaries = np.atleast_2d(np.asarray(self.tributaries, dtype=complex))
        if len(self.mapping) != self.tributaries.shape[0]:
            raise InvalidArgumentError("mapping length does not match tributary count")

    def __len__(self):
        return self.tributaries.shape[0]

    @property
    def labels(self):
        return [m[2] for m in self.mapping]

    def select(self, include_empty=False):
        """Indices of the tributaries to feed the equaliser."""
        return [k for k, lab in enumerate(self.labels) if include_empty or lab is not EMPTY]

    @classmethod
    def from_arrays(cls, arrays, labels, baud=1.0):
        """Tributaries with no TDM history, e.g. for direct equaliser tests."""
        mapping = [(k // 2, k % 2, lab) for k, lab in enumerate(labels)]
        return cls(np.stack([np.asarray(a) for a in arrays]), mapping, baud)


@dataclass
class EqualizerConfig:
    num_taps: int = 512
    step: float = 0.1
    training_symbols: int = 2**15
    passes: int = 3
    normalized: bool = True
    include_empty: bool = False
    mimo: bool = True
    payload_mode: str = "frozen"
    power_smoothing: float = 0.9
    divergence_factor: float = 10.0
    carrier_phase: bool = True
    cross_spectral: bool = True

    def __post_init__(self):
        if self.num_taps < 2 or self.num_taps % 2:
            raise InvalidArgumentError("num_taps must be an even integer >= 2")
        if not self.step > 0:
            raise InvalidArgumentError("step must be positive")
        if self.passes < 1:
            raise InvalidArgumentError("passes must be >= 1")
        if self.payload_mode not in ("frozen", "dd"):
            raise InvalidArgumentError("payload_mode must be 'frozen' or 'dd'")

    @property
    def fft_size(self):
        return 2 * self.num_taps


@dataclass
class EqualizerState:
    weights: np.ndarray
    num_taps: int
    input_labels: list
    output_labels: list
    mse_history: list = field(default_factory=list)
    converged: bool = False
    phase: float = 0.0

    @property
    def delay(self):
        return self.num_taps // 2

    def taps(self):
        """Time-domain taps, shape (n_out, n_in, num_taps)."""
        return np.fft.ifft(self.weights, axis=-1)[..., : self.num_taps]


@dataclass
class ImpulseResponse:
    h: np.ndarray
    intensity_profile_db: np.ndarray
    lags: np.ndarray


def _training_arrays(training, labels):
    """Accept a dict label -> frame/array or a sequence in ``labels`` order."""
    if isinstance(training, dict):
        items = [training[lab] for lab in labels]
    else:
        items = list(training)
    arrs = [np.asarray(t.symbols if isinstance(t, SymbolFrame) else t, dtype=complex) for t in items]
    fmts = [t.format if isinstance(t, SymbolFrame) else None for t in items]
    return arrs, fmts


def _output_labels(tribs, training):
    if isinstance(training, dict):
        return list(training)
    return [lab for lab in tribs.labels if lab is not EMPTY]


# ---------------------------------------------------------------------------
# synchronisation
# ---------------------------------------------------------------------------


def _circular_xcorr(x, t):
    """c[k] = sum_n x[n + k] * conj(t[n]) for a short ``t`` against circular ``x``."""
    n = len(x)
    tp = np.zeros(n, dtype=complex)
    tp[: len(t)] = t
    return np.fft.ifft(np.fft.fft(x) * np.conj(np.fft.fft(tp)))


def frame_sync(tributary, training, ambiguity_db=1.0):
    """Offset (symbols) of ``training`` inside the circular ``tributary``."""
    x = np.asarray(tributary.symbols if isinstance(tributary, SymbolFrame) else tributary)
    t = np.asarray(training.symbols if isinstance(training, SymbolFrame) else training)
    if len(t) < 256:
        raise InvalidArgumentError(f"training must be >= 256 symbols, got {len(t)}")
    if len(x) < len(t):
        raise InvalidArgumentError("tributary shorter than training")
    c = np.abs(_circular_xcorr(x, t))
    # energy of the length-len(t) window starting at each lag
    e = np.abs(x) ** 2
    win = np.real(_circular_xcorr(e.astype(complex), np.ones(len(t))))
    metric = c / (np.linalg.norm(t) * np.sqrt(np.maximum(win, 1e-300)))
    k = int(np.argmax(metric))
    masked = metric.copy()
    masked[(k + np.arange(-2, 3)) % len(x)] = 0
    if masked.max() >= metric[k] * 10 ** (-ambiguity_db / 20):
        raise SyncAmbiguityError(
            f"two correlation peaks within {ambiguity_db} dB (lags {k} and {int(masked.argmax())})"
        )
    return k


def _slot_metric(rx, trainings):
    """Normalised 2 x n_modes correlation strength in [0, 1]."""
    num = 0.0
    for t in trainings:
        for r in rx:
            num += abs(np.vdot(t, r)) ** 2 / np.vdot(t, t).real
    den = sum(np.vdot(r, r).real for r in rx)
    return np.sqrt(num / den) if den > 0 else 0.0


def tdm_stitch(
    record,
    plan,
    training,
    baud,
    rolloff=DEFAULT_ROLLOFF,
    span=DEFAULT_SPAN,
    search=4,
    threshold=0.5,
    sync_symbols=4096,
):
    """Cut the dual-pol TDM record into per-slot tributaries.

    ``record`` is an ``(x, y)`` pair of waveforms covering at least one TDM
    period.  Each slot window is located to the sample by correlating its
    matched-filtered content against the training of the modes scheduled in
    it (searching ``+-search`` samples around the nominal delay).  The
    aligned window is then matched-filtered on its own, so a record built
    with exact delays reproduces the slot signals exactly.
    """
    x, y = record
    fs = 2 * baud
    if x.sample_rate != fs:
        x, y = resample(x, fs), resample(y, fs)
    per = int(round(plan.period * fs))
    seg = int(round(plan.slot_duration * fs))
    if len(x) < per:
        raise InvalidArgumentError(
            f"record of {len(x)} samples is shorter than one TDM period ({per})"
        )
    if seg % 2:
        raise InvalidArgumentError("slot duration must span a whole number of symbols")
    pols = np.stack([x.samples[:per], y.samples[:per]])
    mf = circular_filter(pols, rrc_taps(rolloff, span, 2))
    n_sync = min(sync_symbols, seg // 2)
    trains = training if isinstance(training, dict) else dict(zip(plan.active_labels(), training))
    trib, mapping, offsets = [], [], []
    k = np.arange(n_sync)
    for s, pair in enumerate(plan.slots):
        nominal = int(np.floor(plan.slot_delays[s] * fs + 0.5))
        refs = []
        for lab in pair:
            if lab is EMPTY:
                continue
            t = trains[lab]
            t = np.asarray(t.symbols if isinstance(t, SymbolFrame) else t)[:n_sync]
            refs.append(t)
        best, best_metric = 0, -1.0
        for off in range(-search, search + 1):
            idx = (nominal + off + 2 * k[: len(refs[0])]) % per
            m = _slot_metric(mf[:, idx], refs)
            if m > best_metric:
                best, best_metric = off, m
        if best_metric < threshold:
            raise SyncError(
                f"slot {s}: correlation peak {best_metric:.3f} below threshold {threshold}",
                slot=s,
            )
        offsets.append(best)
        idx = (nominal + best + np.arange(seg)) % per
        for p, lab in enumerate(pair):
            wf = Waveform(pols[p, idx], fs)
            trib.append(matched_filter_downsample(wf, baud, rolloff, 0, span).symbols)
            mapping.append((s, p, lab))
    return TributarySet(np.stack(trib), mapping, baud, offsets)


def estimate_freq_offset(tributary, fmt, baud=1.0, min_peak_ratio=20.0):
    """Fourth-power spectral-line frequency estimate in Hz.

    For 16-QAM only the inner and outer rings (whose points sit on the QPSK
    diagonals) contribute.  Resolution is ``baud / (4 * N)``.
    """
    fmt = get_format(fmt)
    x = np.asarray(tributary.symbols if isinstance(tributary, SymbolFrame) else tributary)
    if len(x) < 4096:
        raise InvalidArgumentError(f"need >= 4096 symbols, got {len(x)}")
    x = x / np.sqrt(np.mean(np.abs(x) ** 2))
    if fmt is QAM16:
        p = np.abs(x) ** 2
        x = np.where((p < 0.6) | (p > 1.4), x, 0)
    z = x**4
    spec = np.abs(np.fft.fft(z)) ** 2
    k = int(np.argmax(spec))
    if spec[k] < min_peak_ratio * np.mean(spec):
        raise EstimateUnreliableError(
            f"fourth-power line only {spec[k] / np.mean(spec):.1f}x the mean spectrum"
        )
    return float(np.fft.fftfreq(len(z))[k] * baud / 4)


def remove_freq_offset(symbols, offset, baud):
    n = np.arange(len(symbols))
    return np.asarray(symbols) * np.exp(-2j * np.pi * offset * n / baud)


# ---------------------------------------------------------------------------
# equalisation
# ---------------------------------------------------------------------------


def _check_divergence(mse, hist, factor):
    if not np.isfinite(mse) or (hist and mse > factor * hist[0]):
        hist.append(float(mse))
        raise DivergenceError(
            f"equaliser diverged: block MSE {mse:.3g} vs initial {hist[0]:.3g}", hist
        )


def _is_converged(hist, floor=1e-3):
    # noiseless runs keep shrinking geometrically, so also accept a tail far
    # below the starting error
    hist = np.asarray(hist)
    tail = np.mean(hist[-max(1, len(hist) // 4) :])
    return bool(tail < 2 * np.min(hist) or tail < floor * hist[0])


def _diag_mask(out_labels, in_labels):
    return np.array([[o == i for i in in_labels] for o in out_labels], dtype=bool)


def _blocks(x, start, m):
    """2m-sample overlap-save windows ending at ``start + m`` (circular)."""
    idx = (start - m + np.arange(2 * m)) % x.shape[-1]
    return x[:, idx]


def fd_filter(weights, x, num_taps):
    """Apply frozen frequency-domain weights to circular inputs ``x``.

    Returns outputs aligned with ``x`` (the equaliser delay is removed).
    """
    m = num_taps
    n_in, length = x.shape
    xa = np.roll(x, -(m // 2), axis=1)
    n_blocks = -(-length // m)
    out = np.empty((weights.shape[0], n_blocks * m), dtype=complex)
    chunk = 64
    for b0 in range(0, n_blocks, chunk):
        bs = np.arange(b0, min(b0 + chunk, n_blocks))
        idx = (bs[:, None] * m - m + np.arange(2 * m)[None, :]) % length
        u = np.fft.fft(xa[:, idx], axis=-1)  # (n_in, nb, F)
        y = np.fft.ifft(np.einsum("ijf,jbf->ibf", weights, u), axis=-1)[..., m:]
        out[:, b0 * m : (b0 + len(bs)) * m] = y.reshape(weights.shape[0], -1)
    return out[:, :length]


def fd_lms_equalize(tribs, training, cfg=None, mask=None):
    """Data-aided frequency-domain MIMO LMS.

    ``training`` maps output mode label -> known symbols (at least
    ``cfg.training_symbols`` of them, aligned with the tributaries).
    Returns ``(frames, state)`` with one equalised frame per output mode,
    covering the whole tributary length.
    """
    cfg = cfg or EqualizerConfig()
    sel = tribs.select(cfg.include_empty)
    in_labels = [tribs.labels[k] for k in sel]
    out_labels = _output_labels(tribs, training)
    x = tribs.tributaries[sel]
    d_all, fmts = _training_arrays(training, out_labels)
    m = cfg.num_taps
    f = cfg.fft_size
    length = x.shape[1]
    n_train = min(cfg.training_symbols, min(len(d) for d in d_all))
    if n_train < m:
        raise InvalidArgumentError(f"training ({n_train}) shorter than num_taps ({m})")
    if length < 2 * m:
        raise InvalidArgumentError("tributaries shorter than two blocks")
    n_out, n_in = len(out_labels), len(sel)
    if mask is None:
        mask = np.ones((n_out, n_in), bool) if cfg.mimo else _diag_mask(out_labels, in_labels)
    mask = np.asarray(mask, bool)[..., None]
    d = np.stack([dd[:n_train] for dd in d_all])
    xa = np.roll(x, -(m // 2), axis=1)
    w = np.zeros((n_out, n_in, f), dtype=complex)
    power = None
    hist = []
    zeros = np.zeros((n_out, m), dtype=complex)
    n_blocks = n_train // m

    full = bool(mask.all())
    active_out, active_in = np.nonzero(mask[..., 0])
    if cfg.normalized:
        # averaged periodogram / cross-spectrum of the training prefix
        specs = np.stack([np.fft.fft(_blocks(xa, b * m, m), axis=-1) for b in range(n_blocks)])
        if cfg.cross_spectral and full:
            # R[f] = E[conj(X) X^T]; the step is decorrelated across inputs per bin
            r = np.einsum("bjf,blf->fjl", np.conj(specs), specs) / n_blocks
            load = 1e-6 * np.trace(r, axis1=1, axis2=2).real.mean() / n_in
            rinv = np.linalg.inv(r + load * np.eye(n_in))
        else:
            rinv = None
            power = np.mean(np.abs(specs) ** 2, axis=0)
        del specs

    def update(u_blk, err):
        nonlocal power, w
        uf = np.fft.fft(u_blk, axis=-1)
        ef = np.fft.fft(np.concatenate([zeros, err], axis=1), axis=-1)
        # the gradient is an outer product per bin, so normalise the input side only
        v = np.conj(uf)
        if cfg.normalized and rinv is not None:
            v = np.matmul(rinv, v.T[:, :, None])[:, :, 0].T
        elif cfg.normalized:
            p = np.abs(uf) ** 2
            power = cfg.power_smoothing * power + (1 - cfg.power_smoothing) * p
            eps = 1e-6 * power.mean(axis=-1, keepdims=True)
            v = v / (power + eps)
        if full:
            g = np.fft.ifft(v[None, :, :] * ef[:, None, :], axis=-1)
            g[..., m:] = 0
            w = w + cfg.step * np.fft.fft(g, axis=-1)
        else:
            g = np.fft.ifft(v[active_in] * ef[active_out], axis=-1)
            g[..., m:] = 0
            w[active_out, active_in] += cfg.step * np.fft.fft(g, axis=-1)

    def output(u_blk):
        uf = np.fft.fft(u_blk, axis=-1)
        return np.fft.ifft(np.einsum("ijf,jf->if", w, uf), axis=-1)[:, m:]

    theta = 0.0

    def common_phase(target, y):
        return float(np.angle(np.sum(target * np.conj(y)))) if cfg.carrier_phase else 0.0

    n_out_blocks = -(-length // m)
    block_phase = np.zeros(n_out_blocks)
    for _ in range(cfg.passes):
        for b in range(n_blocks):
            u_blk = _blocks(xa, b * m, m)
            target = d[:, b * m : (b + 1) * m]
            y = output(u_blk)
            theta = common_phase(target, y)
            block_phase[b] = theta
            rot = np.exp(1j * theta)
            err = target - y * rot
            mse = float(np.mean(np.abs(err) ** 2))
            _check_divergence(mse, hist, cfg.divergence_factor)
            hist.append(mse)
            update(u_blk, err * np.conj(rot))

    if cfg.payload_mode == "dd":
        fmt = fmts[0]
        if fmt is None:
            raise InvalidArgumentError("decision-directed mode needs formatted training frames")
        for b in range(n_blocks, length // m):
            u_blk = _blocks(xa, b * m, m)
            y = output(u_blk) * np.exp(1j * theta)
            dec = np.stack([decide_symbols(row, fmt) for row in y])
            theta += common_phase(dec, y)
            block_phase[b] = theta
            rot = np.exp(1j * theta)
            y = output(u_blk)
            update(u_blk, (dec - y * rot) * np.conj(rot))

    state = EqualizerState(w, m, in_labels, out_labels, hist, _is_converged(hist), theta)
    # every block carries the carrier phase it was last adapted with; blocks that
    # were never adapted (frozen payload) keep the phase of the last one that was
    last = n_blocks if cfg.payload_mode == "frozen" else length // m
    block_phase[last:] = theta
    y = fd_filter(w, x, m) * np.exp(1j * np.repeat(block_phase, m)[:length])
    baud = tribs.baud
    frames = [SymbolFrame(row, fmt, baud) for row, fmt in zip(y, fmts)]
    return frames, state


def td_lms_reference(tribs, training, taps, step, passes=3, training_symbols=None,
                     normalized=False, include_empty=False, divergence_factor=10.0):
    """Sample-by-sample multichannel LMS, kept deliberately plain.

    Per symbol: every output is computed with the current taps, then all
    taps are updated with ``w_ij += step * e_i * conj(x_j)`` (divided by the
    total input energy in the tap window when ``normalized``).  Only for
    small instances.
    """
    sel = tribs.select(include_empty)
    out_labels = _output_labels(tribs, training)
    x = tribs.tributaries[sel]
    n_in, n_out = len(sel), len(out_labels)
    if n_in > 4 or n_out > 4 or taps > 64:
        raise InvalidArgumentError("td_lms_reference is limited to N <= 4, taps <= 64")
    d_all, fmts = _training_arrays(training, out_labels)
    n_train = min(len(dd) for dd in d_all)
    if training_symbols is not None:
        n_train = min(n_train, training_symbols)
    length = x.shape[1]
    delay = taps // 2
    w = np.zeros((n_out, n_in, taps), dtype=complex)
    lags = np.arange(taps)
    hist, acc = [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(passes):
            for n in range(n_train):
                xv = x[:, (n + delay - lags) % length]
                y = np.einsum("ijk,jk->i", w, xv)
                e = np.array([dd[n] for dd in d_all]) - y
                mu = step / (np.vdot(xv, xv).real + 1e-12) if normalized else step
                w += mu * e[:, None, None] * np.conj(xv)[None, :, :]
                acc.append(np.mean(np.abs(e) ** 2))
                if len(acc) == taps:
                    mse = float(np.mean(acc))
                    acc = []
                    _check_divergence(mse, hist, divergence_factor)
                    hist.append(mse)
    wf = np.zeros((n_out, n_in, 2 * taps), dtype=complex)
    wf[..., :taps] = w
    wf = np.fft.fft(wf, axis=-1)
    state = EqualizerState(wf, taps, [tribs.labels[k] for k in sel], out_labels, hist,
                           _is_converged(hist) if hist else False)
    y = fd_filter(wf, x, taps)
    frames = [SymbolFrame(row, fmt, tribs.baud) for row, fmt in zip(y, fmts)]
    return frames, state


# ---------------------------------------------------------------------------
# carrier phase
# ---------------------------------------------------------------------------


def phase_track(frame, reference=None, block=64):
    """Blockwise common-phase removal.

    With a ``reference`` (frame or array of known symbols) each block is
    rotated by ``arg(sum(ref * conj(sym)))``.  Without one, hard decisions
    stand in for the reference and the estimate is accumulated block to
    block so slow drift never wraps into a decision ambiguity.
    """
    if block < 16:
        raise InvalidArgumentError(f"block must be >= 16, got {block}")
    s = frame.symbols
    out = np.empty_like(s)
    if reference is not None:
        ref = np.asarray(reference.symbols if isinstance(reference, SymbolFrame) else reference)
        if len(ref) < len(s):
            raise InvalidArgumentError("reference shorter than the frame")
        for b in range(0, len(s), block):
            sl = slice(b, b + block)
            theta = np.angle(np.sum(ref[sl] * np.conj(s[sl])))
            out[sl] = s[sl] * np.exp(1j * theta)
        return SymbolFrame(out, frame.format, frame.baud)
    if frame.format is None:
        raise InvalidArgumentError("decision-directed tracking needs frame.format")
    return SymbolFrame(dd_phase_track(s, frame.format, block), frame.format, frame.baud)


def dd_phase_track(symbols, fmt, block=64):
    """Decision-directed block phase tracking of one or more rows at once.

    Each row keeps its own accumulated phase; rows are processed together
    so many modes cost one pass over the blocks.
    """
    if block < 16:
        raise InvalidArgumentError(f"block must be >= 16, got {block}")
    s = np.asarray(symbols, dtype=complex)
    squeeze = s.ndim == 1
    s = np.atleast_2d(s)
    out = np.empty_like(s)
    theta = np.zeros(s.shape[0])
    for b in range(0, s.shape[1], block):
        sl = slice(b, b + block)
        z = s[:, sl] * np.exp(1j * theta)[:, None]
        theta += np.angle(np.sum(decide_symbols(z, fmt) * np.conj(z), axis=1))
        out[:, sl] = s[:, sl] * np.exp(1j * theta)[:, None]
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# channel estimates
# ---------------------------------------------------------------------------


def extract_impulse_response(state):
    if not state.converged:
        raise StaleStateError("equaliser state has not converged")
    h = state.taps()
    with np.errstate(divide="ignore"):
        prof = 10 * np.log10(np.mean(np.abs(h) ** 2, axis=(0, 1)))
    prof = prof - prof.max()
    return ImpulseResponse(h, prof, np.arange(state.num_taps) - state.delay)


def estimate_channel_ls(inputs, outputs, n_taps=1, max_symbols=8192):
    """Least-squares FIR MIMO channel ``outputs ~ H * inputs``.

    ``inputs`` (n_in, L) and ``outputs`` (n_out, L) are aligned sequences.
    Taps span lags ``-(n_taps//2) .. n_taps//2``.  Returns an array of shape
    (n_out, n_in, n_taps).
    """
    s = np.atleast_2d(np.asarray(inputs))
    r = np.atleast_2d(np.asarray(outputs))
    half = n_taps // 2
    length = min(s.shape[1], r.shape[1], max_symbols + 2 * half)
    rows = np.arange(half, length - half)
    lags = np.arange(-half, half + 1)
    a = s[:, rows[:, None] - lags[None, :]]  # (n_in, rows, taps)
    a = a.transpose(1, 0, 2).reshape(len(rows), -1)
    sol, _, rank, _ = np.linalg.lstsq(a, r[:, rows].T, rcond=None)
    if rank < a.shape[1]:
        raise EstimateUnreliableError(
            f"training matrix rank {rank} < {a.shape[1]} unknowns"
        )
    return sol.T.reshape(r.shape[0], s.shape[0], len(lags))


def estimate_intensity_transfer_matrix(state, tribs, training, n_taps=9, max_symbols=8192):
    """Normalised |H|^2 (dB) between training modes and equaliser inputs.

    Rows follow ``state.input_labels`` (tributaries), columns follow
    ``state.output_labels`` (transmitted modes).  The estimate is a direct
    least-squares fit on the training, not an inverse of the equaliser.
    """
    if not state.converged:
        raise StaleStateError("equaliser state has not converged")
    d, _ = _training_arrays(training, state.output_labels)
    n = min(len(dd) for dd in d)
    s = np.stack([dd[:n] for dd in d])
    idx = [tribs.labels.index(lab) if lab is not EMPTY else
           [k for k, l in enumerate(tribs.labels) if l is EMPTY][0]
           for lab in state.input_labels]
    r = tribs.tributaries[idx, :n]
    h = estimate_channel_ls(s, r, n_taps, max_symbols)
    with np.errstate(divide="ignore"):
        p = 10 * np.log10(np.sum(np.abs(h) ** 2, axis=-1))
    return p - p.max()
