"""Transmitter-side signal generation and single-waveform impairments.

Bits are plain ``uint8`` numpy arrays.  Symbol frames and waveforms carry
their rate with them so later stages never have to guess it.

Gray maps (bits are read MSB first within a symbol)::

    QPSK   b0 b1        -> ((1 - 2*b0) + 1j*(1 - 2*b1)) / sqrt(2)
    16-QAM b0 b1 | b2 b3 -> (L(b0 b1) + 1j*L(b2 b3)) / sqrt(10)
           with L: 00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3

All filtering is circular (FFT based): every frame is treated as one period
of a repeating pattern, the same way a DAC loops its memory.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as sps_signal

from .errors import InvalidArgumentError

DEFAULT_ROLLOFF = 0.01
DEFAULT_SPAN = 1024
PRBS17_PERIOD = 2**17 - 1

_QAM16_LEVELS = np.array([3.0, 1.0, -3.0, -1.0])  # indexed by 2*b0 + b1


@dataclass(frozen=True)
class ModulationFormat:
    name: str
    bits_per_symbol: int
    constellation: np.ndarray = field(compare=False, repr=False)

    @property
    def order(self):
        return 2**self.bits_per_symbol


def _qpsk_constellation():
    idx = np.arange(4)
    b0, b1 = (idx >> 1) & 1, idx & 1
    return ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2)


def _qam16_constellation():
    idx = np.arange(16)
    i_lvl = _QAM16_LEVELS[(idx >> 2) & 3]
    q_lvl = _QAM16_LEVELS[idx & 3]
    return (i_lvl + 1j * q_lvl) / np.sqrt(10)


QPSK = ModulationFormat("QPSK", 2, _qpsk_constellation())
QAM16 = ModulationFormat("QAM16", 4, _qam16_constellation())

_FORMATS = {"QPSK": QPSK, "QAM16": QAM16, "16QAM": QAM16, "16-QAM": QAM16}


def get_format(name):
    """Look up a modulation format by name (case-insensitive)."""
    if isinstance(name, ModulationFormat):
        return name
    try:
        return _FORMATS[str(name).upper()]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown modulation format {name!r}; expected QPSK or QAM16"
        ) from None


@dataclass
class SymbolFrame:
    symbols: np.ndarray
    format: ModulationFormat = None
    baud: float = 1.0

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=complex)
        if not self.baud > 0:
            raise InvalidArgumentError(f"baud must be positive, got {self.baud}")

    def __len__(self):
        return len(self.symbols)


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: float
    label: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if not self.sample_rate > 0:
            raise InvalidArgumentError(
                f"sample_rate must be positive, got {self.sample_rate}"
            )

    def __len__(self):
        return len(self.samples)

    @property
    def power(self):
        return float(np.mean(np.abs(self.samples) ** 2)) if len(self) else 0.0

    def replace(self, samples, label=None):
        return Waveform(samples, self.sample_rate, self.label if label is None else label)


# ---------------------------------------------------------------------------
# bits and symbols
# ---------------------------------------------------------------------------


def _prbs17(seed, length):
    # s[n] = s[n-3] ^ s[n-17], characteristic polynomial x^17 + x^14 + 1
    state = seed % PRBS17_PERIOD + 1
    s = [(state >> k) & 1 for k in range(17)]
    for n in range(17, length):
        s.append(s[n - 3] ^ s[n - 17])
    return np.array(s[:length], dtype=np.uint8)


def generate_prbs(seed, length, mode="uniform"):
    """Deterministic pseudo-random bits.

    ``mode="uniform"`` draws from a seeded generator.  ``mode="prbs17"`` runs
    the x^17 + x^14 + 1 shift register, whose period is 2**17 - 1; the seed
    only picks the (non-zero) initial register state.
    """
    length = int(length)
    if length < 1:
        raise InvalidArgumentError(f"length must be >= 1, got {length}")
    if mode == "uniform":
        rng = np.random.default_rng(seed)
        return rng.integers(0, 2, size=length, dtype=np.uint8)
    if mode == "prbs17":
        return _prbs17(int(seed), length)
    raise InvalidArgumentError(f"unknown PRBS mode {mode!r}")


def map_bits(bits, fmt, baud=1.0):
    fmt = get_format(fmt)
    bits = np.asarray(bits, dtype=np.uint8)
    k = fmt.bits_per_symbol
    if bits.size == 0 or bits.size % k:
        raise InvalidArgumentError(
            f"bit count {bits.size} is not a positive multiple of {k} ({fmt.name})"
        )
    weights = 1 << np.arange(k - 1, -1, -1)
    idx = bits.reshape(-1, k) @ weights
    return SymbolFrame(fmt.constellation[idx], fmt, baud)


def _slice_16qam_axis(x):
    # returns (b_hi, b_lo) for one axis, levels scaled back to +-1, +-3
    b_hi = (x < 0).astype(np.uint8)
    b_lo = (np.abs(x) < 2).astype(np.uint8)
    return b_hi, b_lo


def decide_bits(symbols, fmt):
    """Hard decision straight to bits (per-axis slicing)."""
    fmt = get_format(fmt)
    s = np.asarray(symbols.symbols if isinstance(symbols, SymbolFrame) else symbols)
    if fmt is QPSK:
        out = np.empty((s.size, 2), dtype=np.uint8)
        out[:, 0] = s.real < 0
        out[:, 1] = s.imag < 0
        return out.ravel()
    scaled = s * np.sqrt(10)
    out = np.empty((s.size, 4), dtype=np.uint8)
    out[:, 0], out[:, 1] = _slice_16qam_axis(scaled.real)
    out[:, 2], out[:, 3] = _slice_16qam_axis(scaled.imag)
    return out.ravel()


def decide_symbols(symbols, fmt):
    """Nearest constellation point for each symbol."""
    fmt = get_format(fmt)
    s = np.asarray(symbols.symbols if isinstance(symbols, SymbolFrame) else symbols)
    if fmt is QPSK:
        return (np.where(s.real < 0, -1.0, 1.0) + 1j * np.where(s.imag < 0, -1.0, 1.0)) / np.sqrt(2)
    # square grid with odd integer levels -3..3 per axis
    scale = np.sqrt(10)

    def axis(v):
        return np.clip(2 * np.floor(v * scale / 2) + 1, -3, 3)

    return (axis(s.real) + 1j * axis(s.imag)) / scale


# ---------------------------------------------------------------------------
# pulse shaping
# ---------------------------------------------------------------------------


def rrc_taps(rolloff, span, sps):
    """Root-raised-cosine FIR taps with unit energy.

    Returns ``span * sps + 1`` taps centred on the middle one.  The two
    removable singularities (t = 0 and |t| = 1/(4*rolloff)) use their
    analytic limits.
    """
    if not 0 <= rolloff <= 1:
        raise InvalidArgumentError(f"rolloff must lie in [0, 1], got {rolloff}")
    if span <= 0 or span % 2:
        raise InvalidArgumentError(f"span must be a positive even integer, got {span}")
    if sps < 1:
        raise InvalidArgumentError(f"sps must be >= 1, got {sps}")
    b = float(rolloff)
    n = int(span) * int(sps) + 1
    t = (np.arange(n) - (n - 1) // 2) / sps
    h = np.empty(n)
    at_zero = np.isclose(t, 0.0, rtol=0, atol=1e-12)
    if b > 0:
        at_edge = np.isclose(np.abs(4 * b * t), 1.0, rtol=0, atol=1e-9)
    else:
        at_edge = np.zeros(n, dtype=bool)
    reg = ~(at_zero | at_edge)
    tr = t[reg]
    h[reg] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2)
    )
    h[at_zero] = 1 - b + 4 * b / np.pi
    if at_edge.any():
        h[at_edge] = (b / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
            + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
        )
    return h / np.sqrt(np.sum(h**2))


def circular_filter(x, taps):
    """Zero-phase circular convolution of ``x`` with centred ``taps``.

    Taps longer than ``x`` wrap around, which is exactly what filtering a
    periodic signal with them does.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    centre = (len(taps) - 1) // 2
    kernel = np.zeros(n)
    np.add.at(kernel, (np.arange(len(taps)) - centre) % n, taps)
    return np.fft.ifft(np.fft.fft(x, axis=-1) * np.fft.fft(kernel), axis=-1)


def shape_pulses(frame, sps=2, rolloff=DEFAULT_ROLLOFF, span=DEFAULT_SPAN):
    if sps < 2:
        raise InvalidArgumentError(f"sps must be >= 2 for Nyquist shaping, got {sps}")
    if len(frame) == 0:
        raise InvalidArgumentError("cannot shape an empty frame")
    up = np.zeros(len(frame) * sps, dtype=complex)
    up[::sps] = frame.symbols
    taps = rrc_taps(rolloff, span, sps)
    return Waveform(circular_filter(up, taps), frame.baud * sps)


def matched_filter_downsample(
    wf, baud, rolloff=DEFAULT_ROLLOFF, timing_phase=0, span=DEFAULT_SPAN, fmt=None
):
    """RRC matched filter at 2 samples/symbol, then pick one sample per symbol.

    The input is first resampled to ``2 * baud`` whatever its rate.
    ``timing_phase`` is the index (0 or 1) of the symbol-centre sample.
    """
    if len(wf) == 0:
        raise InvalidArgumentError("empty waveform")
    if wf.sample_rate != 2 * baud:
        wf = resample(wf, 2 * baud)
    y = circular_filter(wf.samples, rrc_taps(rolloff, span, 2))
    return SymbolFrame(y[int(timing_phase) % 2 :: 2][: len(wf) // 2], fmt, baud)


def resample(wf, target_rate):
    """Band-limited rational resampling through the FFT.

    Trailing samples that do not fill a whole resampling period are dropped
    so the output length is exact.
    """
    if not target_rate > 0:
        raise InvalidArgumentError(f"target_rate must be positive, got {target_rate}")
    ratio = Fraction(target_rate / wf.sample_rate).limit_denominator(1_000_000)
    if ratio == 1:
        return Waveform(wf.samples.copy(), wf.sample_rate, wf.label)
    p, q = ratio.numerator, ratio.denominator
    n_in = (len(wf) // q) * q
    if n_in == 0:
        raise InvalidArgumentError(
            f"waveform of {len(wf)} samples too short for ratio {p}/{q}"
        )
    y = sps_signal.resample(wf.samples[:n_in], n_in * p // q)
    return Waveform(y, wf.sample_rate * p / q, wf.label)


# ---------------------------------------------------------------------------
# impairments
# ---------------------------------------------------------------------------


def add_awgn(wf, snr_db, seed):
    """Complex circular Gaussian noise at ``snr_db`` below the measured power.

    ``snr_db = inf`` is the no-noise sentinel.
    """
    if len(wf) == 0:
        raise InvalidArgumentError("empty waveform")
    if np.isinf(snr_db) and snr_db > 0:
        return wf.replace(wf.samples.copy())
    var = wf.power / 10 ** (snr_db / 10)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((2, len(wf)))
    return wf.replace(wf.samples + np.sqrt(var / 2) * (noise[0] + 1j * noise[1]))


def phase_noise_trace(n, linewidth, sample_rate, seed):
    """Wiener phase: random walk with step variance 2*pi*linewidth/fs."""
    if linewidth < 0:
        raise InvalidArgumentError(f"linewidth must be >= 0, got {linewidth}")
    if linewidth == 0:
        return np.zeros(n)
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal(n) * np.sqrt(2 * np.pi * linewidth / sample_rate)
    steps[0] = 0.0
    return np.cumsum(steps)


def add_phase_noise(wf, linewidth, seed):
    phi = phase_noise_trace(len(wf), linewidth, wf.sample_rate, seed)
    if linewidth == 0:
        return wf.replace(wf.samples.copy())
    return wf.replace(wf.samples * np.exp(1j * phi))


def add_freq_offset(wf, offset):
    if abs(offset) >= wf.sample_rate / 2:
        raise InvalidArgumentError(
            f"offset {offset} Hz aliases at sample rate {wf.sample_rate} Hz"
        )
    if offset == 0:
        return wf.replace(wf.samples.copy())
    n = np.arange(len(wf))
    return wf.replace(wf.samples * np.exp(2j * np.pi * offset * n / wf.sample_rate))
