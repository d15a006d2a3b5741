"""BER, EVM, MDL and capacity figures."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularChannelError
from .sigproc import SymbolFrame

FEC_THRESHOLD = 4.5e-3
ERROR_FREE_BER = 7e-6
FEC_OVERHEAD = 0.07

ERROR_FREE_BOUND = "error_free_bound"
BELOW_FEC = "below_fec"
ABOVE_FEC = "above_fec"


@dataclass
class BerReport:
    ber: float
    bits_counted: int
    errors_counted: int
    classification: str
    evm_percent: float = float("nan")
    label: str = ""


@dataclass
class CapacityReport:
    gross_bps: float
    net_bps: float
    fec_overhead: float
    spectral_efficiency_bps_hz: float = float("nan")
    grid_hz: float = float("nan")
    occupied_efficiency_bps_hz: float = float("nan")
    occupied_hz: float = float("nan")


def classify_ber(ber, errors, bits, fec_threshold=FEC_THRESHOLD, error_free_ber=ERROR_FREE_BER):
    """Thresholds are half open: ``ber < fec_threshold`` counts as below.

    Zero errors only earn ``error_free_bound`` when enough bits were counted
    to support a bound of ``error_free_ber``; otherwise it is ``below_fec``.
    """
    if errors == 0 and bits >= 1 / error_free_ber:
        return ERROR_FREE_BOUND
    return BELOW_FEC if ber < fec_threshold else ABOVE_FEC


def count_ber(decided, reference, skip=0, label=""):
    a = np.asarray(decided, dtype=np.uint8)[skip:]
    b = np.asarray(reference, dtype=np.uint8)[skip:]
    if a.shape != b.shape:
        raise InvalidArgumentError(
            f"bit sequences differ in length after skip ({a.size} vs {b.size})"
        )
    if a.size == 0:
        raise InvalidArgumentError("no bits left to count")
    errors = int(np.count_nonzero(a != b))
    ber = errors / a.size
    return BerReport(ber, int(a.size), errors, classify_ber(ber, errors, a.size), label=label)


def evm(symbols, reference):
    """RMS error magnitude over RMS reference magnitude, in percent."""
    s = np.asarray(symbols.symbols if isinstance(symbols, SymbolFrame) else symbols)
    r = np.asarray(reference.symbols if isinstance(reference, SymbolFrame) else reference)
    if s.size == 0 or r.size == 0:
        raise InvalidArgumentError("empty frame")
    if s.shape != r.shape:
        raise InvalidArgumentError("frames differ in length")
    return float(100 * np.sqrt(np.mean(np.abs(s - r) ** 2) / np.mean(np.abs(r) ** 2)))


def mdl_from_matrix(m):
    """Mode-dependent loss 20*log10(s_max / s_min) in dB."""
    entries = getattr(m, "entries", m)
    entries = np.asarray(entries)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise InvalidArgumentError("MDL needs a square matrix")
    sv = np.linalg.svd(entries, compute_uv=False)
    if sv[-1] <= sv[0] * np.finfo(float).eps:
        raise SingularChannelError("smallest singular value is zero")
    return float(20 * np.log10(sv[0] / sv[-1]))


def net_capacity(modes, baud, bits_per_symbol, fec_overhead=FEC_OVERHEAD):
    """Aggregate line rate over ``1 + overhead``."""
    if modes <= 0 or baud <= 0 or bits_per_symbol <= 0 or fec_overhead < 0:
        raise InvalidArgumentError("capacity inputs must be positive")
    gross = float(modes) * float(baud) * float(bits_per_symbol)
    return CapacityReport(gross, gross / (1 + fec_overhead), float(fec_overhead))


def spectral_efficiency(net_bps, grid_hz):
    if not grid_hz > 0:
        raise InvalidArgumentError("grid_hz must be positive")
    return net_bps / grid_hz


def capacity_report(modes, baud, bits_per_symbol, fec_overhead=FEC_OVERHEAD,
                    grid_hz=33e9, rolloff=0.01):
    """Capacity with efficiency over both the WDM grid and the occupied band."""
    rep = net_capacity(modes, baud, bits_per_symbol, fec_overhead)
    rep.grid_hz = float(grid_hz)
    rep.spectral_efficiency_bps_hz = spectral_efficiency(rep.net_bps, grid_hz)
    rep.occupied_hz = baud * (1 + rolloff)
    rep.occupied_efficiency_bps_hz = spectral_efficiency(rep.net_bps, rep.occupied_hz)
    return rep
