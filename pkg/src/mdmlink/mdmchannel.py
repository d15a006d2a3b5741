"""Optical path model: mode coupling, polarization pairing and TDM.

Matrices follow the ``out = M @ in`` convention, so row ``i`` collects what
arrives at output mode ``i`` and the crosstalk of mode ``i`` is read along
that row, relative to its diagonal (through) entry.

The TDM emulation works on integer sample shifts.  Spool jitter is given in
seconds and rounded half-up to the sample grid, so a jitter of up to half a
sample moves a window by at most one sample.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .errors import (
    DegenerateWindowError,
    InvalidArgumentError,
    PlanError,
    TdmOverlapError,
)
from .sigproc import Waveform

EMPTY = None


def mode_labels(n=11):
    if not 2 <= n <= 16:
        raise InvalidArgumentError(f"mode count must lie in 2..16, got {n}")
    return [f"TE{k}" for k in range(n)]


# ---------------------------------------------------------------------------
# matrices and profiles
# ---------------------------------------------------------------------------


@dataclass
class TransferMatrix:
    entries: np.ndarray
    wavelength_nm: float = 1550.0
    labels: list = None
    normalization: str = "field"

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise InvalidArgumentError(
                f"transfer matrix must be square, got shape {self.entries.shape}"
            )
        if self.labels is None:
            self.labels = mode_labels(self.n)
        if len(self.labels) != self.n:
            raise InvalidArgumentError("label count does not match matrix size")

    @property
    def n(self):
        return self.entries.shape[0]

    def intensity_db(self):
        with np.errstate(divide="ignore"):
            return 10 * np.log10(np.abs(self.entries) ** 2)

    def worst_crosstalk_db(self):
        """Strongest off-diagonal entry of each row, in dB below the diagonal."""
        p = self.intensity_db()
        off = p.copy()
        np.fill_diagonal(off, -np.inf)
        return off.max(axis=1) - np.diag(p)

    def insertion_loss_db(self):
        return -np.diag(self.intensity_db())

    def max_singular_value(self):
        return float(np.linalg.svd(self.entries, compute_uv=False)[0])

    def normalized(self):
        """Copy scaled down (never up) so the largest singular value is 1."""
        smax = self.max_singular_value()
        scale = 1.0 / smax if smax > 1 else 1.0
        return TransferMatrix(
            self.entries * scale, self.wavelength_nm, list(self.labels), "field, passive"
        )


@dataclass
class CrosstalkProfile:
    wavelengths_nm: np.ndarray
    crosstalk_db: np.ndarray
    insertion_loss_db: np.ndarray
    labels: list = None

    def __post_init__(self):
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=float)
        self.crosstalk_db = np.atleast_2d(np.asarray(self.crosstalk_db, dtype=float))
        self.insertion_loss_db = np.atleast_2d(
            np.asarray(self.insertion_loss_db, dtype=float)
        )
        k = len(self.wavelengths_nm)
        if self.crosstalk_db.shape[0] != k or self.insertion_loss_db.shape != self.crosstalk_db.shape:
            raise InvalidArgumentError("profile tables must be (n_wavelengths, n_modes)")
        if np.any(np.diff(self.wavelengths_nm) <= 0):
            raise InvalidArgumentError("profile wavelengths must be strictly increasing")
        if np.any(self.crosstalk_db > 0):
            raise InvalidArgumentError("crosstalk levels must be <= 0 dB")
        if self.labels is None:
            self.labels = mode_labels(self.crosstalk_db.shape[1])

    @property
    def n_modes(self):
        return self.crosstalk_db.shape[1]

    def at(self, wavelength_nm):
        """Linearly interpolated (crosstalk_db, insertion_loss_db) per mode."""
        lo, hi = self.wavelengths_nm[0], self.wavelengths_nm[-1]
        if not lo <= wavelength_nm <= hi:
            raise InvalidArgumentError(
                f"wavelength {wavelength_nm} nm outside profile range [{lo}, {hi}] nm"
            )
        xt = np.array([np.interp(wavelength_nm, self.wavelengths_nm, c) for c in self.crosstalk_db.T])
        il = np.array(
            [np.interp(wavelength_nm, self.wavelengths_nm, c) for c in self.insertion_loss_db.T]
        )
        return xt, il

    @classmethod
    def flat(cls, crosstalk_db, insertion_loss_db=0.0, wavelengths_nm=(1520.0, 1570.0)):
        """Wavelength-independent profile; scalars broadcast over 11 modes."""
        xt = np.atleast_1d(np.asarray(crosstalk_db, dtype=float))
        if xt.size == 1:
            xt = np.full(11, xt[0])
        il = np.broadcast_to(np.asarray(insertion_loss_db, dtype=float), xt.shape)
        k = len(wavelengths_nm)
        return cls(wavelengths_nm, np.tile(xt, (k, 1)), np.tile(il, (k, 1)))


def default_crosstalk_profile(n_modes=11):
    """Synthetic stand-in for a measured crosstalk spectrum.

    Most modes sit between -24 and -14 dB.  The mode at index 8 is the
    outlier: -7 dB at the blue end (1530-1535 nm), easing to -10 dB at
    1560 nm.  Insertion loss spreads over 0-1 dB.
    """
    wl = np.arange(1525.0, 1566.0, 5.0)
    k = np.arange(n_modes)
    base = -24.0 + 10.0 * k / max(n_modes - 1, 1)
    ripple = 1.0 * np.cos(2 * np.pi * (wl[:, None] - 1525.0) / 40.0 + k[None, :])
    xt = base[None, :] + ripple
    if n_modes > 8:
        xt[:, 8] = np.interp(wl, [1525.0, 1535.0, 1560.0, 1565.0], [-7.0, -7.0, -10.0, -10.0])
    il = np.tile(np.linspace(0.0, 1.0, n_modes), (len(wl), 1))
    return CrosstalkProfile(wl, np.minimum(xt, 0.0), il)


def load_transfer_matrix(source, seed=0):
    """Read a measured power matrix (CSV path or text).

    Only intensities are measured, so field magnitudes are ``sqrt`` of the
    linear power and phases are drawn uniformly from ``seed``.  The result
    is left unscaled; call ``.normalized()`` before using it as a passive
    channel.
    """
    from .formats import read_matrix_csv

    labels, power_db, meta = read_matrix_csv(source)
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi, size=power_db.shape)
    mag = 10 ** (power_db / 20)
    return TransferMatrix(mag * np.exp(1j * phase), meta["wavelength_nm"], labels, "field")


def synthesize_transfer_matrix(profile, wavelength_nm, seed, phases="random"):
    """Random matrix whose per-row worst crosstalk matches ``profile``.

    Each row gets one off-diagonal entry exactly at the profile level; the
    other off-diagonal entries fall 3-25 dB below it.  ``phases`` is
    ``"random"`` (uniform) or ``"zero"``.  Passivity is restored by one
    global scale, which leaves relative crosstalk untouched.
    """
    if phases not in ("random", "zero"):
        raise InvalidArgumentError(f"phases must be 'random' or 'zero', got {phases!r}")
    xt, il = profile.at(wavelength_nm)
    n = profile.n_modes
    rng = np.random.default_rng(seed)
    diag = 10 ** (-il / 20)
    mag = np.zeros((n, n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        worst = others[rng.integers(len(others))]
        below = rng.uniform(3.0, 25.0, size=n)
        row_db = xt[i] - below
        row_db[worst] = xt[i]
        mag[i] = diag[i] * 10 ** (row_db / 20)
        mag[i, i] = diag[i]
    phase = rng.uniform(0, 2 * np.pi, size=(n, n))
    if phases == "zero":
        phase[:] = 0.0
    m = TransferMatrix(mag * np.exp(1j * phase), wavelength_nm, list(profile.labels))
    return m.normalized()


# ---------------------------------------------------------------------------
# TDM plan and link description
# ---------------------------------------------------------------------------


@dataclass
class TdmPlan:
    slots: list
    slot_duration: float
    slot_delays: list = None

    def __post_init__(self):
        self.slots = [tuple(s) for s in self.slots]
        if self.slot_delays is None:
            self.slot_delays = [k * self.slot_duration for k in range(len(self.slots))]
        self.slot_delays = [float(d) for d in self.slot_delays]

    @property
    def n_slots(self):
        return len(self.slots)

    @property
    def period(self):
        return self.n_slots * self.slot_duration

    @property
    def duty(self):
        return 1.0 / self.n_slots

    def positions(self):
        """(slot, pol, label) for every tributary, pol 0 = X, 1 = Y."""
        return [(s, p, lab) for s, pair in enumerate(self.slots) for p, lab in enumerate(pair)]

    def active_labels(self):
        return [lab for _, _, lab in self.positions() if lab is not EMPTY]

    def validate(self, labels=None):
        if self.n_slots == 0:
            raise PlanError("plan has no slots")
        if any(len(pair) != 2 for pair in self.slots):
            raise PlanError("every slot needs exactly two polarization positions")
        if not self.slot_duration > 0:
            raise PlanError("slot_duration must be positive")
        if len(self.slot_delays) != self.n_slots:
            raise PlanError("need one delay per slot")
        if np.any(np.diff(self.slot_delays) <= 0):
            raise PlanError("slot delays must be strictly increasing")
        active = self.active_labels()
        if len(set(active)) != len(active):
            raise PlanError("a mode appears in more than one slot position")
        if labels is not None:
            missing = set(labels) - set(active)
            extra = set(active) - set(labels)
            if missing or extra:
                raise PlanError(
                    f"plan does not cover the mode set (missing {sorted(missing)}, "
                    f"unknown {sorted(extra)})"
                )
        n_empty = 2 * self.n_slots - len(active)
        if len(active) % 2 and n_empty != 1:
            raise PlanError("an odd mode count needs exactly one EMPTY position")
        return self

    @classmethod
    def default(cls, labels, slot_duration):
        """Pair neighbours; with an odd count the middle mode rides alone.

        For 11 modes: (TE0,TE1) (TE2,TE3) (TE4,TE6) (TE7,TE8) (TE9,TE10)
        (TE5, EMPTY).
        """
        labels = list(labels)
        lone = labels[len(labels) // 2] if len(labels) % 2 else None
        rest = [lab for lab in labels if lab != lone]
        slots = [(rest[k], rest[k + 1]) for k in range(0, len(rest), 2)]
        if lone is not None:
            slots.append((lone, EMPTY))
        return cls(slots, slot_duration).validate(labels)


@dataclass
class LinkModel:
    matrix: TransferMatrix
    plan: TdmPlan
    mdl_db: np.ndarray = None
    decorrelation_delay: float = 0.0
    jones_seed: object = 0
    snr_db: float = np.inf
    linewidth: float = 0.0
    freq_offset: float = 0.0
    echoes: list = field(default_factory=list)
    launch_db: np.ndarray = None

    def __post_init__(self):
        n = self.matrix.n
        self.mdl_db = np.zeros(n) if self.mdl_db is None else np.asarray(self.mdl_db, float)
        self.launch_db = (
            np.zeros(n) if self.launch_db is None else np.asarray(self.launch_db, float)
        )
        if self.mdl_db.shape != (n,) or self.launch_db.shape != (n,):
            raise InvalidArgumentError("mdl_db and launch_db need one entry per mode")
        if self.decorrelation_delay < 0:
            raise InvalidArgumentError("decorrelation_delay must be >= 0")

    @property
    def mdl_spread_db(self):
        return float(self.mdl_db.max() - self.mdl_db.min())

    def coupling_matrix(self):
        """diag(mdl) @ M @ diag(launch): the memoryless chip response."""
        return (
            np.diag(10 ** (-self.mdl_db / 20))
            @ self.matrix.entries
            @ np.diag(10 ** (self.launch_db / 20))
        )

    def system_matrix(self):
        """End-to-end field matrix, tributaries (slot-major, X before Y) x modes."""
        return system_matrix(self.coupling_matrix(), self.matrix.labels, self.plan, self.jones_seed)


def jones_matrices(n_slots, seed):
    """One 2x2 unitary per slot; ``seed`` None or "identity" gives identities."""
    if seed is None or (isinstance(seed, str) and seed == "identity"):
        return [np.eye(2, dtype=complex) for _ in range(n_slots)]
    rng = np.random.default_rng(seed)
    return [unitary_group.rvs(2, random_state=rng) for _ in range(n_slots)]


def system_matrix(coupling, labels, plan, jones_seed):
    labels = list(labels)
    jones = jones_matrices(plan.n_slots, jones_seed)
    out = np.zeros((2 * plan.n_slots, len(labels)), dtype=complex)
    for s, pair in enumerate(plan.slots):
        for p, lab in enumerate(pair):
            if lab is EMPTY:
                continue
            out[2 * s : 2 * s + 2] += np.outer(jones[s][:, p], coupling[labels.index(lab)])
    return out


# ---------------------------------------------------------------------------
# waveform operations
# ---------------------------------------------------------------------------


def _check_bundle(wfs):
    if not wfs:
        raise InvalidArgumentError("need at least one waveform")
    rate, n = wfs[0].sample_rate, len(wfs[0])
    for w in wfs:
        if w.sample_rate != rate:
            raise InvalidArgumentError("waveforms have mismatched sample rates")
        if len(w) != n:
            raise InvalidArgumentError("waveforms have mismatched lengths")
    return rate, n


def delay_decorrelate(wfs, delay):
    """Cyclically delay waveform ``k`` by ``round(k * delay * fs)`` samples."""
    rate, _ = _check_bundle(wfs)
    if delay < 0:
        raise InvalidArgumentError("delay must be >= 0")
    step = int(round(delay * rate))
    return [w.replace(np.roll(w.samples, k * step)) for k, w in enumerate(wfs)]


def apply_mode_coupling(wfs, m, mdl_db=None):
    """Memoryless mix ``diag(10**(-mdl/20)) @ M @ in``, one output per mode."""
    _check_bundle(wfs)
    entries = m.entries if isinstance(m, TransferMatrix) else np.asarray(m)
    n = entries.shape[0]
    if len(wfs) != n or entries.shape != (n, n):
        raise InvalidArgumentError(
            f"{len(wfs)} waveforms do not match a {entries.shape} matrix"
        )
    gain = np.ones(n) if mdl_db is None else 10 ** (-np.asarray(mdl_db, float) / 20)
    if gain.shape != (n,):
        raise InvalidArgumentError("mdl_db needs one entry per mode")
    mixed = (gain[:, None] * entries) @ np.stack([w.samples for w in wfs])
    labels = m.labels if isinstance(m, TransferMatrix) else [w.label for w in wfs]
    return [Waveform(row, wfs[0].sample_rate, lab) for row, lab in zip(mixed, labels)]


def pair_polarizations(wfs, plan, jones_seed, labels=None):
    """Put mode pairs onto X/Y of each slot and mix them with a Jones matrix.

    Returns one ``(x, y)`` waveform pair per slot.  ``labels`` default to
    the waveforms' own labels.
    """
    rate, n = _check_bundle(wfs)
    labels = [w.label for w in wfs] if labels is None else list(labels)
    plan.validate(labels)
    by_label = dict(zip(labels, wfs))
    zero = np.zeros(n, dtype=complex)
    out = []
    for s, (pair, u) in enumerate(zip(plan.slots, jones_matrices(plan.n_slots, jones_seed))):
        a = by_label[pair[0]].samples if pair[0] is not EMPTY else zero
        b = by_label[pair[1]].samples if pair[1] is not EMPTY else zero
        x = u[0, 0] * a + u[0, 1] * b
        y = u[1, 0] * a + u[1, 1] * b
        out.append((Waveform(x, rate, f"slot{s}X"), Waveform(y, rate, f"slot{s}Y")))
    return out


def gate(wf, duty, period, slot_index=0, baud=None):
    """Zero everything outside ``[slot*duty*T, (slot+1)*duty*T)`` modulo ``T``."""
    if not 0 < duty <= 1:
        raise InvalidArgumentError(f"duty must lie in (0, 1], got {duty}")
    if not period > 0:
        raise InvalidArgumentError(f"period must be positive, got {period}")
    fs = wf.sample_rate
    width = duty * period
    min_width = 10.0 / baud if baud else 10.0 / fs
    if width < min_width * (1 - 1e-9):
        raise DegenerateWindowError(
            f"gate window {width:g} s is shorter than 10 symbols ({min_width:g} s)"
        )
    if duty == 1:
        return wf.replace(wf.samples.copy())
    per = int(round(period * fs))
    start = int(round(slot_index * width * fs))
    n_win = int(round(width * fs))
    keep = (np.arange(len(wf)) - start) % per < n_win
    return wf.replace(np.where(keep, wf.samples, 0))


def _rounded_shift(seconds, fs):
    return int(np.floor(seconds * fs + 0.5))


def tdm_combine(slots, plan, jitter=None, guard=1):
    """Delay each gated slot pair by its spool delay and add them up.

    ``slots`` may be any iterable of ``(x, y)`` pairs, so a caller can build
    the slots lazily and keep only one in memory.  ``jitter`` adds a
    per-slot delay error in seconds; whole samples are circular shifts and
    any fractional remainder is a band-limited delay.  Two slots whose gate
    windows share more than ``guard`` samples raise ``TdmOverlapError``.
    """
    jitter = np.zeros(plan.n_slots) if jitter is None else np.asarray(jitter, float)
    if jitter.shape != (plan.n_slots,):
        raise InvalidArgumentError("jitter needs one value per slot")
    acc_x = acc_y = owner = None
    rate = None
    for k, (x, y) in enumerate(slots):
        if k >= plan.n_slots:
            raise InvalidArgumentError("more slot pairs than plan slots")
        if acc_x is None:
            rate, n = x.sample_rate, len(x)
            acc_x = np.zeros(n, dtype=complex)
            acc_y = np.zeros(n, dtype=complex)
            owner = np.full(n, -1, dtype=np.int16)
        if x.sample_rate != rate or y.sample_rate != rate or len(x) != n or len(y) != n:
            raise InvalidArgumentError("slot waveforms differ in rate or length")
        exact = (plan.slot_delays[k] + jitter[k]) * rate
        shift = _rounded_shift(plan.slot_delays[k] + jitter[k], rate)
        # overlap is judged on the gate support; a fractional remainder is
        # applied as a band-limited delay of the whole slot
        support = np.roll((x.samples != 0) | (y.samples != 0), shift)
        if abs(exact - round(exact)) > 1e-9:
            sx, sy = fractional_shift(x.samples, exact), fractional_shift(y.samples, exact)
        else:
            sx, sy = np.roll(x.samples, shift), np.roll(y.samples, shift)
        clash = owner[support]
        clash = clash[clash >= 0]
        if clash.size:
            counts = np.bincount(clash)
            worst = int(counts.argmax())
            if counts[worst] > guard:
                raise TdmOverlapError(
                    f"slot {k} overlaps slot {worst} by {counts[worst]} samples "
                    f"(guard {guard})"
                )
        owner[support] = k
        acc_x += sx
        acc_y += sy
    if acc_x is None:
        raise InvalidArgumentError("no slots to combine")
    return Waveform(acc_x, rate, "X"), Waveform(acc_y, rate, "Y")


def fractional_shift(x, delay_samples):
    """Circular delay by a possibly fractional number of samples."""
    if float(delay_samples).is_integer():
        return np.roll(x, int(delay_samples))
    f = np.fft.fftfreq(len(x))
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * np.pi * f * delay_samples))


def add_reflection_echo(wf, echoes):
    """Add weak delayed copies: ``out = in + sum(10**(lvl/20) * shift(in, d))``."""
    out = wf.samples.copy()
    for delay, level_db in echoes:
        if level_db > -10:
            raise InvalidArgumentError(f"echo level {level_db} dB is above -10 dB")
        out += 10 ** (level_db / 20) * fractional_shift(wf.samples, delay * wf.sample_rate)
    return wf.replace(out)
