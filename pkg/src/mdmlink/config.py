"""Experiment configuration: typed defaults, schema, INI round trip.

The on-disk form is INI (``[section]`` headers, ``key = value`` lines).
Every key must be known; anything else is a ``ConfigError``.  Lists are
comma separated.  Defaults describe the 11-mode, 30 GBaud, 16-QAM link at
seven wavelengths from 1530 to 1560 nm.
"""

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError


def _floats(text):
    text = text.strip()
    return [float(v) for v in text.split(",")] if text else []


def _strs(text):
    text = text.strip()
    return [v.strip() for v in text.split(",")] if text else []


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt_float(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


_PARSE = {
    "float": float,
    "int": int,
    "str": str.strip,
    "bool": _bool,
    "floats": _floats,
    "strs": _strs,
}
_FORMAT = {
    "float": _fmt_float,
    "int": str,
    "str": str,
    "bool": lambda v: "true" if v else "false",
    "floats": lambda v: ", ".join(_fmt_float(x) for x in v),
    "strs": lambda v: ", ".join(v),
}


def _opt(section, kind, default, doc, choices=None):
    meta = {"section": section, "kind": kind, "doc": doc, "choices": choices}
    if isinstance(default, list):
        return field(default_factory=lambda: list(default), metadata=meta)
    return field(default=default, metadata=meta)


@dataclass
class ExperimentConfig:
    # signal
    format: str = _opt("signal", "str", "QAM16", "modulation format", ("QPSK", "QAM16"))
    baud: float = _opt("signal", "float", 30e9, "symbol rate [Bd]")
    sps: int = _opt("signal", "int", 2, "transmitter samples per symbol")
    rolloff: float = _opt("signal", "float", 0.01, "RRC roll-off")
    span: int = _opt("signal", "int", 1024, "RRC span [symbols]")
    prbs_mode: str = _opt("signal", "str", "uniform", "bit source", ("uniform", "prbs17"))
    data_mode: str = _opt(
        "signal", "str", "independent",
        "independent data per mode, or one pattern shifted per mode by the decorrelation delay",
        ("independent", "replica"),
    )
    training_symbols: int = _opt("signal", "int", 2**15, "training prefix per mode [symbols]")
    payload_symbols: int = _opt("signal", "int", 2**17, "payload per mode [symbols]")
    # channel
    n_modes: int = _opt("channel", "int", 11, "number of TE modes")
    source: str = _opt("channel", "str", "synthesized", "matrix source", ("synthesized", "file"))
    matrix_files: list = _opt("channel", "strs", [], "matrix CSV files, one per wavelength")
    profile: str = _opt("channel", "str", "default", "crosstalk profile", ("default", "flat"))
    flat_crosstalk_db: float = _opt("channel", "float", -7.0, "worst crosstalk for the flat profile [dB]")
    flat_insertion_loss_db: float = _opt("channel", "float", 0.0, "insertion loss for the flat profile [dB]")
    phases: str = _opt("channel", "str", "random", "synthesized matrix phases", ("random", "zero"))
    wavelengths_nm: list = _opt(
        "channel", "floats", [1530.0, 1535.0, 1540.0, 1545.0, 1550.0, 1555.0, 1560.0],
        "carrier wavelengths [nm]",
    )
    mdl_db: float = _opt("channel", "float", 7.0, "mode-dependent loss spread [dB]")
    launch_db: list = _opt("channel", "floats", [], "per-mode launch power offsets [dB] (empty = uniform)")
    echo_delays_s: list = _opt("channel", "floats", [], "reflection delays [s]")
    echo_levels_db: list = _opt("channel", "floats", [], "reflection levels [dB]")
    # link impairments
    snr_db: float = _opt("link", "float", 18.0, "per-mode SNR at the transmitter [dB] (inf = no noise)")
    linewidth_hz: float = _opt("link", "float", 100e3, "laser linewidth [Hz]")
    freq_offset_hz: float = _opt("link", "float", 0.0, "carrier frequency offset [Hz]")
    decorrelation_delay_s: float = _opt("link", "float", 25e-9, "relative delay between mode copies [s]")
    rx_sample_rate: float = _opt("link", "float", 40e9, "oscilloscope rate [Sa/s] (0 = transmitter rate)")
    # TDM
    slot_symbols: int = _opt("tdm", "int", 0, "slot length [symbols] (0 = training + payload)")
    jones: str = _opt("tdm", "str", "random", "Jones matrices after the combiners", ("random", "identity"))
    jitter_samples: float = _opt("tdm", "float", 0.0, "max spool delay error [samples], uniform per slot")
    guard_samples: int = _opt("tdm", "int", 1, "tolerated slot overlap [samples]")
    # equaliser
    num_taps: int = _opt("equalizer", "int", 512, "symbol-spaced taps per MIMO element")
    step: float = _opt("equalizer", "float", 0.1, "LMS step")
    passes: int = _opt("equalizer", "int", 3, "passes over the training prefix")
    normalized: bool = _opt("equalizer", "bool", True, "per-bin power-normalised step")
    include_empty: bool = _opt("equalizer", "bool", False, "feed the EMPTY tributary (12x11)")
    mimo: bool = _opt("equalizer", "bool", True, "full MIMO (false = diagonal-only weights)")
    payload_mode: str = _opt("equalizer", "str", "frozen", "payload weights", ("frozen", "dd"))
    phase_block: int = _opt("equalizer", "int", 64, "phase tracking block [symbols] (0 = off)")
    ls_taps: int = _opt("equalizer", "int", 9, "taps of the least-squares channel estimate")
    # seeds
    seed: int = _opt("seeds", "int", 1, "master seed (data, noise, phase noise, jitter)")
    channel_seed: int = _opt("seeds", "int", 7, "synthesized matrix / measured-phase seed")
    jones_seed: int = _opt("seeds", "int", 11, "Jones matrix seed")

    def __post_init__(self):
        self.validate()

    @property
    def frame_symbols(self):
        return self.training_symbols + self.payload_symbols

    def validate(self):
        for f in fields(self):
            choices = f.metadata.get("choices")
            if choices and getattr(self, f.name) not in choices:
                raise ConfigError(f"{f.name} must be one of {choices}, got {getattr(self, f.name)!r}")
        for name in ("baud", "training_symbols", "payload_symbols", "num_taps", "passes", "step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.rolloff <= 1:
            raise ConfigError("rolloff must lie in [0, 1]")
        if self.sps < 2:
            raise ConfigError("sps must be >= 2")
        if not 2 <= self.n_modes <= 16:
            raise ConfigError("n_modes must lie in 2..16")
        if self.training_symbols < self.num_taps:
            raise ConfigError("training_symbols must be >= num_taps")
        if self.slot_symbols and self.slot_symbols != self.frame_symbols:
            raise ConfigError("slot_symbols must be 0 or equal training + payload")
        if self.frame_symbols % self.num_taps:
            raise ConfigError("training + payload must be a multiple of num_taps")
        if not self.wavelengths_nm:
            raise ConfigError("need at least one wavelength")
        if self.source == "file" and len(self.matrix_files) != len(self.wavelengths_nm):
            raise ConfigError("need one matrix file per wavelength")
        if self.launch_db and len(self.launch_db) != self.n_modes:
            raise ConfigError("launch_db needs one value per mode")
        if len(self.echo_delays_s) != len(self.echo_levels_db):
            raise ConfigError("echo delays and levels differ in length")
        if self.jitter_samples < 0 or self.jitter_samples > 0.5:
            raise ConfigError("jitter_samples must lie in [0, 0.5]")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # -- serialisation -------------------------------------------------------

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        for f in fields(self):
            sec = f.metadata["section"]
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, f.name, _FORMAT[f.metadata["kind"]](getattr(self, f.name)))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        known = {f.name: f for f in fields(cls)}
        values = {}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                f = known.get(key)
                if f is None or f.metadata["section"] != sec:
                    raise ConfigError(f"unknown config key [{sec}] {key}")
                try:
                    values[key] = _PARSE[f.metadata["kind"]](raw)
                except ValueError as exc:
                    raise ConfigError(f"[{sec}] {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_ini(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_ini())


def config_schema():
    """Human-readable schema: one commented line per key, grouped by section."""
    lines = []
    current = None
    defaults = ExperimentConfig()
    for f in fields(ExperimentConfig):
        sec = f.metadata["section"]
        if sec != current:
            lines.append(f"\n[{sec}]" if lines else f"[{sec}]")
            current = sec
        kind = f.metadata["kind"]
        choices = f.metadata.get("choices")
        extra = f" one of {{{', '.join(choices)}}}" if choices else ""
        lines.append(f"# {f.metadata['doc']} ({kind}{extra})")
        lines.append(f"{f.name} = {_FORMAT[kind](getattr(defaults, f.name))}")
    return "\n".join(lines) + "\n"
