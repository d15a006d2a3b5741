"""End-to-end runs, sweeps and matrix characterisation.

A run walks the whole chain for every configured wavelength:

    bits -> symbols -> RRC shaping -> noise / phase noise / frequency offset
    -> mode coupling + MDL -> reflections -> polarization pairing
    -> gating + spool delays -> (oscilloscope resampling)
    -> stitching -> frequency-offset removal -> MIMO LMS -> phase tracking
    -> BER / EVM / channel estimates

Everything random is derived from the seeds in the config, so a config
reproduces its result exactly.
"""

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .config import ExperimentConfig
from .errors import EstimateUnreliableError, InvalidArgumentError, MdmError, PipelineError
from .mdmchannel import (
    EMPTY,
    CrosstalkProfile,
    LinkModel,
    TdmPlan,
    add_reflection_echo,
    apply_mode_coupling,
    default_crosstalk_profile,
    delay_decorrelate,
    gate,
    load_transfer_matrix,
    mode_labels,
    pair_polarizations,
    synthesize_transfer_matrix,
    tdm_combine,
)
from .rxdsp import (
    EqualizerConfig,
    TributarySet,
    estimate_freq_offset,
    estimate_intensity_transfer_matrix,
    extract_impulse_response,
    fd_lms_equalize,
    dd_phase_track,
    remove_freq_offset,
    tdm_stitch,
)
from .sigproc import (
    SymbolFrame,
    Waveform,
    add_awgn,
    add_freq_offset,
    decide_bits,
    generate_prbs,
    get_format,
    map_bits,
    phase_noise_trace,
    resample,
    shape_pulses,
)

CONSTELLATION_POINTS = 500


@dataclass
class WavelengthResult:
    wavelength_nm: float
    reports: list
    intensity_db: np.ndarray = None
    row_labels: list = None
    col_labels: list = None
    impulse_profile_db: np.ndarray = None
    impulse_lags: np.ndarray = None
    mse_history: list = field(default_factory=list)
    converged: bool = False
    constellation: dict = field(default_factory=dict)
    sync_offsets: list = field(default_factory=list)
    freq_offset_est_hz: float = 0.0
    link_mdl_db: float = float("nan")

    @property
    def bers(self):
        return np.array([r.ber for r in self.reports])

    @property
    def mean_ber(self):
        return float(np.mean(self.bers))


@dataclass
class RunResult:
    config: ExperimentConfig
    wavelengths: list
    capacity: metrics.CapacityReport

    def mean_bers(self):
        return [w.mean_ber for w in self.wavelengths]

    def files(self):
        return result_files(self)

    def write(self, out_dir):
        write_result(self, out_dir)


# ---------------------------------------------------------------------------
# link construction
# ---------------------------------------------------------------------------


def _seed_int(ss):
    return int(ss.generate_state(1)[0])


def build_profile(cfg):
    if cfg.profile == "flat":
        prof = CrosstalkProfile.flat(
            np.full(cfg.n_modes, cfg.flat_crosstalk_db), cfg.flat_insertion_loss_db
        )
        return prof
    return default_crosstalk_profile(cfg.n_modes)


def build_matrix(cfg, w_index):
    wl = cfg.wavelengths_nm[w_index]
    if cfg.source == "file":
        m = load_transfer_matrix(cfg.matrix_files[w_index], cfg.channel_seed)
        if m.n != cfg.n_modes:
            raise InvalidArgumentError(f"matrix file has {m.n} modes, config says {cfg.n_modes}")
        return m.normalized()
    return synthesize_transfer_matrix(build_profile(cfg), wl, cfg.channel_seed, cfg.phases)


def build_link(cfg, w_index):
    labels = mode_labels(cfg.n_modes)
    m = build_matrix(cfg, w_index)
    plan = TdmPlan.default(labels, cfg.frame_symbols / cfg.baud)
    mdl = np.linspace(0.0, cfg.mdl_db, cfg.n_modes)
    jones = "identity" if cfg.jones == "identity" else cfg.jones_seed + w_index
    echoes = list(zip(cfg.echo_delays_s, cfg.echo_levels_db))
    return LinkModel(
        matrix=m,
        plan=plan,
        mdl_db=mdl,
        decorrelation_delay=cfg.decorrelation_delay_s,
        jones_seed=jones,
        snr_db=cfg.snr_db,
        linewidth=cfg.linewidth_hz,
        freq_offset=cfg.freq_offset_hz,
        echoes=echoes,
        launch_db=np.asarray(cfg.launch_db) if cfg.launch_db else None,
    )


def transmit(cfg, link, seeds):
    """Per-mode transmitted bits/symbols and the impaired waveforms."""
    fmt = get_format(cfg.format)
    labels = link.matrix.labels
    n_sym = cfg.frame_symbols
    n_bits = n_sym * fmt.bits_per_symbol
    data_ss, noise_ss, phase_ss = seeds
    if cfg.data_mode == "independent":
        bits = [generate_prbs(_seed_int(s), n_bits, cfg.prbs_mode) for s in data_ss.spawn(len(labels))]
        frames = [map_bits(b, fmt, cfg.baud) for b in bits]
        wfs = [shape_pulses(f, cfg.sps, cfg.rolloff, cfg.span) for f in frames]
    else:
        base_bits = generate_prbs(_seed_int(data_ss), n_bits, cfg.prbs_mode)
        base = map_bits(base_bits, fmt, cfg.baud)
        wf0 = shape_pulses(base, cfg.sps, cfg.rolloff, cfg.span)
        wfs = delay_decorrelate([wf0] * len(labels), link.decorrelation_delay)
        step = int(round(link.decorrelation_delay * wf0.sample_rate))
        if step % cfg.sps:
            raise InvalidArgumentError("decorrelation delay must be a whole number of symbols")
        shift = step // cfg.sps
        frames, bits = [], []
        for k in range(len(labels)):
            sym = np.roll(base.symbols, k * shift)
            frames.append(SymbolFrame(sym, fmt, cfg.baud))
            bits.append(np.roll(base_bits.reshape(-1, fmt.bits_per_symbol), k * shift, axis=0).ravel())
    wfs = [Waveform(w.samples, w.sample_rate, lab) for w, lab in zip(wfs, labels)]
    fs = wfs[0].sample_rate
    phi = phase_noise_trace(len(wfs[0]), link.linewidth, fs, _seed_int(phase_ss))
    rot = np.exp(1j * phi) if link.linewidth > 0 else None
    out = []
    for w, ns in zip(wfs, noise_ss.spawn(len(wfs))):
        w = add_awgn(w, link.snr_db, _seed_int(ns))
        if rot is not None:
            w = w.replace(w.samples * rot)
        if link.freq_offset:
            w = add_freq_offset(w, link.freq_offset)
        out.append(w)
    return bits, frames, out


def channel(cfg, link, wfs, jitter_ss):
    """Optical path from the per-mode waveforms to the dual-pol TDM record."""
    fs = wfs[0].sample_rate
    launched = apply_mode_coupling(wfs, link.coupling_matrix())
    if link.echoes:
        launched = [add_reflection_echo(w, link.echoes) for w in launched]
    pairs = pair_polarizations(launched, link.plan, link.jones_seed, link.matrix.labels)
    plan = link.plan
    if cfg.jitter_samples > 0:
        rng = np.random.default_rng(jitter_ss)
        jitter = rng.uniform(-cfg.jitter_samples, cfg.jitter_samples, plan.n_slots) / fs
    else:
        jitter = None

    def gated():
        for x, y in pairs:
            gx = gate(Waveform(np.tile(x.samples, plan.n_slots), fs), plan.duty, plan.period, 0, cfg.baud)
            gy = gate(Waveform(np.tile(y.samples, plan.n_slots), fs), plan.duty, plan.period, 0, cfg.baud)
            yield gx, gy

    rec = tdm_combine(gated(), plan, jitter, cfg.guard_samples)
    if cfg.rx_sample_rate and cfg.rx_sample_rate != fs:
        rec = (resample(rec[0], cfg.rx_sample_rate), resample(rec[1], cfg.rx_sample_rate))
    return rec


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except MdmError as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class ReceivedLink:
    """Everything the receiver knows after stitching, before equalisation."""

    cfg: ExperimentConfig
    w_index: int
    link: LinkModel
    bits: list
    frames: list
    training: dict
    tribs: TributarySet
    freq_offset_est_hz: float = 0.0


def receive(cfg, w_index):
    """Transmit, propagate and stitch one wavelength."""
    ss = np.random.SeedSequence([cfg.seed, w_index])
    data_ss, noise_ss, phase_ss, jitter_ss = ss.spawn(4)
    fmt = get_format(cfg.format)
    link = _stage("channel-setup", build_link, cfg, w_index)
    bits, frames, wfs = _stage("transmit", transmit, cfg, link, (data_ss, noise_ss, phase_ss))
    record = _stage("channel", channel, cfg, link, wfs, jitter_ss)
    del wfs
    labels = link.matrix.labels
    n_train = cfg.training_symbols
    training = {lab: SymbolFrame(f.symbols[:n_train], fmt, cfg.baud) for lab, f in zip(labels, frames)}
    tribs = _stage("stitch", tdm_stitch, record, link.plan, training, cfg.baud, cfg.rolloff, cfg.span)
    del record
    fo_est = 0.0
    if cfg.freq_offset_hz:
        ests = []
        for k in tribs.select(False):
            try:
                ests.append(estimate_freq_offset(tribs.tributaries[k], fmt, cfg.baud))
            except EstimateUnreliableError:
                pass
        if not ests:
            raise PipelineError("freq-offset", EstimateUnreliableError("no tributary gave a usable estimate"))
        fo_est = float(np.median(ests))
        tribs.tributaries = remove_freq_offset(tribs.tributaries.T, fo_est, cfg.baud).T.copy()
    return ReceivedLink(cfg, w_index, link, bits, frames, training, tribs, fo_est)


def equalize_received(rx, mimo=None):
    """Equalise a received link and score the payload.

    ``mimo`` overrides ``cfg.mimo`` so one record can be scored both ways.
    """
    cfg = rx.cfg
    fmt = get_format(cfg.format)
    n_train = cfg.training_symbols
    labels = rx.link.matrix.labels
    eq_cfg = EqualizerConfig(
        num_taps=cfg.num_taps,
        step=cfg.step,
        training_symbols=n_train,
        passes=cfg.passes,
        normalized=cfg.normalized,
        include_empty=cfg.include_empty,
        mimo=cfg.mimo if mimo is None else mimo,
        payload_mode=cfg.payload_mode,
    )
    out, state = _stage("equalize", fd_lms_equalize, rx.tribs, rx.training, eq_cfg)
    reports, constellation = [], {}
    payload = np.stack([eq.symbols[n_train:] for eq in out])
    if cfg.phase_block:
        payload = dd_phase_track(payload, fmt, cfg.phase_block)
    for lab, row, tx_frame, tx_bits in zip(labels, payload, rx.frames, rx.bits):
        pay = SymbolFrame(row, fmt, cfg.baud)
        rep = metrics.count_ber(decide_bits(pay, fmt), tx_bits[n_train * fmt.bits_per_symbol :], label=lab)
        rep.evm_percent = metrics.evm(pay, tx_frame.symbols[n_train:])
        reports.append(rep)
        constellation[lab] = pay.symbols[:CONSTELLATION_POINTS]
    res = WavelengthResult(
        wavelength_nm=float(cfg.wavelengths_nm[rx.w_index]),
        reports=reports,
        mse_history=list(state.mse_history),
        converged=state.converged,
        constellation=constellation,
        sync_offsets=list(rx.tribs.offsets),
        freq_offset_est_hz=rx.freq_offset_est_hz,
        link_mdl_db=metrics.mdl_from_matrix(rx.link.coupling_matrix()),
    )
    if state.converged:
        res.intensity_db = estimate_intensity_transfer_matrix(state, rx.tribs, rx.training, cfg.ls_taps)
        res.row_labels = ["EMPTY" if lab is EMPTY else lab for lab in state.input_labels]
        res.col_labels = list(state.output_labels)
        ir = extract_impulse_response(state)
        res.impulse_profile_db = ir.intensity_profile_db
        res.impulse_lags = ir.lags
    return res


def run_wavelength(cfg, w_index):
    return equalize_received(receive(cfg, w_index))


def run_simulation(cfg):
    """Run every configured wavelength; deterministic for a given config."""
    cfg = cfg.validate()
    fmt = get_format(cfg.format)
    wls = [run_wavelength(cfg, k) for k in range(len(cfg.wavelengths_nm))]
    cap = metrics.capacity_report(cfg.n_modes, cfg.baud, fmt.bits_per_symbol,
                                  metrics.FEC_OVERHEAD, 33e9, cfg.rolloff)
    return RunResult(cfg, wls, cap)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

AXES = {"wavelength": "wavelengths_nm", "snr": "snr_db"}


@dataclass
class SweepPoint:
    axis: str
    value: float
    result: RunResult = None
    error: str = ""

    @property
    def ok(self):
        return self.result is not None

    def summary(self):
        if not self.ok:
            return dict(mean_ber=float("nan"), best_ber=float("nan"), worst_ber=float("nan"))
        b = np.concatenate([w.bers for w in self.result.wavelengths])
        return dict(
            mean_ber=float(np.mean(self.result.mean_bers())),
            best_ber=float(b.min()),
            worst_ber=float(b.max()),
        )


def sweep_config(cfg, axis, value, index):
    if axis not in AXES:
        raise InvalidArgumentError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")
    change = [float(value)] if axis == "wavelength" else float(value)
    return cfg.replace(seed=cfg.seed + index, **{AXES[axis]: change})


def _sweep_point(args):
    cfg, axis, value, index = args
    try:
        return SweepPoint(axis, float(value), run_simulation(sweep_config(cfg, axis, value, index)))
    except MdmError as exc:
        return SweepPoint(axis, float(value), None, str(exc))


def sweep(cfg, axis, values, workers=1):
    """Independent runs over one axis; a failing point is recorded, not fatal."""
    values = list(values)
    if not values:
        raise InvalidArgumentError("sweep needs at least one value")
    jobs = [(cfg, axis, v, k) for k, v in enumerate(values)]
    sweep_config(cfg, axis, values[0], 0)  # validate the axis up front
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def sweep_table(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "status", "mean_ber", "best_ber", "worst_ber", "error"])
    for p in points:
        s = p.summary()
        w.writerow([p.axis, repr(p.value), "ok" if p.ok else "failed",
                    repr(s["mean_ber"]), repr(s["best_ber"]), repr(s["worst_ber"]), p.error])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# characterisation
# ---------------------------------------------------------------------------


@dataclass
class MatrixCharacterization:
    wavelength_nm: float
    labels: list
    worst_crosstalk_db: np.ndarray
    insertion_loss_db: np.ndarray
    mdl_db: float

    @property
    def worst_mode(self):
        return self.labels[int(np.argmax(self.worst_crosstalk_db))]


def characterize(sources, seed=0):
    """Per-mode worst crosstalk, insertion loss and MDL for each matrix file."""
    if isinstance(sources, (str, Path)):
        sources = [sources]
    out = []
    for src in sources:
        m = load_transfer_matrix(src, seed)
        out.append(MatrixCharacterization(
            m.wavelength_nm, list(m.labels), m.worst_crosstalk_db(),
            m.insertion_loss_db(), metrics.mdl_from_matrix(m),
        ))
    return sorted(out, key=lambda c: c.wavelength_nm)


def characterization_table(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["wavelength_nm", "mode", "worst_crosstalk_db", "insertion_loss_db", "mdl_db", "worst_mode"])
    for r in reports:
        for lab, xt, il in zip(r.labels, r.worst_crosstalk_db, r.insertion_loss_db):
            w.writerow([repr(r.wavelength_nm), lab, repr(float(xt)), repr(float(il)),
                        repr(r.mdl_db), "yes" if lab == r.worst_mode else ""])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _r(v):
    return repr(float(v))


def result_files(result):
    """Map of file name -> text for a run; the byte-exact on-disk form."""
    cfg = result.config
    files = {"config.ini": cfg.to_ini()}
    ber = [["wavelength_nm", "mode", "ber", "bits", "errors", "classification", "evm_percent"]]
    mats = [["wavelength_nm", "row", *(result.wavelengths[0].col_labels or [])]]
    imp = [["wavelength_nm", "lag", "profile_db"]]
    mse = [["wavelength_nm", "block", "mse"]]
    const = [["wavelength_nm", "mode", "index", "re", "im"]]
    summary = [
        ("seed", cfg.seed),
        ("format", cfg.format),
        ("n_modes", cfg.n_modes),
        ("baud", _r(cfg.baud)),
        ("gross_bps", _r(result.capacity.gross_bps)),
        ("net_bps", _r(result.capacity.net_bps)),
        ("fec_overhead", _r(result.capacity.fec_overhead)),
        ("grid_hz", _r(result.capacity.grid_hz)),
        ("spectral_efficiency_bps_hz", _r(result.capacity.spectral_efficiency_bps_hz)),
        ("occupied_hz", _r(result.capacity.occupied_hz)),
        ("occupied_efficiency_bps_hz", _r(result.capacity.occupied_efficiency_bps_hz)),
    ]
    for w in result.wavelengths:
        wl = _r(w.wavelength_nm)
        for r in w.reports:
            ber.append([wl, r.label, _r(r.ber), r.bits_counted, r.errors_counted,
                        r.classification, _r(r.evm_percent)])
        if w.intensity_db is not None:
            for lab, row in zip(w.row_labels, w.intensity_db):
                mats.append([wl, lab, *(_r(v) for v in row)])
            for lag, p in zip(w.impulse_lags, w.impulse_profile_db):
                imp.append([wl, int(lag), _r(p)])
        for k, v in enumerate(w.mse_history):
            mse.append([wl, k, _r(v)])
        for lab, pts in w.constellation.items():
            for k, z in enumerate(pts):
                const.append([wl, lab, k, _r(z.real), _r(z.imag)])
        b = w.bers
        summary += [
            (f"mean_ber@{wl}", _r(w.mean_ber)),
            (f"best_ber@{wl}", _r(b.min())),
            (f"worst_ber@{wl}", _r(b.max())),
            (f"worst_mode@{wl}", w.reports[int(np.argmax(b))].label),
            (f"converged@{wl}", "true" if w.converged else "false"),
            (f"link_mdl_db@{wl}", _r(w.link_mdl_db)),
            (f"sync_offsets@{wl}", " ".join(str(o) for o in w.sync_offsets)),
            (f"freq_offset_est_hz@{wl}", _r(w.freq_offset_est_hz)),
        ]
    files["summary.txt"] = "".join(f"{k} = {v}\n" for k, v in summary)
    files["ber.csv"] = _csv(ber)
    files["intensity_matrix.csv"] = _csv(mats)
    files["impulse_response.csv"] = _csv(imp)
    files["mse_history.csv"] = _csv(mse)
    files["constellation.csv"] = _csv(const)
    return files


def write_result(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in result_files(result).items():
        (out / name).write_text(text)
