"""SVG figures from a result directory.

Works only from the files written by :func:`mdmlink.pipeline.write_result`,
so a result can be re-plotted long after the run.  Output is byte-stable:
the SVG hash salt is fixed and no date is embedded.
"""

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

SVG_META = {"Date": None, "Creator": None}
_RC = {"svg.hashsalt": "mdmlink", "svg.fonttype": "path"}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata=SVG_META)
    return path


def _reference_wavelength(wls):
    """The wavelength closest to 1550 nm, the usual reporting point."""
    return min(wls, key=lambda w: (abs(w - 1550.0), w))


def plot_constellations(rows, out):
    by = defaultdict(list)
    for wl, mode, _, re_, im in rows[1:]:
        by[(float(wl), mode)].append(complex(float(re_), float(im)))
    if not by:
        raise ValueError("no constellation points")
    wl = _reference_wavelength({k[0] for k in by})
    written = []
    for (w, mode), pts in by.items():
        if w != wl:
            continue
        pts = np.array(pts)
        fig = Figure(figsize=(3, 3))
        ax = fig.add_subplot()
        ax.plot(pts.real, pts.imag, ".", ms=2)
        lim = 1.4 * max(np.max(np.abs(pts.real)), np.max(np.abs(pts.imag)), 1e-3)
        ax.set_xlim(-lim, lim)
        ax.set_ylim(-lim, lim)
        ax.set_aspect("equal")
        ax.set_title(f"{mode} @ {wl:g} nm")
        ax.set_xlabel("I")
        ax.set_ylabel("Q")
        fig.tight_layout()
        written.append(_save(fig, out / f"constellation_{mode}.svg"))
    return written


def plot_ber_vs_wavelength(rows, out):
    by = defaultdict(list)
    for r in rows[1:]:
        by[float(r[0])].append(float(r[2]))
    if not by:
        raise ValueError("no BER rows")
    wls = np.array(sorted(by))
    bers = [np.array(by[w]) for w in wls]
    mean = np.array([b.mean() for b in bers])
    lo = np.array([b.min() for b in bers])
    hi = np.array([b.max() for b in bers])
    floor = 1e-7  # zero BER cannot sit on a log axis
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    m = np.maximum(mean, floor)
    yerr = np.vstack([m - np.maximum(lo, floor), np.maximum(hi, floor) - m])
    ax.errorbar(wls, m, yerr=yerr,
                fmt="o-", capsize=3, label="mean (best / worst mode)")
    ax.axhline(4.5e-3, ls="--", color="k", lw=0.8, label="7% FEC threshold")
    ax.set_yscale("log")
    ax.set_xlabel("wavelength [nm]")
    ax.set_ylabel("BER")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return [_save(fig, out / "ber_vs_wavelength.svg")]


def plot_impulse_response(rows, out):
    by = defaultdict(list)
    for wl, lag, p in rows[1:]:
        by[float(wl)].append((int(lag), float(p)))
    if not by:
        raise ValueError("no impulse-response rows")
    wl = _reference_wavelength(by)
    lag, p = np.array(sorted(by[wl])).T
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    ax.plot(lag, p - p.max())
    ax.set_ylim(max(float(p.min() - p.max()), -60.0) - 2, 2)
    ax.set_xlabel("lag [symbols]")
    ax.set_ylabel("normalised intensity [dB]")
    ax.set_title(f"impulse response @ {wl:g} nm")
    fig.tight_layout()
    return [_save(fig, out / "impulse_response.svg")]


def plot_intensity_matrix(rows, out):
    cols = rows[0][2:]
    by = defaultdict(list)
    for r in rows[1:]:
        by[float(r[0])].append((r[1], [float(v) for v in r[2:]]))
    if not by:
        raise ValueError("no intensity-matrix rows")
    wl = _reference_wavelength(by)
    labels = [r[0] for r in by[wl]]
    mat = np.array([r[1] for r in by[wl]])
    fig = Figure(figsize=(5.5, 4.5))
    ax = fig.add_subplot()
    im = ax.imshow(np.maximum(mat, -40.0), vmin=-40, vmax=0, cmap="viridis")
    ax.set_xticks(range(len(cols)), cols, rotation=90, fontsize=7)
    ax.set_yticks(range(len(labels)), labels, fontsize=7)
    ax.set_xlabel("transmitted mode")
    ax.set_ylabel("received tributary")
    ax.set_title(f"intensity transfer matrix @ {wl:g} nm")
    fig.colorbar(im, ax=ax, label="dB")
    fig.tight_layout()
    return [_save(fig, out / "intensity_matrix.svg")]


SECTIONS = {
    "constellation.csv": plot_constellations,
    "ber.csv": plot_ber_vs_wavelength,
    "impulse_response.csv": plot_impulse_response,
    "intensity_matrix.csv": plot_intensity_matrix,
}


def emit_plots(result_dir, out_dir=None):
    """Write every plot the result supports.

    Returns ``(written, missing)``: the SVG paths and the sections (file
    names) that were absent or empty.  A missing section never stops the
    other plots.
    """
    src = Path(result_dir)
    out = Path(out_dir) if out_dir is not None else src
    out.mkdir(parents=True, exist_ok=True)
    written, missing = [], []
    for name, fn in SECTIONS.items():
        path = src / name
        if not path.is_file():
            missing.append(name)
            continue
        try:
            written += fn(_rows(path), out)
        except (ValueError, IndexError):
            missing.append(name)
    return written, missing
