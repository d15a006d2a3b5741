"""
BER across wavelengths and SNR
==============================

Independent runs over the seven carrier wavelengths give the mean BER
with best and worst mode per wavelength.  An SNR sweep traces the 16-QAM
waterfall against the 7% hard-decision FEC threshold.
"""

import matplotlib.pyplot as plt
import numpy as np

from mdmlink.config import ExperimentConfig
from mdmlink.metrics import FEC_THRESHOLD, capacity_report
from mdmlink.pipeline import run_simulation, sweep

cfg = ExperimentConfig(training_symbols=8192, payload_symbols=16384, num_taps=128, span=256)

###############################################################################
# Net capacity and spectral efficiency of the 11-mode, 30 GBaud, 16-QAM line.
cap = capacity_report(11, 30e9, 4)
print("net capacity %.4f Tb/s, %.2f b/s/Hz on a 33 GHz grid"
      % (cap.net_bps / 1e12, cap.spectral_efficiency_bps_hz))

###############################################################################
# All seven wavelengths at 15 dB SNR; at the default 18 dB the short frames
# here would count too few errors to draw.
result = run_simulation(cfg.replace(snr_db=15.0))
wl = np.array([w.wavelength_nm for w in result.wavelengths])
mean = np.array([w.mean_ber for w in result.wavelengths])
lo = np.array([w.bers.min() for w in result.wavelengths])
hi = np.array([w.bers.max() for w in result.wavelengths])

fig, ax = plt.subplots(figsize=(6, 4))
ax.errorbar(wl, mean, yerr=np.vstack([mean - lo, hi - mean]), fmt="o-", capsize=3)
ax.axhline(FEC_THRESHOLD, ls="--", color="k", lw=0.8)
ax.set_yscale("log")
ax.set_xlabel("wavelength [nm]")
ax.set_ylabel("BER")
fig.tight_layout()

###############################################################################
# SNR waterfall at 1550 nm.
snrs = np.arange(10.0, 21.0)
points = sweep(cfg.replace(wavelengths_nm=[1550.0]), "snr", snrs)
bers = [p.result.wavelengths[0].mean_ber for p in points]
fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogy(snrs, np.maximum(bers, 1e-7), "o-")
ax.axhline(FEC_THRESHOLD, ls="--", color="k", lw=0.8)
ax.set_xlabel("SNR [dB]")
ax.set_ylabel("mean BER")
fig.tight_layout()

plt.show()
