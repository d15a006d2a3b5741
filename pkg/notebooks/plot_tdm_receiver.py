"""
Time-division receiver: gating, combining and stitching
=======================================================

Eleven mode outputs share one dual-polarization coherent receiver.  Modes
are paired onto X and Y polarizations, each pair is gated into its own time
slot by a delay line, and the receiver cuts the record back into
tributaries, aligning each slot on its training prefix.
"""

import matplotlib.pyplot as plt
import numpy as np

from mdmlink.mdmchannel import TdmPlan, gate, mode_labels, pair_polarizations, tdm_combine
from mdmlink.rxdsp import tdm_stitch
from mdmlink.sigproc import QPSK, Waveform, generate_prbs, map_bits, shape_pulses

baud, n_sym, span = 30e9, 4096, 256
labels = mode_labels(11)
frames = {lab: map_bits(generate_prbs(k, 2 * n_sym), QPSK, baud) for k, lab in enumerate(labels)}
wfs = [Waveform(shape_pulses(frames[lab], 2, 0.01, span).samples, 2 * baud, lab) for lab in labels]

###############################################################################
# Six slots: five carry two modes each, the last carries TE5 and an empty
# polarization.  Random Jones matrices model the fiber after the combiners.
plan = TdmPlan.default(labels, n_sym / baud)
print(plan.slots)
pairs = pair_polarizations(wfs, plan, 3, labels)

###############################################################################
# Gate every pair into slot 0 of a six-slot period; the combiner delays slot
# k by k slot durations.  Half-sample spool errors are tolerated.
fs = 2 * baud
gated = [
    tuple(gate(Waveform(np.tile(p.samples, plan.n_slots), fs), plan.duty, plan.period, 0, baud)
          for p in pair)
    for pair in pairs
]
jitter = np.array([0.5, -0.5, 0.3, 0.0, -0.2, 0.4]) / fs
rec_x, rec_y = tdm_combine(gated, plan, jitter)

fig, ax = plt.subplots(figsize=(8, 3))
t = np.arange(len(rec_x)) / fs * 1e9
ax.plot(t, np.abs(rec_x.samples) ** 2, lw=0.3, label="X")
ax.plot(t, np.abs(rec_y.samples) ** 2, lw=0.3, label="Y", alpha=0.7)
ax.set_xlabel("time [ns]")
ax.set_ylabel("power")
ax.legend()
fig.tight_layout()

###############################################################################
# Stitching finds each slot on its training prefix and reports the offset.
tribs = tdm_stitch((rec_x, rec_y), plan, frames, baud, 0.01, span)
print("slot offsets [samples]:", tribs.offsets)
print("tributaries:", tribs.labels)

plt.show()
