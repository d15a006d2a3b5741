"""
Mode coupling, crosstalk and mode-dependent loss
================================================

The multimode chip is a memoryless 11 x 11 field matrix.  A crosstalk
profile sets the worst off-diagonal leak of every mode per wavelength;
random phases turn it into a field matrix.  The singular values of the
matrix give the mode-dependent loss (MDL).
"""

import matplotlib.pyplot as plt
import numpy as np

from mdmlink.mdmchannel import default_crosstalk_profile, synthesize_transfer_matrix
from mdmlink.metrics import mdl_from_matrix

profile = default_crosstalk_profile()
wavelengths = np.arange(1530.0, 1561.0, 5.0)

###############################################################################
# Worst crosstalk per mode across the band: TE8 is the weakest mode.
xt = np.array([profile.at(wl)[0] for wl in wavelengths])
fig, ax = plt.subplots(figsize=(6, 4))
for k in range(xt.shape[1]):
    ax.plot(wavelengths, xt[:, k], marker="o", ms=3, label=f"TE{k}")
ax.set_xlabel("wavelength [nm]")
ax.set_ylabel("worst crosstalk [dB]")
ax.legend(ncol=3, fontsize=7)
fig.tight_layout()

###############################################################################
# One synthesized matrix and its intensity map.
m = synthesize_transfer_matrix(profile, 1532.0, seed=7)
fig, ax = plt.subplots(figsize=(5, 4))
im = ax.imshow(m.intensity_db(), vmin=-40, vmax=0, cmap="viridis")
fig.colorbar(im, label="dB")
ax.set_title("intensity transfer matrix, 1532 nm")
print("worst mode:", m.labels[int(np.argmax(m.worst_crosstalk_db()))])

###############################################################################
# MDL from the singular values, and its invariance to unitary mixing.
print("MDL of the chip: %.2f dB" % mdl_from_matrix(m))
q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((11, 11)))
print("MDL after a unitary rotation: %.2f dB" % mdl_from_matrix(q @ m.entries))

plt.show()
