"""
Channel statistics, the harvester curve and the rate bounds
===========================================================

A walk through the physical layer pieces at desk scale.
"""

# %%
import numpy as np

from mjbp.channel import GeometryConfig, SystemDims, draw_estimated_channels, sample_statistics
from mjbp.power import EhParams, NoiseParams, harvested_power, rate_bounds

rng = np.random.default_rng(0)
dims = SystemDims(M=16, K=4)
stats = sample_statistics(dims, GeometryConfig(), rng)
print("distance [m]    ", np.round(stats.distance, 1))
print("gain [dB]       ", np.round(10 * np.log10(stats.gain), 1))
print("path angles [deg] of device 0:", np.round(np.rad2deg(stats.path_angles[0]), 1))

# %%
# Rescale the gains so that the median device sees 10 dB at full power.
sigma2, delta2, pmax = 1e-6, 1e-5, 10.0
stats = stats.scaled(10.0 * sigma2 / pmax / np.median(stats.gain))

# %%
# The harvester is zero at zero input and saturates at S = 24 mW.
eh = EhParams.uniform(1).device(0)
for P in (0.0, 0.005, 0.014, 0.03, 0.1):
    print(f"P = {P:6.3f} mW  ->  {float(harvested_power(P, eh)):7.3f} mW")

# %%
# Rate bounds for MRT at the strongest device, from joint channel and error draws.
k = int(np.argmax(stats.gain))
n = 5000
H = draw_estimated_channels(stats, dims, n, rng)
F = H * np.sqrt(pmax / dims.K) / np.linalg.norm(H, axis=1, keepdims=True)
phi = np.sqrt(stats.omega2[k] / 2) * (rng.standard_normal((n, dims.M)) + 1j * rng.standard_normal((n, dims.M)))
noise = NoiseParams.uniform(dims.K, sigma2, delta2).device(k)
for T in (50, 400, 5000):
    lo, up = rate_bounds(1.0, k, F, H[:, :, k] + phi, T, pmax, noise)
    print(f"T = {T:5d}: {lo:.3f} <= rate <= {up:.3f} bit/s/Hz")
