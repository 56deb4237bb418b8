"""
One slot of the short-term beamformer
=====================================

FP-BCD on a single SAA instance, compared with the fixed baselines.
"""

# %%
import numpy as np

from mjbp.baselines import mrt_beamformer, zf_beamformer
from mjbp.channel import SystemDims, draw_error_tensor, draw_estimated_channel, sample_statistics
from mjbp.fp import FpOptions, SaaInstance, fp_bcd, saa_objective
from mjbp.power import EhParams, NoiseParams

rng = np.random.default_rng(1)
M, K, N = 16, 4, 20
dims = SystemDims(M, K)
stats = sample_statistics(dims, rng=rng)
stats = stats.scaled(1e-6 * 10.0 / 10.0 / np.median(stats.gain))   # 10 dB median SNR at 10 mW

H_hat = draw_estimated_channel(stats, dims, rng)
phi = draw_error_tensor(stats.omega2, M, N, rng)
inst = SaaInstance(H_hat, phi, rho=np.full(K, 0.5), v=np.ones(K), Pmax=10.0,
                   noise=NoiseParams.uniform(K, 1e-6, 1e-5), eh=EhParams.uniform(K), gamma=np.full(K, 10.0))

# %%
res = fp_bcd(inst, FpOptions())
print(f"{res.cycles} cycles, converged: {res.converged}")
print("objective after each F step:", np.round(res.state.trace[3::3], 4))
print("never decreases:", bool(np.all(np.diff(res.state.trace) >= -1e-12)))

# %%
for name, F in (("mrt", mrt_beamformer(H_hat, 10.0)), ("zf", zf_beamformer(H_hat, 10.0)), ("fp-bcd", res.F)):
    print(f"{name:7s} SAA objective {saa_objective(F, inst):8.3f}   power {np.linalg.norm(F) ** 2:.3f} mW")
