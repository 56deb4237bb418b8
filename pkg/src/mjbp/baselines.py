"""Fixed MRT and ZF beamformers with equal power per device."""

from __future__ import annotations

import numpy as np


class DegenerateChannelError(ValueError):
    pass


BASELINES = ("mrt", "zf")


def _equal_power(F, Pmax):
    norms = np.linalg.norm(F, axis=0)
    return F * (np.sqrt(Pmax / F.shape[1]) / norms)


def mrt_beamformer(H_hat, Pmax):
    """Columns ``sqrt(Pmax/K) h_k / ||h_k||``."""
    H_hat = np.asarray(H_hat, dtype=complex)
    if np.any(np.linalg.norm(H_hat, axis=0) == 0):
        raise DegenerateChannelError("MRT undefined for an all-zero channel column")
    return _equal_power(H_hat, Pmax)


def zf_beamformer(H_hat, Pmax):
    """Columns of ``H (H^H H)^{-1}``, each rescaled to norm ``sqrt(Pmax/K)``."""
    H_hat = np.asarray(H_hat, dtype=complex)
    M, K = H_hat.shape
    if K > M:
        raise DegenerateChannelError(f"zero-forcing needs K <= M (K={K}, M={M})")
    cond = np.linalg.cond(H_hat)
    if not np.isfinite(cond) or cond > 1e12:
        raise DegenerateChannelError(f"channel matrix is rank deficient (condition number {cond:.3g})")
    F = H_hat @ np.linalg.inv(H_hat.conj().T @ H_hat)
    return _equal_power(F, Pmax)


def baseline_beamformer(kind, H_hat, Pmax):
    if kind == "mrt":
        return mrt_beamformer(H_hat, Pmax)
    if kind == "zf":
        return zf_beamformer(H_hat, Pmax)
    raise ValueError(f"unknown baseline {kind!r}")


def run_baseline(kind, stats, dims, system, n_frames, rng_streams, options=None):
    """Long-term loop with the slot beamformer fixed to MRT or ZF."""
    from .ssca import run

    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}")
    if kind == "zf":
        dims.check_zf()
    return run(stats, dims, system, n_frames, rng_streams, policy=kind, options=options)
