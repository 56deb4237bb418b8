"""Geometric ULA channel model with imperfect CSI.

The slow state (:class:`ChannelStatistics`) fixes device distances, path
angles and per-path powers for a statistics epoch.  Each slot draws fresh
complex path gains on top of that geometry, giving the estimated channel
``H_hat``; the CSI error ``phi`` is white complex Gaussian with per-entry
variance ``omega2``.

All powers are linear (mW for transmit power, unitless for gains).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np


class ConfigurationError(ValueError):
    """Invalid dimensions or geometry parameters."""


@dataclass(frozen=True)
class SystemDims:
    M: int
    K: int
    Np: int = 6
    T: int = 400
    Ts: int = 10
    Tf: int = 500

    def __post_init__(self):
        for name in ("M", "K", "Np", "T", "Ts", "Tf"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")

    def check_zf(self):
        if self.K > self.M:
            raise ConfigurationError(f"zero-forcing needs K <= M (K={self.K}, M={self.M})")


@dataclass(frozen=True)
class GeometryConfig:
    """Cell geometry and error model.

    ``error_variance_db`` is taken relative to each device's average channel
    gain, so ``omega2_k = 10**(error_variance_db/10) * G_k``.
    """

    cell_radius: float = 100.0
    d_min: float = 10.0
    angular_spread_deg: float = 10.0
    error_variance_db: float = -40.0

    def __post_init__(self):
        if not 0 < self.d_min < self.cell_radius:
            raise ConfigurationError(
                f"need 0 < d_min < cell_radius, got d_min={self.d_min}, radius={self.cell_radius}"
            )
        if self.angular_spread_deg < 0:
            raise ConfigurationError("angular spread must be nonnegative")


@dataclass(frozen=True)
class ChannelStatistics:
    distance: np.ndarray        # (K,) meters
    azimuth: np.ndarray         # (K,) mean device angle, radians
    path_angles: np.ndarray     # (K, Np) radians
    path_variances: np.ndarray  # (K, Np), rows sum to gain
    gain: np.ndarray            # (K,)
    angular_spread_deg: float
    omega2: np.ndarray          # (K,)

    @property
    def K(self):
        return self.gain.shape[0]

    @property
    def Np(self):
        return self.path_variances.shape[1]

    def scaled(self, factor):
        """Rescale all gains (and the relative error variance) by ``factor``."""
        return replace(
            self,
            path_variances=self.path_variances * factor,
            gain=self.gain * factor,
            omega2=self.omega2 * factor,
        )


@dataclass
class ChannelDraw:
    H_hat: np.ndarray   # (M, K)
    phi: np.ndarray     # (K, N, M)
    slot: int = 0

    @property
    def h_tilde(self):
        """Effective channels ``h_hat_k + phi_k^n`` with shape (K, N, M)."""
        return self.H_hat.T[:, None, :] + self.phi


def pathloss_gain(distance):
    """Linear average gain for the ``30.6 + 36.7 log10(d)`` dB pathloss."""
    d = np.asarray(distance, dtype=float)
    return 10.0 ** (-(30.6 + 36.7 * np.log10(d)) / 10.0)


def array_response(angle, M):
    """Half-wavelength ULA steering vector, entry m = exp(j pi m sin(angle))."""
    m = np.arange(M)
    return np.exp(1j * np.pi * m * np.sin(angle))


def _array_responses(angles, M):
    # angles (...,) -> (..., M)
    m = np.arange(M)
    return np.exp(1j * np.pi * np.sin(np.asarray(angles))[..., None] * m)


def truncated_laplace(rng, loc, spread, size=None):
    """Laplacian angles with standard deviation ``spread`` (radians), kept in [-pi/2, pi/2].

    Out-of-range draws are rejected and redrawn.
    """
    loc = np.asarray(loc, dtype=float)
    shape = np.broadcast_shapes(loc.shape, () if size is None else tuple(np.atleast_1d(size)))
    loc = np.broadcast_to(loc, shape)
    if spread == 0:
        return np.array(loc, copy=True)
    scale = spread / np.sqrt(2.0)
    out = rng.laplace(loc, scale)
    bad = np.abs(out) > np.pi / 2
    while np.any(bad):
        out[bad] = rng.laplace(loc[bad], scale)
        bad = np.abs(out) > np.pi / 2
    return out


def sample_statistics(dims, params=None, rng=None):
    """Draw one statistics epoch: distances, angles and normalized path powers."""
    params = GeometryConfig() if params is None else params
    rng = np.random.default_rng(rng)
    K, Np = dims.K, dims.Np
    distance = rng.uniform(params.d_min, params.cell_radius, size=K)
    azimuth = rng.uniform(-np.pi / 2, np.pi / 2, size=K)
    spread = np.deg2rad(params.angular_spread_deg)
    path_angles = truncated_laplace(rng, azimuth[:, None], spread, size=(K, Np))
    gain = pathloss_gain(distance)
    raw = rng.exponential(1.0, size=(K, Np))
    path_variances = raw / raw.sum(axis=1, keepdims=True) * gain[:, None]
    omega2 = 10.0 ** (params.error_variance_db / 10.0) * gain
    return ChannelStatistics(
        distance=distance,
        azimuth=azimuth,
        path_angles=path_angles,
        path_variances=path_variances,
        gain=gain,
        angular_spread_deg=params.angular_spread_deg,
        omega2=omega2,
    )


def draw_estimated_channel(stats, dims, rng=None, angle_spread_deg=0.0, path_gains=None):
    """One slot's estimated channel ``H_hat`` (M x K).

    Path gains are redrawn as CN(0, sigma2_{k,i}); path angles stay at the
    epoch values unless ``angle_spread_deg`` adds a per-slot Laplacian jitter.
    ``path_gains`` overrides the random gains (shape (K, Np)).
    """
    rng = np.random.default_rng(rng)
    K, Np = stats.path_variances.shape
    angles = truncated_laplace(rng, stats.path_angles, np.deg2rad(angle_spread_deg))
    if path_gains is None:
        std = np.sqrt(stats.path_variances / 2.0)
        path_gains = std * (rng.standard_normal((K, Np)) + 1j * rng.standard_normal((K, Np)))
    steer = _array_responses(angles, dims.M)  # (K, Np, M)
    h = np.einsum("ki,kim->km", np.asarray(path_gains, dtype=complex), steer)
    return h.T.copy()


def draw_estimated_channels(stats, dims, n, rng=None):
    """``n`` independent estimated channels at once, shape (n, M, K); angles fixed."""
    rng = np.random.default_rng(rng)
    K, Np = stats.path_variances.shape
    std = np.sqrt(stats.path_variances / 2.0)
    g = std * (rng.standard_normal((n, K, Np)) + 1j * rng.standard_normal((n, K, Np)))
    steer = _array_responses(stats.path_angles, dims.M)
    return np.einsum("ski,kim->smk", g, steer)


def draw_error_samples(omega2, M, N, rng=None):
    """``N`` i.i.d. CN(0, omega2 I_M) vectors as an (N, M) array."""
    if omega2 < 0:
        raise ConfigurationError("error variance must be nonnegative")
    if N < 1:
        raise ConfigurationError("need at least one error sample")
    rng = np.random.default_rng(rng)
    std = np.sqrt(omega2 / 2.0)
    return std * (rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M)))


def draw_error_tensor(omega2, M, N, rng=None):
    """Error samples for every device, shape (K, N, M)."""
    rng = np.random.default_rng(rng)
    return np.stack([draw_error_samples(w, M, N, rng) for w in np.atleast_1d(omega2)])


def draw_slot(stats, dims, N, rng=None, slot=0):
    rng = np.random.default_rng(rng)
    H_hat = draw_estimated_channel(stats, dims, rng)
    phi = draw_error_tensor(stats.omega2, dims.M, N, rng)
    return ChannelDraw(H_hat=H_hat, phi=phi, slot=slot)


STATISTICS_CSV_HEADER = ["device", "path", "angle_rad", "variance", "distance_m"]


def dump_statistics_csv(stats, path):
    """Debug dump of the slow channel state, one row per (device, path)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STATISTICS_CSV_HEADER)
        for k in range(stats.K):
            for i in range(stats.Np):
                writer.writerow([
                    k, i,
                    f"{stats.path_angles[k, i]:.9g}",
                    f"{stats.path_variances[k, i]:.9g}",
                    f"{stats.distance[k]:.9g}",
                ])
