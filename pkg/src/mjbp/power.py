"""SINR, nonlinear energy harvesting and the per-device metric.

Channel arguments follow one convention throughout: a channel ``h`` is an
array whose last axis has length M (leading axes broadcast), and a
beamformer ``F`` is an (M, K) matrix whose column m serves device m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LN2 = np.log(2.0)


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    """Splitter-input noise ``sigma2`` and decoder noise ``delta2`` (linear, per device)."""

    sigma2: np.ndarray
    delta2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float))
        object.__setattr__(self, "delta2", np.asarray(self.delta2, dtype=float))
        if np.any(self.sigma2 <= 0) or np.any(self.delta2 <= 0):
            raise DomainError("noise powers must be strictly positive")

    @classmethod
    def uniform(cls, K, sigma2, delta2):
        return cls(np.full(K, float(sigma2)), np.full(K, float(delta2)))

    def device(self, k):
        return NoiseParams(self.sigma2[k], self.delta2[k])


@dataclass(frozen=True)
class EhParams:
    """Sigmoid rectifier: saturation ``S`` (mW), steepness ``a``, turn-on point ``b``."""

    S: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("S", "a", "b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.S <= 0) or np.any(self.a <= 0):
            raise DomainError("EH saturation S and steepness a must be positive")

    @classmethod
    def uniform(cls, K, S=24.0, a=150.0, b=0.014):
        return cls(np.full(K, float(S)), np.full(K, float(a)), np.full(K, float(b)))

    @property
    def omega(self):
        """Sigmoid value at zero input, ``1/(1+exp(a b))``."""
        return expit(-self.a * self.b)

    def device(self, k):
        return EhParams(self.S[k], self.a[k], self.b[k])


@dataclass(frozen=True)
class UtilitySpec:
    """Concave nondecreasing utility ``g`` applied per device and summed.

    ``kind='sum'`` is the identity; ``kind='log'`` is ``log(offset + eta)``.
    """

    kind: str = "sum"
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sum", "log"):
            raise DomainError(f"unknown utility kind {self.kind!r}")
        if self.offset <= 0:
            raise DomainError("log-utility offset must be positive")


def link_gains(F, h):
    """``|h^H f_m|^2`` for every beam m; shape ``h.shape[:-1] + (K,)``."""
    return np.abs(np.conj(h) @ F) ** 2


def _sinr_from_gains(rho, gains, k, sigma2, delta2):
    own = gains[..., k]
    interference = gains.sum(axis=-1) - own
    return rho * own / (rho * (interference + sigma2) + delta2)


def sinr(rho_k, F, h_k, k, noise):
    """Decoder SINR of device ``k`` with splitter ``rho_k`` on channel ``h_k``.

    ``noise`` carries the device's scalar (or per-device) noise powers; pass
    ``noise.device(k)`` when holding a vector.
    """
    return _sinr_from_gains(rho_k, link_gains(F, h_k), k, noise.sigma2, noise.delta2)


def input_rf_power(rho_k, F, h_k, sigma2):
    """Power reaching the harvester, ``(1-rho)(sum_m |h^H f_m|^2 + sigma2)``."""
    return (1.0 - rho_k) * (link_gains(F, h_k).sum(axis=-1) + sigma2)


def harvested_power(P, eh):
    """Nonlinear harvested power, zero at ``P = 0`` and saturating at ``S``."""
    omega = eh.omega
    psi = eh.S * expit(eh.a * (np.asarray(P) - eh.b))
    return (psi - eh.S * omega) / (1.0 - omega)


def harvested_power_slope(P, eh):
    """Derivative of :func:`harvested_power` with respect to the input power."""
    z = eh.a * (np.asarray(P) - eh.b)
    return eh.S * eh.a * expit(z) * expit(-z) / (1.0 - eh.omega)


def eta_hat(rho_k, F, h_k, k, noise, eh, gamma_k):
    """Rate plus weighted harvested power on one effective channel sample.

    ``h_k`` is the effective channel ``h_hat_k + phi_k``.
    """
    gains = link_gains(F, h_k)
    rate = np.log2(1.0 + _sinr_from_gains(rho_k, gains, k, noise.sigma2, noise.delta2))
    P = (1.0 - rho_k) * (gains.sum(axis=-1) + noise.sigma2)
    return rate + gamma_k * harvested_power(P, eh)


def grad_eta_rho(rho_k, F, h_k, k, noise, eh, gamma_k):
    """Exact derivative of :func:`eta_hat` in ``rho_k``.

    With ``X = |h^H f_k|^2``, ``I`` the interference and ``D = I + sigma2``:

        d/drho log2(1 + SINR) = X delta2 / (ln2 (rho D + delta2)(rho (D + X) + delta2))
        d/drho e_hat(P)       = -e_hat'(P) (X + D)
    """
    gains = link_gains(F, h_k)
    own = gains[..., k]
    D = gains.sum(axis=-1) - own + noise.sigma2
    d2 = noise.delta2
    rate_part = own * d2 / (LN2 * (rho_k * D + d2) * (rho_k * (D + own) + d2))
    total = own + D
    P = (1.0 - rho_k) * total
    return rate_part - gamma_k * harvested_power_slope(P, eh) * total


# --- all-device helpers over SAA samples -------------------------------------

def sample_gains(F, h_tilde):
    """``G[k, n, m] = |h_tilde[k, n]^H f_m|^2`` for channels of shape (K, N, M)."""
    return np.abs(np.conj(h_tilde) @ F) ** 2


def sinr_all(rho, gains, noise):
    """Per-device, per-sample SINR from a (K, N, K) gain tensor."""
    K = gains.shape[0]
    own = gains[np.arange(K), :, np.arange(K)]  # (K, N)
    total = gains.sum(axis=-1)
    rho = np.asarray(rho)[:, None]
    return rho * own / (rho * (total - own + noise.sigma2[:, None]) + noise.delta2[:, None])


def rf_power_all(rho, gains, noise):
    return (1.0 - np.asarray(rho)[:, None]) * (gains.sum(axis=-1) + noise.sigma2[:, None])


def eta_hat_all(rho, F, h_tilde, noise, eh, gamma):
    """Returns ``(eta, rate, harvested)``, each (K, N)."""
    gains = sample_gains(F, h_tilde)
    rate = np.log2(1.0 + sinr_all(rho, gains, noise))
    P = rf_power_all(rho, gains, noise)
    e = harvested_power(P, EhParams(eh.S[:, None], eh.a[:, None], eh.b[:, None]))
    return rate + np.asarray(gamma)[:, None] * e, rate, e


def grad_eta_rho_all(rho, F, h_tilde, noise, eh, gamma):
    """:func:`grad_eta_rho` for every device at once; channels (K, ..., M)."""
    K = F.shape[1]
    out = []
    for k in range(K):
        out.append(grad_eta_rho(rho[k], F, h_tilde[k], k, noise.device(k), eh.device(k), gamma[k]))
    return np.array(out)


# --- ergodic-rate bounds -----------------------------------------------------

def rate_penalty(T, Pmax, delta2, mean_channel_power, K):
    """Worst-case estimation penalty ``(1/T) sum_m log2(1 + T Pmax E||h||^2 / delta2)``."""
    return K * np.log2(1.0 + T * Pmax * mean_channel_power / delta2) / T


def rate_bounds(rho_k, k, F_samples, h_samples, T, Pmax, noise):
    """Lower and upper bounds on the ergodic rate of device ``k``.

    ``F_samples`` (S, M, K) holds the beamformer used with each effective
    channel sample in ``h_samples`` (S, M), where each sample is
    ``h_hat_k + phi_k`` drawn jointly.  The upper bound is the sample mean of
    ``log2(1 + SINR)``; the lower bound subtracts :func:`rate_penalty`.
    """
    F_samples = np.asarray(F_samples)
    h_samples = np.asarray(h_samples)
    if h_samples.shape[0] == 0:
        raise ValueError("rate_bounds needs at least one sample")
    K = F_samples.shape[-1]
    gains = np.abs(np.einsum("sm,smk->sk", np.conj(h_samples), F_samples)) ** 2
    upper = np.mean(np.log2(1.0 + _sinr_from_gains(rho_k, gains, k, noise.sigma2, noise.delta2)))
    power = np.mean(np.sum(np.abs(h_samples) ** 2, axis=-1))
    lower = upper - rate_penalty(T, Pmax, noise.delta2, power, K)
    return lower, upper


def ergodic_rate_estimate(rho_k, k, F_samples, h_samples, T, noise):
    """Monte-Carlo value of the achievable rate with the variance penalty.

    Uses ``E[log2(1+SINR)] - (1/T) sum_m log2(1 + T Var(h^H f_m) / (rho sigma2 + delta2))``.
    """
    proj = np.einsum("sm,smk->sk", np.conj(h_samples), F_samples)
    gains = np.abs(proj) ** 2
    mean_rate = np.mean(np.log2(1.0 + _sinr_from_gains(rho_k, gains, k, noise.sigma2, noise.delta2)))
    var = np.mean(np.abs(proj - proj.mean(axis=0)) ** 2, axis=0)
    penalty = np.sum(np.log2(1.0 + T * var / (rho_k * noise.sigma2 + noise.delta2))) / T
    return mean_rate - penalty


# --- utility -----------------------------------------------------------------

def utility(eta, spec):
    eta = np.asarray(eta, dtype=float)
    if spec.kind == "sum":
        return float(eta.sum())
    arg = spec.offset + eta
    if np.any(arg <= 0):
        raise DomainError("log utility undefined: offset + eta must be positive")
    return float(np.log(arg).sum())


def grad_utility(eta, spec):
    eta = np.asarray(eta, dtype=float)
    if spec.kind == "sum":
        return np.ones_like(eta)
    arg = spec.offset + eta
    if np.any(arg <= 0):
        raise DomainError("log utility undefined: offset + eta must be positive")
    return 1.0 / arg
