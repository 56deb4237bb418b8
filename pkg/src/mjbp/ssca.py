"""Long-term power-splitter and weight updates (mixed-timescale SSCA).

Once per frame the loop refreshes two recursive trackers: the per-device
metric ``eta_tilde`` and the partial derivative ``u`` of the utility in
``rho``.  It then maximizes the proximal quadratic surrogate over the box
``[rho_min, 1]`` and moves ``rho`` and the utility weights ``v`` toward the
new targets with a step ``beta_t``.  Inside the frame every slot solves its
own short-term beamforming problem with ``rho`` and ``v`` held fixed.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .baselines import baseline_beamformer
from .channel import ConfigurationError, draw_error_tensor, draw_estimated_channel
from .fp import FpOptions, SaaInstance, fp_bcd
from .power import (
    EhParams,
    eta_hat_all,
    grad_eta_rho,
    grad_utility,
    utility,
)


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha_t = c_alpha t^-eps_alpha`` and ``beta_t = c_beta t^-eps_beta``."""

    eps_alpha: float = 0.6
    eps_beta: float = 0.9
    c_alpha: float = 1.0
    c_beta: float = 1.0

    def __post_init__(self):
        if not 0.5 < self.eps_alpha < 1.0:
            raise ConfigurationError(f"eps_alpha must lie in (0.5, 1), got {self.eps_alpha}")
        if not 0.5 < self.eps_beta <= 1.0:
            raise ConfigurationError(f"eps_beta must lie in (0.5, 1], got {self.eps_beta}")
        if not self.eps_beta > self.eps_alpha:
            raise ConfigurationError("need eps_beta > eps_alpha so that beta_t / alpha_t -> 0")
        if not (0 < self.c_alpha <= 1 and 0 < self.c_beta <= 1):
            raise ConfigurationError("step scales must lie in (0, 1]")


def step_sizes(t, schedule=None):
    schedule = StepSchedule() if schedule is None else schedule
    if np.any(np.asarray(t) < 1):
        raise ValueError("frame counter for step sizes starts at 1")
    t = np.asarray(t, dtype=float) if np.ndim(t) else t
    return schedule.c_alpha * t ** -schedule.eps_alpha, schedule.c_beta * t ** -schedule.eps_beta


@dataclass
class SscaState:
    t: int
    rho: np.ndarray
    v: np.ndarray
    eta_tilde: np.ndarray
    u: np.ndarray
    tau: float = 1.0
    rho_min: float = 1e-3

    @classmethod
    def initial(cls, K, rho0=0.5, tau=1.0, rho_min=1e-3):
        if tau <= 0:
            raise ConfigurationError("proximal constant tau must be positive")
        if not 0 < rho_min <= 1:
            raise ConfigurationError("rho_min must lie in (0, 1]")
        rho = np.clip(np.broadcast_to(np.asarray(rho0, dtype=float), (K,)).copy(), rho_min, 1.0)
        return cls(t=0, rho=rho, v=np.ones(K), eta_tilde=np.zeros(K), u=np.zeros(K),
                   tau=tau, rho_min=rho_min)

    def copy(self):
        return SscaState(self.t, self.rho.copy(), self.v.copy(), self.eta_tilde.copy(),
                         self.u.copy(), self.tau, self.rho_min)


def update_eta_tilde(state, eta_samples, alpha):
    """Blend the frame average of ``eta_hat`` (slots x devices x samples) into the tracker."""
    eta_samples = np.asarray(eta_samples, dtype=float)
    if eta_samples.size == 0 or eta_samples.shape[0] == 0:
        raise ValueError("frame holds no slots")
    frame_mean = eta_samples.mean(axis=(0, 2))
    return (1.0 - alpha) * state.eta_tilde + alpha * frame_mean


def update_u(state, J, grad_g, alpha):
    return (1.0 - alpha) * state.u + alpha * np.asarray(J) * np.asarray(grad_g)


def update_v(state, beta, spec, eta_tilde=None):
    eta_tilde = state.eta_tilde if eta_tilde is None else eta_tilde
    return (1.0 - beta) * state.v + beta * grad_utility(eta_tilde, spec)


def maximize_surrogate(state):
    """Box-constrained maximizer of ``u (rho - rho_t) - tau (rho - rho_t)^2``."""
    return np.clip(state.rho + state.u / (2.0 * state.tau), state.rho_min, 1.0)


def update_rho(state, rho_bar, beta):
    return (1.0 - beta) * state.rho + beta * np.asarray(rho_bar)


def stationarity_residual(state):
    """Largest move of the surrogate maximizer away from the current ``rho``."""
    return float(np.max(np.abs(maximize_surrogate(state) - state.rho)))


@dataclass(frozen=True)
class SystemParams:
    """Per-run physical parameters in linear units."""

    Pmax: float
    noise: object
    eh: EhParams
    gamma: np.ndarray
    N: int = 200


@dataclass(frozen=True)
class LongTermOptions:
    utility: object = None
    schedule: StepSchedule = field(default_factory=StepSchedule)
    tau: float = 1.0
    rho_min: float = 1e-3
    rho0: float = 0.5


@dataclass
class Trajectory:
    """Per-frame record; index 0 of the state arrays is the initial state."""

    rho: np.ndarray           # (frames + 1, K)
    v: np.ndarray
    eta_tilde: np.ndarray
    u: np.ndarray
    utility: np.ndarray       # (frames,) out-of-sample frame utility
    rate: np.ndarray          # (frames, K) frame-average rate per device
    harvested: np.ndarray     # (frames, K) frame-average harvested power per device
    solver_warnings: int
    unconverged_slots: int
    final_state: SscaState
    stationarity: float
    channel_digest: str = ""  # sha256 over every estimated channel and SAA error draw

    @property
    def frames(self):
        return self.utility.shape[0]


def slot_beamformer(policy, inst, fp_opts):
    """Returns ``(F, warnings, unconverged)`` for the given scheme."""
    if policy == "mjbp":
        res = fp_bcd(inst, fp_opts)
        return res.F, res.subproblem_warnings, int(not res.converged)
    return baseline_beamformer(policy, inst.H_hat, inst.Pmax), 0, 0


def run(stats, dims, system, n_frames, rng_streams, policy="mjbp", options=None, fp_opts=None):
    """Simulate ``n_frames`` frames of the mixed-timescale loop.

    ``rng_streams`` is a mapping with generators ``'channel'`` (estimated
    channels), ``'samples'`` (SAA and frame-end error samples) and
    ``'eval'`` (fresh errors for the out-of-sample frame metrics).  No
    stream depends on ``policy``, so schemes sharing seeds see identical
    channels.
    """
    options = LongTermOptions() if options is None else options
    fp_opts = FpOptions() if fp_opts is None else fp_opts
    spec = options.utility
    if spec is None:
        from .power import UtilitySpec
        spec = UtilitySpec()
    K, M, N = dims.K, dims.M, system.N
    state = SscaState.initial(K, options.rho0, options.tau, options.rho_min)
    gamma = np.asarray(system.gamma, dtype=float)
    ch_rng, smp_rng, ev_rng = rng_streams["channel"], rng_streams["samples"], rng_streams["eval"]

    rhos, vs, etas, us = [state.rho.copy()], [state.v.copy()], [state.eta_tilde.copy()], [state.u.copy()]
    utils, rates, harvs = [], [], []
    warnings = unconverged = 0
    digest = hashlib.sha256()
    for t in range(n_frames):
        eta_frame, rate_frame, harv_frame = [], [], []
        first = None
        for i in range(dims.Ts):
            H_hat = draw_estimated_channel(stats, dims, ch_rng)
            phi = draw_error_tensor(stats.omega2, M, N, smp_rng)
            digest.update(H_hat.tobytes())
            digest.update(phi.tobytes())
            inst = SaaInstance(H_hat, phi, state.rho, state.v, system.Pmax, system.noise, system.eh, gamma)
            F, w_, u_ = slot_beamformer(policy, inst, fp_opts)
            warnings += w_
            unconverged += u_
            eta_frame.append(eta_hat_all(state.rho, F, inst.h_tilde, system.noise, system.eh, gamma)[0])
            phi_eval = draw_error_tensor(stats.omega2, M, N, ev_rng)
            _, r_ev, e_ev = eta_hat_all(state.rho, F, H_hat.T[:, None, :] + phi_eval,
                                        system.noise, system.eh, gamma)
            rate_frame.append(r_ev.mean(axis=1))
            harv_frame.append(e_ev.mean(axis=1))
            if first is None:
                first = (H_hat, F)

        # frame-end sample: channel of the frame's first slot with its beamformer, fresh error
        H_t, F_t = first
        phi_t = draw_error_tensor(stats.omega2, M, 1, smp_rng)[:, 0, :]
        J = np.array([
            grad_eta_rho(state.rho[k], F_t, H_t[:, k] + phi_t[k], k,
                         system.noise.device(k), system.eh.device(k), gamma[k])
            for k in range(K)
        ])

        alpha, beta = step_sizes(t + 1, options.schedule)
        eta_tilde = update_eta_tilde(state, np.array(eta_frame), alpha)
        g_grad = grad_utility(eta_tilde, spec)
        u = update_u(state, J, g_grad, alpha)
        state.eta_tilde, state.u = eta_tilde, u
        v_next = update_v(state, beta, spec)
        rho_bar = maximize_surrogate(state)
        state.rho = update_rho(state, rho_bar, beta)
        state.v = v_next
        state.t = t + 1

        rate_mean = np.mean(rate_frame, axis=0)
        harv_mean = np.mean(harv_frame, axis=0)
        utils.append(utility(rate_mean + gamma * harv_mean, spec))
        rates.append(rate_mean)
        harvs.append(harv_mean)
        rhos.append(state.rho.copy())
        vs.append(state.v.copy())
        etas.append(state.eta_tilde.copy())
        us.append(state.u.copy())

    return Trajectory(
        rho=np.array(rhos),
        v=np.array(vs),
        eta_tilde=np.array(etas),
        u=np.array(us),
        utility=np.array(utils),
        rate=np.array(rates).reshape(n_frames, K),
        harvested=np.array(harvs).reshape(n_frames, K),
        solver_warnings=warnings,
        unconverged_slots=unconverged,
        final_state=state,
        stationarity=stationarity_residual(state),
        channel_digest=digest.hexdigest(),
    )


def trajectory_header(K):
    cols = ["frame"]
    for name in ("rho", "v", "eta_tilde", "u"):
        cols += [f"{name}_{k}" for k in range(K)]
    return cols + ["utility"]


def dump_trajectory_csv(traj, path):
    """Frame-by-frame state after each long-term update; frame 0 is the initial state."""
    K = traj.rho.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trajectory_header(K))
        for f in range(traj.rho.shape[0]):
            row = [f]
            for arr in (traj.rho, traj.v, traj.eta_tilde, traj.u):
                row += [f"{x:.9g}" for x in arr[f]]
            row.append(f"{traj.utility[f - 1]:.9g}" if f > 0 else "")
            writer.writerow(row)
