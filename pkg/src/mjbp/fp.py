"""Short-term beamformer optimization for one slot (FP-BCD).

The SAA objective

    (1/N) sum_{k,n} v_k [log2(1 + SINR_kn(F)) + gamma_k e_hat(P_kn(F))]

is lifted with a Lagrangian dual transform (auxiliary ``q``) and a
quadratic transform (auxiliary ``w``), so that for fixed ``(q, w)`` the
rate part is a concave quadratic in ``F``.  The harvested-power term is
handled through slacks ``slack_kn <= e_hat(P_kn)`` written in logarithmic
form and linearized at the current point (MM step).  Block updates cycle
``q -> w -> F`` until the transformed objective settles.

Rates are in bits.  Because the dual transform identity holds in natural
logs, the transform terms carry a global ``1/ln 2``; the maximizing
``q`` and ``w`` are unaffected by that factor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .power import (
    LN2,
    EhParams,
    harvested_power,
    rf_power_all,
    sample_gains,
    sinr_all,
)
from .qcqp import solve_qcqp


class InfeasibleStartError(ValueError):
    """Linearization point violates the exact harvesting constraint."""


@dataclass
class SaaInstance:
    H_hat: np.ndarray       # (M, K)
    phi: np.ndarray         # (K, N, M)
    rho: np.ndarray         # (K,)
    v: np.ndarray           # (K,)
    Pmax: float
    noise: object
    eh: EhParams
    gamma: np.ndarray       # (K,)
    h_tilde: np.ndarray = field(init=False)

    def __post_init__(self):
        self.H_hat = np.asarray(self.H_hat, dtype=complex)
        self.phi = np.asarray(self.phi, dtype=complex)
        if self.phi.ndim != 3 or self.phi.shape[1] < 1:
            raise ValueError("phi must have shape (K, N, M) with N >= 1")
        self.rho = np.asarray(self.rho, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.h_tilde = self.H_hat.T[:, None, :] + self.phi

    @property
    def M(self):
        return self.H_hat.shape[0]

    @property
    def K(self):
        return self.H_hat.shape[1]

    @property
    def N(self):
        return self.phi.shape[1]

    def _eh_col(self):
        return EhParams(self.eh.S[:, None], self.eh.a[:, None], self.eh.b[:, None])

    def gains(self, F):
        return sample_gains(F, self.h_tilde)

    def rf_power(self, F, gains=None):
        gains = self.gains(F) if gains is None else gains
        return rf_power_all(self.rho, gains, self.noise)

    def harvested(self, F, gains=None):
        return harvested_power(self.rf_power(F, gains), self._eh_col())

    def denominators(self, gains):
        """``rho (Gamma + sigma2) + delta2`` with ``Gamma`` including the own beam."""
        return (
            self.rho[:, None] * (gains.sum(axis=-1) + self.noise.sigma2[:, None])
            + self.noise.delta2[:, None]
        )

    def own_projection(self, F):
        """``h_tilde_kn^H f_k`` as a (K, N) complex array."""
        return np.einsum("knm,mk->kn", np.conj(self.h_tilde), F)


@dataclass
class FpBcdState:
    F: np.ndarray
    q: np.ndarray
    w: np.ndarray
    slack: np.ndarray
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class EhConstraintCoeffs:
    """Coefficients of the logarithmic harvesting constraint.

    For device k and sample n the slack enters through the normalized
    ``alpha = slack (1 - Omega) / S`` and the constraint reads

        ln(1/(alpha + Omega) - 1) + d_k sum_m |h_kn^H f_m|^2 + c_k >= 0,

    which is equivalent to ``slack <= e_hat(P_kn)``.
    """

    d: np.ndarray
    c: np.ndarray
    omega: np.ndarray
    S: np.ndarray

    def alpha(self, slack):
        return np.asarray(slack) * ((1.0 - self.omega) / self.S)[:, None]

    def exact(self, slack, total_gain):
        """Constraint value for slack (K, N) and ``sum_m |h^H f_m|^2`` (K, N)."""
        a = self.alpha(slack)
        om = self.omega[:, None]
        log_term = np.log1p(-om - a) - np.log(a + om)
        return log_term + self.d[:, None] * total_gain + self.c[:, None]


def eh_constraint_coeffs(rho, eh, noise):
    rho = np.asarray(rho, dtype=float)
    d = eh.a * (1.0 - rho)
    c = eh.a * noise.sigma2 * (1.0 - rho) - eh.a * eh.b
    return EhConstraintCoeffs(d=d, c=c, omega=eh.omega * np.ones_like(d), S=eh.S * np.ones_like(d))


@dataclass
class LinearizedEh:
    """Affine surrogate of the harvesting constraints around ``(F_ref, slack_ref)``.

    Entry j = (k, n) reads ``const_j + 2 Re<Fdir_j, F> - slack_j / slack_gain_j >= 0``.
    Solving for the slack gives ``slack_j <= e0_j + 2 Re<E_j, F>``.
    """

    const: np.ndarray       # (K, N)
    Fdir: np.ndarray        # (K, N, M, K)
    slack_gain: np.ndarray  # (K, N), = -1 / (slope of the log term in slack)
    log_ref: np.ndarray
    log_slope: np.ndarray   # d/d alpha of the log term at the reference
    alpha_ref: np.ndarray
    slack_ref: np.ndarray
    base: np.ndarray        # log_ref - d sum_m |h^H f~_m|^2 + c
    d: np.ndarray

    def value(self, F, slack):
        lin = self.const + 2 * np.real(np.einsum("knij,ij->kn", np.conj(self.Fdir), F))
        return lin - np.asarray(slack) / self.slack_gain

    @property
    def E(self):
        return self.Fdir * self.slack_gain[..., None, None]

    @property
    def e0(self):
        # const * slack_gain written without the alpha_ref / inv_slope term, which overflows at saturation
        return self.slack_ref + self.slack_gain * self.base

    def slack_bound(self, F):
        return self.e0 + 2 * np.real(np.einsum("knij,ij->kn", np.conj(self.E), F))


def mm_linearize(F_ref, inst, slack_ref=None, tol=1e-9):
    """Tangent surrogate of the harvesting constraints at ``(F_ref, slack_ref)``.

    ``|h^H f_m|^2`` is replaced by its tangent lower bound
    ``2 Re{conj(h^H f~_m) h^H f_m} - |h^H f~_m|^2`` and the log term by its
    first-order expansion in ``alpha`` with slope
    ``1/((alpha~ + Omega - 1)(alpha~ + Omega))``.  ``slack_ref`` defaults to
    ``e_hat(P)`` at ``F_ref``, where the expansion is evaluated in a
    numerically stable form.
    """
    coeffs = eh_constraint_coeffs(inst.rho, inst.eh, inst.noise)
    om = coeffs.omega[:, None]
    S = coeffs.S[:, None]
    proj = np.conj(inst.h_tilde) @ F_ref                  # (K, N, K)
    total = np.sum(np.abs(proj) ** 2, axis=-1)            # (K, N)
    if slack_ref is None:
        z = inst.eh.a[:, None] * (inst.rf_power(F_ref) - inst.eh.b[:, None])
        upper = expit(z)          # alpha~ + Omega
        lower = expit(-z)         # 1 - Omega - alpha~
        alpha_ref = upper - om
        log_ref = -z
    else:
        slack_ref = np.asarray(slack_ref, dtype=float)
        exact = coeffs.exact(slack_ref, total)
        if np.any(exact < -tol) or np.any(slack_ref < 0):
            raise InfeasibleStartError("reference slack exceeds the harvested power at F_ref")
        alpha_ref = coeffs.alpha(slack_ref)
        upper = alpha_ref + om
        lower = (1.0 - om) - alpha_ref
        log_ref = np.log(lower) - np.log(upper)
    inv_slope = upper * lower                           # = -1 / slope, stays finite
    log_slope = -1.0 / np.where(inv_slope > 0, inv_slope, np.nan)
    d = coeffs.d[:, None]
    # Fdir[k, n, :, m] = d_k h_kn (h_kn^H f~_m), so Re<Fdir, F> is the tangent term
    Fdir = d[..., None, None] * inst.h_tilde[..., :, None] * proj[..., None, :]
    base = log_ref - d * total + coeffs.c[:, None]
    with np.errstate(divide="ignore", over="ignore"):
        const = base + alpha_ref / inv_slope
    # slack coefficient: slope * (1 - Omega) / S, stored as its negative inverse
    slack_gain = inv_slope * S / (1.0 - om)
    return LinearizedEh(
        const=const,
        Fdir=Fdir,
        slack_gain=slack_gain,
        log_ref=log_ref,
        log_slope=log_slope,
        alpha_ref=alpha_ref,
        slack_ref=alpha_ref * S / (1.0 - om),
        base=base,
        d=coeffs.d,
    )


# --- objectives ----------------------------------------------------------------

def saa_objective(F, inst):
    gains = inst.gains(F)
    rate = np.log2(1.0 + sinr_all(inst.rho, gains, inst.noise))
    e = inst.harvested(F, gains)
    return float(np.sum(inst.v[:, None] * (rate + inst.gamma[:, None] * e)) / inst.N)


def dual_objective(F, q, inst):
    """Lagrangian-dual form with the quadratic-transform variable maximized out."""
    gains = inst.gains(F)
    own = np.abs(inst.own_projection(F)) ** 2
    ratio = inst.rho[:, None] * own / inst.denominators(gains)
    v = inst.v[:, None]
    rate = v * np.log2(1.0 + q) + v * (-q + (1.0 + q) * ratio) / LN2
    e = inst.harvested(F, gains)
    return float(np.sum(rate + v * inst.gamma[:, None] * e) / inst.N)


def transformed_objective(F, q, w, inst):
    """Objective of the fully transformed problem in ``(F, q, w)``."""
    gains = inst.gains(F)
    own = inst.own_projection(F)
    v = inst.v[:, None]
    rho = inst.rho[:, None]
    quad = (
        2 * np.sqrt(v * rho * (1.0 + q)) * np.real(np.conj(w) * own)
        - np.abs(w) ** 2 * inst.denominators(gains)
    )
    rate = v * np.log2(1.0 + q) + (-v * q + quad) / LN2
    e = inst.harvested(F, gains)
    return float(np.sum(rate + v * inst.gamma[:, None] * e) / inst.N)


# --- block updates ---------------------------------------------------------------

def update_q(F, inst):
    """Optimal dual-transform variables: the per-sample SINRs."""
    return sinr_all(inst.rho, inst.gains(F), inst.noise)


def update_w(F, q, inst):
    """Closed-form quadratic-transform variables for fixed ``(F, q)``."""
    gains = inst.gains(F)
    own = inst.own_projection(F)
    scale = np.sqrt(inst.rho[:, None] * inst.v[:, None] * (1.0 + q))
    return scale * own / inst.denominators(gains)


@dataclass
class FpOptions:
    bcd_tol: float = 1e-4
    max_cycles: int = 100
    sub_tol: float = 1e-6
    sub_max_iter: int = 500
    init: str = "mrt"


@dataclass
class SubproblemResult:
    F: np.ndarray
    slack: np.ndarray
    converged: bool
    kkt_residual: float
    iterations: int
    objective: float
    multipliers: np.ndarray = None


def build_subproblem(q, w, inst, lin):
    """Data ``(A, C, E, e0, weights, const)`` of the concave F-subproblem."""
    N = inst.N
    v = inst.v[:, None]
    rho = inst.rho[:, None]
    h = inst.h_tilde
    curv = (np.abs(w) ** 2 * rho) / (N * LN2)                     # (K, N)
    X = np.sqrt(curv)[..., None] * h                              # (K, N, M)
    X = X.reshape(-1, inst.M)
    A = X.T @ X.conj()
    lin_coef = np.sqrt(v * rho * (1.0 + q)) * w / (N * LN2)       # (K, N)
    B = np.einsum("kn,knm->mk", lin_coef, h)
    weight = (inst.v * inst.gamma)[:, None] / N * np.ones_like(curv)
    active = (weight > 0) & (inst.eh.a * (1.0 - inst.rho) > 0)[:, None]
    E_all, e0_all = lin.E, lin.e0
    C = B + np.tensordot(weight[active], E_all[active], axes=1) if np.any(active) else B
    const = float(
        np.sum(v * np.log2(1.0 + q) + (-v * q - np.abs(w) ** 2 * (rho * inst.noise.sigma2[:, None] + inst.noise.delta2[:, None])) / LN2) / N
        + np.sum(weight[active] * e0_all[active])
    )
    return A, C, E_all[active], e0_all[active], weight, active, const


def solve_f_subproblem(q, w, inst, lin, opts=None, nu0=None):
    """Maximize the transformed objective over ``(F, slack)`` under the linearized constraints.

    Slacks with positive reward sit at their upper bound, so they are
    eliminated and reappear as an affine reward plus the half-space
    ``slack_bound(F) >= 0``.  Slacks of devices with zero reward or ``rho = 1``
    carry no constraint on ``F``.
    """
    opts = FpOptions() if opts is None else opts
    A, C, E, e0, weight, active, const = build_subproblem(q, w, inst, lin)
    res = solve_qcqp(A, C, E, e0, inst.Pmax, tol=opts.sub_tol, max_iter=opts.sub_max_iter, nu0=nu0)
    slack = np.maximum(lin.slack_bound(res.F), 0.0)
    slack = np.where(np.isfinite(slack), slack, 0.0)
    return SubproblemResult(
        F=res.F,
        slack=slack,
        converged=res.converged,
        kkt_residual=res.kkt_residual,
        iterations=res.iterations,
        objective=res.objective + const,
        multipliers=res.multipliers,
    )


@dataclass
class FpResult:
    F: np.ndarray
    state: FpBcdState
    cycles: int
    converged: bool
    subproblem_warnings: int
    initial_objective: float
    final_objective: float
    kkt_residuals: list


def initial_beamformer(inst, kind="mrt"):
    from .baselines import mrt_beamformer, zf_beamformer

    if kind == "mrt":
        return mrt_beamformer(inst.H_hat, inst.Pmax)
    if kind == "zf":
        return zf_beamformer(inst.H_hat, inst.Pmax)
    if kind == "zero":
        return np.zeros((inst.M, inst.K), dtype=complex)
    raise ValueError(f"unknown initialization {kind!r}")


def fp_bcd(inst, opts=None, F0=None):
    """Run FP-BCD on one SAA instance.

    Each cycle records three trace entries: the dual-transform objective
    after the ``q`` update (``w`` at its optimum), the transformed objective
    after the ``w`` update, and the transformed objective after the ``F``
    update.  The ``F`` step is safeguarded by backtracking toward the
    previous beamformer, so the trace never decreases.
    """
    opts = FpOptions() if opts is None else opts
    F = initial_beamformer(inst, opts.init) if F0 is None else np.array(F0, dtype=complex)
    initial = saa_objective(F, inst)
    q = update_q(F, inst)
    w = update_w(F, q, inst)
    state = FpBcdState(F=F, q=q, w=w, slack=inst.harvested(F), trace=[initial])
    warnings = 0
    kkts = []
    converged = opts.max_cycles == 0
    prev = initial
    cycles = 0
    nu = None
    for cycles in range(1, opts.max_cycles + 1):
        q = update_q(F, inst)
        state.trace.append(dual_objective(F, q, inst))
        w = update_w(F, q, inst)
        before = transformed_objective(F, q, w, inst)
        state.trace.append(before)

        lin = mm_linearize(F, inst)
        sub = solve_f_subproblem(q, w, inst, lin, opts, nu0=nu)
        nu = sub.multipliers
        kkts.append(sub.kkt_residual)
        if not sub.converged:
            warnings += 1
        F_new = sub.F
        after = transformed_objective(F_new, q, w, inst)
        guard = 1e-12 * (1.0 + abs(before))
        if after < before - guard:
            step = 1.0
            for _ in range(30):
                step *= 0.5
                trial = F + step * (sub.F - F)
                after = transformed_objective(trial, q, w, inst)
                if after >= before - guard:
                    F_new = trial
                    break
            else:
                F_new, after = F, before
        F = F_new
        state.trace.append(after)
        state.F, state.q, state.w = F, q, w
        change = abs(after - prev) / max(abs(prev), 1e-12)
        prev = after
        if change < opts.bcd_tol:
            converged = True
            break
    state.slack = inst.harvested(F)
    return FpResult(
        F=F,
        state=state,
        cycles=cycles if opts.max_cycles else 0,
        converged=converged,
        subproblem_warnings=warnings,
        initial_objective=initial,
        final_objective=saa_objective(F, inst),
        kkt_residuals=kkts,
    )


TRACE_CSV_HEADER = ["cycle", "objective", "kkt_residual"]


def dump_trace_csv(result, path):
    """Per-cycle objective (after the F step) and subproblem KKT residual."""
    trace = result.state.trace
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        writer.writerow([0, f"{trace[0]:.9g}", ""])
        for c, kkt in enumerate(result.kkt_residuals, start=1):
            writer.writerow([c, f"{trace[3 * c]:.9g}", f"{kkt:.9g}"])
