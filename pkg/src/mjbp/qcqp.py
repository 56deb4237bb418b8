"""Concave quadratic maximization over a power ball and half-spaces.

Solves

    max_F  -sum_m f_m^H A f_m + 2 Re<C, F>
    s.t.   ||F||_F^2 <= P,   e0_j + 2 Re<E_j, F> >= 0,  j = 1..J

where ``A`` is Hermitian PSD (M x M) and shared by all columns of ``F``,
and ``<X, Y> = tr(X^H Y)``.  The half-spaces are dualized; for fixed
multipliers the ball-constrained inner problem is solved exactly through
the eigendecomposition of ``A`` and a scalar secular equation, and the
smooth convex dual is minimized with L-BFGS-B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass
class QcqpResult:
    F: np.ndarray
    multipliers: np.ndarray
    ball_multiplier: float
    kkt_residual: float
    converged: bool
    iterations: int
    objective: float


def _inner(R, s, U, P):
    """Exact maximizer of -tr(F^H A F) + 2Re<R,F> over ||F||^2 <= P."""
    Rt = U.conj().T @ R
    r2 = (Rt.real**2 + Rt.imag**2).sum(axis=1)
    total = r2.sum()
    if total == 0.0:
        return np.zeros_like(R), 0.0
    smax = max(s[-1], 0.0)
    null = s <= 1e-13 * max(smax, 1.0)
    # rounding leaves ~eps of R on the numerical null space; that is not a true direction of ascent
    if not (null & (r2 > 1e-24 * total)).any():
        safe = np.where(null, 1.0, s)
        if np.where(null, 0.0, r2 / safe**2).sum() <= P:
            X = np.where(null[:, None], 0.0, Rt / safe[:, None])
            return U @ X, 0.0
    # sum r2 / (s + lam)^2 = P has a unique positive root
    sqP = math.sqrt(P)
    norm_r = math.sqrt(total)
    lo = max(norm_r / sqP - smax, 0.0)
    hi = norm_r / sqP - max(s[0], 0.0)
    lam = lo if lo > 0 else 0.5 * hi
    for _ in range(200):
        inv = 1.0 / (s + lam)
        t = r2 * inv * inv
        n2 = t.sum()
        norm = math.sqrt(n2)
        if abs(norm - sqP) <= 1e-14 * sqP:
            break
        if norm > sqP:
            lo = lam
        else:
            hi = lam
        # Newton on 1/||x|| - 1/sqrt(P), which is close to linear in lam
        dn2 = -2.0 * (t * inv).sum()
        step = lam - (1.0 / norm - 1.0 / sqP) / (-0.5 * dn2 / (n2 * norm))
        if not lo <= step <= hi or not math.isfinite(step):
            step = 0.5 * (lo + hi)
        if step == lam:
            break
        lam = step
    F = U @ (Rt / (s + lam)[:, None])
    n2 = np.vdot(F, F).real
    if n2 > P:
        F *= math.sqrt(P / n2)
    return F, lam


def solve_qcqp(A, C, E, e0, P, tol=1e-6, max_iter=500, nu0=None, restarts=5):
    """Maximize the concave quadratic; see module docstring for the problem form.

    The problem is normalized internally (``F`` scaled to the unit ball, the
    objective and each half-space rescaled to unit magnitude).  The reported
    KKT residual is ``max_j |min(nu_j, g_j)|`` in those normalized units,
    where ``g_j`` is the normalized constraint value; stationarity and the
    ball complementarity hold exactly by construction.  ``nu0`` warm-starts
    the half-space multipliers (original units).
    """
    A = np.asarray(A, dtype=complex)
    C = np.asarray(C, dtype=complex)
    M, K = C.shape
    E = np.asarray(E, dtype=complex).reshape(-1, M, K)
    e0 = np.asarray(e0, dtype=float).reshape(-1)
    J = e0.shape[0]
    if not np.isfinite(P):
        # unbounded power: use a ball large enough never to bind
        P = None

    sqP = 1.0 if P is None else np.sqrt(P)
    s, U = np.linalg.eigh(A)
    s = np.maximum(s, 0.0)
    obj_scale = max(sqP**2 * (s[-1] if M else 0.0), 2 * sqP * np.linalg.norm(C), 1e-300)
    A_s = s * sqP**2 / obj_scale
    C_s = C * sqP / obj_scale
    if J:
        con_scale = np.maximum(np.abs(e0), 2 * sqP * np.linalg.norm(E.reshape(J, -1), axis=1))
        con_scale = np.where(con_scale > 0, con_scale, 1.0)
        E_s = E * (sqP / con_scale)[:, None, None]
        e_s = e0 / con_scale
        E_flat = E_s.reshape(J, -1)
    ball = np.inf if P is None else 1.0

    def inner(nu):
        R = C_s if not J else C_s + np.tensordot(nu, E_s, axes=1)
        if np.isinf(ball):
            X = (U.conj().T @ R) / np.where(A_s > 0, A_s, np.inf)[:, None]
            return U @ X, 0.0, R
        X, lam = _inner(R, A_s, U, ball)
        return X, lam, R

    def value(X):
        Xt = U.conj().T @ X
        return float(-np.sum(A_s[:, None] * np.abs(Xt) ** 2) + 2 * np.real(np.vdot(C_s, X)))

    def cons(X):
        return e_s + 2 * np.real(E_flat.conj() @ X.reshape(-1))

    def dual(nu):
        X, lam, R = inner(nu)
        Xt = U.conj().T @ X
        val = -np.sum(A_s[:, None] * np.abs(Xt) ** 2) + 2 * np.real(np.vdot(R, X)) + nu @ e_s
        return float(val), cons(X)

    nu = np.zeros(J)
    iterations = 0
    X, lam, _ = inner(nu)
    if J and np.min(cons(X)) < 0:
        start = nu
        if nu0 is not None and np.shape(nu0) == (J,):
            start = np.maximum(np.asarray(nu0, dtype=float) * con_scale / obj_scale, 0.0)
        # the dual can be flat and badly conditioned; L-BFGS-B then stalls on its
        # ftol test well before the KKT residual is small, and a fresh start helps
        for _ in range(restarts + 1):
            res = minimize(
                dual, start, jac=True, method="L-BFGS-B",
                bounds=[(0.0, None)] * J,
                options={"maxiter": max_iter, "gtol": 0.1 * tol, "ftol": 1e-15, "maxcor": 20},
            )
            nu = np.maximum(res.x, 0.0)
            iterations += int(res.nit)
            X, lam, _ = inner(nu)
            if np.max(np.abs(np.minimum(nu, cons(X)))) <= tol or res.nit == 0 or iterations >= max_iter:
                break
            start = nu
    residual = 0.0
    if J:
        g = cons(X)
        residual = float(np.max(np.abs(np.minimum(nu, g))))
    F = X * sqP
    nu_out = nu * obj_scale / con_scale if J else nu
    return QcqpResult(
        F=F,
        multipliers=nu_out,
        ball_multiplier=lam * obj_scale / sqP**2,
        kkt_residual=residual,
        converged=residual <= tol,
        iterations=iterations,
        objective=value(X) * obj_scale,
    )


def qcqp_objective(A, C, F):
    """``-tr(F^H A F) + 2 Re<C, F>``."""
    return float(-np.real(np.trace(F.conj().T @ A @ F)) + 2 * np.real(np.vdot(C, F)))
