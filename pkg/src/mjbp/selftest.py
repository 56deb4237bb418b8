"""Quick consistency checks behind ``mjbp selftest`` (a few seconds in total)."""

from __future__ import annotations

import logging

import numpy as np

from .channel import GeometryConfig, SystemDims, draw_error_tensor, draw_estimated_channel, sample_statistics
from .fp import FpOptions, SaaInstance, fp_bcd, transformed_objective, saa_objective, update_q, update_w
from .power import EhParams, NoiseParams, grad_eta_rho, eta_hat, harvested_power, rate_bounds
from .ssca import SscaState, maximize_surrogate

log = logging.getLogger("mjbp.selftest")


def _instance(rng, M=8, K=3, N=10, snr_db=20.0):
    dims = SystemDims(M, K)
    stats = sample_statistics(dims, GeometryConfig(), rng)
    stats = stats.scaled(1e-6 * 10 ** (snr_db / 10) / np.median(stats.gain))
    H = draw_estimated_channel(stats, dims, rng)
    phi = draw_error_tensor(stats.omega2, M, N, rng)
    return SaaInstance(H, phi, rng.uniform(0.2, 0.9, K), np.ones(K), 1.0,
                       NoiseParams.uniform(K, 1e-6, 1e-5), EhParams.uniform(K), np.full(K, 10.0))


def check_harvester_origin(rng):
    return abs(float(harvested_power(0.0, EhParams.uniform(1).device(0)))) < 1e-12


def check_gradient(rng):
    inst = _instance(rng)
    F = rng.standard_normal((inst.M, inst.K)) + 1j * rng.standard_normal((inst.M, inst.K))
    h = inst.h_tilde[0, 0]
    args = (0, inst.noise.device(0), inst.eh.device(0), 10.0)
    rho, d = 0.4, 1e-6
    fd = (eta_hat(rho + d, F, h, *args) - eta_hat(rho - d, F, h, *args)) / (2 * d)
    g = grad_eta_rho(rho, F, h, *args)
    return abs(g - fd) <= 1e-4 * max(abs(fd), 1e-8)


def check_fp_monotone(rng):
    inst = _instance(rng)
    res = fp_bcd(inst, FpOptions(max_cycles=20))
    tr = np.asarray(res.state.trace)
    return bool(np.all(np.diff(tr) >= -1e-8 * (1 + np.abs(tr[:-1]))))


def check_transform_tight(rng):
    inst = _instance(rng)
    F = fp_bcd(inst, FpOptions(max_cycles=2)).F
    q = update_q(F, inst)
    w = update_w(F, q, inst)
    return abs(transformed_objective(F, q, w, inst) - saa_objective(F, inst)) <= 1e-8


def check_surrogate(rng):
    state = SscaState.initial(4, rho0=rng.uniform(0.01, 1, 4))
    state.u = rng.normal(0, 2, 4)
    rho_bar = maximize_surrogate(state)
    grid = np.arange(state.rho_min, 1 + 1e-12, 1e-4)
    obj = state.u[:, None] * (grid - state.rho[:, None]) - state.tau * (grid - state.rho[:, None]) ** 2
    return bool(np.all(np.abs(grid[obj.argmax(axis=1)] - rho_bar) <= 1e-4 + 1e-12))


def check_bound_order(rng):
    inst = _instance(rng)
    F = np.broadcast_to(inst.H_hat / np.linalg.norm(inst.H_hat, axis=0) / np.sqrt(inst.K),
                        (inst.N, inst.M, inst.K))
    lo, up = rate_bounds(0.5, 0, F, inst.h_tilde[0], 400, 1.0, inst.noise.device(0))
    return lo <= up


CHECKS = {
    "harvester_origin": check_harvester_origin,
    "rho_gradient": check_gradient,
    "fp_monotone": check_fp_monotone,
    "transform_tight": check_transform_tight,
    "surrogate_grid": check_surrogate,
    "bound_order": check_bound_order,
}


def run_selftest(verbose=False, seed=0):
    rng = np.random.default_rng(seed)
    ok = True
    for name, fn in CHECKS.items():
        try:
            passed = bool(fn(rng))
            detail = ""
        except Exception as exc:
            passed, detail = False, f" ({type(exc).__name__}: {exc})"
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}{detail}")
    return ok
