import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mjbp.qcqp import qcqp_objective, solve_qcqp


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _problem(rng, M=3, K=2, J=0, rank=None):
    rank = M if rank is None else rank
    X = _cplx(rng, rank, M)
    A = X.conj().T @ X
    C = _cplx(rng, M, K)
    E = _cplx(rng, J, M, K)
    e0 = rng.uniform(-1, 1, J)
    return A, C, E, e0


def _ball_reference(A, C, P, iters=20000):
    """Projected gradient ascent on the ball, for problems without half-spaces."""
    L = 2 * np.linalg.eigvalsh(A)[-1] + 1e-12
    F = np.zeros_like(C)
    for _ in range(iters):
        F = F + (2 * C - 2 * A @ F) / L
        n = np.linalg.norm(F)
        if n**2 > P:
            F *= np.sqrt(P) / n
    return F


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_ball_only_matches_projected_gradient(seed, P):
    rng = np.random.default_rng(seed)
    A, C, E, e0 = _problem(rng)
    res = solve_qcqp(A, C, E, e0, P)
    ref = _ball_reference(A, C, P)
    assert np.linalg.norm(res.F) ** 2 <= P * (1 + 1e-9)
    assert qcqp_objective(A, C, res.F) >= qcqp_objective(A, C, ref) - 1e-7 * (1 + abs(qcqp_objective(A, C, ref)))
    assert res.objective == pytest.approx(qcqp_objective(A, C, res.F), rel=1e-9, abs=1e-12)


def test_rank_one_interior_solution_is_min_norm():
    rng = np.random.default_rng(1)
    h = _cplx(rng, 4)
    A = np.outer(h, h.conj())
    C = (0.3 - 0.2j) * h[:, None]
    res = solve_qcqp(A, C, np.zeros((0, 4, 1)), np.zeros(0), 1e6)
    expect = h[:, None] * (0.3 - 0.2j) / np.vdot(h, h).real
    np.testing.assert_allclose(res.F, expect, atol=1e-12)
    assert res.ball_multiplier == 0.0


def test_unbounded_power_is_stationary():
    rng = np.random.default_rng(2)
    A, C, E, e0 = _problem(rng, M=4, K=3)
    res = solve_qcqp(A, C, E, e0, np.inf)
    grad = 2 * C - 2 * A @ res.F
    assert np.linalg.norm(grad) <= 1e-8 * np.linalg.norm(C)


def test_active_half_space_kkt():
    rng = np.random.default_rng(3)
    for _ in range(20):
        A, C, E, e0 = _problem(rng, M=3, K=2, J=4)
        # make the unconstrained maximizer violate a constraint
        F0 = solve_qcqp(A, C, E[:0], e0[:0], 4.0).F
        e0 = -2 * np.real(np.einsum("jmk,mk->j", E.conj(), F0)) - 0.5
        res = solve_qcqp(A, C, E, e0, 4.0, tol=1e-7)
        g = e0 + 2 * np.real(np.einsum("jmk,mk->j", E.conj(), res.F))
        assert res.converged
        assert np.all(res.multipliers >= 0)
        assert np.min(g) >= -1e-6 * (1 + np.max(np.abs(e0)))
        assert np.linalg.norm(res.F) ** 2 <= 4.0 * (1 + 1e-9)


def test_kkt_stationarity_in_original_units():
    rng = np.random.default_rng(4)
    A, C, E, e0 = _problem(rng, M=3, K=2, J=3)
    F0 = solve_qcqp(A, C, E[:0], e0[:0], 2.0).F
    e0 = -2 * np.real(np.einsum("jmk,mk->j", E.conj(), F0)) - 0.3
    res = solve_qcqp(A, C, E, e0, 2.0, tol=1e-9)
    lam = res.ball_multiplier
    grad = 2 * C - 2 * A @ res.F + 2 * np.tensordot(res.multipliers, E, axes=1) - 2 * lam * res.F
    assert np.linalg.norm(grad) <= 1e-6 * (np.linalg.norm(C) + np.linalg.norm(A))


def test_warm_start_reaches_same_point():
    rng = np.random.default_rng(5)
    A, C, E, e0 = _problem(rng, M=3, K=2, J=3)
    F0 = solve_qcqp(A, C, E[:0], e0[:0], 2.0).F
    e0 = -2 * np.real(np.einsum("jmk,mk->j", E.conj(), F0)) - 0.3
    cold = solve_qcqp(A, C, E, e0, 2.0, tol=1e-9)
    warm = solve_qcqp(A, C, E, e0, 2.0, tol=1e-9, nu0=cold.multipliers)
    assert warm.objective == pytest.approx(cold.objective, rel=1e-7)
    assert warm.iterations <= cold.iterations


def test_zero_data_gives_zero():
    res = solve_qcqp(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((0, 2, 1)), np.zeros(0), 1.0)
    assert np.all(res.F == 0)


def test_stalled_dual_is_restarted():
    # beamforming subproblem data with half-spaces oriented so that an interior point is
    # feasible and the free optimum is not; these flat duals used to stop L-BFGS-B on
    # its ftol test with a large KKT residual
    from factories import instance
    from mjbp.fp import build_subproblem, initial_beamformer, mm_linearize, update_q, update_w

    rng = np.random.default_rng(6)
    for _ in range(20):
        inst = instance(rng, M=2, K=2, N=2, snr_db=rng.uniform(0, 40))
        F = initial_beamformer(inst)
        q = update_q(F, inst)
        w = update_w(F, q, inst)
        A, C, E, _, *_ = build_subproblem(q, w, inst, mm_linearize(F, inst))
        lin = lambda F: 2 * np.real(np.einsum("jmk,mk->j", E.conj(), F))
        free = solve_qcqp(A, C, E[:0], np.zeros(0), inst.Pmax).F
        anchor = _cplx(rng, 2, 2)
        anchor *= np.sqrt(0.5 * inst.Pmax) / np.linalg.norm(anchor)
        E = E * np.where(lin(free) > lin(anchor), -1.0, 1.0)[:, None, None]
        e0 = -0.5 * (lin(anchor) + lin(free))
        res = solve_qcqp(A, C, E, e0, inst.Pmax, tol=1e-7)
        assert res.converged, res.kkt_residual
