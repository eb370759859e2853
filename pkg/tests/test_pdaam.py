import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmot import Problem, StoppingRule, lp_solve, sinkhorn_solve, solve_mot, solve_regularized
from mmot.dual import DualLine, block_minimize, dual_gradient, dual_value
from mmot.errors import ArgumentError, MonotonicityViolation
from mmot.pdaam import (
    init_state,
    greedy_block,
    line_search_beta,
    pdaam_iterate,
    predicted_iterations,
    primal_gap_terms,
    recentred_bound_ok,
    smoothed_marginals,
    step_size,
    rate_bounds,
)
from mmot.tensor import all_marginals, inner

from conftest import random_problem


def grid_phi(problem, eta, zeta, betas, chunk=20000):
    """phi on a grid of betas, vectorized log-sum-exp over the whole tensor."""
    g = problem.gamma
    idx = np.indices(problem.shape.dims).reshape(problem.m, -1)
    rows = np.arange(problem.m)[:, None]
    base = (eta[rows, idx].sum(axis=0) - problem.cost.reshape(-1) / g)
    d = (zeta - eta)[rows, idx].sum(axis=0)
    lin0 = float(np.sum(eta * problem.marginals))
    lin1 = float(np.sum((zeta - eta) * problem.marginals))
    out = np.empty(betas.size)
    for s in range(0, betas.size, chunk):
        b = betas[s:s + chunk, None]
        z = base[None, :] + b * d[None, :]
        top = z.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(z - top).sum(axis=1))
        out[s:s + chunk] = g * (lse - lin0 - b[:, 0] * lin1)
    return out


def test_line_search_degenerate(rng):
    pr = random_problem(rng, 3, 3, gamma=0.1)
    eta = rng.standard_normal((3, 3))
    assert line_search_beta(pr, eta, eta.copy()) == 0.0


def test_line_search_at_optimum(rng):
    pr = random_problem(rng, 3, 3, gamma=0.2, floor=0.2)
    _, U, rep = sinkhorn_solve(pr, StoppingRule(1e-12, 10000))
    assert rep.complete
    zeta = U + rng.standard_normal((3, 3))
    assert line_search_beta(pr, U, zeta) <= 1e-5


def test_line_search_matches_grid(rng):
    pr = random_problem(rng, 3, 3, gamma=0.1)
    betas = np.linspace(0.0, 1.0, 10**6)
    for _ in range(3):
        eta, zeta = rng.standard_normal((3, 3)), rng.standard_normal((3, 3)) * 4
        beta = line_search_beta(pr, eta, zeta)
        vals = grid_phi(pr, eta, zeta, betas)
        j = int(np.argmin(vals))
        line = DualLine(pr, eta, zeta)
        assert abs(beta - betas[j]) <= 1e-5 or line(beta) <= vals[j] + 1e-10


def test_line_search_never_increases(rng):
    pr = random_problem(rng, 3, 4, gamma=0.05)
    for _ in range(10):
        eta, zeta = rng.standard_normal((3, 4)), rng.standard_normal((3, 4)) * 10
        line = DualLine(pr, eta, zeta)
        assert line(line_search_beta(pr, eta, zeta)) <= line(0.0)


def test_greedy_block_examples(rng):
    assert greedy_block(np.zeros((3, 4))) == 0
    g = np.zeros((3, 2))
    g[:, 0] = [0.1, 0.5, 0.5]
    assert greedy_block(g) == 1
    for _ in range(20):
        g = rng.standard_normal((4, 5))
        norms = [math.sqrt(sum(v * v for v in row)) for row in g]
        assert greedy_block(g) == norms.index(max(norms))


def test_step_size_examples(rng):
    assert step_size(1.5, 3.0, 0.0) == 1.0
    assert step_size(0.0, 2.0, 7.0) == 0.0
    assert step_size(-1e-12, 2.0, 7.0) == 0.0
    assert step_size(0.5, 1e-301, 1.0) is None
    with pytest.raises(MonotonicityViolation):
        step_size(-1e-8, 1.0, 1.0)
    for _ in range(50):
        d, g, A = rng.random() * 3, rng.random() * 10 + 1e-6, rng.random() * 100
        a = step_size(d, g, A)
        assert math.isclose(a * a * g / (2 * (A + a)), d, rel_tol=1e-9, abs_tol=1e-300)


def test_start_at_optimum():
    n, m = 3, 3
    pr = Problem(np.zeros((n,) * m), np.full((m, n), 1 / n), 0.5)
    state = pdaam_iterate(pr, init_state(pr))
    assert state.converged and state.t == 0
    np.testing.assert_allclose(state.x_hat, 1 / 27, rtol=1e-14)
    x, _, rep = solve_regularized(pr, StoppingRule(1e-12))
    assert rep.iterations == 0 and rep.complete
    assert abs(rep.final_gap) <= 1e-15


def test_single_element_stops_immediately():
    pr = Problem(np.full((1, 1, 1), 0.4), np.ones((3, 1)), 0.1)
    x, _, rep = solve_regularized(pr, StoppingRule(1e-12))
    assert rep.iterations == 0 and rep.complete
    assert x.item() == 1.0


def test_beats_sinkhorn_after_50(rng):
    pr = random_problem(rng, 3, 3, gamma=0.1, floor=0.05)
    _, _, rep = solve_regularized(pr, StoppingRule(-1.0, 50))
    _, _, base = sinkhorn_solve(pr, StoppingRule(-1.0, 50))
    assert rep.iterations == base.iterations == 50
    assert rep.final_gap <= base.final_gap


def test_iteration_invariants(rng):
    pr = random_problem(rng, 3, 4, gamma=0.05, floor=0.05)
    state = init_state(pr)
    total = 0.0
    for _ in range(40):
        new = pdaam_iterate(pr, state)
        if new.converged:
            break
        a = new.A - state.A
        total += a
        assert math.isclose(new.A, total, rel_tol=1e-12)
        phi_theta = dual_value(pr, new.theta)
        grad = dual_gradient(pr, new.theta)
        g = float(np.sum(grad * grad))
        assert new.phi_eta <= phi_theta + 1e-12
        assert phi_theta <= state.phi_eta + 1e-9
        lhs = phi_theta - a * a * g / (2 * (state.A + a))
        assert math.isclose(lhs, new.phi_eta, rel_tol=1e-9, abs_tol=1e-12)
        assert new.x_hat.min() >= 0 and abs(new.x_hat.sum() - 1) <= 1e-10
        np.testing.assert_allclose(new.eta, block_minimize(pr, new.theta, new.block), atol=0)
        state = new


def test_rate_bounds_hold(rng):
    pr = random_problem(rng, 3, 3, gamma=0.05, floor=0.05)
    x, eta, rep = solve_regularized(pr, StoppingRule(1e-3), strict_bounds=True)
    assert rep.complete and not rep.bound_violations
    gap, l1, _ = primal_gap_terms(pr, x, dual_value(pr, eta))
    assert 2 * l1 + gap <= 1e-3
    assert recentred_bound_ok(pr, eta)
    gap_rhs, constr_rhs = rate_bounds(pr, 1)
    assert gap_rhs > 0 and constr_rhs > 0


def test_solve_regularized_requires_positive_marginals():
    pr = Problem(np.zeros((2, 2)), np.array([[1.0, 0.0], [0.5, 0.5]]), 0.1)
    with pytest.raises(ArgumentError):
        solve_regularized(pr, StoppingRule(1e-3))


def test_solve_mot_antidiagonal():
    pr = Problem(np.array([[0.0, 1.0], [1.0, 0.0]]), np.full((2, 2), 0.5))
    plan, cert, rep = solve_mot(pr, 0.1)
    assert rep.complete
    assert inner(pr.cost, plan) <= 0.1
    np.testing.assert_allclose(all_marginals(plan), pr.marginals, atol=1e-12)
    assert cert.eps_target == 0.1 and cert.iterations == rep.iterations


def test_solve_mot_forced_vertex():
    C = np.array([[0.3, 0.9], [0.1, 0.6]])
    pr = Problem(C, np.array([[1.0, 0.0], [0.0, 1.0]]))
    for eps in (0.5, 0.1):
        plan, _, rep = solve_mot(pr, eps)
        assert rep.complete
        assert abs(inner(C, plan) - 0.9) <= eps
        np.testing.assert_allclose(all_marginals(plan), pr.marginals, atol=1e-12)


def test_solve_mot_against_lp(rng):
    pr = random_problem(rng, 3, 4)
    opt = lp_solve(pr).optimal_value
    plan, cert, rep = solve_mot(pr, 0.25)
    assert rep.complete
    assert 0.0 <= inner(pr.cost, plan) - opt <= 0.25
    assert np.abs(all_marginals(plan) - pr.marginals).sum(axis=1).max() <= 1e-9
    again = solve_mot(pr, 0.25)
    assert again[2].iterations == rep.iterations
    assert np.array_equal(again[0], plan)


def test_solve_mot_zero_cost():
    pr = Problem(np.zeros((3, 3)), np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]]))
    plan, cert, rep = solve_mot(pr, 0.1)
    assert rep.complete and rep.iterations == 0
    np.testing.assert_allclose(all_marginals(plan), pr.marginals, atol=1e-12)


def test_solve_mot_errors():
    pr = Problem(np.ones((2, 2)), np.full((2, 2), 0.5))
    for eps in (0.0, -1.0, math.nan):
        with pytest.raises(ArgumentError, match="eps must be positive"):
            solve_mot(pr, eps)
    with pytest.raises(ArgumentError):
        solve_mot(Problem(np.ones((1, 1)), np.ones((2, 1))), 0.1)
    with pytest.raises(ArgumentError):
        solve_mot(pr, 0.1, algorithm="randkhorn")


def test_incomplete_flag(rng):
    pr = random_problem(rng, 3, 4)
    plan, cert, rep = solve_mot(pr, 0.01, max_iter=3)
    assert rep.status == "incomplete" and not cert.complete
    np.testing.assert_allclose(all_marginals(plan), pr.marginals, atol=1e-12)


def test_smoothed_marginals():
    p = np.array([[1.0, 0.0, 0.0], [0.2, 0.3, 0.5]])
    q = smoothed_marginals(p, 0.4)
    np.testing.assert_allclose(q.sum(axis=1), 1.0, rtol=1e-15)
    assert q.min() >= 0.4 / (4 * 2 * 3) - 1e-18
    assert predicted_iterations(3, 4, 0.1, 1.0) > 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dual_descent_property(seed):
    r = np.random.default_rng(seed)
    pr = random_problem(r, 3, 3, gamma=float(r.uniform(0.02, 0.5)), floor=0.02)
    _, _, rep = solve_regularized(pr, StoppingRule(-1.0, 30))
    phis = [row.phi for row in rep.trace]
    assert all(b <= a + 1e-9 for a, b in zip(phis, phis[1:]))
