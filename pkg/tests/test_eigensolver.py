import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

import cuspeig as ce
from cuspeig.discretization import assembly
from cuspeig.eigensolver import ConvergenceError


def zero_mean_field(mesh, values):
    return ce.ScalarField(mesh, assembly(mesh).zero_mean(values))


class TestPLaplaceSource:
    def test_zero_source_gives_zero(self, square16):
        f = ce.ScalarField(square16, np.zeros(square16.num_nodes))
        v = ce.solve_p_laplace_source(square16, 3.0, f)
        assert np.max(np.abs(v.values)) == 0.0

    def test_p2_matches_direct_sparse_solve(self, square16, rng):
        # Independent route: pin one unknown, solve, then remove the mean.
        f = zero_mean_field(square16, rng.uniform(-1.0, 1.0, square16.num_nodes))
        ours = ce.solve_p_laplace_source(square16, 2.0, f)
        asm = assembly(square16)
        load = asm.mass @ f.values
        stiff = asm.stiffness.tolil()
        stiff[0, :] = 0.0
        stiff[0, 0] = 1.0
        rhs = load.copy()
        rhs[0] = 0.0
        pinned = spla.spsolve(stiff.tocsr(), rhs)
        pinned = asm.zero_mean(pinned)
        np.testing.assert_allclose(ours.values, pinned, atol=1e-9)

    def test_homogeneity_scaling_law(self, square16, rng):
        f = zero_mean_field(square16, rng.uniform(-1.0, 1.0, square16.num_nodes))
        scaled = ce.ScalarField(square16, 8.0 * f.values)
        v1 = ce.solve_p_laplace_source(square16, 3.0, f, tol=1e-12)
        v2 = ce.solve_p_laplace_source(square16, 3.0, scaled, tol=1e-12)
        factor = 8.0 ** (1.0 / (3.0 - 1.0))
        np.testing.assert_allclose(v2.values, factor * v1.values, rtol=0, atol=1e-10)

    def test_subquadratic_growth_regularized_path(self, square16, rng):
        f = zero_mean_field(square16, rng.uniform(-1.0, 1.0, square16.num_nodes))
        v = ce.solve_p_laplace_source(square16, 1.8, f, tol=1e-9)
        residual = ce.check_weak_residual  # noqa: F841  (solution checked below)
        from cuspeig.discretization import p_form_apply

        defect = p_form_apply(v, 1.8) - assembly(square16).mass @ f.values
        defect -= assembly(square16).mass_vector * defect.sum() / square16.volume
        assert np.linalg.norm(defect) <= 1e-6

    def test_rejects_incompatible_source(self, square16):
        f = ce.ScalarField(square16, np.ones(square16.num_nodes))
        with pytest.raises(ValueError, match="zero mean"):
            ce.solve_p_laplace_source(square16, 2.0, f)


def dense_first_eigenpair(mesh):
    """Reference discrete eigenpair from a dense restricted eigensolve."""
    asm = assembly(mesh)
    stiff = asm.stiffness.toarray()
    mass = asm.mass.toarray()
    n = mesh.num_nodes
    basis = (np.eye(n) - np.outer(np.ones(n), asm.mass_vector) / asm.volume)[:, 1:]
    vals, vecs = sla.eigh(basis.T @ stiff @ basis, basis.T @ mass @ basis)
    vec = basis @ vecs[:, 0]
    vec /= math.sqrt(vec @ (mass @ vec))
    return float(vals[0]), vec


class TestWeakResidual:
    def test_discrete_eigenpair_has_tiny_residual(self):
        mesh = ce.mesh_box(ce.BoxDomain((1.0, 1.0)), 8)
        lam, vec = dense_first_eigenpair(mesh)
        u = ce.ScalarField(mesh, vec)
        assert ce.check_weak_residual(u, lam, 2.0, 2.0) <= 1e-10

    def test_perturbation_grows_residual(self, rng):
        mesh = ce.mesh_box(ce.BoxDomain((1.0, 1.0)), 8)
        lam, vec = dense_first_eigenpair(mesh)
        clean = ce.check_weak_residual(ce.ScalarField(mesh, vec), lam, 2.0, 2.0)
        noisy_vals = vec + 0.1 * rng.uniform(-1.0, 1.0, mesh.num_nodes)
        noisy = ce.check_weak_residual(ce.ScalarField(mesh, noisy_vals), lam, 2.0, 2.0)
        assert noisy > 100.0 * max(clean, 1e-14)


class TestInverseIteration:
    def test_matches_linear_oracle(self, square16):
        oracle = ce.oracle_linear_eigen(square16)
        pair, trace = ce.inverse_iteration(square16, 2.0, tol=1e-10, residual_tol=1e-7)
        assert pair.lam == pytest.approx(oracle.lambda_oracle, rel=1e-6)
        mus = [state.mu for state in trace]
        assert all(m2 <= m1 * (1.0 + 1e-10) for m1, m2 in zip(mus, mus[1:]))

    def test_trace_energies_interleave(self, cusp16):
        _pair, trace = ce.inverse_iteration(cusp16, 2.5, tol=1e-8, residual_tol=1e-5)
        mus = [s.mu for s in trace]
        energies = [s.energy for s in trace]
        # Each state holds mu_n and ||w_{n+1}||^p, which interleave as
        # mu_{n+1} <= ||w_{n+1}||^p <= mu_n.
        for k in range(len(trace)):
            assert energies[k] <= mus[k] * (1.0 + 1e-12)
            if k + 1 < len(trace):
                assert mus[k + 1] <= energies[k] * (1.0 + 1e-12)

    def test_limit_not_below_direct_minimum(self, cusp16):
        pair_iter, _ = ce.inverse_iteration(cusp16, 2.0, tol=1e-9, residual_tol=1e-6)
        pair_min = ce.minimize_rayleigh(cusp16, 2.0, 2.0, tol=1e-6)
        assert pair_iter.diagnostics["mu_final"] >= pair_min.lam * (1.0 - 1e-6)

    def test_rejects_general_q(self, square16):
        with pytest.raises(ValueError, match="q = 2"):
            ce.inverse_iteration(square16, 2.0, q=2.5)

    def test_eigenpair_invariants(self, cusp16):
        pair, _ = ce.inverse_iteration(cusp16, 2.5, tol=1e-8, residual_tol=1e-5)
        assert ce.lq_norm(pair.u, 2.0) == pytest.approx(1.0, abs=1e-10)
        assert pair.lam == pytest.approx(
            ce.rayleigh_quotient(pair.u, 2.5, 2.0), rel=1e-10
        )
        assert pair.lam > 0.0


class TestMinimizeRayleigh:
    def test_matches_linear_oracle(self, square16):
        oracle = ce.oracle_linear_eigen(square16)
        pair = ce.minimize_rayleigh(square16, 2.0, 2.0, tol=1e-7)
        assert pair.lam == pytest.approx(oracle.lambda_oracle, rel=1e-6)
        assert pair.weak_residual <= 1e-7

    def test_scale_invariant_start(self, square16):
        u0 = ce.default_initial_field(square16)
        big = ce.ScalarField(square16, 1e3 * u0.values)
        lam_a = ce.minimize_rayleigh(square16, 2.0, 2.0, u0=u0, tol=1e-7).lam
        lam_b = ce.minimize_rayleigh(square16, 2.0, 2.0, u0=big, tol=1e-7).lam
        assert lam_b == pytest.approx(lam_a, rel=1e-10)

    def test_cusp_above_closed_form_bound(self):
        domain = ce.CuspDomain((1.5, 1.5))
        mesh = ce.mesh_cusp(domain, 1.0, 6)
        pair = ce.minimize_rayleigh(mesh, 3.0, 2.0, tol=1e-3)
        assert pair.lam >= ce.lambda_32_lower_bound(1.5, 1.5)

    def test_rejects_constant_start(self, square16):
        u0 = ce.ScalarField(square16, np.full(square16.num_nodes, 2.0))
        with pytest.raises(ValueError, match="nonconstant"):
            ce.minimize_rayleigh(square16, 2.0, 2.0, u0=u0)

    def test_unreachable_tolerance_reported(self, square16):
        with pytest.raises(ConvergenceError, match="stagnated|did not reach"):
            ce.minimize_rayleigh(square16, 2.0, 2.0, tol=1e-15, max_iter=60)

    def test_general_q_constraint_enforced(self, cusp16):
        pair = ce.minimize_rayleigh(cusp16, 2.0, 2.5, tol=1e-4)
        assert pair.constraint_residual <= 1e-8
        assert pair.lam > 0.0


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_route_agreement(cusp16, p):
    pair_min = ce.minimize_rayleigh(cusp16, p, 2.0, tol=1e-5)
    pair_iter, _ = ce.inverse_iteration(cusp16, p, tol=1e-9, residual_tol=1e-5)
    assert pair_iter.lam == pytest.approx(pair_min.lam, rel=0.01)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_vector_flux_monotonicity(p):
    from cuspeig.verification import algebraic_inequality_stats

    stats = algebraic_inequality_stats(p, pairs=10_000, seed=7)
    assert stats["min_pairing"] >= -1e-15
    assert stats["min_ratio"] > 0.0


def test_discrete_operator_monotone(cusp16):
    from cuspeig.verification import operator_monotonicity_stats

    stats = operator_monotonicity_stats(cusp16, 3.0, pairs=40, seed=5)
    assert stats["min_pairing"] >= -1e-12
    assert stats["min_ratio"] > 0.0
