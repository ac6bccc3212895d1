import numpy as np
import pytest

from nltgcr import (
    BreakdownError,
    LinearOperator,
    LinearOptions,
    cr_solve,
    gcr_solve,
    make_linear_problem,
    tgcr_solve,
)
from oracles import krylov_min_resnorm


class TestGcr:
    def test_identity_converges_in_one_step(self):
        op = LinearOperator.from_matrix(np.eye(6))
        b = np.arange(1.0, 7.0)
        x, h = gcr_solve(op, b, np.zeros(6))
        assert h.converged
        assert h.iterations == 1
        np.testing.assert_allclose(x, b, atol=1e-14)

    def test_exact_start_takes_zero_iterations(self):
        op, b = make_linear_problem("spd", 10, seed=0)
        x_star = np.linalg.solve(op.mat, b)
        x, h = gcr_solve(op, b, x_star)
        assert h.iterations == 0
        assert h.resnorms()[0] <= 1e-10

    def test_per_step_residual_is_krylov_minimum(self):
        # Independent oracle: Arnoldi basis + dense least squares.
        op, b = make_linear_problem("nonsymmetric", 20, seed=4)
        x, h = gcr_solve(op, b, np.zeros(20), LinearOptions(tol_rel=1e-10))
        r0n = h.resnorms()[0]
        for k in range(h.iterations + 1):
            truth = krylov_min_resnorm(op.mat, b, np.zeros(20), k)
            mine = float(np.linalg.norm(b - op.mat @ h.xs[k]))
            if truth > 1e-12 * r0n:
                assert abs(mine - truth) <= 1e-8 * truth
            else:
                assert mine <= 1e-10 * r0n

    def test_residual_norms_monotone(self):
        op, b = make_linear_problem("nonsymmetric", 30, seed=7)
        _, h = gcr_solve(op, b, np.zeros(30))
        resnorms = h.resnorms()
        assert np.all(np.diff(resnorms) <= 1e-12 * resnorms[0])

    def test_stored_v_columns_orthonormal(self):
        op, b = make_linear_problem("nonsymmetric", 25, seed=2)
        _, h = gcr_solve(op, b, np.zeros(25))
        V = h.V_matrix()
        defect = np.abs(V.T @ V - np.eye(V.shape[1])).max()
        assert defect <= 1e-10

    def test_lucky_breakdown_carries_tiny_residual(self):
        # With A = I the first step is exact; an absurdly small tolerance
        # forces the solver to try to build a direction from the noise-level
        # residual, which collapses.
        op = LinearOperator.from_matrix(np.eye(8))
        rng = np.random.default_rng(5)
        b = rng.standard_normal(8)
        with pytest.raises(BreakdownError) as info:
            gcr_solve(op, b, np.zeros(8), LinearOptions(tol_rel=1e-30, max_iters=10))
        err = info.value
        assert err.resnorm / np.linalg.norm(b) <= 1e-8
        assert err.residual is not None

    def test_dimension_mismatch_rejected(self):
        op = LinearOperator.from_matrix(np.eye(4))
        with pytest.raises(ValueError):
            gcr_solve(op, np.ones(5), np.zeros(4))


class TestTgcr:
    def test_huge_window_matches_full_gcr(self):
        op, b = make_linear_problem("nonsymmetric", 24, seed=11)
        _, h_full = gcr_solve(op, b, np.zeros(24))
        _, h_trunc = tgcr_solve(op, b, np.zeros(24), m=1000)
        a = h_full.resnorms()
        c = h_trunc.resnorms()
        assert len(a) == len(c)
        np.testing.assert_allclose(a, c, atol=1e-12 * a[0])
        assert not h_trunc.truncated

    def test_symmetric_short_recurrence_m1_equals_m5(self):
        # Symmetric operators make the older orthogonalization coefficients
        # vanish, so the truncated histories coincide.
        op, b = make_linear_problem("spd", 100, seed=3)
        _, h1 = tgcr_solve(op, b, np.zeros(100), m=1)
        _, h5 = tgcr_solve(op, b, np.zeros(100), m=5)
        a = h1.resnorms()
        c = h5.resnorms()
        n = min(len(a), len(c))
        np.testing.assert_allclose(a[:n], c[:n], atol=1e-8 * a[0])

    def test_diagonal_system_converges_in_three_steps(self):
        A = np.diag([1.0, 2.0, 3.0])
        op = LinearOperator.from_matrix(A, is_symmetric=True)
        b = np.ones(3)
        x, h = tgcr_solve(op, b, np.zeros(3), m=1, opts=LinearOptions(tol_rel=1e-13))
        assert h.iterations <= 3
        np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-12)

    def test_truncation_flag_set_when_window_active(self):
        op, b = make_linear_problem("nonsymmetric", 20, seed=9)
        _, h = tgcr_solve(op, b, np.zeros(20), m=2)
        assert h.truncated

    def test_m_must_be_positive(self):
        op, b = make_linear_problem("spd", 5, seed=0)
        with pytest.raises(ValueError):
            tgcr_solve(op, b, np.zeros(5), m=0)


class TestCr:
    def test_matches_tgcr_m1_per_iteration(self):
        op, b = make_linear_problem("spd", 50, seed=8)
        _, h_cr = cr_solve(op, b, np.zeros(50))
        _, h_t = tgcr_solve(op, b, np.zeros(50), m=1)
        a = h_cr.resnorms()
        c = h_t.resnorms()
        n = min(len(a), len(c))
        np.testing.assert_allclose(a[:n], c[:n], atol=1e-10 * a[0])

    def test_identity_one_step(self):
        op = LinearOperator.from_matrix(np.eye(5), is_symmetric=True)
        b = np.ones(5)
        x, h = cr_solve(op, b, np.zeros(5))
        assert h.iterations == 1
        np.testing.assert_allclose(x, b, atol=1e-14)

    def test_indefinite_two_by_two_solved_exactly(self):
        A = np.diag([-1.0, 2.0])
        op = LinearOperator.from_matrix(A, is_symmetric=True)
        b = np.array([1.0, 1.0])
        x, h = cr_solve(op, b, np.zeros(2), LinearOptions(tol_rel=1e-14))
        assert h.resnorms()[-1] <= 1e-12
        np.testing.assert_allclose(x, np.array([-1.0, 0.5]), atol=1e-12)

    def test_nonsymmetric_declared_operator_rejected(self):
        op, b = make_linear_problem("nonsymmetric", 6, seed=1)
        with pytest.raises(ValueError, match="symmetric"):
            cr_solve(op, b, np.zeros(6))


class TestLinearOperator:
    def test_linearity_defect_small(self):
        op, _ = make_linear_problem("nonsymmetric", 15, seed=6)
        assert op.linearity_defect() <= 1e-12

    def test_from_matrix_detects_symmetry(self):
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        assert LinearOperator.from_matrix(A).is_symmetric
        B = np.array([[2.0, 1.0], [0.0, 3.0]])
        assert not LinearOperator.from_matrix(B).is_symmetric


class TestHistoryCsv:
    def test_resnorm_history_export(self, tmp_path):
        op, b = make_linear_problem("spd", 10, seed=0)
        _, h = gcr_solve(op, b, np.zeros(10))
        path = tmp_path / "hist.csv"
        text = h.to_csv(path)
        lines = text.strip().splitlines()
        assert lines[0] == "iter,resnorm"
        assert len(lines) == len(h.R) + 1
