"""Projection fitting: hand-checked small cases plus the structural invariants."""

import numpy as np
import pytest

from nero_ood import fit_pca, project, project_rows
from nero_ood.errors import DegenerateInput, DimensionMismatch, UsageError
from nero_ood.subspace import projection_from_dict, projection_to_dict


class TestFitSmallCases:
    def test_variance_on_one_axis(self):
        A = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]])
        p = fit_pca(A, z=1)
        assert p.center.tolist() == [2.0, 0.0]
        np.testing.assert_allclose(p.basis[:, 0], [1.0, 0.0], atol=1e-12)
        projections = [project(p, row)[0] for row in A]
        np.testing.assert_allclose(projections, [-2.0, 0.0, 2.0], atol=1e-12)

    def test_diagonal_line_hand_eigendecomposition(self):
        # Covariance of {(0,0),(1,1),(2,2)} is [[2/3,2/3],[2/3,2/3]] (biased)
        # with leading eigenvector (1,1)/sqrt(2); projections are +-sqrt(2).
        A = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        p = fit_pca(A, z=1)
        np.testing.assert_allclose(p.basis[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)], rtol=1e-12)
        projections = [project(p, row)[0] for row in A]
        np.testing.assert_allclose(projections, [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-12)

    def test_full_basis_is_isometry_on_centered_data(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(20, 5))
        p = fit_pca(A, z=5)
        projected = project_rows(p, A)
        for i in range(0, 20, 3):
            for j in range(1, 20, 4):
                original = np.linalg.norm(A[i] - A[j])
                mapped = np.linalg.norm(projected[i] - projected[j])
                assert abs(original - mapped) <= 1e-9 * max(1.0, original)


class TestProject:
    def test_center_maps_to_zero(self):
        rng = np.random.default_rng(1)
        p = fit_pca(rng.normal(size=(10, 4)), z=2)
        np.testing.assert_allclose(project(p, p.center), np.zeros(2), atol=1e-15)

    def test_hand_evaluated_projection(self):
        A = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]])
        p = fit_pca(A, z=1)
        np.testing.assert_allclose(project(p, np.array([6.0, 0.0])), [4.0], atol=1e-12)

    def test_dimension_mismatch(self):
        p = fit_pca(np.array([[0.0, 0.0], [1.0, 0.5]]), z=1)
        with pytest.raises(DimensionMismatch):
            project(p, np.zeros(3))

    def test_project_rows_matches_single_bit_exact(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(15, 6))
        p = fit_pca(A, z=3)
        rows = project_rows(p, A)
        for i in range(15):
            assert rows[i].tobytes() == project(p, A[i]).tobytes()


class TestInvariants:
    def test_orthonormal_basis(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n, d = int(rng.integers(5, 40)), int(rng.integers(2, 10))
            z = int(rng.integers(1, min(n, d) + 1))
            p = fit_pca(rng.normal(size=(n, d)), z=z)
            gram = p.basis.T @ p.basis
            assert np.max(np.abs(gram - np.eye(z))) <= 1e-9

    def test_explained_variance_non_increasing(self):
        rng = np.random.default_rng(4)
        p = fit_pca(rng.normal(size=(30, 8)), z=8)
        assert np.all(np.diff(p.explained_variance) <= 0)
        assert np.all(p.explained_variance >= 0)

    def test_fit_rows_project_to_zero_mean(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(25, 6))
        p = fit_pca(A, z=4)
        means = project_rows(p, A).mean(axis=0)
        assert np.max(np.abs(means)) <= 1e-9

    def test_reconstruction_error_non_increasing_in_z(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(50, 8)) @ np.diag([5, 4, 3, 2, 1, 0.5, 0.2, 0.1])
        errors = []
        for z in range(1, 9):
            p = fit_pca(A, z=z)
            centered = A - p.center
            recon = project_rows(p, A) @ p.basis.T
            errors.append(float(((centered - recon) ** 2).sum()))
        for prev, nxt in zip(errors, errors[1:]):
            assert nxt <= prev + 1e-9 * max(1.0, prev)

    def test_deterministic_including_sign_convention(self):
        rng = np.random.default_rng(7)
        A = rng.normal(size=(40, 6))
        p1 = fit_pca(A.copy(), z=4)
        p2 = fit_pca(A.copy(), z=4)
        assert p1.basis.tobytes() == p2.basis.tobytes()
        assert p1.center.tobytes() == p2.center.tobytes()
        for col in range(4):
            anchor = int(np.argmax(np.abs(p1.basis[:, col])))
            assert p1.basis[anchor, col] > 0


class TestComponentSelection:
    def test_variance_fraction_selects_smallest_count(self):
        # Columns with variance ratio 100:9:~0, so one component explains
        # ~91.7% and two reach ~100%.
        A = np.array(
            [
                [10.0, 3.0, 0.0],
                [-10.0, -3.0, 0.0],
                [10.0, -3.0, 0.0],
                [-10.0, 3.0, 0.0],
            ]
        )
        assert fit_pca(A, variance_fraction=0.90).output_dim == 1
        assert fit_pca(A, variance_fraction=0.95).output_dim == 2
        assert fit_pca(A, variance_fraction=1.0).output_dim == 2

    def test_default_is_095_fraction(self):
        A = np.array(
            [
                [10.0, 3.0, 0.0],
                [-10.0, -3.0, 0.0],
                [10.0, -3.0, 0.0],
                [-10.0, 3.0, 0.0],
            ]
        )
        assert fit_pca(A).output_dim == 2

    def test_explicit_z_bounds(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(10, 4))
        with pytest.raises(UsageError):
            fit_pca(A, z=0)
        with pytest.raises(UsageError):
            fit_pca(A, z=5)
        with pytest.raises(UsageError):
            fit_pca(A, z=2, variance_fraction=0.9)
        with pytest.raises(UsageError):
            fit_pca(A, variance_fraction=1.5)


class TestDegenerate:
    def test_zero_matrix(self):
        with pytest.raises(DegenerateInput):
            fit_pca(np.zeros((5, 3)), z=1)

    def test_identical_rows(self):
        A = np.tile(np.array([0.1, 0.2, 0.3]), (6, 1))
        with pytest.raises(DegenerateInput):
            fit_pca(A, z=1)

    def test_single_row(self):
        with pytest.raises(DegenerateInput):
            fit_pca(np.ones((1, 3)), z=1)


class TestSerialization:
    def test_dict_round_trip_bit_exact(self):
        rng = np.random.default_rng(9)
        p = fit_pca(rng.normal(size=(12, 5)), z=3)
        q = projection_from_dict(projection_to_dict(p))
        assert q.center.tobytes() == p.center.tobytes()
        assert q.basis.tobytes() == p.basis.tobytes()
        assert q.explained_variance.tobytes() == p.explained_variance.tobytes()
