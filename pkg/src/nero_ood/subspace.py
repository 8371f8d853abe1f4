"""PCA projection over relevance matrices.

The projection is fit once on the training relevance matrix and applied to
single relevance vectors at score time. Centering is recorded explicitly;
the basis holds the top right singular vectors of the centered matrix as
orthonormal columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DimensionMismatch, UsageError


@dataclass(frozen=True)
class Projection:
    """Fitted PCA state: column mean, orthonormal basis, spectrum slice."""

    center: np.ndarray  # (d,)
    basis: np.ndarray  # (d, z), orthonormal columns
    explained_variance: np.ndarray  # (z,), non-increasing

    @property
    def input_dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def output_dim(self) -> int:
        return int(self.basis.shape[1])


def fit_pca(
    A: np.ndarray,
    z: int | None = None,
    variance_fraction: float | None = None,
) -> Projection:
    """Fit a PCA projection on the rows of A.

    Exactly one of ``z`` (explicit component count) or ``variance_fraction``
    (smallest count whose cumulative variance fraction reaches the target)
    may be given; with neither, variance_fraction defaults to 0.95.

    The sign of each basis column is fixed so its largest-magnitude entry is
    positive (ties broken by lowest index), making the fit deterministic for
    bit-identical inputs.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {A.shape}")
    n, d = A.shape
    if n < 2:
        raise DegenerateInput(f"need at least 2 rows to fit, got {n}")
    if z is not None and variance_fraction is not None:
        raise UsageError("give either an explicit z or a variance fraction, not both")
    if z is None and variance_fraction is None:
        variance_fraction = 0.95
    max_z = min(n, d)
    if z is not None and not 1 <= z <= max_z:
        raise UsageError(f"z must be in [1, {max_z}], got {z}")
    if variance_fraction is not None and not 0.0 < variance_fraction <= 1.0:
        raise UsageError(
            f"variance fraction must be in (0, 1], got {variance_fraction}"
        )

    center = A.mean(axis=0)
    centered = A - center
    _, s, vt = np.linalg.svd(centered, full_matrices=False)

    # Zero total variance (up to float64 noise from the centering itself)
    # leaves no principled basis to return.
    floor = np.finfo(np.float64).eps * max(n, d) * max(1.0, float(np.abs(A).max()))
    if s.size == 0 or s[0] <= floor:
        raise DegenerateInput("matrix has zero total variance")

    if z is None:
        var = s**2
        cum = np.cumsum(var) / var.sum()
        target = min(variance_fraction, float(cum[-1]))  # guards float64 shortfall
        z = int(np.argmax(cum >= target)) + 1

    basis = vt[:z].T.copy()
    for col in range(z):
        anchor = int(np.argmax(np.abs(basis[:, col])))
        if basis[anchor, col] < 0:
            basis[:, col] = -basis[:, col]

    return Projection(
        center=center,
        basis=basis,
        explained_variance=s[:z] ** 2 / (n - 1),
    )


def project(p: Projection, r: np.ndarray) -> np.ndarray:
    """Coordinates of a single vector in the fitted subspace."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (p.input_dim,):
        raise DimensionMismatch(
            f"expected a vector of length {p.input_dim}, got shape {r.shape}"
        )
    return p.basis.T @ (r - p.center)


def project_rows(p: Projection, A: np.ndarray) -> np.ndarray:
    """Project each row of A; row i is bit-identical to project(p, A[i])."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros((0, p.output_dim))
    return np.stack([project(p, row) for row in A])


def projection_to_dict(p: Projection) -> dict:
    """JSON-ready dict (basis stored row-major)."""
    return {
        "center": [float(v) for v in p.center],
        "basis": [[float(v) for v in row] for row in p.basis],
        "explained_variance": [float(v) for v in p.explained_variance],
    }


def projection_from_dict(data: dict) -> Projection:
    return Projection(
        center=np.array(data["center"], dtype=np.float64),
        basis=np.array(data["basis"], dtype=np.float64),
        explained_variance=np.array(data["explained_variance"], dtype=np.float64),
    )
