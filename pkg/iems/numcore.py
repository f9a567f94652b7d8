import logging
from typing import Any

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from iems.config import get_settings

LOGGER = logging.getLogger(__name__)

DenseMatrix = np.ndarray

_SYMMETRY_TOL = 1e-12
_EIGVEC_RESIDUAL_TOL = 1e-9
_PIVOT_TOL = 1e-14


class NumcoreError(RuntimeError):
    pass


class SingularMatrixError(NumcoreError):
    pass


class LUFactorization(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lu: Any
    piv: Any
    n: int


class PowerIterationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    iterations: int
    converged: bool


def as_dense(values: Any, rows: int | None = None, cols: int | None = None) -> DenseMatrix:
    matrix = np.asarray(values)
    if matrix.ndim == 1 and rows is not None and cols is not None:
        if matrix.size != rows * cols:
            raise NumcoreError(
                f"value count {matrix.size} does not match shape {rows}x{cols}."
            )
        matrix = matrix.reshape(rows, cols)
    if matrix.ndim != 2:
        raise NumcoreError(f"expected a 2-D matrix, got ndim={matrix.ndim}.")
    if rows is not None and matrix.shape[0] != rows:
        raise NumcoreError(f"expected {rows} rows, got {matrix.shape[0]}.")
    if cols is not None and matrix.shape[1] != cols:
        raise NumcoreError(f"expected {cols} cols, got {matrix.shape[1]}.")
    if not np.iscomplexobj(matrix):
        matrix = matrix.astype(float)
    return matrix


def _require_square(matrix: DenseMatrix, label: str) -> None:
    if matrix.shape[0] != matrix.shape[1]:
        raise NumcoreError(f"{label} must be square, got shape {matrix.shape}.")


def sym_eig(
    matrix: Any,
    *,
    vectors: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    dense = as_dense(matrix)
    _require_square(dense, "sym_eig input")
    scale = max(float(np.max(np.abs(dense))) if dense.size else 0.0, 1.0)
    asymmetry = float(np.max(np.abs(dense - dense.T))) if dense.size else 0.0
    if asymmetry > _SYMMETRY_TOL * scale:
        raise NumcoreError(f"matrix is not symmetric: max |M - M^T| = {asymmetry:.3e}.")

    try:
        if not vectors:
            return scipy.linalg.eigh(dense, eigvals_only=True)
        values, vecs = scipy.linalg.eigh(dense)
    except scipy.linalg.LinAlgError as exc:
        raise NumcoreError(f"symmetric eigensolver did not converge (n={dense.shape[0]}).") from exc

    norm = max(float(np.linalg.norm(dense, 2)), 1.0)
    residual = float(np.max(np.linalg.norm(dense @ vecs - vecs * values, axis=0)))
    if residual > _EIGVEC_RESIDUAL_TOL * norm:
        raise NumcoreError(f"eigenvector residual {residual:.3e} exceeds tolerance.")
    return values, vecs


def complex_eig(matrix: Any) -> np.ndarray:
    dense = as_dense(matrix)
    _require_square(dense, "complex_eig input")
    if dense.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    balanced, _ = scipy.linalg.matrix_balance(dense, permute=True, separate=False)
    try:
        values = scipy.linalg.eigvals(balanced)
    except scipy.linalg.LinAlgError as exc:
        raise NumcoreError(f"eigenvalue iteration did not converge (n={dense.shape[0]}).") from exc
    return np.asarray(values, dtype=complex)


def factorize(matrix: Any) -> LUFactorization:
    dense = as_dense(matrix)
    _require_square(dense, "linear system")
    scale = float(np.max(np.abs(dense))) if dense.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("matrix is identically zero.")
    lu, piv = scipy.linalg.lu_factor(dense, check_finite=True)
    min_pivot = float(np.min(np.abs(np.diag(lu))))
    if min_pivot < _PIVOT_TOL * scale:
        raise SingularMatrixError(
            f"pivot {min_pivot:.3e} below {_PIVOT_TOL:.0e} * scale {scale:.3e}."
        )
    return LUFactorization(lu=lu, piv=piv, n=dense.shape[0])


def lu_apply(factorization: LUFactorization, rhs: Any) -> np.ndarray:
    vector = np.asarray(rhs)
    if vector.shape[0] != factorization.n:
        raise NumcoreError(f"rhs length {vector.shape[0]} does not match n={factorization.n}.")
    return scipy.linalg.lu_solve((factorization.lu, factorization.piv), vector)


def linear_solve(matrix: Any, rhs: Any) -> np.ndarray:
    return lu_apply(factorize(matrix), rhs)


def power_iteration(
    operator: Any,
    n: int,
    *,
    tol: float | None = None,
    max_iter: int | None = None,
    seed: int | None = None,
) -> PowerIterationResult:
    """Dominant eigenvalue of a symmetric positive semidefinite operator.

    ``operator`` is a matrix or a callable applying it to a vector.
    """
    settings = get_settings()
    tol = settings.power_tol if tol is None else tol
    max_iter = settings.power_max_iter if max_iter is None else max_iter
    seed = settings.power_seed if seed is None else seed
    apply = operator if callable(operator) else (lambda v, m=as_dense(operator): m @ v)

    rng = np.random.default_rng(seed)
    vector = rng.standard_normal(n)
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for iteration in range(1, max_iter + 1):
        image = apply(vector)
        rayleigh = float(vector @ image)
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            return PowerIterationResult(value=0.0, iterations=iteration, converged=True)
        vector = image / norm
        if abs(rayleigh - estimate) <= tol * max(abs(rayleigh), 1.0):
            return PowerIterationResult(value=rayleigh, iterations=iteration, converged=True)
        estimate = rayleigh

    LOGGER.warning("Power iteration hit cap max_iter=%s n=%s estimate=%s", max_iter, n, estimate)
    return PowerIterationResult(value=estimate, iterations=max_iter, converged=False)


def spectral_norm(matrix: Any, **kwargs: Any) -> PowerIterationResult:
    dense = as_dense(matrix)
    result = power_iteration(lambda v: dense.T @ (dense @ v), dense.shape[1], **kwargs)
    return result.model_copy(update={"value": float(np.sqrt(max(result.value, 0.0)))})
