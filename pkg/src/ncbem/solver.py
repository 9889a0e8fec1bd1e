"""Dense direct solve of the block system."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import SingularMatrix, SolverError
from .operators import BlockSystem

__all__ = ["Solution", "solve_dense"]


@dataclass
class Solution:
    sigma: np.ndarray            # one coefficient per DOF
    alpha: np.ndarray            # one voltage per floating group
    residual_norm: float         # ||A x - b||_2 / ||b||_2 (absolute if b == 0)
    condition_estimate: float    # 1-norm condition number estimate

    def to_dict(self):
        return {"n_dofs": int(self.sigma.size), "alpha": [float(a) for a in self.alpha],
                "residual_norm": float(self.residual_norm),
                "condition_estimate": float(self.condition_estimate)}


def solve_dense(system: BlockSystem, tol: float = 1e-10) -> Solution:
    """LU with partial pivoting; residual checked explicitly."""
    A = np.asarray(system.matrix, dtype=float)
    b = np.asarray(system.rhs, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.size or A.shape[0] < 1:
        raise SolverError(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
        raise SolverError("system contains non-finite entries")
    anorm = np.linalg.norm(A, 1)
    try:
        with warnings.catch_warnings():
            # zero pivots are reported as SingularMatrix below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(A, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularMatrix(str(exc)) from None
    if np.any(np.diag(lu) == 0.0):
        raise SingularMatrix("exactly singular matrix (zero pivot); duplicated surfaces?")
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    cond = float("inf") if rcond == 0 else 1.0 / rcond
    if rcond < np.finfo(float).eps:
        raise SingularMatrix(f"matrix is numerically singular (condition estimate {cond:.3g})")
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    bn = np.linalg.norm(b)
    res = float(np.linalg.norm(A @ x - b) / (bn if bn > 0 else 1.0))
    if res > max(tol, 1e3 * np.finfo(float).eps * cond):
        raise SolverError(f"residual {res:.3g} above tolerance {tol:.3g}")
    n = system.n_dofs
    return Solution(x[:n].copy(), x[n:].copy(), res, cond)
