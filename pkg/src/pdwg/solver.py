"""Sparse solvers for the symmetric indefinite PDWG system."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from importlib import metadata

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10


def _locate_mkl_rt():
    """pypardiso only searches sys.prefix; the mkl wheel may install under /usr/local."""
    if os.environ.get("PYPARDISO_MKL_RT"):
        return
    try:
        files = metadata.files("mkl") or []
    except metadata.PackageNotFoundError:
        return
    for f in files:
        if f.name.startswith("libmkl_rt.so"):
            path = f.locate().resolve()
            if path.exists():
                os.environ["PYPARDISO_MKL_RT"] = str(path)
                return


# Symmetric indefinite mode: nested dissection, 1e-8 pivot perturbation,
# scaling and weighted matching. The unsymmetric mode stalls on the larger
# multiply connected meshes.
_PARDISO_IPARM = {1: 1, 2: 2, 8: 0, 10: 8, 11: 1, 13: 1}


def _pardiso_solver():
    _locate_mkl_rt()
    try:
        import pypardiso
    except ImportError:
        return None
    solver = pypardiso.PyPardisoSolver(mtype=-2)
    for key, value in _PARDISO_IPARM.items():
        solver.iparm[key - 1] = value
    return solver


def _upper_with_diagonal(A):
    """Upper triangle in CSR with every diagonal entry stored, as Pardiso expects."""
    n = A.shape[0]
    T = sp.triu(A).tocoo()
    idx = np.arange(n)
    U = sp.coo_matrix(
        (np.r_[T.data, np.zeros(n)], (np.r_[T.row, idx], np.r_[T.col, idx])), shape=A.shape
    ).tocsr()
    U.sort_indices()
    return U


class SingularSystemError(RuntimeError):
    """The factorization met a (numerically) zero pivot."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct"  # "direct" or "iterative"
    backend: str = "auto"  # direct backend: "auto", "pardiso" or "superlu"
    tol: float = 1e-12
    maxiter: int | None = None
    ordering: str = "COLAMD"


@dataclass
class SolveReport:
    solution: np.ndarray
    residual: float
    method: str
    iterations: int | None
    seconds: float

    @property
    def converged(self) -> bool:
        return self.residual <= RESIDUAL_TOL


def relative_residual(A, x, b) -> float:
    r = np.linalg.norm(A @ x - b)
    nb = np.linalg.norm(b)
    return float(r / nb) if nb > 0 else float(r)


def _system_parts(system):
    if hasattr(system, "matrix"):
        return sp.csr_matrix(system.matrix), np.asarray(system.rhs, dtype=float)
    A, b = system
    return sp.csr_matrix(A), np.asarray(b, dtype=float)


def solve(system, config: SolverConfig | None = None, x0=None) -> SolveReport:
    """Solve ``system`` (a GlobalSystem or an ``(A, b)`` pair).

    The direct path uses MKL Pardiso through pypardiso when importable and
    SuperLU with partial pivoting otherwise. The iterative path is
    MINRES with symmetric diagonal scaling. Raises SingularSystemError on a
    zero pivot and ConvergenceError (carrying the best report) when the
    residual contract is not met.
    """
    config = config or SolverConfig()
    A, b = _system_parts(system)
    start = time.perf_counter()
    if config.method == "direct":
        x, its = _direct(A, b, config), None
    elif config.method == "iterative":
        x, its = _minres(A, b, config, x0)
    else:
        raise ValueError(f"unknown solver method {config.method!r}")
    report = SolveReport(x, relative_residual(A, x, b), config.method, its,
                         time.perf_counter() - start)
    if not np.isfinite(report.residual) or report.residual > RESIDUAL_TOL:
        raise ConvergenceError(
            f"{config.method} solve reached relative residual {report.residual:.3e}", report
        )
    return report


def _direct(A, b, config):
    if not np.any(b):
        return np.zeros_like(b)
    backend = config.backend
    if backend in ("auto", "pardiso"):
        solver = _pardiso_solver()
        if solver is not None:
            return _pardiso(solver, A, b)
        if backend == "pardiso":
            raise RuntimeError("pypardiso is not importable")
    if backend not in ("auto", "superlu"):
        raise ValueError(f"unknown direct backend {backend!r}")
    return _superlu(A, b, config)


def _pardiso(solver, A, b):
    A = sp.csr_matrix(A)
    U = _upper_with_diagonal(A)
    x = solver.solve(U, b)
    for _ in range(2):
        if relative_residual(A, x, b) <= 0.1 * RESIDUAL_TOL:
            break
        x += solver.solve(U, b - A @ x)
    perturbed = int(solver.get_iparm(14))
    solver.free_memory(everything=True)
    if perturbed and relative_residual(A, x, b) > RESIDUAL_TOL:
        raise SingularSystemError(f"pardiso perturbed {perturbed} pivots; system looks singular")
    return x


def _superlu(A, b, config):
    try:
        lu = spla.splu(A.tocsc(), permc_spec=config.ordering)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    scale = diag.max(initial=0.0)
    tiny = np.nonzero(diag <= 1e-14 * scale)[0]
    if tiny.size:
        col = int(lu.perm_c[tiny[0]])
        raise SingularSystemError(f"zero pivot at unknown {col} ({tiny.size} tiny pivots)")
    x = lu.solve(b)
    r = b - A @ x
    if np.any(r):
        x += lu.solve(r)
    return x


def _minres(A, b, config, x0):
    n = A.shape[0]
    d = np.abs(A.diagonal())
    rownorm = np.sqrt(np.asarray(abs(A).power(2).sum(axis=1)).ravel())
    d = np.where(d > 0, d, rownorm)
    d = np.where(d > 0, d, 1.0)
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s)
    As = (S @ A @ S).tocsr()
    bs = s * b
    maxiter = config.maxiter or int(50 * np.sqrt(n)) + 1
    y0 = None if x0 is None else np.asarray(x0, dtype=float) / s
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros(n), 0
    # An initial guess that already meets the success contract is returned as is.
    if y0 is not None and relative_residual(A, s * y0, b) <= RESIDUAL_TOL:
        return s * y0, 0
    y, _ = spla.minres(As, bs, x0=y0, rtol=config.tol, maxiter=maxiter, callback=count)
    return s * y, iterations


def load_matrix_market(path, rhs_path=None):
    """Read an ``(A, b)`` pair written by :func:`pdwg.dofs.export_matrix_market`."""
    A = sp.csr_matrix(scipy.io.mmread(str(path)))
    if rhs_path is None:
        b = np.zeros(A.shape[0])
    else:
        b = np.asarray(scipy.io.mmread(str(rhs_path))).ravel()
    return A, b
