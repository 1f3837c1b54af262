"""Convergence studies: solve on a sequence of meshes, measure errors and observed rates,
and compare them with published reference values."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dofs import assemble, build_dof_map
from .element import Permittivity, StabilizationWeights
from .manufactured import get_solution, hole_fluxes, project
from .mesh import MeshError, build_mesh, check_resolution
from .quadrature import DEFAULT_ORDER
from .solver import SolverConfig, solve
from .vtk import export_vtk

log = logging.getLogger(__name__)

# Below this error the discrete solution is exact up to roundoff and a rate means nothing.
EXACT_TOL = 1e-10
CSV_COLUMNS = ("n", "h", "dofs", "error", "rate", "residual", "seconds")


class StudyError(RuntimeError):
    """A refinement level failed; ``n`` records which one."""

    def __init__(self, message, n):
        super().__init__(message)
        self.n = n


class MissingReferenceError(KeyError):
    pass


@dataclass(frozen=True)
class RunConfig:
    domain: str = "cube"
    solution: str = "u1"
    refinements: tuple = (2, 4, 8, 16)
    rho: StabilizationWeights = field(default_factory=StabilizationWeights)
    quadrature: int = DEFAULT_ORDER
    solver: SolverConfig = field(default_factory=SolverConfig)
    csv_path: str | None = None
    json_path: str | None = None
    vtk_path: str | None = None

    def __post_init__(self):
        refinements = tuple(int(n) for n in self.refinements)
        if not refinements:
            raise ValueError("at least one refinement level is required")
        if any(b <= a for a, b in zip(refinements, refinements[1:])):
            raise ValueError(f"refinements must be strictly increasing, got {refinements}")
        for n in refinements:
            check_resolution(self.domain, n)
        get_solution(self.solution)
        if int(self.quadrature) < 1:
            raise ValueError(f"quadrature order must be positive, got {self.quadrature}")
        object.__setattr__(self, "refinements", refinements)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "solution": self.solution,
            "refinements": list(self.refinements),
            "rho": asdict(self.rho),
            "quadrature": self.quadrature,
            "solver": asdict(self.solver),
        }


@dataclass(frozen=True)
class StudyRow:
    n: int
    h: float
    dofs: int
    error: float
    rms_error: float
    rate: float | None
    residual: float
    seconds: float


@dataclass
class ConvergenceReport:
    config: RunConfig
    rows: list
    volume: float

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    @property
    def rates(self) -> list:
        return [r.rate for r in self.rows]

    def row(self, n) -> StudyRow:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(f"no row for n={n}")

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "volume": self.volume,
            "rows": [asdict(r) for r in self.rows],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow(
                    [r.n, repr(r.h), r.dofs, repr(r.error), "" if r.rate is None else repr(r.rate),
                     repr(r.residual), f"{r.seconds:.3f}"]
                )

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def observed_rates(errors, sizes) -> list:
    """r_i = log(e_{i-1} / e_i) / log(h_{i-1} / h_i); None for the first row and for exact errors."""
    rates = [None]
    for (e0, h0), (e1, h1) in zip(zip(errors, sizes), list(zip(errors, sizes))[1:]):
        if e0 <= EXACT_TOL or e1 <= EXACT_TOL:
            rates.append(None)
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


def compute_error(mesh, projected, solution_u, eps=None) -> float:
    """sqrt(sum_T d_T^T eps_T d_T |T|) with d = projected - solution_u cell by cell."""
    projected = np.asarray(projected, dtype=float)
    solution_u = np.asarray(solution_u, dtype=float)
    expected = (mesh.n_elements, 3)
    if projected.shape != expected or solution_u.shape != expected:
        raise ValueError(
            f"fields of shape {projected.shape} and {solution_u.shape} do not match a mesh "
            f"with {mesh.n_elements} elements"
        )
    d = projected - solution_u
    eps = Permittivity.from_data(mesh, eps).cell_average
    return float(np.sqrt(np.einsum("ei,eij,ej,e->", d, eps, d, mesh.volumes)))


def solve_level(config: RunConfig, n: int):
    """Run one refinement level; returns (mesh, u_h, row without rate)."""
    start = time.perf_counter()
    mesh = build_mesh(config.domain, n)
    sol = get_solution(config.solution)
    q = int(config.quadrature)
    data = sol.data(hole_fluxes(mesh, sol.name, q=q))
    dofmap = build_dof_map(mesh)
    system = assemble(mesh, dofmap, rho=config.rho, data=data, q=q)
    report = solve(system, config.solver)
    uh = report.solution[dofmap.u_dofs()]
    error = compute_error(mesh, project(mesh, sol.name, q), uh)
    volume = float(mesh.volumes.sum())
    row = StudyRow(n, mesh.meshsize, system.n, error, error / math.sqrt(volume), None,
                   report.residual, time.perf_counter() - start)
    log.info("%s %s n=%d dofs=%d error=%.3e", config.domain, config.solution, n, system.n, error)
    return mesh, uh, row, volume


def run_study(config: RunConfig) -> ConvergenceReport:
    rows, last = [], None
    volume = float("nan")
    for n in config.refinements:
        try:
            mesh, uh, row, volume = solve_level(config, n)
        except (MeshError, RuntimeError, ValueError, FloatingPointError) as exc:
            raise StudyError(f"refinement n={n} failed: {exc}", n) from exc
        rows.append(row)
        last = (mesh, uh)
    rates = observed_rates([r.error for r in rows], [r.h for r in rows])
    rows = [StudyRow(**{**asdict(r), "rate": rate}) for r, rate in zip(rows, rates)]
    report = ConvergenceReport(config, rows, volume)
    if config.csv_path:
        report.write_csv(config.csv_path)
    if config.json_path:
        report.write_json(config.json_path)
    if config.vtk_path:
        export_vtk(last[0], last[1], config.vtk_path)
    return report


@dataclass(frozen=True)
class ReferenceRow:
    domain: str
    solution: str
    n: int
    cells_per_unit: int
    error: float
    rate: float | None
    norm: str


def load_reference(path=None) -> list:
    """Reference rows from ``path``, or the tables shipped with the package."""
    if path is None:
        text = resources.files("pdwg").joinpath("data/reference_tables.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    rows = doc["rows"] if isinstance(doc, dict) else doc
    return [ReferenceRow(**r) for r in rows]


@dataclass(frozen=True)
class Tolerance:
    error_factor: float = 2.0
    rate: float = 0.2


@dataclass(frozen=True)
class Verdict:
    n: int
    norm: str
    error: float
    reference_error: float
    error_ok: bool
    rate: float | None
    reference_rate: float | None
    rate_ok: bool | None

    @property
    def passed(self) -> bool:
        return self.error_ok and self.rate_ok is not False


def compare_to_reference(report: ConvergenceReport, reference, tolerance=None) -> list:
    """One verdict per report row: error within a factor, rate within an absolute band.

    Rows are matched on (domain, solution, cells per unit). Each reference row
    names its norm and the report error is taken in that norm.
    """
    if tolerance is None:
        tolerance = Tolerance()
    elif not isinstance(tolerance, Tolerance):
        tolerance = Tolerance(error_factor=float(tolerance))
    if tolerance.error_factor < 1.0 or tolerance.rate < 0.0:
        raise ValueError(f"invalid tolerance {tolerance}")
    cfg = report.config
    table = {(r.domain, r.solution, r.cells_per_unit): r for r in reference}
    verdicts = []
    for row in report.rows:
        ref = table.get((cfg.domain, cfg.solution, row.n))
        if ref is None:
            raise MissingReferenceError(
                f"no reference row for domain={cfg.domain} solution={cfg.solution} n={row.n}"
            )
        if ref.norm == "l2":
            error = row.error
        elif ref.norm == "rms":
            error = row.rms_error
        else:
            raise ValueError(f"unknown norm {ref.norm!r} in reference")
        f = tolerance.error_factor
        error_ok = ref.error / f <= error <= ref.error * f
        if row.rate is None or ref.rate is None:
            rate_ok = None
        else:
            rate_ok = abs(row.rate - ref.rate) <= tolerance.rate
        verdicts.append(Verdict(row.n, ref.norm, error, ref.error, error_ok,
                                row.rate, ref.rate, rate_ok))
    return verdicts
