import json
import math

import meshio
import numpy as np
import pytest

from pdwg.dofs import assemble, build_dof_map
from pdwg.manufactured import get_solution, project
from pdwg.mesh import Mesh, build_unit_cube_mesh
from pdwg.solver import solve
from pdwg.study import (
    CSV_COLUMNS,
    ConvergenceReport,
    MissingReferenceError,
    ReferenceRow,
    RunConfig,
    StudyError,
    StudyRow,
    Tolerance,
    compare_to_reference,
    compute_error,
    load_reference,
    observed_rates,
    run_study,
)
from pdwg.vtk import export_vtk


def test_error_of_identical_fields_is_zero():
    m = build_unit_cube_mesh(2)
    u = project(m, "u1")
    assert compute_error(m, u, u) == 0.0


def test_error_of_unit_difference_on_unit_cell():
    m = build_unit_cube_mesh(1)
    assert compute_error(m, np.array([[1.0, 0, 0]]), np.zeros((1, 3))) == pytest.approx(1.0, abs=1e-15)


def test_error_weighted_by_permittivity():
    m = build_unit_cube_mesh(1)
    eps = lambda x: np.broadcast_to(np.diag([4.0, 1, 1]), x.shape[:-1] + (3, 3))
    assert compute_error(m, np.array([[1.0, 0, 0]]), np.zeros((1, 3)), eps) == pytest.approx(2.0)


def test_error_shape_mismatch():
    m = build_unit_cube_mesh(2)
    with pytest.raises(ValueError, match="do not match"):
        compute_error(m, np.zeros((7, 3)), np.zeros((8, 3)))


def test_observed_rates():
    rates = observed_rates([1.0, 0.25, 0.0625], [1.0, 0.5, 0.25])
    assert rates[0] is None
    np.testing.assert_allclose(rates[1:], [2.0, 2.0])
    assert observed_rates([1e-12, 1e-13], [1.0, 0.5]) == [None, None]


@pytest.mark.parametrize("kwargs,match", [
    ({"refinements": ()}, "at least one"),
    ({"refinements": (4, 2)}, "strictly increasing"),
    ({"refinements": (0,)}, "positive integer"),
    ({"domain": "c", "refinements": (2, 3)}, "grid planes"),
    ({"quadrature": 0}, "quadrature"),
])
def test_run_config_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        RunConfig(**kwargs)


def test_run_config_unknown_solution():
    with pytest.raises(KeyError):
        RunConfig(solution="u9")


def test_study_error_carries_level(monkeypatch):
    import pdwg.study as study

    def broken(config, n):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(study, "solve_level", broken)
    with pytest.raises(StudyError) as info:
        run_study(RunConfig(refinements=(2,)))
    assert info.value.n == 2


def test_constant_solution_study():
    report = run_study(RunConfig(solution="const", refinements=(1, 2, 3)))
    assert np.all(report.errors <= 1e-10)
    assert report.rates == [None, None, None]


def test_csv_deterministic(tmp_path):
    cfg = dict(solution="u1", refinements=(2, 4))
    a = run_study(RunConfig(csv_path=str(tmp_path / "a.csv"), **cfg))
    b = run_study(RunConfig(csv_path=str(tmp_path / "b.csv"), **cfg))
    assert a.errors.tolist() == b.errors.tolist()
    lines_a = (tmp_path / "a.csv").read_text().splitlines()
    lines_b = (tmp_path / "b.csv").read_text().splitlines()
    assert lines_a[0].split(",") == list(CSV_COLUMNS)
    # everything but wall-clock time is bitwise identical
    strip = lambda lines: [l.rsplit(",", 1)[0] for l in lines]
    assert strip(lines_a) == strip(lines_b)
    assert lines_a[1].split(",")[4] == ""


def test_json_output(tmp_path):
    path = tmp_path / "r.json"
    report = run_study(RunConfig(solution="u1", refinements=(2, 4), json_path=str(path)))
    doc = json.loads(path.read_text())
    assert doc["config"]["refinements"] == [2, 4]
    assert [r["error"] for r in doc["rows"]] == report.errors.tolist()
    assert doc["rows"][1]["rate"] == report.rates[1]


def error_with_element_order(perm):
    base = build_unit_cube_mesh(3)
    m = Mesh(base.vertices, base.elements[perm])
    data = get_solution("u2").data()
    system = assemble(m, build_dof_map(m), data=data)
    dofmap = system.dofmap
    uh = solve(system).solution[dofmap.u_dofs()]
    return compute_error(m, project(m, "u2"), uh)


def test_error_invariant_under_element_renumbering():
    identity = error_with_element_order(np.arange(27))
    shuffled = error_with_element_order(np.random.default_rng(4).permutation(27))
    assert shuffled == pytest.approx(identity, rel=1e-10)


def fake_report(errors, rates, domain="cube", solution="u1", ns=(2, 4)):
    rows = [StudyRow(n, 1.0 / n, 0, e, e, r, 0.0, 0.0) for n, e, r in zip(ns, errors, rates)]
    return ConvergenceReport(RunConfig(domain=domain, solution=solution, refinements=ns), rows, 1.0)


def reference_rows(errors, rates, ns=(2, 4)):
    return [ReferenceRow("cube", "u1", n, n, e, r, "l2") for n, e, r in zip(ns, errors, rates)]


def test_compare_equal_passes():
    report = fake_report([1e-2, 2.5e-3], [None, 2.0])
    verdicts = compare_to_reference(report, reference_rows([1e-2, 2.5e-3], [None, 2.0]))
    assert all(v.passed for v in verdicts)
    assert verdicts[0].rate_ok is None and verdicts[1].rate_ok


def test_compare_factor_two_boundary():
    ref = reference_rows([1e-2, 2.5e-3], [None, 2.0])
    assert all(v.passed for v in compare_to_reference(fake_report([1.9e-2, 4.9e-3], [None, 2.1]), ref))
    verdicts = compare_to_reference(fake_report([2.1e-2, 2.5e-3], [None, 2.0]), ref)
    assert not verdicts[0].passed and verdicts[1].passed


def test_compare_rate_band():
    ref = reference_rows([1e-2, 2.5e-3], [None, 2.0])
    verdicts = compare_to_reference(fake_report([1e-2, 2.5e-3], [None, 1.7]), ref)
    assert verdicts[1].error_ok and not verdicts[1].rate_ok and not verdicts[1].passed
    loose = compare_to_reference(fake_report([1e-2, 2.5e-3], [None, 1.7]), ref, Tolerance(2.0, 0.35))
    assert loose[1].passed


def test_compare_missing_row():
    with pytest.raises(MissingReferenceError):
        compare_to_reference(fake_report([1.0], [None], ns=(3,)), reference_rows([1.0], [None]))


def test_compare_uses_reference_norm():
    report = fake_report([4.0], [None], ns=(2,))
    report.rows[0] = StudyRow(2, 0.5, 0, 4.0, 1.0, None, 0.0, 0.0)
    ref = [ReferenceRow("cube", "u1", 2, 2, 1.0, None, "rms")]
    v = compare_to_reference(report, ref)[0]
    assert v.error == 1.0 and v.passed


def test_invalid_tolerance():
    with pytest.raises(ValueError):
        compare_to_reference(fake_report([1.0], [None]), reference_rows([1.0], [None]), Tolerance(0.5))


def test_shipped_reference_tables():
    rows = load_reference()
    keys = {(r.domain, r.solution) for r in rows}
    assert {("cube", "u1"), ("cube", "u4"), ("a", "u5"), ("b", "u5"), ("c", "u6")} <= keys
    for r in rows:
        assert r.error > 0 and r.norm in ("l2", "rms")
    u1 = {r.n: r.error for r in rows if (r.domain, r.solution) == ("cube", "u1")}
    assert sorted(u1) == [2, 4, 8, 16]


def test_u1_study_against_shipped_table():
    report = run_study(RunConfig(solution="u1", refinements=(2, 4, 8)))
    verdicts = compare_to_reference(report, load_reference())
    assert all(v.error_ok for v in verdicts)


def test_vtk_single_cell(tmp_path):
    m = build_unit_cube_mesh(1)
    path = export_vtk(m, np.array([[1.0, 2.0, 3.0]]), tmp_path / "u.vtk")
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "CELL_TYPES 1" in text and "VECTORS u double" in text
    mesh = meshio.read(path)
    assert len(mesh.cells_dict["hexahedron"]) == 1
    np.testing.assert_array_equal(mesh.cell_data["u"][0], [[1.0, 2.0, 3.0]])


def test_vtk_cell_count_and_validation(tmp_path):
    from pdwg.mesh import build_mesh

    m = build_mesh("b", 2)
    field = np.random.default_rng(0).normal(size=(m.n_elements, 3))
    mesh = meshio.read(export_vtk(m, field, tmp_path / "b.vtk"))
    assert len(mesh.cells_dict["hexahedron"]) == m.n_elements
    np.testing.assert_allclose(mesh.cell_data["u"][0], field, rtol=1e-15)
    # reordered connectivity keeps every hexahedron positively oriented
    hexes = mesh.cells_dict["hexahedron"]
    p = mesh.points[hexes]
    vol = np.einsum("ei,ei->e", p[:, 1] - p[:, 0], np.cross(p[:, 3] - p[:, 0], p[:, 4] - p[:, 0]))
    assert np.all(vol > 0)
    with pytest.raises(ValueError):
        export_vtk(m, field[:-1], tmp_path / "bad.vtk")


def test_study_writes_vtk(tmp_path):
    path = tmp_path / "u.vtk"
    run_study(RunConfig(solution="u1", refinements=(1, 2), vtk_path=str(path)))
    assert len(meshio.read(path).cells_dict["hexahedron"]) == 8


def test_rms_error_is_volume_normalised():
    report = run_study(RunConfig(domain="b", solution="u5", refinements=(1,)))
    r = report.rows[0]
    assert report.volume == pytest.approx(56.0)
    assert r.rms_error == pytest.approx(r.error / math.sqrt(56.0), rel=1e-14)
