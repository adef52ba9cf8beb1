import json

import numpy as np
import pytest

from markovfield import (
    ExperimentConfig,
    check_markov,
    classify,
    corpus,
    example_circle_average,
    example_diagonal,
    example_disk_trace,
    example_half_line,
    is_local_wrt,
    realize,
    run_experiment,
    trace_form,
)
from markovfield.experiments import (
    boundary_ring,
    circle_measure,
    disjoint_independence,
    grid_disk_form,
    half_line_form,
    ring_adjacency,
    stable_kernel,
)


def test_half_line_form_structure():
    form = half_line_form(5, 0.5)
    w = 1.0  # 1/(2*0.5)
    Q = form.dense_q()
    assert Q[0, 0] == 2 * w and Q[0, 1] == -w
    assert Q[4, 4] == w
    assert classify(form).transient


def test_half_line_covariance_small_grids():
    for n in (10, 100):
        rep = example_half_line(n=n)
        assert rep.passed, rep.summary()
        assert rep.metrics["max_covariance_error"] <= 1e-10


def test_half_line_diagonal_is_t():
    # At a grid point the variance equals the doubled coordinate.
    form = half_line_form(20, 0.25)
    from markovfield import green_operator

    C = green_operator(form).apply(np.eye(20))
    for i in (0, 7, 19):
        t = 2.0 * (i + 1) * 0.25
        assert C[i, i] == pytest.approx(t, abs=1e-12)
    assert C[0, 0] == pytest.approx(2 * 0.25, abs=1e-13)


def test_half_line_report_json_excludes_runtime():
    rep = example_half_line(n=10)
    data = json.loads(rep.to_json())
    assert "runtime_seconds" not in data
    assert data["schema_version"] == 1
    data2 = json.loads(rep.to_json(include_runtime=True))
    assert "runtime_seconds" in data2


def test_grid_disk_neumann_has_no_killing():
    form, coords = grid_disk_form(16, kind="neumann")
    assert np.all(form.killing == 0)
    assert classify(form).recurrent
    assert is_local_wrt(form)
    assert np.all(np.linalg.norm(coords, axis=1) <= 1.0 + 1e-12)


def test_grid_disk_dirichlet_kills_cut_edges():
    form, coords = grid_disk_form(16, kind="dirichlet")
    assert classify(form).transient
    r = np.linalg.norm(coords, axis=1)
    assert np.all(form.killing[r < 0.5] == 0)
    assert form.killing[np.argmax(r)] > 0


def test_boundary_ring_masses_sum_to_circle():
    _, coords = grid_disk_form(32, kind="neumann")
    ring, ang, masses = boundary_ring(coords, 2.0 / 32)
    assert np.all(np.diff(ang) > 0)
    assert masses.sum() == pytest.approx(2 * np.pi, rel=1e-12)


def test_tiny_cross_trace_is_exact_two_point_schur():
    # Five-point cross: one interior vertex, four boundary spokes.
    form, coords = grid_disk_form(2, kind="neumann")
    assert form.n == 5
    center = int(np.argmin(np.linalg.norm(coords, axis=1)))
    S = frozenset(range(form.n)) - {center}
    t = trace_form(form, S)
    # Exact Schur complement: diag 1/2 - (1/4)/2, off-diagonal -(1/4)/2.
    Qt = t.dense_q()
    np.testing.assert_allclose(np.diag(Qt), 0.375, atol=1e-14)
    off = Qt - np.diag(np.diag(Qt))
    np.testing.assert_allclose(off[off != 0], -0.125, atol=1e-14)


def test_stable_kernel_antipodal_value():
    assert stable_kernel(np.pi) == pytest.approx(1.0 / (8.0 * np.pi), rel=1e-15)


def test_disk_trace_small_meshes():
    rep = example_disk_trace(mesh_n=32, trend_meshes=(16, 32), markov_mesh=16)
    by_name = {c.name: c for c in rep.criteria}
    assert by_name["kernel-profile-trend"].passed
    assert by_name["bulk-markov-across-diameter"].passed
    assert by_name["trace-markov-fails-at-two-points"].passed
    assert by_name["trace-markov-fails-at-two-points"].measured >= 1e-3


def test_disk_trace_boundary_of_half_ring_is_two_points():
    form, coords = grid_disk_form(32, kind="neumann")
    ring, ang, _ = boundary_ring(coords, 2.0 / 32)
    tr = trace_form(form, frozenset(ring.tolist()), ref_edges=ring_adjacency(ring))
    order = np.argsort(ring)
    half = frozenset(np.flatnonzero(ang[order] < np.pi).tolist())
    assert len(tr.space.boundary(half)) == 2


def test_disk_trace_mesh_too_coarse_rejected():
    with pytest.raises(ValueError):
        example_disk_trace(mesh_n=8)


def test_diagonal_experiment():
    rep = example_diagonal(n=10)
    assert rep.passed
    rep2 = example_diagonal(n=12, h=lambda s: 1.0)
    assert rep2.passed


def test_diagonal_rejects_nonpositive_density():
    with pytest.raises(ValueError, match="positive"):
        example_diagonal(n=10, h=lambda s: s - 100.0)


def test_disjoint_independence_rejects_overlap():
    form = corpus.diagonal_form([1.0, 2.0, 3.0])
    fld = realize(form)
    with pytest.raises(ValueError, match="overlap"):
        disjoint_independence(fld, {0, 1}, {1, 2})


def test_circle_measure_unit_mass_and_mesh_guard():
    _, coords = grid_disk_form(32, kind="dirichlet")
    mu = circle_measure(coords, 0.4, 2.0 / 32)
    assert mu.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(mu >= 0)
    with pytest.raises(ValueError, match="leaves the mesh"):
        circle_measure(coords, 1.05, 2.0 / 32)


def test_circle_average_experiment_small():
    rep = example_circle_average(mesh_n=64, radii=(0.4, 0.3, 0.2), trend_meshes=(32, 64))
    assert rep.passed, rep.summary()
    C = np.array(rep.metrics["covariance"])
    assert np.all(np.diff(np.diag(C)) > 0)  # variance grows as radius shrinks


def test_circle_average_needs_three_radii():
    with pytest.raises(ValueError, match="three radii"):
        example_circle_average(mesh_n=32, radii=(0.4, 0.2))


def test_run_experiment_dispatch_and_config_validation():
    rep = run_experiment(ExperimentConfig(experiment="diagonal", n=8))
    assert rep.experiment == "diagonal"
    with pytest.raises(ValueError, match="unknown experiment"):
        run_experiment(ExperimentConfig(experiment="nope"))
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="half-line", n=1)
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="half-line", delta=-1.0)


def test_bulk_markov_on_disk_cut(killed_path3):
    # The reflecting disk field is Markov across a diameter; the check is
    # also exercised directly here at a coarse mesh.
    form, coords = grid_disk_form(16, kind="neumann")
    fld = realize(form)
    upper = frozenset(np.flatnonzero(coords[:, 1] >= 0).tolist())
    assert check_markov(fld, upper).holds
