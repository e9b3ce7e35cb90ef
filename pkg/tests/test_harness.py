"""Integration driver: run planning, determinism, CSV output, sweeps."""

import csv

import numpy as np
import pytest

from hbvm import harness as hz


def test_plan_steps_exact_and_clipped():
    assert hz._plan_steps(0.1, 1.0) == (10, 0.0)
    n, h_last = hz._plan_steps(0.1, 1.05)
    assert n == 11 and h_last == pytest.approx(0.05, abs=1e-12)
    assert hz._plan_steps(0.1, 0.0) == (0, 0.0)


def test_integrate_t_end_zero_returns_initial_state_only():
    traj, report = hz.integrate(hz.RunSpec(problem="pendulum", t_end=0.0))
    assert traj.states.shape == (1, 2)
    assert traj.times[0] == 0.0
    assert report.total_iterations == 0
    assert report.converged


def test_integrate_clipped_final_step_hits_t_end():
    spec = hz.RunSpec(problem="harmonic", k=2, s=2, h=0.1, t_end=2 * np.pi)
    traj, report = hz.integrate(spec)
    assert report.converged
    assert traj.times[-1] == 2 * np.pi
    assert np.all(np.diff(traj.times) > 0)
    # order-4 method: after one period the state is back near (1, 0)
    assert np.max(np.abs(traj.states[-1] - [1.0, 0.0])) <= 50 * 0.1 ** 4


def test_integrate_order4_error_bound_on_harmonic():
    errs = []
    for h in (0.1, 0.05):
        spec = hz.RunSpec(problem="harmonic", k=2, s=2, h=h, t_end=2 * np.pi)
        traj, _ = hz.integrate(spec)
        errs.append(np.max(np.abs(traj.states[-1] - [1.0, 0.0])))
    assert errs[1] < errs[0] / 8  # at least cubic gain per halving, order ~4


def test_integrate_reports_nonconvergence_with_partial_trajectory():
    spec = hz.RunSpec(problem="quintic", formulation="second", h=1e-2,
                      t_end=1.0, solver="fixed-point")
    traj, report = hz.integrate(spec)
    assert not report.converged
    assert report.status in ("max-iter", "diverged", "non-finite")
    assert report.failed_step is not None
    assert len(traj.step_iters) == report.failed_step + 1
    assert traj.states.shape[0] == report.failed_step + 1  # initial + completed
    assert report.total_iterations == int(np.sum(traj.step_iters))


def test_integrate_validates_spec():
    with pytest.raises(ValueError):
        hz.integrate(hz.RunSpec(problem="pendulum", h=-0.1))
    with pytest.raises(ValueError):
        hz.integrate(hz.RunSpec(problem="pendulum", k=2, s=3))
    with pytest.raises(ValueError):
        hz.integrate(hz.RunSpec(problem="pendulum", formulation="third"))
    with pytest.raises(ValueError):
        hz.integrate(hz.RunSpec(problem="nosuch"))


def test_determinism_bit_identical():
    spec = hz.RunSpec(problem="quintic", h=1e-3, t_end=0.2)
    t1, r1 = hz.integrate(spec)
    t2, r2 = hz.integrate(spec)
    assert np.array_equal(t1.states, t2.states)
    assert np.array_equal(t1.times, t2.times)
    assert np.array_equal(t1.h_err, t2.h_err)
    assert np.array_equal(t1.step_iters, t2.step_iters)
    assert r1 == r2  # wall_time excluded from comparison


def test_determinism_pure_backend():
    spec = hz.RunSpec(problem="pendulum", h=0.05, t_end=1.0, backend="pure")
    t1, r1 = hz.integrate(spec)
    t2, r2 = hz.integrate(spec)
    assert np.array_equal(t1.states, t2.states)
    assert r1 == r2


def test_thin_recording():
    spec = hz.RunSpec(problem="pendulum", h=0.05, t_end=1.0, thin=7)
    traj, report = hz.integrate(spec)
    assert report.converged
    # initial + steps 7 and 14 + final step 20
    assert np.allclose(traj.times, [0.0, 0.35, 0.7, 1.0])
    assert len(traj.step_iters) == 20


def test_report_totals_match_step_stats():
    spec = hz.RunSpec(problem="pendulum", h=0.05, t_end=1.0)
    traj, report = hz.integrate(spec)
    assert report.total_iterations == int(np.sum(traj.step_iters))
    assert sum(report.iter_histogram) == len(traj.step_iters)
    assert report.max_abs_h_err == np.max(np.abs(traj.h_err))


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def test_csv_roundtrip(tmp_path):
    spec = hz.RunSpec(problem="quintic", h=1e-3, t_end=0.05)
    traj, _ = hz.integrate(spec)
    phase = tmp_path / "phase.csv"
    energy = tmp_path / "energy.csv"
    hz.emit_csv(traj, str(phase))
    hz.emit_energy_csv(traj, str(energy))
    header, data = _read_csv(str(phase))
    assert header == ["t", "q1", "p1"]
    assert data.shape == (len(traj.times), 3)
    assert np.array_equal(data[:, 0], traj.times)
    assert np.array_equal(data[:, 1:], traj.states)  # 17 digits: exact round-trip
    header_e, data_e = _read_csv(str(energy))
    assert header_e == ["t", "H_error"]
    assert np.array_equal(data_e[:, 1], traj.h_err)


def test_csv_empty_trajectory_header_only(tmp_path):
    empty = hz.Trajectory(times=np.zeros(0), states=np.zeros((0, 2)),
                          h_err=np.zeros(0), step_iters=np.zeros(0, dtype=int), m=1)
    path = tmp_path / "empty.csv"
    hz.emit_csv(empty, str(path))
    assert (tmp_path / "empty.csv").read_text().splitlines() == ["t,q1,p1"]
    hz.emit_energy_csv(empty, str(path))
    assert path.read_text().splitlines() == ["t,H_error"]


def test_csv_three_samples_four_lines(tmp_path):
    traj = hz.Trajectory(times=np.array([0.0, 0.1, 0.2]),
                         states=np.arange(6.0).reshape(3, 2),
                         h_err=np.zeros(3), step_iters=np.ones(2, dtype=int), m=1)
    path = tmp_path / "three.csv"
    hz.emit_csv(traj, str(path))
    assert len(path.read_text().splitlines()) == 4


def test_csv_t_end_zero_run(tmp_path):
    traj, _ = hz.integrate(hz.RunSpec(problem="pendulum", t_end=0.0))
    path = tmp_path / "one.csv"
    hz.emit_csv(traj, str(path))
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert len(lines) == 2  # header + the initial state sample


def test_csv_io_error_carries_path():
    traj, _ = hz.integrate(hz.RunSpec(problem="pendulum", t_end=0.0))
    with pytest.raises(OSError, match="no/such/dir"):
        hz.emit_csv(traj, "no/such/dir/out.csv")


def test_rho_table_values():
    table = dict(hz.rho_table())
    assert round(table[2], 4) == 0.2887
    assert round(table[5], 4) == 0.1173


def test_order_check_pendulum_small():
    res = hz.order_check(k=6, s=2, h0=0.2, halvings=3, t_end=1.0)
    assert res.slope == pytest.approx(4.0, abs=0.4)


def test_table1_structure_small_grid():
    res = hz.table1_experiment(h_list=(1e-3,), t_end=0.02,
                               solvers=("blended",), formulations=("second",))
    assert set(res.cells) == {("GAUSS2", "second", "blended", 1e-3),
                              ("HBVM(8,2)", "second", "blended", 1e-3)}
    for conv, tot in res.cells.values():
        assert conv and tot > 0
    text = res.format()
    assert "GAUSS2" in text and "HBVM(8,2)" in text


def test_table1_marks_failures():
    res = hz.table1_experiment(h_list=(1e-2,), t_end=0.5,
                               solvers=("fixed-point",), formulations=("second",),
                               methods=(("GAUSS2", 2, 2),))
    conv, _ = res.cell("GAUSS2", "second", "fixed-point", 1e-2)
    assert not conv
    assert "--" in res.format()
