"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its runtime against the stated budget (run with -s to
see the lines as they appear)."""

import time
from contextlib import contextmanager

import numpy as np
import pytest

import peridyn as pd
from conftest import hetero_micro, homogeneous_micro


@contextmanager
def criterion(num: int, name: str, budget_s: float):
    t0 = time.perf_counter()
    try:
        yield
    except Exception:
        elapsed = time.perf_counter() - t0
        print(f"ACCEPTANCE {num:02d} {name}: FAIL ({elapsed:.2f}s)", flush=True)
        raise
    elapsed = time.perf_counter() - t0
    print(
        f"ACCEPTANCE {num:02d} {name}: PASS ({elapsed:.2f}s, budget {budget_s:.0f}s)",
        flush=True,
    )
    assert elapsed < budget_s, f"runtime {elapsed:.2f}s over the {budget_s:.0f}s budget"


def linf_gap(a, b):
    return max(np.abs(a.states[k] - b.states[k]).max() for k in range(len(a.times)))


def test_01_rigid_translation_nullity():
    with criterion(1, "rigid-translation nullity", 1.0):
        # one-dimensional, 64 nodes
        m1 = hetero_micro(delta=0.25)
        g1 = pd.MacroGrid((0.0,), (1.0,), (64,))
        c1 = pd.CellGrid(1, 64)
        u1 = np.full(g1.shape + (1,), 0.937)
        U1 = np.full(g1.shape + c1.shape + (1,), -2.13)
        assert np.all(pd.long_range_operator(g1, 1.0, 0.25).apply(u1) == 0.0)
        assert np.all(pd.short_range_operator(g1, m1, 0.5).apply(u1) == 0.0)
        assert np.all(pd.acceleration_operator(g1, m1, 0.5).apply(u1) == 0.0)
        assert np.all(pd.cell_short_range_operator(g1, c1, m1).apply(U1) == 0.0)
        # three-dimensional, 8^3 nodes
        m3 = hetero_micro(dim=3, delta=0.25, gamma=0.3)
        g3 = pd.MacroGrid((0.0,) * 3, (1.0,) * 3, (8,) * 3)
        c3 = pd.CellGrid(3, 8)
        u3 = np.full(g3.shape + (3,), 1.618)
        U3 = np.full(g3.shape + c3.shape + (3,), 0.577)
        assert np.all(pd.long_range_operator(g3, 1.0, 0.3).apply(u3) == 0.0)
        assert np.all(pd.short_range_operator(g3, m3, 1.0).apply(u3) == 0.0)
        assert np.all(pd.acceleration_operator(g3, m3, 1.0).apply(u3) == 0.0)
        assert np.all(pd.cell_short_range_operator(g3, c3, m3).apply(U3) == 0.0)


def test_02_operator_symmetry_and_sign():
    with criterion(2, "operator symmetry and sign", 5.0):
        micro = hetero_micro(delta=0.25)
        g = pd.MacroGrid((0.0,), (1.0,), (32,))
        K = (
            pd.long_range_operator(g, 1.0, 0.25).as_matrix()
            + pd.short_range_operator(g, micro, 0.5).as_matrix()
        )
        assert np.max(np.abs(K - K.T)) <= 1e-12
        assert np.linalg.eigvalsh(0.5 * (K + K.T)).max() <= 1e-10


def test_03_epsilon_uniform_boundedness():
    with criterion(3, "epsilon-uniform boundedness", 10.0):
        spec = pd.standard_test_spec()
        micro = spec.micro
        bound = pd.uniform_norm_constant(micro, spec.cell.m)
        ms = pd.short_range_norm_bound(micro, spec.cell.m)
        ml = pd.long_range_norm_bound(micro, spec.cell.m)
        norms = []
        for eps in (0.5, 0.25, 0.125):
            op = pd.acceleration_operator(spec.macro, micro, eps)
            norms.append(pd.op_norm_estimate(op, 2))
        print(
            f"    norms {['%.4f' % n for n in norms]}; "
            f"short-range readings {ms.tensor_average:.4g}/{ms.scalar:.4g}, "
            f"long-range {ml.tensor_average:.4g}/{ml.scalar:.4g}, bound {bound:.4g}",
            flush=True,
        )
        assert all(n <= bound for n in norms)
        assert max(norms) < 2.0 * min(norms)


def test_04_propagator_cross_validation():
    with criterion(4, "propagator cross-validation", 30.0):
        micro = hetero_micro(delta=0.25)
        gaps = []
        for dt in (1e-3, 5e-4):
            kw = dict(
                micro=micro,
                macro=pd.MacroGrid((0.0,), (1.0,), (32,)),
                cell=pd.CellGrid(1, 16),
                u0="sin(pi*x1)*(1 + 0.5*cos(2*pi*y1))",
                v0="0.3*cos(pi*x1)",
                b=None,
                final_time=1.0,
                dt=dt,
                stride=100,
                epsilon=0.5,
            )
            tv = pd.solve_fine(pd.ProblemSpec(integrator="verlet", **kw))
            ts = pd.solve_fine(pd.ProblemSpec(integrator="series", **kw))
            gaps.append(linf_gap(tv, ts))
        assert gaps[0] <= 1e-4
        assert 3.0 <= gaps[0] / gaps[1] <= 5.0


def test_05_homogeneous_medium_collapse():
    with criterion(5, "homogeneous-medium collapse", 60.0):
        hom = homogeneous_micro(c=0.0, rho=1.5)
        kw = dict(
            micro=hom,
            macro=pd.MacroGrid((0.0,), (1.0,), (32,)),
            cell=pd.CellGrid(1, 16),
            u0="sin(pi*x1)",
            v0="0",
            b="0.1*sin(pi*x1)*cos(t)",
            final_time=0.5,
            dt=1 / 512,
            stride=32,
        )
        fine2 = pd.solve_fine(pd.ProblemSpec(epsilon=0.5, **kw))
        fine4 = pd.solve_fine(pd.ProblemSpec(epsilon=0.25, **kw))
        spec = pd.ProblemSpec(**kw)
        resc_two = pd.rescale(pd.solve_twoscale(spec), 0.5)
        coup = pd.solve_coupled(spec)
        resc_coup = pd.rescale(coup.reconstruct(), 0.5)
        mem = pd.solve_memory(spec)
        mem_traj = pd.Trajectory(times=mem.times, states=mem.u_h)
        coup_traj = pd.Trajectory(times=coup.times, states=coup.u_h)
        runs = [fine2, fine4, resc_two, resc_coup, mem_traj, coup_traj]
        for i in range(len(runs)):
            for j in range(i + 1, len(runs)):
                assert linf_gap(runs[i], runs[j]) <= 1e-8


@pytest.fixture(scope="module")
def standard_sweep():
    spec = pd.standard_test_spec()
    t0 = time.perf_counter()
    report = pd.convergence_study(
        spec, [0.5, 0.25, 0.125], p=2.0, window=((0.25,), (0.75,)),
        forcing_times=(0.25, 0.5, 1.0),
    )
    return report, time.perf_counter() - t0


def test_06_strong_approximation_trend(standard_sweep):
    report, sweep_time = standard_sweep
    t0 = time.perf_counter()
    try:
        assert all(row.status == "ok" for row in report.rows)
        errs = report.column("error_norm_final")
        assert errs[1] < errs[0] and errs[2] < errs[1]
        assert errs[1] / errs[0] <= 0.9
        assert errs[2] / errs[1] <= 0.9
    except Exception:
        print(f"ACCEPTANCE 06 strong-approximation trend: FAIL", flush=True)
        raise
    elapsed = sweep_time + time.perf_counter() - t0
    print(
        f"ACCEPTANCE 06 strong-approximation trend: PASS ({elapsed:.2f}s, budget 300s)"
        f" errors {['%.3e' % e for e in report.column('error_norm_final')]}",
        flush=True,
    )
    assert elapsed < 300.0


def test_07_forcing_decay(standard_sweep):
    report, _ = standard_sweep
    with criterion(7, "forcing decay (shared sweep)", 300.0):
        for t in (0.25, 0.5, 1.0):
            vals = [row.forcing_norms[t] for row in report.rows]
            assert vals[1] < vals[0] and vals[2] < vals[1]


def test_08_error_identity_and_bound():
    with criterion(8, "error identity and bound", 60.0):
        micro = hetero_micro(delta=0.25)
        spec = pd.ProblemSpec(
            micro=micro,
            macro=pd.MacroGrid((0.0,), (1.0,), (32,)),
            cell=pd.CellGrid(1, 16),
            u0="sin(pi*x1)*(1 + 0.5*cos(2*pi*y1))",
            v0="0",
            b=None,
            final_time=1.0,
            dt=1e-3,
            stride=1,
            epsilon=0.5,
            integrator="series",
        )
        fine = pd.solve_fine(spec)
        two = pd.solve_twoscale(spec)
        err = pd.error_field(fine, two, 0.5)
        forcing = pd.forcing_decomposition(two, micro, 0.5)
        accel = pd.acceleration_operator(spec.macro, micro, 0.5)
        recon = pd.error_from_forcing(forcing, accel)
        gap = linf_gap(recon, err)
        assert gap <= 1e-6
        m_const = pd.uniform_norm_constant(micro, spec.cell.m)
        bound = pd.error_bound(forcing, m_const, 2.0, spec.macro.weight)
        norms = np.array([pd.lp_norm(e, 2.0, spec.macro.weight) for e in err.states])
        assert np.all(norms <= 1.05 * bound + 1e-30)


def test_09_coupled_memory_equivalence():
    with criterion(9, "coupled/memory equivalence", 120.0):
        micro = hetero_micro(delta=0.25)
        spec = pd.ProblemSpec(
            micro=micro,
            macro=pd.MacroGrid((0.0,), (1.0,), (16,)),
            cell=pd.CellGrid(1, 16),
            u0="sin(pi*x1)*(1 + 0.5*cos(2*pi*y1))",
            v0="0",
            b="0.2*sin(pi*x1)*cos(2*pi*y1)*cos(t)",
            final_time=0.5,
            dt=1 / 1024,
            stride=64,
        )
        coup = pd.solve_coupled(spec)
        mem = pd.solve_memory(spec)
        w = np.sqrt(spec.macro.weight)
        gap = max(
            np.linalg.norm((mem.u_h[k] - coup.u_h[k]).ravel()) * w
            for k in range(len(mem.times))
        )
        assert gap <= 1e-8


def test_10_weak_convergence_window(standard_sweep):
    report, _ = standard_sweep
    with criterion(10, "weak-convergence window check (shared sweep)", 300.0):
        gaps = report.column("window_gap")
        assert gaps[1] < gaps[0] and gaps[2] < gaps[1]
        corr = report.column("corrector_window")
        assert corr[1] < corr[0] and corr[2] < corr[1]


def test_11_twoscale_pairing_diagnostics():
    with criterion(11, "two-scale pairing diagnostics", 10.0):
        g = pd.MacroGrid((0.0,), (1.0,), (64,))
        ones = np.ones(g.shape + (1,))
        for eps in (0.5, 0.25, 0.125):
            assert abs(pd.twoscale_pairing(ones, "cos(2*pi*y1)", eps, g)) <= 1e-12
        from peridyn.analysis import product_sample, rescaled_sample

        gf = pd.MacroGrid((0.0,), (1.0,), (4096,))
        c = pd.CellGrid(1, 64)
        psi = "(1+x1)*cos(2*pi*y1)"
        rhs = pd.lp_norm(product_sample(psi, gf, c), 2.0, gf.weight * c.weight) ** 2
        gaps = []
        for eps in (0.5, 0.25, 0.125):
            lhs = pd.lp_norm(rescaled_sample(psi, gf, eps), 2.0, gf.weight) ** 2
            gaps.append(abs(lhs - rhs))
        assert gaps[0] > gaps[1] > gaps[2]


def test_12_determinism(tmp_path, monkeypatch):
    with criterion(12, "determinism", 30.0):
        from peridyn.cli import main

        monkeypatch.delenv("PERIDYN_OUT", raising=False)
        config = tmp_path / "run.ini"
        config.write_text(
            """
[run]
mode = fine

[grid]
dimension = 1
lo = 0.0
hi = 1.0
macro_n = 32
cell_n = 16

[microstructure]
shape = ball
r_f = 0.25
c_f = 10.0
c_m = 1.0
c_i = 3.0
rho_f = 2.0
rho_m = 1.0
delta = 0.25
lambda = 1.0
gamma = 0.25

[problem]
u0 = sin(pi*x1)*(1 + 0.5*cos(2*pi*y1))
v0 = 0
T = 0.25
dt = 0.0009765625
stride = 32

[fine]
epsilon = 0.5
"""
        )
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", str(config), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(config), "--out", str(out2)]) == 0
        b1 = (out1 / "trajectory.csv").read_bytes()
        b2 = (out2 / "trajectory.csv").read_bytes()
        assert b1 == b2
        # the convergence report must also rewrite identical bytes
        sweep = config.read_text().replace("mode = fine", "mode = convergence")
        sweep += "\n[convergence]\nepsilons = 0.5, 0.25\np = 2.0\n"
        config2 = tmp_path / "sweep.ini"
        config2.write_text(sweep)
        out3, out4 = tmp_path / "o3", tmp_path / "o4"
        assert main(["run", "--config", str(config2), "--out", str(out3)]) == 0
        assert main(["run", "--config", str(config2), "--out", str(out4)]) == 0
        assert (out3 / "report.csv").read_bytes() == (out4 / "report.csv").read_bytes()
