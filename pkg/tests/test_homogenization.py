import numpy as np
import pytest

from peridyn import (
    CellGrid,
    InvalidArgumentError,
    MacroGrid,
    ProblemSpec,
    cell_average,
    constitutive_force,
    long_range_operator,
    solve_coupled,
    solve_memory,
    solve_twoscale,
    split,
)
from conftest import homogeneous_micro


def make_spec(micro, n_macro=16, n_cell=16, T=0.25, dt=1 / 512, stride=32,
              u0="sin(pi*x1)*(1 + 0.5*cos(2*pi*y1))", v0="0",
              b="0.2*sin(pi*x1)*cos(2*pi*y1)*cos(t)"):
    return ProblemSpec(
        micro=micro,
        macro=MacroGrid((0.0,), (1.0,), (n_macro,)),
        cell=CellGrid(1, n_cell),
        u0=u0,
        v0=v0,
        b=b,
        final_time=T,
        dt=dt,
        stride=stride,
    )


class TestSplit:
    def test_y_independent_has_zero_corrector(self, rng):
        g = MacroGrid((0.0,), (1.0,), (8,))
        c = CellGrid(1, 16)
        base = rng.standard_normal(g.shape + (1,))
        U = np.repeat(base[:, None, :], 16, axis=1)
        u_h, r = split(U, g, c)
        assert np.array_equal(u_h, base)
        assert np.all(r == 0.0)

    def test_cosine_mode_splits_exactly(self, rng):
        g = MacroGrid((0.0,), (1.0,), (8,))
        c = CellGrid(1, 16)
        a = rng.standard_normal(g.shape + (1,))
        mode = np.cos(2 * np.pi * c.nodes()[:, 0])
        U = a[:, None, :] + mode[None, :, None]
        u_h, r = split(U, g, c)
        # the cosine has exact zero lattice mean on a uniform periodic grid
        assert np.max(np.abs(u_h - a)) < 1e-14
        assert np.max(np.abs(r - mode[None, :, None])) < 1e-14

    def test_reassembly_and_zero_mean(self, rng):
        g = MacroGrid((0.0,), (1.0,), (8,))
        c = CellGrid(1, 16)
        U = rng.standard_normal(g.shape + c.shape + (1,))
        u_h, r = split(U, g, c)
        # reassembly is the identity up to one rounding of the subtraction
        assert np.max(np.abs(u_h[:, None, :] + r - U)) <= 1e-15
        assert np.max(np.abs(cell_average(r, g, c))) <= 1e-15


class TestCoupled:
    def test_reconstruction_matches_twoscale(self, micro1d):
        spec = make_spec(micro1d)
        two = solve_twoscale(spec)
        coup = solve_coupled(spec)
        rec = coup.reconstruct()
        gap = max(np.abs(rec.states[k] - two.states[k]).max() for k in range(len(two)))
        assert gap <= 1e-10

    def test_corrector_mean_stays_zero(self, micro1d):
        spec = make_spec(micro1d)
        coup = solve_coupled(spec)
        worst = max(
            np.abs(cell_average(coup.r[k], spec.macro, spec.cell)).max()
            for k in range(len(coup))
        )
        assert worst <= 1e-10

    def test_homogeneous_medium_keeps_corrector_zero(self):
        hom = homogeneous_micro(c=0.0, rho=1.5)
        spec = make_spec(hom, u0="sin(pi*x1)", b="0.1*sin(pi*x1)*cos(t)")
        coup = solve_coupled(spec)
        assert np.all(coup.r == 0.0)
        from peridyn import solve_fine

        fine = solve_fine(spec.with_epsilon(0.5))
        gap = max(np.abs(coup.u_h[k] - fine.states[k]).max() for k in range(len(coup)))
        assert gap <= 1e-10


class TestMemory:
    def test_matches_coupled(self, micro1d):
        spec = make_spec(micro1d)
        coup = solve_coupled(spec)
        mem = solve_memory(spec)
        w = np.sqrt(spec.macro.weight)
        gap = max(
            np.linalg.norm((mem.u_h[k] - coup.u_h[k]).ravel()) * w
            for k in range(len(mem))
        )
        assert gap <= 1e-8

    def test_initial_acceleration_has_no_memory(self, micro1d):
        spec = make_spec(micro1d)
        mem = solve_memory(spec)
        assert np.all(mem.corrector_memory[0] == 0.0)
        # at t = 0 the acceleration carries only the instantaneous force,
        # the forced-corrector feedback, and the averaged body force
        from peridyn.homogenization import _build_pieces
        from peridyn.solvers import product_coordinates

        pieces = _build_pieces(spec.micro, spec.macro, spec.cell)
        kl_u = pieces.kl.apply(mem.u_h[0])
        xb, yb = product_coordinates(spec.macro, spec.cell)
        bfield = spec.b(xb, yb, 0.0) * pieces.rho_inv_b
        b_avg = cell_average(
            np.broadcast_to(bfield, pieces.cgen.field_shape), spec.macro, spec.cell
        )
        expected = (
            pieces.rho_inv_mean * kl_u
            + pieces.corrector_feedback(mem.forced_corrector[0])
            + b_avg
        )
        assert np.max(np.abs(mem.accel[0] - expected)) < 1e-13

    def test_homogeneous_medium_drops_memory(self):
        hom = homogeneous_micro(c=0.0, rho=2.0)
        spec = make_spec(hom, u0="sin(pi*x1)", b="0.1*sin(pi*x1)*cos(t)")
        mem = solve_memory(spec)
        coup = solve_coupled(spec)
        assert np.all(mem.corrector_memory == 0.0)
        assert np.all(mem.forced_corrector == 0.0)
        gap = max(np.abs(mem.u_h[k] - coup.u_h[k]).max() for k in range(len(mem)))
        assert gap == 0.0


def test_two_dimensional_equivalences():
    from conftest import hetero_micro

    micro = hetero_micro(dim=2, delta=0.25, gamma=0.3)
    spec = ProblemSpec(
        micro=micro,
        macro=MacroGrid((0.0, 0.0), (1.0, 1.0), (8, 8)),
        cell=CellGrid(2, 8),
        u0="sin(pi*x1)*sin(pi*x2)*(1 + 0.5*cos(2*pi*y1)); 0.2*cos(2*pi*y2)",
        v0="0; 0",
        b="0.1*sin(pi*x1)*cos(2*pi*y1)*cos(t); 0",
        final_time=0.125,
        dt=1 / 512,
        stride=32,
    )
    two = solve_twoscale(spec)
    coup = solve_coupled(spec)
    rec = coup.reconstruct()
    assert max(
        np.abs(rec.states[k] - two.states[k]).max() for k in range(len(two.times))
    ) <= 1e-10
    mem = solve_memory(spec)
    assert max(
        np.abs(mem.u_h[k] - coup.u_h[k]).max() for k in range(len(mem.times))
    ) <= 1e-8
    f = constitutive_force(mem)
    assert f.states.shape == (len(mem.times), 8, 8, 2)


class TestConstitutiveForce:
    def test_initial_force_is_instantaneous(self, micro1d):
        spec = make_spec(micro1d)
        mem = solve_memory(spec)
        f = constitutive_force(mem, times=np.array([0.0]))
        kl = long_range_operator(spec.macro, micro1d.params.lam, micro1d.params.gamma)
        assert np.max(np.abs(f.states[0] - kl.apply(mem.u_h[0]))) < 1e-14

    def test_homogeneous_medium_is_memoryless(self):
        hom = homogeneous_micro(c=0.0, rho=2.0)
        spec = make_spec(hom, u0="sin(pi*x1)", b="0.1*sin(pi*x1)*cos(t)")
        mem = solve_memory(spec)
        f = constitutive_force(mem)
        kl = long_range_operator(spec.macro, hom.params.lam, hom.params.gamma)
        for k in range(len(mem)):
            assert np.max(np.abs(f.states[k] - kl.apply(mem.u_h[k]))) < 1e-13

    def test_residual_against_equation(self, micro1d):
        # the stored acceleration, minus the forced-corrector feedback and
        # the averaged body force, reproduces the constitutive force scaled
        # by the mean inverse density
        spec = make_spec(micro1d)
        mem = solve_memory(spec)
        f = constitutive_force(mem)
        from peridyn.homogenization import _build_pieces
        from peridyn.solvers import product_coordinates

        pieces = _build_pieces(spec.micro, spec.macro, spec.cell)
        xb, yb = product_coordinates(spec.macro, spec.cell)
        worst = 0.0
        for k, t in enumerate(mem.times):
            bfield = spec.b(xb, yb, t) * pieces.rho_inv_b
            b_avg = cell_average(
                np.broadcast_to(bfield, pieces.cgen.field_shape), spec.macro, spec.cell
            )
            kw = pieces.corrector_feedback(mem.forced_corrector[k])
            lhs = (mem.accel[k] - kw - b_avg) / pieces.rho_inv_mean
            worst = max(worst, float(np.max(np.abs(lhs - f.states[k]))))
        assert worst <= 1e-8

    def test_time_outside_history_rejected(self, micro1d):
        spec = make_spec(micro1d)
        mem = solve_memory(spec)
        with pytest.raises(InvalidArgumentError):
            constitutive_force(mem, times=np.array([spec.final_time + 1.0]))

    def test_off_grid_time_rejected(self, micro1d):
        spec = make_spec(micro1d)
        mem = solve_memory(spec)
        with pytest.raises(InvalidArgumentError):
            constitutive_force(mem, times=np.array([spec.dt * 0.5]))
