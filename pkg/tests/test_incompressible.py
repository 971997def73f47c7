import numpy as np
import pytest

from machlab.errors import CflViolation
from machlab.geometry import build_grid, linear_path, static_path
from machlab.incompressible import IncompressibleSolver, project_initial
from machlab.spectral import helmholtz_project


@pytest.fixture()
def grid():
    return build_grid(2, 1.0, 0.15, 1.0 / 32.0)


def vortex_field(grid, center=(-0.55, 0.0), radius=0.25, amp=0.3):
    xn, yn = grid.nodes()
    r2 = (xn - center[0]) ** 2 + (yn - center[1]) ** 2
    psi = np.where(r2 < radius**2, amp * radius * (1 - r2 / radius**2) ** 3, 0.0)
    u = (psi[:, 1:] - psi[:, :-1]) / grid.h
    v = -(psi[1:, :] - psi[:-1, :]) / grid.h
    u[~grid.uface_interior] = 0.0
    v[~grid.vface_interior] = 0.0
    return u, v


def gradient_field(grid, center=(0.45, 0.1), width=0.2):
    xc, yc = grid.cell_centers()
    r2 = (xc - center[0]) ** 2 + (yc - center[1]) ** 2
    q = np.where(r2 < width**2, (1 - r2 / width**2) ** 3, 0.0)
    q[~grid.active] = 0.0
    return grid.ops.grad(q)


class TestProjectInitial:
    def test_solenoidal_tangent_field_fixed(self, grid):
        u, v = vortex_field(grid)
        hu, hv = project_initial(u, v, grid)
        assert np.abs(hu - u).max() <= 1e-10
        assert np.abs(hv - v).max() <= 1e-10

    def test_gradient_killed(self, grid):
        gu, gv = gradient_field(grid)
        hu, hv = project_initial(gu, gv, grid)
        assert max(np.abs(hu).max(), np.abs(hv).max()) <= 1e-10

    def test_mixture_pythagoras(self, grid):
        u, v = vortex_field(grid)
        gu, gv = gradient_field(grid)
        mu, mv = u + gu, v + gv
        (hu, hv), theta = helmholtz_project(grid, mu, mv)
        gt = grid.ops.grad(theta)
        total = grid.ops.face_dot(mu, mv, mu, mv)
        parts = grid.ops.face_dot(hu, hv, hu, hv) + grid.ops.face_dot(
            gt[0], gt[1], gt[0], gt[1]
        )
        assert abs(total - parts) <= 1e-8 * max(total, 1.0)


class TestStep:
    def test_rest_stays_rest_static(self, grid):
        sol = IncompressibleSolver(grid, 0.01, static_path(1.0))
        st = sol.init_state(np.zeros((grid.nx + 1, grid.ny)),
                            np.zeros((grid.nx, grid.ny + 1)))
        st = sol.step(st, sol.cfl_limit(st))
        assert np.abs(st.u).max() == 0.0
        assert np.abs(st.v).max() == 0.0

    def test_cfl_guard(self, grid):
        sol = IncompressibleSolver(grid, 0.01, static_path(1.0))
        st = sol.init_state(*vortex_field(grid))
        with pytest.raises(CflViolation):
            sol.step(st, 100.0)

    def test_divergence_free_each_step(self, grid):
        sol = IncompressibleSolver(grid, 0.01, linear_path((0.1, 0.0), 10.0))
        st = sol.init_state(*vortex_field(grid))
        for _ in range(5):
            st = sol.step(st, sol.cfl_limit(st))
            div = grid.ops.div(st.u, st.v, include_boundary_faces=True)
            assert np.abs(div[grid.active]).max() <= 1e-8

    def test_kinetic_energy_non_increasing(self, grid):
        sol = IncompressibleSolver(grid, 0.01, static_path(10.0))
        traj = sol.run(sol.init_state(*vortex_field(grid)),
                       np.linspace(0.0, 0.5, 11))
        ke = traj.kinetic
        assert all(a >= b - 1e-14 for a, b in zip(ke, ke[1:]))
        assert ke[-1] < ke[0]

    def test_projection_orthogonality(self, grid):
        # the pressure-gradient correction is l2-orthogonal to the
        # projected (solenoidal) velocity
        sol = IncompressibleSolver(grid, 0.01, static_path(1.0))
        st = sol.init_state(*vortex_field(grid))
        new = sol.step(st, sol.cfl_limit(st))
        gp = grid.ops.grad(new.pressure)
        dot = grid.ops.face_dot(new.u, new.v, gp[0], gp[1])
        scale = grid.ops.face_dot(new.u, new.v, new.u, new.v)
        assert abs(dot) <= 1e-8 * max(scale, 1.0)


class TestRun:
    def test_dt_self_convergence_first_order(self, grid):
        sol = IncompressibleSolver(grid, 0.01, static_path(1.0))
        u0, v0 = vortex_field(grid, amp=0.5)
        horizon = 0.04
        st0 = sol.init_state(u0, v0)
        base = sol.cfl_limit(st0) * 0.8
        dt0 = horizon / np.ceil(horizon / base)
        finals = []
        for level in range(3):
            traj = sol.run(sol.init_state(u0, v0), [0.0, horizon],
                           dt_policy=dt0 / 2**level)
            st = traj.states[-1]
            finals.append(np.concatenate([st.u.ravel(), st.v.ravel()]))
        d1 = np.linalg.norm(finals[0] - finals[1])
        d2 = np.linalg.norm(finals[1] - finals[2])
        assert np.log2(d1 / d2) >= 0.8

    def test_moving_obstacle_develops_flow(self, grid):
        sol = IncompressibleSolver(grid, 0.01, linear_path((0.1, 0.0), 10.0))
        st0 = sol.init_state(np.zeros((grid.nx + 1, grid.ny)),
                             np.zeros((grid.nx, grid.ny + 1)))
        # the compatibility projection already installs the dipole flow
        assert np.abs(st0.u[grid.uface_interior]).max() > 0.01
        traj = sol.run(st0, [0.0, 0.1])
        assert max(traj.max_divergence) <= 1e-8
