import math

import numpy as np
import pytest

from jaggedfsi.coupling import LiftingOperator
from jaggedfsi.fem import LinearSolver, apply_dirichlet
from jaggedfsi.fluid import FluidForms, FluidParams, FluidState
from jaggedfsi.mesh import build_mesh, interface_coordinates
from jaggedfsi.solid import (ShapeMismatchError, SolidParams, SolidState, StringForms, StringSolver,
                             assemble_string_operator, elastic_energy_norm, fluid_residual_load,
                             lame_coefficients, solve_solid_step)

UNIT = SolidParams(rho=1.0, eps=1.0, young=2.0, poisson=0.0, radius=1.0)


def test_lame_coefficients():
    lambda1, lambda0 = lame_coefficients(0.75e6, 0.1, 0.5, 0.5)
    assert lambda1 == pytest.approx(25000.0)
    assert lambda0 == pytest.approx(400000.0)
    assert SolidParams().lambda1 == pytest.approx(25000.0)
    assert SolidParams().inertia == pytest.approx(0.11)


@pytest.mark.parametrize("nu", [1.0, 1.5, -0.1])
def test_lame_rejects_poisson(nu):
    with pytest.raises(ValueError):
        lame_coefficients(1.0, 1.0, nu, 1.0)


def test_unit_params():
    assert UNIT.lambda1 == pytest.approx(1.0)
    assert UNIT.lambda0 == pytest.approx(2.0)


def test_operator_is_symmetric_positive():
    xs = np.linspace(0.0, 6.0, 61)
    op = assemble_string_operator(xs, SolidParams(), 5e-4).toarray()
    assert np.allclose(op, op.T)
    assert np.linalg.eigvalsh(op).min() > 0.0
    with pytest.raises(ValueError):
        assemble_string_operator(xs, SolidParams(), -1.0)


def test_viscous_term_added():
    xs = np.linspace(0.0, 1.0, 11)
    plain = assemble_string_operator(xs, UNIT, 0.1)
    params = SolidParams(rho=1.0, eps=1.0, young=2.0, poisson=0.0, radius=1.0,
                         viscous_enabled=True, viscous_beta=0.5)
    viscous = assemble_string_operator(xs, params, 0.1)
    forms = StringForms(xs, params)
    assert np.allclose((viscous - plain).toarray(), 0.5 * forms.elastic.toarray())


def test_manufactured_solution_first_order():
    xs = np.linspace(0.0, 1.0, 101)
    forms = StringForms(xs, UNIT)
    v = np.sin(math.pi * xs)
    v[[0, -1]] = 0.0
    omega = 2.0 * math.pi
    errors = []
    for steps in (50, 100, 200):
        tau = 1.0 / steps
        solver = StringSolver(forms, tau)
        state = SolidState(np.zeros(xs.size), omega * v, 0, 0.0)
        for n in range(1, steps + 1):
            t = n * tau
            load = (UNIT.inertia * (forms.mass @ v) * (-omega ** 2 * math.sin(omega * t))
                    + (forms.elastic @ v) * math.sin(omega * t))
            state = solver.solve_step(state, load, t_new=t)
        errors.append(np.abs(state.d - v * math.sin(omega)).max())
    orders = [math.log(errors[i] / errors[i + 1], 2) for i in range(2)]
    assert errors[0] > errors[1] > errors[2]
    assert orders[-1] == pytest.approx(1.0, abs=0.2)


def test_free_vibration_energy_decreases():
    xs = np.linspace(0.0, 6.0, 61)
    forms = StringForms(xs, SolidParams())
    solver = StringSolver(forms, 5e-4)
    d = np.sin(math.pi * xs / 6.0) * 1e-3
    d[[0, -1]] = 0.0
    state = SolidState(d, np.zeros(xs.size))
    energy = forms.energy(state)
    for n in range(20):
        state = solve_solid_step(solver, state, np.zeros(xs.size))
        current = forms.energy(state)
        assert current <= energy * (1.0 + 1e-12)
        energy = current
    assert state.d[0] == 0.0 and state.d[-1] == 0.0


def test_static_load_converges_to_equilibrium():
    xs = np.linspace(0.0, 6.0, 61)
    params = SolidParams()
    forms = StringForms(xs, params)
    load = forms.mass @ np.full(xs.size, 1000.0)
    solver = StringSolver(forms, 1.0)
    state = SolidState.zero(xs.size)
    for _ in range(500):
        state = solver.solve_step(state, load)
    system, rhs = apply_dirichlet(forms.elastic, load, forms.bc)
    static = system.expand(LinearSolver(system.matrix).solve(rhs))
    assert np.allclose(state.d, static, rtol=1e-8, atol=1e-14)
    assert state.t == pytest.approx(500.0)
    assert state.step_index == 500


def test_load_shape_mismatch():
    forms = StringForms(np.linspace(0.0, 1.0, 11), UNIT)
    solver = StringSolver(forms, 0.1)
    with pytest.raises(ShapeMismatchError):
        solver.solve_step(SolidState.zero(11), np.zeros(12))


def test_elastic_energy_norm():
    xs = np.linspace(0.0, 1.0, 11)
    assert elastic_energy_norm(np.zeros(11), UNIT, xs) == 0.0
    # lambda0 |1|^2 over [0, 1] with lambda0 = 2
    assert elastic_energy_norm(np.ones(11), UNIT, xs) == pytest.approx(math.sqrt(2.0))


@pytest.fixture(scope="module")
def fluid_setup():
    mesh = build_mesh(0)
    forms = FluidForms(mesh, FluidParams())
    return mesh, forms, LiftingOperator(mesh, forms.dofmap)


def test_uniform_pressure_pushes_wall(fluid_setup):
    mesh, forms, lifting = fluid_setup
    state = FluidState(np.zeros(2 * mesh.num_nodes), np.full(mesh.num_nodes, 7.0))
    load = fluid_residual_load(state, state, 5e-4, lifting, forms)
    assert load.size == len(interface_coordinates(mesh))
    assert np.allclose(load[1:-1], 7.0 * mesh.h)


def test_residual_load_rejects_mixed_meshes(fluid_setup):
    mesh, forms, lifting = fluid_setup
    with pytest.raises(ShapeMismatchError):
        fluid_residual_load(FluidState.zero(mesh.num_nodes), FluidState.zero(10), 5e-4, lifting, forms)
