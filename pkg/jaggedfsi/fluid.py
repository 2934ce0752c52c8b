import csv
import math
import logging
from dataclasses import dataclass

import numpy as np

from jaggedfsi.fem import (DofMap, DirichletConditions, ConstrainedSystem, LinearSolver, lump_mass,
                           assemble, element_matrices, boundary_mass, boundary_load)
from jaggedfsi.mesh import GAMMA1, GAMMA2, SIGMA


@dataclass(frozen=True)
class FluidParams:
    rho: float = 1.0
    mu: float = 0.035
    stab_gamma: float = 1e-2

    def __post_init__(self):
        if self.rho <= 0 or self.mu <= 0 or self.stab_gamma < 0:
            raise ValueError("invalid fluid parameters {}".format(self))


@dataclass(frozen=True)
class InletLoad:
    p_max: float = 2e4
    t_star: float = 5e-3

    def __post_init__(self):
        if self.t_star <= 0:
            raise ValueError("inlet ramp duration must be positive, got {}".format(self.t_star))


def inlet_pressure(load, t):
    if t < 0:
        raise ValueError("negative time {}".format(t))
    if t > load.t_star:
        return 0.0
    return load.p_max * (1.0 - math.cos(2.0 * math.pi * t / load.t_star)) / 2.0


@dataclass
class FluidState:
    """
    Velocity (ux block then uy block, one entry per node) and pressure.
    """
    u: np.ndarray
    p: np.ndarray
    step_index: int = 0
    t: float = 0.0

    @staticmethod
    def zero(num_nodes, t=0.0):
        return FluidState(np.zeros(2 * num_nodes), np.zeros(num_nodes), 0, t)

    @staticmethod
    def from_vector(x, step_index, t):
        n = x.size // 3
        return FluidState(x[:2 * n].copy(), x[2 * n:].copy(), step_index, t)

    def vector(self):
        return np.concatenate([self.u, self.p])

    def max_norm(self):
        return max(np.abs(self.u).max(initial=0.0), np.abs(self.p).max(initial=0.0))

    def dump(self, mesh, path):
        n = mesh.num_nodes
        with open(path, 'w', newline='') as f:
            w = csv.writer(f)
            w.writerow(['node_index', 'x', 'y', 'ux', 'uy', 'p'])
            for i in range(n):
                w.writerow([i, repr(float(mesh.nodes[i, 0])), repr(float(mesh.nodes[i, 1])),
                            repr(float(self.u[i])), repr(float(self.u[n + i])), repr(float(self.p[i]))])


def _gradient_products(area, grads, a, b):
    return area[:, None, None] * grads[:, :, a][:, :, None] * grads[:, :, b][:, None, :]


def velocity_mass_rule(coords):
    mass, _, _, _ = element_matrices(coords)
    yield 'ux', 'ux', mass
    yield 'uy', 'uy', mass


def viscous_rule(mu):
    """
    a(u, v) = 2 mu int eps(u) : eps(v), split into component blocks.
    """
    def rule(coords):
        _, _, grads, area = element_matrices(coords)
        kxx = _gradient_products(area, grads, 0, 0)
        kyy = _gradient_products(area, grads, 1, 1)
        kxy = _gradient_products(area, grads, 0, 1)
        kyx = _gradient_products(area, grads, 1, 0)
        yield 'ux', 'ux', mu * (2.0 * kxx + kyy)
        yield 'ux', 'uy', mu * kyx
        yield 'uy', 'ux', mu * kxy
        yield 'uy', 'uy', mu * (kxx + 2.0 * kyy)
    return rule


def divergence_rule(coords):
    """
    (q, div u): rows are pressure tests, columns velocity unknowns.
    """
    _, _, grads, area = element_matrices(coords)
    ones = np.ones(3)
    yield 'p', 'ux', (area / 3.0)[:, None, None] * ones[None, :, None] * grads[:, None, :, 0]
    yield 'p', 'uy', (area / 3.0)[:, None, None] * ones[None, :, None] * grads[:, None, :, 1]


def pressure_gradient_rule(coords):
    """
    b(p, v) = -(p, div v): rows are velocity tests, columns pressure.
    """
    _, _, grads, area = element_matrices(coords)
    ones = np.ones(3)
    yield 'ux', 'p', -(area / 3.0)[:, None, None] * grads[:, :, None, 0] * ones[None, None, :]
    yield 'uy', 'p', -(area / 3.0)[:, None, None] * grads[:, :, None, 1] * ones[None, None, :]


def stabilization_rule(params, h):
    scale = params.stab_gamma * h * h / params.mu

    def rule(coords):
        if scale == 0.0:
            return
        _, stiffness, _, _ = element_matrices(coords)
        yield 'p', 'p', scale * stiffness
    return rule


def stabilization_form(mesh, params):
    """
    Brezzi-Pitkaranta pressure stabilization gamma (h^2 / mu) (grad p, grad q)
    as a (num_nodes x num_nodes) matrix.
    """
    return assemble(mesh, DofMap(mesh.num_nodes), _as_scalar(stabilization_rule(params, mesh.h)))


def _as_scalar(rule):
    def scalar(coords):
        for _, _, local in rule(coords):
            yield 's', 's', local
    return scalar


def fluid_dirichlet(mesh, dofmap):
    """
    u_y = 0 on Gamma1 (symmetry), u_x = 0 on Sigma (transverse-only wall)
    and u = 0 at the fixed ends of Sigma.
    """
    bc = DirichletConditions(dofmap.num_dofs)
    bc.add(dofmap.dof(mesh.boundary_nodes(GAMMA1), 'uy'), 0.0)
    bc.add(dofmap.dof(mesh.interface_nodes, 'ux'), 0.0)
    ends = mesh.interface_nodes[[0, -1]]
    bc.add(dofmap.dof(ends, 'uy'), 0.0)
    return bc


class FluidForms(object):
    """
    Time-step independent fluid matrices on one mesh. All matrices act on
    the full (ux, uy, p) dof vector.
    """

    def __init__(self, mesh, params, body_force=None):
        self.mesh = mesh
        self.params = params
        self.body_force = body_force
        self.dofmap = DofMap(mesh.num_nodes, DofMap.FLUID)
        n = self.dofmap.num_dofs

        self.mass = assemble(mesh, self.dofmap, velocity_mass_rule)
        # every time derivative term uses the lumped mass
        self.lumped_mass = lump_mass(self.mass)
        self.viscous = assemble(mesh, self.dofmap, viscous_rule(params.mu))
        self.pressure_gradient = assemble(mesh, self.dofmap, pressure_gradient_rule)
        self.divergence = assemble(mesh, self.dofmap, divergence_rule)
        self.stabilization = assemble(mesh, self.dofmap, stabilization_rule(params, mesh.h))

        uy = lambda nodes: self.dofmap.dof(nodes, 'uy')
        ux = lambda nodes: self.dofmap.dof(nodes, 'ux')
        self.interface_mass = boundary_mass(mesh, mesh.boundary_edges(SIGMA), n, uy)
        # traction -P n on Gamma2 with n = (-1, 0) loads ux with +P
        self.inlet = boundary_load(mesh, mesh.boundary_edges(GAMMA2), n, ux)
        self.bc = fluid_dirichlet(mesh, self.dofmap)

        self._momentum = (self.viscous + self.pressure_gradient).tocsr()
        logging.debug("Assembled fluid forms on {}".format(self.dofmap.encode()))

    def stokes(self, tau):
        """
        Stabilized Stokes operator with backward Euler mass, no Robin term.
        """
        return ((self.params.rho / tau) * self.lumped_mass + self.viscous + self.pressure_gradient
                + self.divergence + self.stabilization).tocsr()

    def operator(self, tau, robin_coeff):
        return (self.stokes(tau) + robin_coeff * self.interface_mass).tocsr()

    def residual(self, x_now, x_rate):
        """
        Momentum variational residual rho (d_t u, v) + a(u, v) + b(p, v) for
        every velocity test function, with d_t u given as `x_rate`.
        """
        return self.params.rho * (self.lumped_mass @ x_rate) + self._momentum @ x_now

    def external_load(self, load, t):
        f = inlet_pressure(load, t) * self.inlet
        if self.body_force is not None:
            n = self.mesh.num_nodes
            fx, fy = self.body_force(self.mesh.nodes[:, 0], self.mesh.nodes[:, 1], t)
            nodal = np.concatenate([np.broadcast_to(fx, (n,)), np.broadcast_to(fy, (n,)), np.zeros(n)])
            f = f + self.mass @ nodal
        return f

    def kinetic_energy(self, state):
        x = state.vector()
        return self.params.rho * float(x @ (self.lumped_mass @ x))


def assemble_fluid_operator(mesh, params, tau, robin_coeff, forms=None):
    if tau <= 0:
        raise ValueError("fluid time step must be positive, got {}".format(tau))
    if forms is None:
        forms = FluidForms(mesh, params)
    return forms.operator(tau, robin_coeff)


class FluidSolver(object):
    """
    One fluid step of the explicit Robin-Neumann coupling for a fixed
    step length. The operator is factorized once at construction.

    `solid_inertia` is rho_s * eps; `rate_tau` is the spacing used for the
    extrapolated wall acceleration (solid or fluid grid).
    """

    def __init__(self, forms, tau, solid_inertia, lifting, load, extr=1, rate_tau=None):
        if tau <= 0:
            raise ValueError("fluid time step must be positive, got {}".format(tau))
        self.forms = forms
        self.tau = tau
        self.solid_inertia = solid_inertia
        self.robin_coeff = solid_inertia / tau
        self.lifting = lifting
        self.load = load
        self.extr = extr
        self.rate_tau = tau if rate_tau is None else rate_tau

        self.matrix = forms.operator(tau, self.robin_coeff)
        self.system = ConstrainedSystem(self.matrix, forms.bc)
        self._solver = LinearSolver(self.system.matrix, label='fluid tau={:.6g}'.format(tau))
        self._sigma_mass = lifting.restrict_matrix(forms.interface_mass)
        logging.debug("Fluid solver ready: tau={}, robin={}".format(tau, self.robin_coeff))

    def rhs(self, fluid_hist, solid_hist, t_new, extr=None):
        extr = self.extr if extr is None else extr
        prev = fluid_hist.latest
        rho = self.forms.params.rho
        b = (rho / self.tau) * (self.forms.lumped_mass @ prev.vector())

        wall = self.robin_coeff * (self._sigma_mass @ solid_hist.latest.dd)
        if extr > 0:
            dd_rate = solid_hist.extrapolate_rate(extr, self.rate_tau, key=lambda s: s.dd)
            wall = wall + self.solid_inertia * (self._sigma_mass @ dd_rate)
            x_star = fluid_hist.extrapolate(extr, key=lambda s: s.vector())
            x_rate = fluid_hist.extrapolate_rate(extr, self.tau, key=lambda s: s.vector())
            wall = wall + self.lifting.restrict(self.forms.residual(x_star, x_rate))
        b = b + self.lifting.apply(wall)
        return b + self.forms.external_load(self.load, t_new)

    def solve_step(self, fluid_hist, solid_hist, t_new=None, extr=None):
        prev = fluid_hist.latest
        if t_new is None:
            t_new = prev.t + self.tau
        b = self.rhs(fluid_hist, solid_hist, t_new, extr)
        x = self.system.expand(self._solver.solve(self.system.reduce(b)))
        return FluidState.from_vector(x, prev.step_index + 1, t_new)


def fluid_rhs(solver, fluid_hist, solid_hist, extr, t_new):
    return solver.rhs(fluid_hist, solid_hist, t_new, extr)


def solve_fluid_step(solver, fluid_hist, solid_hist, t_new=None):
    return solver.solve_step(fluid_hist, solid_hist, t_new)
