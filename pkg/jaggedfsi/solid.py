import math
from dataclasses import dataclass, field

import numpy as np

from jaggedfsi.fem import DirichletConditions, ConstrainedSystem, LinearSolver, interval_matrices


class ShapeMismatchError(ValueError):
    pass


def lame_coefficients(young, eps, nu, radius):
    """
    Generalized string coefficients (lambda1, lambda0).
    """
    if nu >= 1.0 or nu < 0.0:
        raise ValueError("Poisson ratio must lie in [0, 1), got {}".format(nu))
    if young <= 0 or eps <= 0 or radius <= 0:
        raise ValueError("young, eps and radius must be positive")
    lambda1 = young * eps / (2.0 * (1.0 + nu))
    lambda0 = young * eps / (radius ** 2 * (1.0 - nu ** 2))
    return lambda1, lambda0


@dataclass(frozen=True)
class SolidParams:
    rho: float = 1.1
    eps: float = 0.1
    young: float = 0.75e6
    poisson: float = 0.5
    radius: float = 0.5
    viscous_enabled: bool = False
    viscous_beta: float = 0.0
    lambda1: float = field(init=False)
    lambda0: float = field(init=False)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("solid density must be positive, got {}".format(self.rho))
        lambda1, lambda0 = lame_coefficients(self.young, self.eps, self.poisson, self.radius)
        object.__setattr__(self, 'lambda1', lambda1)
        object.__setattr__(self, 'lambda0', lambda0)

    @property
    def inertia(self):
        return self.rho * self.eps


@dataclass
class SolidState:
    """
    Transverse displacement d and velocity dd on the interface nodes.
    """
    d: np.ndarray
    dd: np.ndarray
    step_index: int = 0
    t: float = 0.0

    @staticmethod
    def zero(num_nodes, t=0.0):
        return SolidState(np.zeros(num_nodes), np.zeros(num_nodes), 0, t)

    def max_norm(self):
        return max(np.abs(self.d).max(initial=0.0), np.abs(self.dd).max(initial=0.0))


class StringForms(object):
    """
    1D P1 matrices of the generalized string on the interface grid `xs`.
    """

    def __init__(self, xs, params):
        self.xs = np.asarray(xs, dtype=float)
        self.params = params
        self.mass, self.stiffness = interval_matrices(self.xs)
        self.elastic = (params.lambda1 * self.stiffness + params.lambda0 * self.mass).tocsr()
        self.bc = DirichletConditions(self.xs.size).add([0, self.xs.size - 1], 0.0)

    @property
    def size(self):
        return self.xs.size

    def viscous(self):
        if not self.params.viscous_enabled:
            return None
        return self.params.viscous_beta * self.elastic

    def energy(self, state):
        return (self.params.inertia * float(state.dd @ (self.mass @ state.dd))
                + float(state.d @ (self.elastic @ state.d)))


def assemble_string_operator(xs, params, tau, forms=None):
    """
    Operator in the unknown velocity after substituting
    d^n = d^{n-1} + tau dd^n, before end point elimination.
    """
    if tau <= 0:
        raise ValueError("solid time step must be positive, got {}".format(tau))
    if forms is None:
        forms = StringForms(xs, params)
    op = (params.inertia / tau) * forms.mass + tau * forms.elastic
    viscous = forms.viscous()
    if viscous is not None:
        op = op + viscous
    return op.tocsr()


class StringSolver(object):
    """
    Backward Euler step of the string, factorized once per tau.
    """

    def __init__(self, forms, tau):
        self.forms = forms
        self.tau = tau
        self.matrix = assemble_string_operator(forms.xs, forms.params, tau, forms)
        self.system = ConstrainedSystem(self.matrix, forms.bc)
        self._solver = LinearSolver(self.system.matrix, label='solid tau={:.6g}'.format(tau))

    def rhs(self, prev, load):
        forms = self.forms
        return ((forms.params.inertia / self.tau) * (forms.mass @ prev.dd)
                - forms.elastic @ prev.d + load)

    def solve_step(self, prev, load, t_new=None):
        load = np.asarray(load, dtype=float)
        if load.shape != prev.d.shape:
            raise ShapeMismatchError("load has {} entries, interface has {}".format(load.size, prev.d.size))
        if t_new is None:
            t_new = prev.t + self.tau
        dd = self.system.expand(self._solver.solve(self.system.reduce(self.rhs(prev, load))))
        d = prev.d + self.tau * dd
        return SolidState(d, dd, prev.step_index + 1, t_new)


def solve_solid_step(solver, prev, load, t_new=None):
    return solver.solve_step(prev, load, t_new)


def fluid_residual_load(fluid_prev, fluid_now, tau_f, lifting, fluid_forms):
    """
    Interface load -[rho (d_tau u, L w) + a(u, L w) + b(p, L w)] for every
    interface hat function w (transverse component).
    """
    if fluid_prev.u.shape != fluid_now.u.shape or fluid_prev.p.shape != fluid_now.p.shape:
        raise ShapeMismatchError("fluid states live on different meshes")
    x_now = fluid_now.vector()
    if tau_f > 0:
        x_rate = (x_now - fluid_prev.vector()) / tau_f
    else:
        x_rate = np.zeros_like(x_now)
    return -lifting.restrict(fluid_forms.residual(x_now, x_rate))


def elastic_energy_norm(d, params, xs, forms=None):
    """
    sqrt(a^e(d, d)) = sqrt(lambda1 |d'|^2 + lambda0 |d|^2) on the grid `xs`.
    """
    if forms is None:
        forms = StringForms(xs, params)
    d = np.asarray(d, dtype=float)
    return math.sqrt(max(float(d @ (forms.elastic @ d)), 0.0))

