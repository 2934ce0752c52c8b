"""
Explicit Robin-Neumann coupling, the jagged-time-step scheduler built on
it, and the fully implicit reference scheme.
"""
import time
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from jaggedfsi.fem import ConstrainedSystem, LinearSolver
from jaggedfsi.fluid import FluidParams, InletLoad, FluidForms, FluidSolver, FluidState
from jaggedfsi.mesh import build_mesh, interface_coordinates, LENGTH, RADIUS, H_BASE, MAX_NODES
from jaggedfsi.solid import (SolidParams, SolidState, StringForms, StringSolver,
                             ShapeMismatchError, fluid_residual_load)

FLUID_STEP = 'F'
SOLID_STEP = 'S'
MONOLITHIC_STEP = 'M'

TAU_BASE = 5e-4
COARSE_FACTOR = 10
BLOWUP_THRESHOLD = 1e10


@dataclass(frozen=True)
class Physics:
    length: float = LENGTH
    radius: float = RADIUS
    fluid: FluidParams = field(default_factory=FluidParams)
    solid: SolidParams = field(default_factory=SolidParams)
    inlet: InletLoad = field(default_factory=InletLoad)

    def encode(self):
        return {
            'geometry.length': self.length,
            'geometry.radius': self.radius,
            'fluid.rho': self.fluid.rho,
            'fluid.mu': self.fluid.mu,
            'fluid.stab_gamma': self.fluid.stab_gamma,
            'solid.rho': self.solid.rho,
            'solid.eps': self.solid.eps,
            'solid.young': self.solid.young,
            'solid.poisson': self.solid.poisson,
            'solid.viscous_enabled': self.solid.viscous_enabled,
            'solid.viscous_beta': self.solid.viscous_beta,
            'inlet.p_max': self.inlet.p_max,
            'inlet.t_star': self.inlet.t_star,
        }


@dataclass(frozen=True)
class SchemeSettings:
    """
    Discretization knobs shared by every scheme. `robin_rate_grid` picks
    the spacing of the extrapolated wall acceleration: 'solid' or 'fluid'.
    """
    tau_base: float = TAU_BASE
    h_base: float = H_BASE
    robin_rate_grid: str = 'solid'
    blowup_threshold: float = BLOWUP_THRESHOLD
    max_nodes: int = MAX_NODES

    def __post_init__(self):
        if self.robin_rate_grid not in ('solid', 'fluid'):
            raise ValueError("robin_rate_grid must be 'solid' or 'fluid', got {}".format(self.robin_rate_grid))
        if self.tau_base <= 0 or self.h_base <= 0:
            raise ValueError("base step and mesh size must be positive")

    def fine_step(self, rate):
        return self.coarse_step(rate) / COARSE_FACTOR

    def coarse_step(self, rate):
        return COARSE_FACTOR * self.tau_base / 2 ** rate


@dataclass(frozen=True)
class JaggedConfig:
    n_fluid: int
    n_solid: int
    tau_coarse: float
    extr: int = 1

    def __post_init__(self):
        if self.n_fluid < 1 or self.n_solid < 1:
            raise ValueError("step counts must be positive, got F {} S {}".format(self.n_fluid, self.n_solid))
        if self.extr not in (0, 1, 2):
            raise ValueError("extrapolation order must be 0, 1 or 2, got {}".format(self.extr))
        if self.tau_coarse <= 0:
            raise ValueError("coarse step must be positive")

    @property
    def efficient(self):
        return self.n_fluid < COARSE_FACTOR and self.n_fluid + self.n_solid <= 2 * COARSE_FACTOR

    @property
    def tau_fluid(self):
        return self.tau_coarse / self.n_fluid

    @property
    def tau_solid(self):
        return self.tau_coarse / self.n_solid

    def name(self):
        return "F {} S {}".format(self.n_fluid, self.n_solid)


class HistoryBuffer(object):
    """
    The last `depth` values of one field, newest first, with their times.
    """

    def __init__(self, depth=3):
        self._items = deque(maxlen=depth)

    def push(self, t, value):
        if self._items and t <= self._items[0][0]:
            raise ValueError("history times must increase: {} after {}".format(t, self._items[0][0]))
        self._items.appendleft((t, value))

    def __len__(self):
        return len(self._items)

    def __getitem__(self, lag):
        return self._items[lag][1]

    def time(self, lag=0):
        return self._items[lag][0]

    @property
    def latest(self):
        return self._items[0][1]

    def _zero(self, key):
        if not self._items:
            return 0.0
        return np.zeros_like(np.asarray(key(self._items[0][1]), dtype=float))

    def extrapolate(self, r, key=None, lag=0):
        """
        0, x^{n-1} or 2 x^{n-1} - x^{n-2} for r = 0, 1, 2, degrading to
        the deepest order the history supports.
        """
        key = key or (lambda v: v)
        order = min(r, len(self._items) - lag)
        if order <= 0:
            return self._zero(key)
        x1 = key(self[lag])
        if order == 1:
            return x1
        return 2.0 * x1 - key(self[lag + 1])

    def extrapolate_rate(self, r, tau, key=None):
        """
        (x^{*,n} - x^{*,n-1}) / tau with the extrapolant taken one level
        deeper for the second term.
        """
        key = key or (lambda v: v)
        order = min(r, len(self._items) - 1)
        if order <= 0:
            return self._zero(key)
        return (self.extrapolate(order, key) - self.extrapolate(order, key, lag=1)) / tau


def extrapolate(hist, r):
    if r not in (0, 1, 2):
        raise ValueError("extrapolation order must be 0, 1 or 2, got {}".format(r))
    return hist.extrapolate(r)


def extrapolate_rate(hist, r, tau):
    return hist.extrapolate_rate(r, tau)


class LiftingOperator(object):
    """
    Zero extension of interface vectors into the fluid space: the value at
    interface node k lands on that node's uy dof, every other dof is zero.
    """

    def __init__(self, mesh, dofmap):
        self.size = len(mesh.interface_nodes)
        self.num_dofs = dofmap.num_dofs
        rows = dofmap.dof(mesh.interface_nodes, 'uy')
        self.matrix = sp.csr_matrix((np.ones(self.size), (rows, np.arange(self.size))),
                                    shape=(self.num_dofs, self.size))
        self._transpose = self.matrix.T.tocsr()

    def apply(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.size,):
            raise ShapeMismatchError("interface vector has shape {}, expected ({},)".format(w.shape, self.size))
        return self.matrix @ w

    def restrict(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.num_dofs,):
            raise ShapeMismatchError("fluid vector has shape {}, expected ({},)".format(v.shape, self.num_dofs))
        return self._transpose @ v

    def restrict_matrix(self, matrix):
        return (self._transpose @ matrix @ self.matrix).tocsr()

    def extend_matrix(self, matrix):
        return (self.matrix @ matrix @ self._transpose).tocsr()


def lifting_apply(lifting, w):
    return lifting.apply(w)


@dataclass(frozen=True)
class ScheduleEvent:
    kind: str
    ordinal: int
    time: float

    def label(self):
        return "{}{}".format(self.kind, self.ordinal)


def jagged_schedule(n_fluid, n_solid, tau_coarse=1.0, interval=1):
    """
    Event order of one coarse interval: fluid step n runs before solid
    step m iff n / n_fluid <= m / n_solid. Comparisons are done on the
    integers n * n_solid and m * n_fluid so ties are exact.
    """
    if n_fluid < 1 or n_solid < 1:
        raise ValueError("step counts must be positive, got F {} S {}".format(n_fluid, n_solid))
    tau_f = tau_coarse / n_fluid
    tau_s = tau_coarse / n_solid
    events = []
    n_next = 1
    for m in range(1, n_solid + 1):
        for n in range(n_next, n_fluid + 1):
            if (m - 1) * n_fluid < n * n_solid <= m * n_fluid:
                events.append(ScheduleEvent(FLUID_STEP, n, ((interval - 1) * n_fluid + n) * tau_f))
                n_next = n + 1
            else:
                break
        events.append(ScheduleEvent(SOLID_STEP, m, ((interval - 1) * n_solid + m) * tau_s))
    return events


def format_schedule(n_fluid, n_solid, tau_coarse=1.0):
    lines = ["# F {} S {} coarse interval of {!r} s".format(n_fluid, n_solid, tau_coarse)]
    for e in jagged_schedule(n_fluid, n_solid, tau_coarse):
        lines.append("{:<4} t = {:.6e}".format(e.label(), e.time))
    lines.append(" ".join(e.label() for e in jagged_schedule(n_fluid, n_solid, tau_coarse)))
    return "\n".join(lines) + "\n"


@dataclass
class StepRecord:
    kind: str
    ordinal: int
    t: float
    energy: float


@dataclass
class Trajectory:
    """
    Outcome of one scheme run. `records` holds one entry per executed
    step; `states` the (kind, fluid, solid) snapshots kept at `stride`.
    """
    scheme: str
    rate: int
    stride: int = 0
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    fluid: FluidState = None
    solid: SolidState = None
    stable: bool = True
    message: str = ''
    seconds: float = 0.0

    def record(self, kind, ordinal, t, energy, fluid, solid):
        self.records.append(StepRecord(kind, ordinal, t, energy))
        self.fluid = fluid
        self.solid = solid
        if self.stride and len(self.records) % self.stride == 0:
            self.states.append((kind, fluid, solid))

    @property
    def max_energy(self):
        return max([r.energy for r in self.records], default=0.0)

    def states_equal(self, other):
        """
        Bitwise comparison of the step records and kept snapshots.
        """
        if len(self.records) != len(other.records) or len(self.states) != len(other.states):
            return False
        for a, b in zip(self.records, other.records):
            if (a.kind, a.t) != (b.kind, b.t) or not np.array_equal(a.energy, b.energy):
                return False
        for (ka, fa, sa), (kb, fb, sb) in zip(self.states, other.states):
            if ka != kb:
                return False
            for x, y in ((fa.u, fb.u), (fa.p, fb.p), (sa.d, sb.d), (sa.dd, sb.dd)):
                if not np.array_equal(x, y):
                    return False
        return True

    def save(self, path):
        arrays = {
            'times': np.array([r.t for r in self.records]),
            'kinds': np.array([r.kind for r in self.records]),
            'energy': np.array([r.energy for r in self.records]),
            'final_u': self.fluid.u, 'final_p': self.fluid.p,
            'final_d': self.solid.d, 'final_dd': self.solid.dd,
        }
        for i, (kind, fluid, solid) in enumerate(self.states):
            arrays['t_{}'.format(i)] = np.array([fluid.t, solid.t])
            arrays['u_{}'.format(i)] = fluid.u
            arrays['p_{}'.format(i)] = fluid.p
            arrays['d_{}'.format(i)] = solid.d
            arrays['dd_{}'.format(i)] = solid.dd
        np.savez(path, **arrays)

    def encode(self):
        return {
            'scheme': self.scheme,
            'rate': self.rate,
            'steps': len(self.records),
            'final_time': self.records[-1].t if self.records else 0.0,
            'max_energy': self.max_energy,
            'stable': self.stable,
            'message': self.message,
            'seconds': self.seconds,
        }


class CoupledProblem(object):
    """
    Everything on one spatial grid: mesh, fluid and string forms, lifting,
    and factorized solvers cached per step length.
    """

    def __init__(self, rate, physics=None, settings=None, body_force=None):
        self.rate = rate
        self.physics = physics or Physics()
        self.settings = settings or SchemeSettings()
        self.mesh = build_mesh(rate, self.physics.length, self.physics.radius,
                               self.settings.h_base, self.settings.max_nodes)
        self.xs = interface_coordinates(self.mesh)
        self.fluid_forms = FluidForms(self.mesh, self.physics.fluid, body_force)
        self.string_forms = StringForms(self.xs, self.physics.solid)
        self.lifting = LiftingOperator(self.mesh, self.fluid_forms.dofmap)
        self._fluid_solvers = {}
        self._solid_solvers = {}

    def fluid_solver(self, tau, extr, rate_tau=None):
        key = (tau, extr, rate_tau)
        if key not in self._fluid_solvers:
            logging.info("Factorizing fluid operator at rate {} for tau = {:.6g}".format(self.rate, tau))
            self._fluid_solvers[key] = FluidSolver(
                self.fluid_forms, tau, self.physics.solid.inertia, self.lifting,
                self.physics.inlet, extr=extr, rate_tau=rate_tau)
        return self._fluid_solvers[key]

    def solid_solver(self, tau):
        if tau not in self._solid_solvers:
            self._solid_solvers[tau] = StringSolver(self.string_forms, tau)
        return self._solid_solvers[tau]

    def initial_states(self):
        return FluidState.zero(self.mesh.num_nodes), SolidState.zero(self.string_forms.size)

    def energy(self, fluid, solid):
        return self.fluid_forms.kinetic_energy(fluid) + self.string_forms.energy(solid)


def blowup_message(fluid, solid, threshold, t):
    size = max(fluid.max_norm(), solid.max_norm())
    if not np.isfinite(size) or size > threshold:
        return "state norm {:.3e} exceeded {:.1e} at t = {:.6e}".format(size, threshold, t)
    return None


def step_count(t_final, tau, what):
    count = t_final / tau
    steps = int(round(count))
    if steps < 1 or abs(count - steps) > 1e-6 * max(1.0, count):
        raise ValueError("T_final = {} is not a multiple of the {} step {}".format(t_final, what, tau))
    return steps


class ExplicitCoupling(object):
    """
    State of one partitioned run: per-field histories and the trajectory.
    Fluid and solid events may be issued in any order; each consumes the
    other field's latest data.
    """

    def __init__(self, problem, scheme, stride=0):
        self.problem = problem
        fluid0, solid0 = problem.initial_states()
        self.fluid_hist = HistoryBuffer()
        self.solid_hist = HistoryBuffer()
        self.fluid_hist.push(fluid0.t, fluid0)
        self.solid_hist.push(solid0.t, solid0)
        self.trajectory = Trajectory(scheme, problem.rate, stride, fluid=fluid0, solid=solid0)
        self._fluid_tau = None

    def fluid_event(self, solver, ordinal, t):
        state = solver.solve_step(self.fluid_hist, self.solid_hist, t_new=t)
        self.fluid_hist.push(t, state)
        self._fluid_tau = solver.tau
        return self._after(FLUID_STEP, ordinal, t)

    def solid_event(self, solver, ordinal, t):
        fluid_now = self.fluid_hist.latest
        fluid_prev = self.fluid_hist[1] if len(self.fluid_hist) > 1 else fluid_now
        load = fluid_residual_load(fluid_prev, fluid_now, self._fluid_tau or 0.0,
                                   self.problem.lifting, self.problem.fluid_forms)
        state = solver.solve_step(self.solid_hist.latest, load, t_new=t)
        self.solid_hist.push(t, state)
        return self._after(SOLID_STEP, ordinal, t)

    def _after(self, kind, ordinal, t):
        fluid = self.fluid_hist.latest
        solid = self.solid_hist.latest
        energy = self.problem.energy(fluid, solid)
        self.trajectory.record(kind, ordinal, t, energy, fluid, solid)
        return self.check(fluid, solid, t)

    def check(self, fluid, solid, t):
        message = blowup_message(fluid, solid, self.problem.settings.blowup_threshold, t)
        if message:
            self.trajectory.stable = False
            self.trajectory.message = message
            logging.warning("{} at rate {}: {}".format(self.trajectory.scheme, self.problem.rate, message))
            return False
        return True


def run_ern(rate, extr=1, t_final=0.015, physics=None, settings=None, stride=0, problem=None):
    """
    Explicit Robin-Neumann scheme on the fine grid tau_3 = tau_base / 2^rate:
    a fluid step with the solid data of step n-1, then a solid step with
    the fluid data of step n.
    """
    started = time.time()
    problem = problem or CoupledProblem(rate, physics, settings)
    tau = problem.settings.fine_step(rate)
    steps = step_count(t_final, tau, 'fine')
    fluid = problem.fluid_solver(tau, extr, rate_tau=tau)
    solid = problem.solid_solver(tau)
    run = ExplicitCoupling(problem, 'ern', stride)

    logging.info("ERN at rate {}: {} steps of {:.6g} s".format(rate, steps, tau))
    for n in range(1, steps + 1):
        t = n * tau
        if not run.fluid_event(fluid, n, t) or not run.solid_event(solid, n, t):
            break
    run.trajectory.seconds = time.time() - started
    logging.info("ERN at rate {} finished: {}".format(rate, run.trajectory.encode()))
    return run.trajectory


def run_jagged(config, rate, t_final=0.015, physics=None, settings=None, stride=0, problem=None):
    """
    Jagged-time-step scheme: in each coarse interval the fluid takes
    n_fluid steps and the solid n_solid steps, interleaved by time.
    """
    started = time.time()
    problem = problem or CoupledProblem(rate, physics, settings)
    intervals = step_count(t_final, config.tau_coarse, 'coarse')
    tau_f = config.tau_fluid
    tau_s = config.tau_solid
    rate_tau = tau_s if problem.settings.robin_rate_grid == 'solid' else tau_f
    fluid = problem.fluid_solver(tau_f, config.extr, rate_tau=rate_tau)
    solid = problem.solid_solver(tau_s)
    run = ExplicitCoupling(problem, 'jagged', stride)
    if not config.efficient:
        logging.debug("{} lies outside the efficient regime".format(config.name()))

    logging.info("{} at rate {}: {} coarse intervals of {:.6g} s".format(
        config.name(), rate, intervals, config.tau_coarse))
    ok = True
    for i in range(1, intervals + 1):
        for event in jagged_schedule(config.n_fluid, config.n_solid, config.tau_coarse, i):
            if event.kind == FLUID_STEP:
                ok = run.fluid_event(fluid, event.ordinal, event.time)
            else:
                ok = run.solid_event(solid, event.ordinal, event.time)
            if not ok:
                break
        if not ok:
            break
    run.trajectory.seconds = time.time() - started
    logging.info("{} at rate {} finished: {}".format(config.name(), rate, run.trajectory.encode()))
    return run.trajectory


class MonolithicSolver(object):
    """
    Backward Euler step of the fully coupled problem. The wall velocity is
    the fluid's uy on Sigma (shared dofs), so the string's inertia and
    elasticity are added to those rows of the fluid operator.
    """

    def __init__(self, problem, tau):
        self.problem = problem
        self.tau = tau
        forms = problem.fluid_forms
        string = problem.string_forms
        solid = problem.physics.solid
        wall = tau * string.elastic
        if string.viscous() is not None:
            wall = wall + string.viscous()
        matrix = (forms.operator(tau, solid.inertia / tau) + problem.lifting.extend_matrix(wall)).tocsr()
        self.system = ConstrainedSystem(matrix, forms.bc)
        self._solver = LinearSolver(self.system.matrix, label='monolithic tau={:.6g}'.format(tau))
        self._sigma_mass = problem.lifting.restrict_matrix(forms.interface_mass)

    def solve_step(self, fluid_prev, solid_prev, t_new):
        problem = self.problem
        forms = problem.fluid_forms
        solid = problem.physics.solid
        b = (forms.params.rho / self.tau) * (forms.lumped_mass @ fluid_prev.vector())
        wall = (solid.inertia / self.tau) * (self._sigma_mass @ solid_prev.dd) \
            - problem.string_forms.elastic @ solid_prev.d
        b = b + problem.lifting.apply(wall) + forms.external_load(problem.physics.inlet, t_new)
        x = self.system.expand(self._solver.solve(self.system.reduce(b)))
        fluid = FluidState.from_vector(x, fluid_prev.step_index + 1, t_new)
        dd = problem.lifting.restrict(x)
        solid_state = SolidState(solid_prev.d + self.tau * dd, dd, solid_prev.step_index + 1, t_new)
        return fluid, solid_state


def run_monolithic_reference(tau, rate_space, t_final=0.015, physics=None, settings=None,
                             stride=0, problem=None):
    """
    Fully implicit reference: one coupled linear system per step.
    """
    if tau <= 0:
        raise ValueError("reference time step must be positive, got {}".format(tau))
    started = time.time()
    problem = problem or CoupledProblem(rate_space, physics, settings)
    steps = step_count(t_final, tau, 'reference')
    solver = MonolithicSolver(problem, tau)
    fluid, solid = problem.initial_states()
    trajectory = Trajectory('reference', rate_space, stride, fluid=fluid, solid=solid)

    logging.info("Monolithic reference at space rate {}: {} steps of {:.6g} s".format(rate_space, steps, tau))
    for n in range(1, steps + 1):
        t = n * tau
        fluid, solid = solver.solve_step(fluid, solid, t)
        trajectory.record(MONOLITHIC_STEP, n, t, problem.energy(fluid, solid), fluid, solid)
        message = blowup_message(fluid, solid, problem.settings.blowup_threshold, t)
        if message:
            trajectory.stable = False
            trajectory.message = message
            logging.warning("Reference at space rate {}: {}".format(rate_space, message))
            break
        if n % 100 == 0:
            logging.info("Reference step {}/{} (t = {:.6e})".format(n, steps, t))
    trajectory.seconds = time.time() - started
    logging.info("Monolithic reference finished: {}".format(trajectory.encode()))
    return trajectory
