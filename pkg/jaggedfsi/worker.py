import math
import json
import time
import hashlib
import logging
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from jaggedfsi.coupling import (Physics, SchemeSettings, JaggedConfig, CoupledProblem,
                                run_ern, run_jagged, run_monolithic_reference)
from jaggedfsi.mesh import LENGTH
from jaggedfsi.model import ReferenceCache
from jaggedfsi.report import ErrorReport, ReportRow
from jaggedfsi.solid import SolidParams, SolidState, StringForms, elastic_energy_norm

SCHEMES = ['ern', 'jagged', 'reference']
T_FINAL = 0.015
CACHE_DIR = '.fsi-cache'


class NestedGridError(ValueError):
    pass


class ReferenceFailure(RuntimeError):
    pass


def interface_grid(num_nodes, length=LENGTH):
    xs = np.arange(num_nodes) * (length / (num_nodes - 1))
    xs[-1] = length
    return xs


def restrict_to_coarse(d_fine, num_coarse):
    """
    Nodal restriction of a fine interface vector onto a nested coarse grid.
    """
    d_fine = np.asarray(d_fine, dtype=float)
    fine_cells = d_fine.size - 1
    coarse_cells = num_coarse - 1
    if coarse_cells < 1 or fine_cells % coarse_cells:
        raise NestedGridError("grids with {} and {} cells are not nested".format(coarse_cells, fine_cells))
    stride = fine_cells // coarse_cells
    if stride & (stride - 1):
        raise NestedGridError("refinement factor {} is not a power of two".format(stride))
    return d_fine[::stride]


def relative_error(d_test, d_ref, params=None, length=LENGTH):
    """
    |d_test - d_ref|_e / |d_ref|_e in the elastic energy norm on the grid
    of d_test, the reference restricted to its nodes.
    """
    params = params or SolidParams()
    d_test = np.asarray(d_test, dtype=float)
    d_ref = restrict_to_coarse(d_ref, d_test.size)
    forms = StringForms(interface_grid(d_test.size, length), params)
    ref_norm = elastic_energy_norm(d_ref, params, forms.xs, forms)
    if ref_norm == 0.0:
        raise ValueError("reference displacement has zero energy norm")
    return elastic_energy_norm(d_test - d_ref, params, forms.xs, forms) / ref_norm


def compute_order(e_prev, e_curr):
    if e_prev is None or e_curr is None or e_prev <= 0 or e_curr <= 0:
        raise ValueError("orders need positive errors, got {} and {}".format(e_prev, e_curr))
    return math.log(e_curr / e_prev) / math.log(0.5)


@dataclass
class StudyConfig:
    """
    One convergence study. `reference_tau`/`reference_rate` default to two
    rates finer in time and one in space than the finest study rate.
    """
    scheme: str = 'ern'
    rates: list = field(default_factory=lambda: [0, 1, 2, 3])
    n_fluid: int = None
    n_solid: int = None
    extr: int = 1
    t_final: float = T_FINAL
    physics: Physics = field(default_factory=Physics)
    settings: SchemeSettings = field(default_factory=SchemeSettings)
    reference_tau: float = None
    reference_rate: int = None
    out_dir: str = None
    workers: int = 1
    cache_dir: str = CACHE_DIR
    stride: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError("unknown scheme {}".format(self.scheme))
        if not self.rates:
            raise ValueError("a study needs at least one rate")
        if list(self.rates) != sorted(set(self.rates)) or self.rates[0] < 0:
            raise ValueError("rates must be distinct, sorted and non-negative, got {}".format(self.rates))
        if self.scheme == 'jagged' and (self.n_fluid is None or self.n_solid is None):
            raise ValueError("jagged studies need n_fluid and n_solid")
        if self.workers < 1:
            raise ValueError("worker count must be positive")

    @property
    def name(self):
        if self.scheme == 'jagged':
            return "F {} S {}".format(self.n_fluid, self.n_solid)
        return "ERN" if self.scheme == 'ern' else self.scheme

    def jagged(self, rate):
        return JaggedConfig(self.n_fluid, self.n_solid, self.settings.coarse_step(rate), self.extr)

    def reference_grid(self):
        finest = self.rates[-1]
        tau = self.reference_tau or self.settings.fine_step(finest + 2)
        rate = finest + 1 if self.reference_rate is None else self.reference_rate
        if rate < finest:
            raise NestedGridError("reference space rate {} is coarser than study rate {}".format(rate, finest))
        return tau, rate

    def reference_key(self):
        tau, rate = self.reference_grid()
        blob = dict(self.physics.encode())
        blob.update({'tau': tau, 'rate_space': rate, 't_final': self.t_final,
                     'h_base': self.settings.h_base})
        return hashlib.sha1(json.dumps(blob, sort_keys=True).encode('utf-8')).hexdigest()


def reference_rate_for(h, h_base):
    """
    Space rate of a reference mesh size; h must be h_base / 2^k.
    """
    ratio = h_base / h
    rate = int(round(math.log(ratio, 2)))
    if rate < 0 or abs(2 ** rate - ratio) > 1e-9 * ratio:
        raise NestedGridError("reference h = {} is not nested in h_base = {}".format(h, h_base))
    return rate


class Worker(object):
    """
    Runs a study: the reference (through the cache), then every rate on a
    thread pool, and assembles the report in rate order.
    """

    def __init__(self, config, cache=None):
        self._config = config
        self._cache = cache

    @property
    def cache(self):
        if self._cache is None:
            self._cache = ReferenceCache(self._config.cache_dir)
        return self._cache

    def run_scheme(self, rate, problem=None):
        c = self._config
        if c.scheme == 'ern':
            return run_ern(rate, c.extr, c.t_final, c.physics, c.settings, c.stride, problem)
        if c.scheme == 'jagged':
            return run_jagged(c.jagged(rate), rate, c.t_final, c.physics, c.settings, c.stride, problem)
        return run_monolithic_reference(c.settings.fine_step(rate), rate, c.t_final,
                                        c.physics, c.settings, c.stride, problem)

    def compute_reference(self):
        c = self._config
        tau, rate = c.reference_grid()
        logging.info("Computing reference at tau = {:.6g}, space rate {}".format(tau, rate))
        problem = CoupledProblem(rate, c.physics, c.settings)
        trajectory = run_monolithic_reference(tau, rate, c.t_final, c.physics, c.settings, 0, problem)
        if not trajectory.stable:
            raise ReferenceFailure("reference run blew up: {}".format(trajectory.message))
        return {'xs': problem.xs, 'd': trajectory.solid.d, 'dd': trajectory.solid.dd,
                'seconds': np.array(trajectory.seconds)}

    def reference(self):
        c = self._config
        tau, rate = c.reference_grid()
        return self.cache.get_or_compute(c.reference_key(), self.compute_reference, tau, rate, c.t_final)

    def evaluate(self, rate, d_ref):
        """
        One study row without its order. Failures are logged and reported
        as unstable rows.
        """
        started = time.time()
        try:
            problem = CoupledProblem(rate, self._config.physics, self._config.settings)
            trajectory = self.run_scheme(rate, problem)
        except Exception as e:
            logging.error("{} at rate {} failed: {}".format(self._config.name, rate, e))
            return ReportRow(rate, seconds=time.time() - started, stable=False), None
        row = ReportRow(rate, seconds=trajectory.seconds, stable=trajectory.stable)
        if trajectory.stable:
            row.error = relative_error(trajectory.solid.d, d_ref, self._config.physics.solid,
                                       self._config.physics.length)
        logging.info("{} rate {}: E = {}, {:.1f} s".format(self._config.name, rate, row.error, row.seconds))
        return row, (problem.xs, trajectory.solid)

    def run(self):
        c = self._config
        ref = self.reference()
        report = ErrorReport(c.name)
        report.reference = (ref['xs'], SolidState(ref['d'], ref['dd'], 0, c.t_final))

        logging.info("Running {} at rates {} on {} worker(s)".format(c.name, c.rates, c.workers))
        with ThreadPoolExecutor(max_workers=c.workers) as pool:
            futures = [pool.submit(self.evaluate, rate, ref['d']) for rate in c.rates]
            results = [f.result() for f in futures]

        for row, profile in results:
            report.rows.append(row)
            if profile is not None:
                report.profiles[row.rate] = profile
        fill_orders(report)
        return report


def fill_orders(report):
    previous = None
    for row in report.rows:
        row.order = None
        if previous is not None and row.error and previous.error:
            row.order = compute_order(previous.error, row.error) / (row.rate - previous.rate)
        previous = row
    return report


def run_study(config, cache=None):
    return Worker(config, cache).run()
