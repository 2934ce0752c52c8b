import math

import numpy as np
import pytest

from jaggedfsi.coupling import SchemeSettings
from jaggedfsi.model import ReferenceCache, ReferenceRun
from jaggedfsi.report import ErrorReport, ReportRow
from jaggedfsi.solid import SolidParams
from jaggedfsi.worker import (NestedGridError, StudyConfig, Worker, compute_order, fill_orders, interface_grid,
                              reference_rate_for, relative_error, restrict_to_coarse, run_study)

TABLE_1 = [0.959089, 0.719217, 0.435036, 0.241714, 0.128601]
TABLE_1_ORDERS = [0.415238, 0.725292, 0.847834, 0.910399]


def test_compute_order_reproduces_table():
    for i, expected in enumerate(TABLE_1_ORDERS):
        assert compute_order(TABLE_1[i], TABLE_1[i + 1]) == pytest.approx(expected, abs=5e-4)


def test_compute_order_geometric_sequence():
    errors = [3.0 * 2.0 ** -k for k in range(6)]
    for a, b in zip(errors, errors[1:]):
        assert compute_order(a, b) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("pair", [(0.0, 0.1), (0.1, 0.0), (-1.0, 0.5), (None, 0.5)])
def test_compute_order_rejects_non_positive(pair):
    with pytest.raises(ValueError):
        compute_order(*pair)


@pytest.fixture
def reference():
    xs = interface_grid(61)
    d = np.sin(math.pi * xs / 6.0) * 1e-2
    d[[0, -1]] = 0.0
    return d


def test_relative_error_examples(reference):
    params = SolidParams()
    assert relative_error(reference, reference, params) == 0.0
    assert relative_error(np.zeros(61), reference, params) == pytest.approx(1.0)
    assert relative_error(1.5 * reference, reference, params) == pytest.approx(0.5)


def test_relative_error_restricts_nested_reference(reference):
    fine = np.interp(interface_grid(241), interface_grid(61), reference)
    assert relative_error(reference, fine) == pytest.approx(0.0, abs=1e-12)
    assert np.array_equal(restrict_to_coarse(fine, 61), fine[::4])


def test_relative_error_rejects_bad_grids(reference):
    with pytest.raises(NestedGridError):
        relative_error(np.zeros(41), reference)
    with pytest.raises(NestedGridError):
        restrict_to_coarse(np.zeros(181), 61)
    with pytest.raises(ValueError):
        relative_error(np.zeros(61), np.zeros(61))


def test_interface_grid_matches_mesh():
    from jaggedfsi.mesh import build_mesh, interface_coordinates
    assert np.array_equal(interface_grid(121), interface_coordinates(build_mesh(1)))


def test_reference_rate_for():
    assert reference_rate_for(6.25e-3, 0.1) == 4
    assert reference_rate_for(0.1, 0.1) == 0
    with pytest.raises(NestedGridError):
        reference_rate_for(0.03, 0.1)


def test_study_config_defaults():
    config = StudyConfig()
    assert config.physics.fluid.mu == 0.035
    assert config.physics.solid.young == 0.75e6
    assert config.physics.inlet.p_max == 2e4
    assert config.t_final == 0.015
    tau, rate = config.reference_grid()
    assert tau == pytest.approx(1.5625e-5)
    assert rate == 4
    assert config.name == "ERN"


@pytest.mark.parametrize("kwargs", [
    {'rates': []},
    {'rates': [2, 1]},
    {'scheme': 'jagged'},
    {'scheme': 'implicit'},
    {'workers': 0},
])
def test_study_config_rejects(kwargs):
    with pytest.raises(ValueError):
        StudyConfig(**kwargs)


def test_reference_key_depends_on_physics():
    a = StudyConfig()
    b = StudyConfig(reference_tau=1e-5)
    assert a.reference_key() == StudyConfig().reference_key()
    assert a.reference_key() != b.reference_key()


def test_fill_orders():
    report = ErrorReport('x', [ReportRow(0, 0.959089), ReportRow(1, 0.719217), ReportRow(2, None, stable=False),
                               ReportRow(3, 0.241714)])
    fill_orders(report)
    assert report.rows[0].order is None
    assert report.rows[1].order == pytest.approx(0.415238, abs=5e-4)
    assert report.rows[2].order is None
    assert report.rows[3].order is None


def small_study(scheme, cache_dir, **kwargs):
    return StudyConfig(scheme=scheme, rates=[0, 1], t_final=5e-3, reference_tau=2.5e-4,
                       reference_rate=1, cache_dir=str(cache_dir), **kwargs)


def test_small_study_and_degeneration(tmp_path):
    cache = ReferenceCache(str(tmp_path))
    ern = run_study(small_study('ern', tmp_path), cache)
    jagged = run_study(small_study('jagged', tmp_path, n_fluid=10, n_solid=10, workers=2), cache)

    assert [r.rate for r in ern.rows] == [0, 1]
    assert ern.rows[0].order is None and ern.rows[1].order is not None
    assert all(r.stable and r.error >= 0.0 for r in ern.rows)
    assert ern.errors() == jagged.errors()
    assert ern.orders() == jagged.orders()
    assert sorted(ern.profiles) == [0, 1]
    assert ern.reference[0].size == 121
    assert ReferenceRun.count(cache.db) == 1
    cache.close()


def test_stride_does_not_change_errors(tmp_path):
    cache = ReferenceCache(str(tmp_path))
    plain = run_study(small_study('ern', tmp_path), cache)
    strided = run_study(small_study('ern', tmp_path, stride=3), cache)
    assert plain.errors() == strided.errors()
    cache.close()


def test_failed_run_is_recorded_unstable(tmp_path):
    cache = ReferenceCache(str(tmp_path))
    config = small_study('ern', tmp_path)
    config.settings = SchemeSettings(max_nodes=500)
    config.reference_rate = 0
    worker = Worker(config, cache)
    ref = {'d': np.ones(61)}
    row, profile = worker.evaluate(1, ref['d'])
    assert not row.stable and row.error is None and profile is None
    cache.close()


def desk_study(tmp_path_factory, scheme, rates, **kwargs):
    cache_dir = tmp_path_factory.getbasetemp() / "desk-cache"
    return run_study(StudyConfig(scheme=scheme, rates=rates, cache_dir=str(cache_dir), workers=2, **kwargs))


@pytest.fixture(scope="module")
def ern_desk(tmp_path_factory):
    return desk_study(tmp_path_factory, 'ern', [0, 1, 2, 3])


@pytest.fixture(scope="module")
def f4s16_desk(tmp_path_factory):
    return desk_study(tmp_path_factory, 'jagged', [0, 1, 2, 3], n_fluid=4, n_solid=16)


@pytest.fixture(scope="module")
def f5s15_desk(tmp_path_factory):
    return desk_study(tmp_path_factory, 'jagged', [0, 1, 2, 3], n_fluid=5, n_solid=15)


@pytest.mark.slow
def test_ern_converges(ern_desk):
    errors = ern_desk.errors()
    assert all(a > b for a, b in zip(errors, errors[1:]))
    assert ern_desk.rows[-1].order >= 0.7


@pytest.mark.slow
def test_jagged_superlinear(ern_desk, f4s16_desk):
    assert f4s16_desk.rows[-1].order >= 1.0
    assert f4s16_desk.rows[-1].order > ern_desk.rows[-1].order


@pytest.mark.slow
def test_jagged_accuracy_and_cost(ern_desk, f5s15_desk):
    assert f5s15_desk.rows[-1].error <= 1.05 * ern_desk.rows[-1].error
    assert f5s15_desk.rows[-1].seconds < ern_desk.rows[-1].seconds


@pytest.mark.slow
def test_degraded_multirate(tmp_path_factory, ern_desk):
    report = desk_study(tmp_path_factory, 'jagged', [0, 1, 2, 3], n_fluid=1, n_solid=20)
    assert report.stable
    for row, ern_row in zip(report.rows, ern_desk.rows):
        assert row.error > ern_row.error
        assert row.error > 0.5
