import numpy as np
import pytest

from jaggedfsi.report import (ErrorReport, ReportRow, emit_displacement_profile, emit_profiles, emit_report,
                              emit_schedule, emit_sweep, parse_profile, parse_report)
from jaggedfsi.solid import SolidState
from jaggedfsi.worker import fill_orders

TABLE_1 = [0.959089, 0.719217, 0.435036, 0.241714, 0.128601]


def table_report():
    report = ErrorReport('ERN', [ReportRow(rate, e, seconds=1.5 * (rate + 1)) for rate, e in enumerate(TABLE_1)])
    return fill_orders(report)


def test_empty_report_is_header_only(tmp_path):
    path = tmp_path / "report.csv"
    emit_report(ErrorReport(), str(path))
    assert path.read_text().splitlines() == ["rate,E,O,seconds,stable"]


def test_table_round_trip(tmp_path):
    path = tmp_path / "report.csv"
    emit_report(table_report(), str(path))
    lines = path.read_text().splitlines()
    assert lines[1] == "0,0.959089,,1.5,true"
    assert lines[2].startswith("1,0.719217,0.415")
    parsed = parse_report(str(path))
    assert parsed.errors() == TABLE_1
    assert parsed.rows[0].order is None
    assert parsed.rows[2].order == pytest.approx(0.725292, abs=5e-4)
    path2 = tmp_path / "again.csv"
    emit_report(parsed, str(path2))
    assert path2.read_text() == path.read_text()


def test_unstable_row_has_blank_error(tmp_path):
    path = tmp_path / "report.csv"
    emit_report(ErrorReport('x', [ReportRow(0, None, None, 2.0, False)]), str(path))
    assert path.read_text().splitlines()[1] == "0,,,2,false"
    assert not parse_report(str(path)).stable


def test_parse_rejects_other_files(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        parse_report(str(path))


def test_profile(tmp_path):
    xs = np.linspace(0.0, 6.0, 61)
    path = tmp_path / "profile.csv"
    emit_displacement_profile(SolidState.zero(61), str(path), xs)
    x, dy = parse_profile(str(path))
    assert len(x) == 61 and x == sorted(x)
    assert all(v == 0.0 for v in dy)
    with pytest.raises(ValueError):
        emit_displacement_profile(SolidState.zero(60), str(path), xs)


def test_profiles_and_schedule(tmp_path):
    xs = np.linspace(0.0, 6.0, 61)
    report = table_report()
    report.profiles[0] = (xs, SolidState.zero(61))
    report.reference = (xs, SolidState.zero(61))
    paths = emit_profiles(report, str(tmp_path))
    assert sorted(p.split('/')[-1] for p in paths) == ['profile_rate0.csv', 'profile_reference.csv']
    schedule = emit_schedule(3, 2, 5e-3, str(tmp_path))
    assert schedule.endswith('schedule_3_2.txt')
    assert open(schedule).read().splitlines()[-1] == "F1 S1 F2 F3 S2"


def test_sweep(tmp_path):
    path = tmp_path / "sweep.csv"
    emit_sweep([(4, 16, table_report()), (5, 15, table_report())], str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "nf,ns,rate,E,O,seconds,stable"
    assert len(lines) == 1 + 2 * len(TABLE_1)
    assert lines[6].startswith("5,15,0,0.959089,,")


def test_encode_uses_report_cells():
    encoded = table_report().encode()
    assert encoded['name'] == 'ERN'
    assert len(encoded['rows']) == len(TABLE_1)
    assert encoded['rows'][0] == {'rate': '0', 'E': '0.959089', 'O': '', 'seconds': '1.5', 'stable': 'true'}
    assert encoded['rows'][1]['O'].startswith('0.415')
