"""
CSV and text artifacts of runs and studies.
"""
import os
import csv
import logging
from dataclasses import dataclass, field

from jaggedfsi.coupling import format_schedule

REPORT_HEADER = ['rate', 'E', 'O', 'seconds', 'stable']
SWEEP_HEADER = ['nf', 'ns'] + REPORT_HEADER
PROFILE_HEADER = ['x', 'dy']


@dataclass
class ReportRow:
    rate: int
    error: float = None
    order: float = None
    seconds: float = 0.0
    stable: bool = True

    def cells(self):
        return [str(self.rate), _fmt(self.error), _fmt(self.order), _fmt(self.seconds),
                'true' if self.stable else 'false']


@dataclass
class ErrorReport:
    """
    One row per study rate, in ascending rate order. `profiles` maps a
    rate to its final (xs, SolidState) and `reference` holds the same for
    the reference run; neither is serialized.
    """
    name: str = ''
    rows: list = field(default_factory=list)
    profiles: dict = field(default_factory=dict)
    reference: tuple = None

    @property
    def stable(self):
        return all(r.stable for r in self.rows)

    def errors(self):
        return [r.error for r in self.rows]

    def orders(self):
        return [r.order for r in self.rows]

    def encode(self):
        return {
            'name': self.name,
            'rows': [dict(zip(REPORT_HEADER, r.cells())) for r in self.rows],
        }


def _fmt(value):
    if value is None:
        return ''
    return '{:.6g}'.format(value)


def _parse(cell):
    return float(cell) if cell != '' else None


def emit_report(report, path):
    with open(path, 'w', newline='') as f:
        w = csv.writer(f)
        w.writerow(REPORT_HEADER)
        for row in report.rows:
            w.writerow(row.cells())
    logging.info("Wrote report {} ({} rows)".format(path, len(report.rows)))
    return path


def parse_report(path, name=''):
    report = ErrorReport(name)
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != REPORT_HEADER:
            raise ValueError("{} does not carry the report header {}".format(path, ','.join(REPORT_HEADER)))
        for line in reader:
            report.rows.append(ReportRow(int(line['rate']), _parse(line['E']), _parse(line['O']),
                                         _parse(line['seconds']) or 0.0, line['stable'] == 'true'))
    return report


def emit_displacement_profile(solid, path, xs):
    """
    CSV "x,dy" over the interface nodes, ascending x.
    """
    if len(xs) != len(solid.d):
        raise ValueError("{} coordinates for {} displacements".format(len(xs), len(solid.d)))
    with open(path, 'w', newline='') as f:
        w = csv.writer(f)
        w.writerow(PROFILE_HEADER)
        for x, dy in zip(xs, solid.d):
            w.writerow([repr(float(x)), repr(float(dy))])
    logging.info("Wrote displacement profile {} ({} nodes)".format(path, len(xs)))
    return path


def parse_profile(path):
    with open(path, newline='') as f:
        reader = csv.reader(f)
        next(reader)
        rows = [(float(x), float(dy)) for x, dy in reader]
    return [x for x, _ in rows], [dy for _, dy in rows]


def schedule_filename(n_fluid, n_solid):
    return 'schedule_{}_{}.txt'.format(n_fluid, n_solid)


def emit_schedule(n_fluid, n_solid, tau_coarse, out_dir):
    path = os.path.join(out_dir, schedule_filename(n_fluid, n_solid))
    with open(path, 'w') as f:
        f.write(format_schedule(n_fluid, n_solid, tau_coarse))
    return path


def emit_profiles(report, out_dir):
    paths = []
    for rate in sorted(report.profiles):
        xs, solid = report.profiles[rate]
        name = "profile_rate{}.csv".format(rate)
        paths.append(emit_displacement_profile(solid, os.path.join(out_dir, name), xs))
    if report.reference is not None:
        xs, solid = report.reference
        paths.append(emit_displacement_profile(solid, os.path.join(out_dir, "profile_reference.csv"), xs))
    return paths


def emit_sweep(entries, path):
    """
    `entries` is a list of (n_fluid, n_solid, ErrorReport).
    """
    with open(path, 'w', newline='') as f:
        w = csv.writer(f)
        w.writerow(SWEEP_HEADER)
        for n_fluid, n_solid, report in entries:
            for row in report.rows:
                w.writerow([str(n_fluid), str(n_solid)] + row.cells())
    logging.info("Wrote sweep summary {} ({} instances)".format(path, len(entries)))
    return path
