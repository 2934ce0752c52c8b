#!/usr/bin/env python
"""
fsi: run single schemes, convergence studies and jagged sweeps.
"""
import os
import sys
import logging
import argparse

from jaggedfsi.config import ConfigError, DEFAULT_CONFIG, load_config, physics_from, settings_from
from jaggedfsi.coupling import CoupledProblem, JaggedConfig, run_ern, run_jagged, run_monolithic_reference, step_count
from jaggedfsi.mesh import MeshError
from jaggedfsi.report import emit_displacement_profile, emit_profiles, emit_report, emit_schedule, emit_sweep
from jaggedfsi.worker import SCHEMES, NestedGridError, ReferenceFailure, StudyConfig, reference_rate_for, run_study

EXIT_OK = 0
EXIT_UNSTABLE = 2
EXIT_CONFIG = 3


def rate_list(text):
    try:
        rates = [int(r) for r in text.split(',') if r.strip() != '']
    except ValueError:
        raise argparse.ArgumentTypeError("rates must be comma separated integers, got {}".format(text))
    if not rates:
        raise argparse.ArgumentTypeError("no rates given")
    return rates


def pair_list(text):
    pairs = []
    for item in text.split(','):
        try:
            nf, ns = item.split(':')
            pairs.append((int(nf), int(ns)))
        except ValueError:
            raise argparse.ArgumentTypeError("pairs look like 4:16,5:15, got {}".format(item))
    return pairs


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', help='config file (default conf/jaggedfsi.cfg)')
    common.add_argument('--out', default='.', help='output directory')
    common.add_argument('--extr', type=int, choices=[0, 1, 2])
    common.add_argument('--tfinal', type=float)
    common.add_argument('--stride', type=int, default=0, help='keep every n-th state')
    common.add_argument('--workers', type=int)
    common.add_argument('--cache-dir')
    common.add_argument('--strict', action='store_true', help='exit 2 on any unstable run')
    common.add_argument('-v', '--verbose', action='store_true')

    parser = argparse.ArgumentParser(prog='fsi', description=__doc__.strip())
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    run = sub.add_parser('run', parents=[common], help='run one scheme at one rate')
    run.add_argument('--scheme', choices=SCHEMES, default='ern')
    run.add_argument('--nf', type=int)
    run.add_argument('--ns', type=int)
    run.add_argument('--rate', type=int, required=True)
    run.add_argument('--reference-tau', type=float)
    run.add_argument('--dump-fluid', metavar='PATH', help='write the final fluid state as CSV')
    run.add_argument('--dump-mesh', metavar='PATH', help='write the mesh as text')

    study = sub.add_parser('study', parents=[common], help='convergence study against a reference')
    study.add_argument('--scheme', choices=SCHEMES, default='ern')
    study.add_argument('--rates', type=rate_list, default=[0, 1, 2, 3])
    study.add_argument('--nf', type=int)
    study.add_argument('--ns', type=int)
    study.add_argument('--reference-tau', type=float)
    study.add_argument('--reference-h', type=float)

    sweep = sub.add_parser('sweep', parents=[common], help='jagged studies over (nf, ns) pairs')
    sweep.add_argument('--pairs', type=pair_list, default=[(4, 16), (5, 15), (6, 14), (7, 13)])
    sweep.add_argument('--rates', type=rate_list, default=[0, 1, 2, 3])
    sweep.add_argument('--reference-tau', type=float)
    sweep.add_argument('--reference-h', type=float)
    return parser


def load_values(args):
    path = args.config
    if path is None and os.path.exists(DEFAULT_CONFIG):
        path = DEFAULT_CONFIG
    return load_config(path, {
        'scheme.extr': args.extr,
        'scheme.t_final': args.tfinal,
        'reference.tau': getattr(args, 'reference_tau', None),
        'reference.h': getattr(args, 'reference_h', None),
        'study.workers': args.workers,
        'study.cache_dir': args.cache_dir,
    })


def jagged_config(nf, ns, tau_coarse, extr):
    if nf is None or nf < 1 or ns is None or ns < 1:
        raise ConfigError("the jagged scheme needs positive --nf and --ns")
    config = JaggedConfig(nf, ns, tau_coarse, extr)
    if not config.efficient:
        logging.warning("{} is outside the efficient regime (nf < 10 and nf + ns <= 20)".format(config.name()))
    return config


def check_steps(t_final, tau, what):
    try:
        return step_count(t_final, tau, what)
    except ValueError as e:
        raise ConfigError(str(e))


def scheme_step(scheme, settings, rate):
    if scheme == 'jagged':
        return settings.coarse_step(rate), 'coarse'
    return settings.fine_step(rate), 'fine'


def study_config(values, scheme, rates, out_dir, stride, nf=None, ns=None):
    settings = settings_from(values)
    reference_rate = None
    if values['reference.h'] is not None:
        reference_rate = reference_rate_for(values['reference.h'], settings.h_base)
    if scheme == 'jagged':
        jagged_config(nf, ns, settings.coarse_step(rates[0]), values['scheme.extr'])
    try:
        config = StudyConfig(scheme=scheme, rates=rates, n_fluid=nf, n_solid=ns, extr=values['scheme.extr'],
                             t_final=values['scheme.t_final'], physics=physics_from(values), settings=settings,
                             reference_tau=values['reference.tau'], reference_rate=reference_rate,
                             out_dir=out_dir, workers=values['study.workers'],
                             cache_dir=values['study.cache_dir'], stride=stride)
    except ValueError as e:
        raise ConfigError(str(e))
    for rate in rates:
        check_steps(config.t_final, *scheme_step(scheme, settings, rate))
    check_steps(config.t_final, config.reference_grid()[0], 'reference')
    return config


def command_run(args, values):
    physics = physics_from(values)
    settings = settings_from(values)
    extr = values['scheme.extr']
    t_final = values['scheme.t_final']
    if args.scheme == 'jagged':
        config = jagged_config(args.nf, args.ns, settings.coarse_step(args.rate), extr)
        check_steps(t_final, config.tau_coarse, 'coarse')
    elif args.scheme == 'reference':
        tau = values['reference.tau'] or settings.fine_step(args.rate)
        check_steps(t_final, tau, 'reference')
    else:
        check_steps(t_final, settings.fine_step(args.rate), 'fine')
    os.makedirs(args.out, exist_ok=True)

    problem = CoupledProblem(args.rate, physics, settings)
    if args.dump_mesh:
        problem.mesh.dump(args.dump_mesh)
    if args.scheme == 'ern':
        trajectory = run_ern(args.rate, extr, t_final, physics, settings, args.stride, problem)
    elif args.scheme == 'jagged':
        emit_schedule(config.n_fluid, config.n_solid, config.tau_coarse, args.out)
        trajectory = run_jagged(config, args.rate, t_final, physics, settings, args.stride, problem)
    else:
        trajectory = run_monolithic_reference(tau, args.rate, t_final, physics, settings, args.stride, problem)

    emit_displacement_profile(trajectory.solid, os.path.join(args.out, 'profile_rate{}.csv'.format(args.rate)),
                              problem.xs)
    trajectory.save(os.path.join(args.out, '{}_rate{}.npz'.format(args.scheme, args.rate)))
    if args.dump_fluid:
        trajectory.fluid.dump(problem.mesh, args.dump_fluid)
    logging.info("Run summary: {}".format(trajectory.encode()))
    if args.strict and not trajectory.stable:
        return EXIT_UNSTABLE
    return EXIT_OK


def write_study(config, report):
    os.makedirs(config.out_dir, exist_ok=True)
    emit_report(report, os.path.join(config.out_dir, 'report.csv'))
    emit_profiles(report, config.out_dir)
    if config.scheme == 'jagged':
        emit_schedule(config.n_fluid, config.n_solid, config.settings.coarse_step(config.rates[0]), config.out_dir)


def command_study(args, values):
    config = study_config(values, args.scheme, args.rates, args.out, args.stride, args.nf, args.ns)
    report = run_study(config)
    write_study(config, report)
    logging.info("Study summary: {}".format(report.encode()))
    if args.strict and not report.stable:
        return EXIT_UNSTABLE
    return EXIT_OK


def command_sweep(args, values):
    entries = []
    for nf, ns in args.pairs:
        out_dir = os.path.join(args.out, 'F{}_S{}'.format(nf, ns))
        config = study_config(values, 'jagged', args.rates, out_dir, args.stride, nf, ns)
        report = run_study(config)
        write_study(config, report)
        logging.info("Sweep entry {}: {}".format(config.name, report.encode()))
        entries.append((nf, ns, report))
    os.makedirs(args.out, exist_ok=True)
    emit_sweep(entries, os.path.join(args.out, 'sweep.csv'))
    if args.strict and not all(report.stable for _, _, report in entries):
        return EXIT_UNSTABLE
    return EXIT_OK


COMMANDS = {
    'run': command_run,
    'study': command_study,
    'sweep': command_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        values = load_values(args)
        return COMMANDS[args.command](args, values)
    except (ConfigError, MeshError, NestedGridError) as e:
        logging.error("Invalid configuration: {}".format(e))
        return EXIT_CONFIG
    except ReferenceFailure as e:
        logging.error("No reference solution: {}".format(e))
        return EXIT_UNSTABLE


if __name__ == '__main__':
    sys.exit(main())
