import os
import logging
import configparser

from jaggedfsi.coupling import Physics, SchemeSettings
from jaggedfsi.fluid import FluidParams, InletLoad
from jaggedfsi.solid import SolidParams

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'conf', 'jaggedfsi.cfg')

# dotted key -> (type, default)
KEYS = {
    'geometry.length': (float, 6.0),
    'geometry.radius': (float, 0.5),
    'fluid.rho': (float, 1.0),
    'fluid.mu': (float, 0.035),
    'fluid.stab_gamma': (float, 1e-2),
    'solid.rho': (float, 1.1),
    'solid.eps': (float, 0.1),
    'solid.young': (float, 0.75e6),
    'solid.poisson': (float, 0.5),
    'solid.viscous_enabled': (bool, False),
    'solid.viscous_beta': (float, 0.0),
    'inlet.p_max': (float, 2e4),
    'inlet.t_star': (float, 5e-3),
    'scheme.extr': (int, 1),
    'scheme.t_final': (float, 0.015),
    'scheme.tau_base': (float, 5e-4),
    'scheme.h_base': (float, 0.1),
    'scheme.robin_rate_grid': (str, 'solid'),
    'scheme.blowup_threshold': (float, 1e10),
    'scheme.max_nodes': (int, 2000000),
    'reference.tau': (float, None),
    'reference.h': (float, None),
    'study.workers': (int, 1),
    'study.cache_dir': (str, '.fsi-cache'),
}

_ROOT = '__root__'


class ConfigError(ValueError):
    pass


def defaults():
    return dict((key, default) for key, (_, default) in KEYS.items())


def convert(key, raw):
    if key not in KEYS:
        raise ConfigError("unknown config key {}".format(key))
    kind, _ = KEYS[key]
    if raw is None:
        return None
    if not isinstance(raw, str):
        raw = str(raw)
    raw = raw.strip()
    if raw == '' or raw.lower() == 'none':
        return None
    if kind is bool:
        states = configparser.ConfigParser.BOOLEAN_STATES
        if raw.lower() not in states:
            raise ConfigError("{} = {} is not a boolean".format(key, raw))
        return states[raw.lower()]
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError("{} = {} is not a valid {}".format(key, raw, kind.__name__))


def read_config(path):
    """
    Dotted key -> raw string. Keys before the first section header are
    taken as already dotted; keys in [section] become section.key.
    """
    if not os.path.exists(path):
        raise ConfigError("config file {} not found".format(path))
    c = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as f:
            c.read_string("[{}]\n".format(_ROOT) + f.read(), source=path)
    except configparser.Error as e:
        raise ConfigError("cannot parse {}: {}".format(path, e))
    values = {}
    for section in c.sections():
        for key, raw in c.items(section):
            values[key if section == _ROOT else "{}.{}".format(section, key)] = raw
    return values


def load_config(path=None, overrides=None):
    """
    Defaults, then the file at `path`, then `overrides` (CLI flags, None
    values ignored). Returns typed values by dotted key.
    """
    values = defaults()
    if path:
        logging.info("Reading config {}".format(path))
        for key, raw in read_config(path).items():
            values[key] = convert(key, raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = convert(key, value)
    if values['scheme.extr'] not in (0, 1, 2):
        raise ConfigError("scheme.extr must be 0, 1 or 2, got {}".format(values['scheme.extr']))
    return values


def physics_from(values):
    try:
        return Physics(
            length=values['geometry.length'],
            radius=values['geometry.radius'],
            fluid=FluidParams(values['fluid.rho'], values['fluid.mu'], values['fluid.stab_gamma']),
            solid=SolidParams(values['solid.rho'], values['solid.eps'], values['solid.young'],
                              values['solid.poisson'], values['geometry.radius'],
                              values['solid.viscous_enabled'], values['solid.viscous_beta']),
            inlet=InletLoad(values['inlet.p_max'], values['inlet.t_star']))
    except ValueError as e:
        raise ConfigError("invalid physics: {}".format(e))


def settings_from(values):
    try:
        return SchemeSettings(
            tau_base=values['scheme.tau_base'],
            h_base=values['scheme.h_base'],
            robin_rate_grid=values['scheme.robin_rate_grid'],
            blowup_threshold=values['scheme.blowup_threshold'],
            max_nodes=values['scheme.max_nodes'])
    except ValueError as e:
        raise ConfigError("invalid scheme settings: {}".format(e))
