#!/usr/bin/env python
import sys
import shutil
import getopt
import logging

from jaggedfsi.config import load_config
from jaggedfsi.model import Base, ReferenceRun, get_engine, get_session

logging.basicConfig(level=logging.INFO)

USAGE = 'Usage: initcache.py -c <configFile> [-f true] [-l true]'


def init_cache(values, force=False):
    cache_dir = values['study.cache_dir']
    if force:
        logging.info("Removing reference cache {}".format(cache_dir))
        shutil.rmtree(cache_dir, ignore_errors=True)
    engine = get_engine(cache_dir)
    Base.metadata.create_all(engine)
    return engine


def list_cache(engine):
    db = get_session(engine)
    for run in ReferenceRun.list(db):
        logging.info("{}".format(run))
    logging.info("{} cached reference run(s)".format(ReferenceRun.count(db)))


if __name__ == '__main__':
    argv = sys.argv[1:]
    conf = None
    force = None
    listing = None

    try:
        opts, args = getopt.getopt(argv, "hc:f:l:")
    except getopt.GetoptError:
        print(USAGE)
        sys.exit(2)

    for opt, arg in opts:
        if opt == "-h":
            print(USAGE)
            sys.exit(0)
        elif opt == "-c":
            conf = arg
        elif opt == "-f":
            force = arg
        elif opt == "-l":
            listing = arg

    values = load_config(conf)
    engine = init_cache(values, force=force == 'true')
    if listing == 'true':
        list_cache(engine)
