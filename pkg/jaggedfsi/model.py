import os
import time
import logging
import datetime

import numpy as np
from sqlalchemy import create_engine, Column, DateTime, Float, Integer, String
from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import declarative_base, scoped_session, sessionmaker

Base = declarative_base()

CACHE_DB = 'cache.db'


class CacheError(RuntimeError):
    pass


def get_engine(cache_dir):
    os.makedirs(cache_dir, exist_ok=True)
    return create_engine('sqlite:///{}'.format(os.path.join(cache_dir, CACHE_DB)),
                         connect_args={'check_same_thread': False, 'timeout': 30}, echo=False)


def get_session(engine):
    sess = scoped_session(sessionmaker(autoflush=True))
    sess.configure(bind=engine)
    return sess


class ReferenceRun(Base):
    """
    One cached monolithic reference. The row is created when a caller
    starts computing it, so the unique key doubles as a lock.
    """
    __tablename__ = "reference_runs"
    key = Column(String(64), primary_key=True)
    tau = Column(Float, nullable=False)
    rate_space = Column(Integer, nullable=False)
    t_final = Column(Float, nullable=False)
    status = Column(String(8), index=True, nullable=False)
    path = Column(String(500))
    seconds = Column(Float)
    created_at = Column(DateTime, default=datetime.datetime.utcnow)

    VALID_STATUS = ['running', 'done']

    @staticmethod
    def get(session, key):
        return session.get(ReferenceRun, key)

    @staticmethod
    def claim(session, key, tau, rate_space, t_final):
        """
        Create the row in state 'running'. Returns False when another
        caller got there first.
        """
        run = ReferenceRun(key=key, tau=tau, rate_space=rate_space, t_final=t_final, status='running')
        try:
            session.add(run)
            session.commit()
        except IntegrityError:
            session.rollback()
            return False
        return True

    @staticmethod
    def finish(session, key, path, seconds):
        run = ReferenceRun.get(session, key)
        if run is None:
            raise CacheError("no claimed reference run for key {}".format(key))
        run.status = 'done'
        run.path = path
        run.seconds = seconds
        session.add(run)
        session.commit()
        return run

    @staticmethod
    def release(session, key):
        run = ReferenceRun.get(session, key)
        if run is not None and run.status == 'running':
            session.delete(run)
            session.commit()
            return True
        return False

    @staticmethod
    def list_query(session, status=None):
        q = session.query(ReferenceRun)
        if status:
            q = q.filter(ReferenceRun.status == status)
        return q.order_by(ReferenceRun.created_at)

    @staticmethod
    def count(session, status=None):
        return ReferenceRun.list_query(session, status).count()

    @staticmethod
    def list(session, status=None):
        return [r.encode() for r in ReferenceRun.list_query(session, status).all()]

    def encode(self):
        encoded = {
            'key': self.key,
            'tau': self.tau,
            'rate_space': self.rate_space,
            't_final': self.t_final,
            'status': self.status,
        }
        if self.status == 'done':
            encoded['path'] = self.path
            encoded['seconds'] = self.seconds
        return encoded


class ReferenceCache(object):
    """
    Reference payloads (dicts of arrays) stored as .npz files under
    `cache_dir` and indexed in a sqlite database next to them.
    """

    def __init__(self, cache_dir, poll=2.0, timeout=None):
        self.cache_dir = cache_dir
        self.poll = poll
        self.timeout = timeout
        self.engine = get_engine(cache_dir)
        Base.metadata.create_all(self.engine)
        self.db = get_session(self.engine)

    def payload_path(self, key):
        return os.path.join(self.cache_dir, '{}.npz'.format(key))

    @staticmethod
    def load(path):
        if not os.path.exists(path):
            raise CacheError("cached payload {} is missing".format(path))
        with np.load(path) as data:
            return {name: data[name] for name in data.files}

    def get_or_compute(self, key, compute, tau, rate_space, t_final):
        """
        Return the payload for `key`, calling `compute()` only if nobody
        has stored or claimed it yet. Callers that lose the claim wait
        for the winner to finish.
        """
        db = self.db
        started = time.time()
        while True:
            run = ReferenceRun.get(db, key)
            if run is None:
                if ReferenceRun.claim(db, key, tau, rate_space, t_final):
                    logging.info("Reference cache miss for {}, computing".format(key))
                    return self._compute(key, compute)
                continue
            if run.status == 'done':
                logging.info("Reference cache hit for {} ({})".format(key, run.path))
                return ReferenceCache.load(run.path)
            if self.timeout is not None and time.time() - started > self.timeout:
                raise CacheError("timed out waiting for reference {}".format(key))
            logging.debug("Waiting for reference {} computed elsewhere".format(key))
            time.sleep(self.poll)
            db.expire_all()

    def _compute(self, key, compute):
        db = self.db
        started = time.time()
        try:
            payload = compute()
            path = self.payload_path(key)
            np.savez(path, **payload)
        except Exception:
            db.rollback()
            ReferenceRun.release(db, key)
            raise
        ReferenceRun.finish(db, key, path, time.time() - started)
        return ReferenceCache.load(path)

    def close(self):
        self.db.remove()
        self.engine.dispose()
