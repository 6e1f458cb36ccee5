"""
Run registry management.

This module provides the RunRegistry that records analysis runs in the
database, and a context manager that wraps one run so failures are stored
before they propagate.
"""

from contextlib import contextmanager
from datetime import datetime
import logging
import uuid

from flask import current_app
from slugify import slugify
from sqlalchemy.exc import SQLAlchemyError

from src.models.run import RunRecord, db
from src.utils.reports import json_safe

logger = logging.getLogger(__name__)


class RunRegistry:
    """
    Records falsify / estimate / test / simulate runs.
    Handles table creation, run start, completion and failure.
    """

    def __init__(self, app=None):
        self.app = app
        if app is not None:
            self.init_app(app)

    def init_app(self, app):
        """Initialize the registry with Flask app"""
        self.app = app
        app.extensions['run_registry'] = self

    def create_tables(self):
        db.create_all()
        logger.debug('Run registry tables ready')

    @staticmethod
    def make_slug(command):
        stamp = datetime.utcnow().strftime('%Y%m%d-%H%M%S')
        return slugify(f'{command} {stamp} {uuid.uuid4().hex[:6]}')

    def start(self, command, parameters=None, **summary):
        """
        Store a running entry for a command.

        Args:
            command (str): falsify, estimate, test, simulate or tune-tau
            parameters (dict): request parameters, JSON-serializable
            summary: n, mode, tau and seed columns

        Returns:
            RunRecord
        """
        record = RunRecord.record(self.make_slug(command), command, json_safe(parameters or {}), **summary)
        db.session.commit()
        logger.info(f"Started run {record.slug}")
        return record

    def finish(self, record, result):
        record.status = 'completed'
        record.result = json_safe(result)
        record.completed_at = datetime.utcnow()
        db.session.commit()
        logger.info(f"Completed run {record.slug}")
        return record

    def fail(self, record, message):
        try:
            db.session.rollback()
            record.status = 'failed'
            record.message = message
            record.completed_at = datetime.utcnow()
            db.session.commit()
        except SQLAlchemyError as e:
            logger.error(f"Error storing failure of run {record.slug}: {str(e)}")
            db.session.rollback()
        logger.warning(f"Run {record.slug} failed: {message}")
        return record

    def get(self, slug):
        return RunRecord.query.filter_by(slug=slug).first()

    def recent(self, limit=20, command=None):
        query = RunRecord.query
        if command:
            query = query.filter_by(command=command)
        return query.order_by(RunRecord.created_at.desc(), RunRecord.id.desc()).limit(limit).all()


def get_registry():
    """The registry bound to the current app."""
    return current_app.extensions.get('run_registry')


@contextmanager
def recorded_run(command, parameters=None, registry=None, **summary):
    """
    Wrap one run: the yielded dict's `result` is stored on success, the
    exception message on failure.

    Usage:
        with recorded_run('estimate', params, n=dataset.n) as run:
            run['result'] = estimate.to_dict()
    """
    registry = registry or get_registry()
    record = registry.start(command, parameters, **summary)
    run = {'record': record, 'result': None}
    try:
        yield run
    except Exception as e:
        registry.fail(record, str(e))
        raise
    registry.finish(record, run['result'])


def init_run_registry(app):
    """
    Initialize the run registry with the Flask app.

    Args:
        app: Flask application instance
    """
    return RunRegistry(app)
