"""
Run registry routes.

This module lists stored runs and returns a single run with its result.
"""

import logging

from flask import Blueprint, jsonify, request

from src.models.run import STATUSES
from src.utils.database import get_registry

logger = logging.getLogger(__name__)

runs_bp = Blueprint('runs', __name__, url_prefix='/api/v1')


@runs_bp.route('/runs', methods=['GET'])
def get_runs():
    """
    Recent runs, newest first, without results.

    Query parameters:
    - command: falsify, estimate, test, simulate or tune-tau
    - status: running, completed or failed
    - limit: number of runs (default 20, max 100)
    """
    try:
        limit = min(request.args.get('limit', 20, type=int), 100)
        command = request.args.get('command')
        status = request.args.get('status')
        if status and status not in STATUSES:
            return jsonify({'error': f"status must be one of {', '.join(STATUSES)}"}), 400

        runs = get_registry().recent(limit=limit, command=command)
        if status:
            runs = [run for run in runs if run.status == status]
        return jsonify({
            'runs': [run.to_dict(include_result=False) for run in runs],
            'count': len(runs),
        }), 200
    except Exception as e:
        logger.error(f"Error getting runs: {str(e)}")
        return jsonify({'error': 'Internal server error'}), 500


@runs_bp.route('/runs/<slug>', methods=['GET'])
def get_run(slug):
    """A single run with parameters and result."""
    try:
        run = get_registry().get(slug)
        if not run:
            return jsonify({'error': 'Run not found'}), 404
        return jsonify(run.to_dict()), 200
    except Exception as e:
        logger.error(f"Error getting run {slug}: {str(e)}")
        return jsonify({'error': 'Internal server error'}), 500
