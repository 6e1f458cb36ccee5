"""
ivscreen HTTP API.

Application factory; gunicorn serves `app:create_app()`.
"""

import logging
import os

from flask import Flask, jsonify
from flask_cors import CORS

from src import __version__
from src.config import Config
from src.models.run import db
from src.routes.analysis import analysis_bp
from src.routes.runs import runs_bp
from src.utils.database import init_run_registry

logger = logging.getLogger(__name__)


def create_app(config_overrides=None):
    """
    Build the Flask application.

    Args:
        config_overrides (dict): values applied over Config (tests pass an
            in-memory SQLALCHEMY_DATABASE_URI)
    """
    app = Flask(__name__)
    app.config.from_mapping(Config.as_flask_config())
    if config_overrides:
        app.config.update(config_overrides)

    CORS(app, origins=['*'])
    db.init_app(app)
    registry = init_run_registry(app)

    app.register_blueprint(analysis_bp)
    app.register_blueprint(runs_bp)

    @app.route('/')
    def home():
        return jsonify({'message': 'ivscreen API', 'version': __version__, 'status': 'running'})

    with app.app_context():
        registry.create_tables()

    logger.debug(f"Application ready on {app.config['SQLALCHEMY_DATABASE_URI']}")
    return app


if __name__ == '__main__':
    port = int(os.environ.get('PORT', 5000))
    create_app().run(host='0.0.0.0', port=port)
