"""
Run registry model.

Every analysis run started from the HTTP API (and CLI runs with --record)
leaves one row: what was asked, with which parameters, and what came back.
"""

from datetime import datetime

from flask_sqlalchemy import SQLAlchemy

db = SQLAlchemy()

STATUSES = ('running', 'completed', 'failed')


class RunRecord(db.Model):
    """One falsify / estimate / test / simulate run."""
    __tablename__ = 'run_record'

    id = db.Column(db.Integer, primary_key=True)
    slug = db.Column(db.String(120), unique=True, nullable=False, index=True)
    command = db.Column(db.String(20), nullable=False)  # falsify, estimate, test, simulate, tune-tau
    status = db.Column(db.String(20), default='running')

    # Design summary
    n = db.Column(db.Integer)
    mode = db.Column(db.String(20))
    tau = db.Column(db.Float)
    seed = db.Column(db.Integer)

    parameters = db.Column(db.JSON)
    result = db.Column(db.JSON)
    message = db.Column(db.Text)

    created_at = db.Column(db.DateTime, default=datetime.utcnow)
    completed_at = db.Column(db.DateTime)

    def __repr__(self):
        return f'<RunRecord {self.slug}>'

    @property
    def duration(self):
        if self.created_at and self.completed_at:
            return (self.completed_at - self.created_at).total_seconds()
        return None

    @classmethod
    def record(cls, slug, command, parameters=None, n=None, mode=None, tau=None, seed=None):
        """Create a running entry; the caller commits."""
        entry = cls(
            slug=slug,
            command=command,
            parameters=parameters or {},
            n=n,
            mode=mode,
            tau=tau,
            seed=seed,
        )
        db.session.add(entry)
        return entry

    def to_dict(self, include_result=True):
        data = {
            'id': self.id,
            'slug': self.slug,
            'command': self.command,
            'status': self.status,
            'n': self.n,
            'mode': self.mode,
            'tau': self.tau,
            'seed': self.seed,
            'parameters': self.parameters,
            'message': self.message,
            'duration': self.duration,
            'created_at': self.created_at.isoformat() if self.created_at else None,
            'completed_at': self.completed_at.isoformat() if self.completed_at else None,
        }
        if include_result:
            data['result'] = self.result
        return data
