"""
Run registry models and operations.
Optional persistence of finished runs and their epoch records; any
SQLAlchemy URL works, sqlite:///runs.db being the usual local choice.
"""
import json
import logging
from typing import Any, Dict, List, Optional, Sequence

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, relationship, sessionmaker
from sqlalchemy.sql import func

from config import Config
from core.errors import ConfigurationError

logger = logging.getLogger(__name__)

Base = declarative_base()


class Run(Base):
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    command = Column(String(50), nullable=False)  # train, sweep, ablate
    method = Column(String(50), default='ntda')  # ntda, baseline, no_noise_removal, no_adversarial
    corruption = Column(String(20))
    noise_level = Column(Float)
    seed = Column(Integer)
    target_accuracy = Column(Float)
    config_json = Column(Text)
    report_json = Column(Text)
    created_at = Column(DateTime, default=func.current_timestamp())

    # Relationships
    epoch_logs = relationship("EpochLog", back_populates="run", cascade="all, delete-orphan")


class EpochLog(Base):
    __tablename__ = 'epoch_logs'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('runs.id', ondelete='CASCADE'), nullable=False)
    epoch = Column(Integer, nullable=False)
    phase = Column(String(20), nullable=False)  # warmup, adapt
    retained_fraction = Column(Float)
    mean_target_discriminator = Column(Float)
    losses_json = Column(Text)

    # Relationships
    run = relationship("Run", back_populates="epoch_logs")


class RegistryManager:
    def __init__(self, database_url: Optional[str] = None):
        self.database_url = database_url or Config.DATABASE_URL
        self.engine = None
        self.SessionLocal = None
        self._initialized = False

    @property
    def enabled(self) -> bool:
        return bool(self.database_url)

    def _ensure_initialized(self):
        """Lazy initialization: connect on first use only"""
        if self._initialized:
            return
        if not self.database_url:
            raise ConfigurationError("run registry URL not configured (NTDA_DATABASE_URL or --registry)")
        url = self.database_url.strip()
        options: Dict[str, Any] = {'pool_pre_ping': True}
        if url.startswith('sqlite'):
            # sweep workers record rows from several threads
            options['connect_args'] = {'check_same_thread': False}
        else:
            options.update(pool_size=5, max_overflow=10)
        try:
            self.engine = create_engine(url, **options)
            self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
            self._initialized = True
            logger.info(f"Run registry initialized: {url.split('@')[-1]}")
        except Exception as e:
            raise ConfigurationError(f"failed to initialize run registry: {e}")

    def create_tables(self):
        self._ensure_initialized()
        Base.metadata.create_all(bind=self.engine)

    def drop_tables(self):
        self._ensure_initialized()
        Base.metadata.drop_all(bind=self.engine)

    def get_session(self):
        self._ensure_initialized()
        return self.SessionLocal()


class RegistryOperations:
    def __init__(self, registry: RegistryManager):
        self.registry = registry

    def record_run(self, command: str, config: Dict, report: Optional[Dict] = None,
                   records: Sequence = (), method: str = 'ntda', corruption: Optional[str] = None,
                   noise_level: Optional[float] = None) -> int:
        """Store one run with its epoch records; returns the run id"""
        with self.registry.get_session() as session:
            run = Run(
                command=command,
                method=method,
                corruption=corruption,
                noise_level=noise_level,
                seed=config.get('seed'),
                target_accuracy=(report or {}).get('target_accuracy'),
                config_json=json.dumps(config, sort_keys=True),
                report_json=json.dumps(report, sort_keys=True) if report is not None else None,
            )
            for record in records:
                data = record.to_dict() if hasattr(record, 'to_dict') else dict(record)
                run.epoch_logs.append(EpochLog(
                    epoch=data['epoch'],
                    phase=data['phase'],
                    retained_fraction=data.get('retained_fraction'),
                    mean_target_discriminator=data.get('mean_target_discriminator'),
                    losses_json=json.dumps(data.get('losses', {}), sort_keys=True),
                ))
            session.add(run)
            session.commit()
            logger.info(f"Registered {command} run {run.id} ({method})")
            return run.id

    def list_runs(self, limit: Optional[int] = None, command: Optional[str] = None) -> List[Dict]:
        with self.registry.get_session() as session:
            query = session.query(Run)
            if command:
                query = query.filter(Run.command == command)
            query = query.order_by(Run.id.desc())
            if limit:
                query = query.limit(limit)
            return [{
                'id': run.id,
                'command': run.command,
                'method': run.method,
                'corruption': run.corruption,
                'noise_level': run.noise_level,
                'seed': run.seed,
                'target_accuracy': run.target_accuracy,
                'epochs': len(run.epoch_logs),
                'created_at': run.created_at.isoformat() if run.created_at else None,
            } for run in query.all()]

    def get_epoch_logs(self, run_id: int) -> List[Dict]:
        with self.registry.get_session() as session:
            logs = (session.query(EpochLog).filter(EpochLog.run_id == run_id)
                    .order_by(EpochLog.epoch.asc()).all())
            return [{
                'epoch': log.epoch,
                'phase': log.phase,
                'retained_fraction': log.retained_fraction,
                'mean_target_discriminator': log.mean_target_discriminator,
                'losses': json.loads(log.losses_json) if log.losses_json else {},
            } for log in logs]


def open_registry(database_url: Optional[str] = None) -> Optional[RegistryOperations]:
    """Registry operations with tables ensured, or None when no URL is configured"""
    manager = RegistryManager(database_url)
    if not manager.enabled:
        return None
    manager.create_tables()
    return RegistryOperations(manager)
