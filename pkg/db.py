from pathlib import Path

from sqlalchemy import Integer, String, Float, DateTime, Enum, ForeignKey, LargeBinary
from sqlalchemy import create_engine, select
from sqlalchemy.orm import DeclarativeBase, mapped_column, sessionmaker
import sqlalchemy.sql.functions as func


CHECKPOINT_VERSION = 2


import enum

class Phase(enum.Enum):
    PRETRAIN = enum.auto()
    TRAIN = enum.auto()


class Base(DeclarativeBase):
    pass


class Checkpoint(Base):
    __tablename__ = 'checkpoints'

    id = mapped_column(Integer, primary_key=True, autoincrement=True)
    version = mapped_column(Integer)
    phase = mapped_column(Enum(Phase))
    iteration = mapped_column(Integer)
    config_json = mapped_column(String)
    params_payload = mapped_column(LargeBinary)
    optimizer_payload = mapped_column(LargeBinary)
    walkers_payload = mapped_column(LargeBinary)
    rng_json = mapped_column(String)
    digest = mapped_column(String(64))
    created = mapped_column(DateTime(timezone=True), default=func.now())

    def __repr__(self):
        return f'Checkpoint(v{self.version}, {self.phase}, iteration={self.iteration}, digest={self.digest[:12]})'


class TraceRow(Base):
    __tablename__ = 'trace_records'

    id = mapped_column(Integer, primary_key=True, autoincrement=True)
    checkpoint_id = mapped_column(ForeignKey('checkpoints.id'))
    iteration = mapped_column(Integer)
    phase = mapped_column(Enum(Phase))
    energy_mean = mapped_column(Float, nullable=True)
    energy_stderr = mapped_column(Float, nullable=True)
    accept_rate = mapped_column(Float)
    pretrain_loss = mapped_column(Float, nullable=True)
    wall_ms = mapped_column(Integer)

    def __repr__(self):
        return f'TraceRow({self.iteration}, {self.phase}, energy={self.energy_mean}, loss={self.pretrain_loss})'


def connect(path: Path):
    """
    Session factory for one SQLite checkpoint file.
    """
    engine = create_engine(f'sqlite:///{Path(path)}')
    return engine, sessionmaker(engine, expire_on_commit=False)


def init(engine):
    Base.metadata.create_all(engine)


def latest_checkpoint(session):
    stmt = select(Checkpoint).order_by(Checkpoint.id.desc()).limit(1)
    return session.scalars(stmt).one_or_none()


def trace_rows(session, checkpoint_id: int):
    stmt = select(TraceRow).where(
        TraceRow.checkpoint_id == checkpoint_id
    ).order_by(TraceRow.iteration)
    return session.scalars(stmt).all()
