"""
Supervised pretraining against Hartree-Fock orbitals, then energy minimization with the
score-function gradient 2 E_p[(E_p - E[E_p]) grad log|psi|].
"""
import io
import json
import hashlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from time import perf_counter
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np
import optax
from sqlalchemy.exc import SQLAlchemyError
from tqdm import tqdm

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
import db
from db import Phase
from .ansatz import AnsatzConfig, Params, Wavefunction, init_params, make_wavefunction, orbital_blocks
from .basis import BasisSet
from .charge_init import ElectronAssignment
from .energy import EnergyEstimate, batch_local_energy, expected_energy
from .errors import AllSamplesFlaggedError, CheckpointError, ConfigError, EstimatorError
from .molecule import Molecule
from .sampler import (SamplerConfig, WalkerBatch, burn_in, init_walkers, refresh_log_prob, run_chain,
                      walker_streams)
from .scf import ScfSolution, hf_orbital_values

OPTIMIZERS = ('adam', 'sgd')
WINSOR_FENCE = 10.0


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 100
    train_iterations: int = 2000
    learning_rate_pretrain: float = 1e-3
    learning_rate_train: float = 3e-4
    optimizer: str = 'adam'
    gradient_clip_norm: Optional[float] = 1.0
    checkpoint_every: int = 0
    seed: int = 0
    winsorize: bool = True
    final_window: int = 200
    blocking: int = 0

    def __post_init__(self):
        # a zero rate freezes the parameters (evaluation-only runs)
        if self.learning_rate_pretrain < 0 or self.learning_rate_train < 0:
            raise ConfigError('Learning rates must be non-negative.')
        for name in ('pretrain_epochs', 'train_iterations', 'checkpoint_every', 'blocking'):
            if getattr(self, name) < 0:
                raise ConfigError(f'{name} must be non-negative, got {getattr(self, name)}.')
        if self.final_window < 1:
            raise ConfigError(f'final_window must be positive, got {self.final_window}.')
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f'Unknown optimizer {self.optimizer!r}; choose one of {OPTIMIZERS}.')
        if self.gradient_clip_norm is not None and not self.gradient_clip_norm > 0:
            raise ConfigError(f'gradient_clip_norm must be positive, got {self.gradient_clip_norm}.')


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    phase: Phase
    energy_mean: Optional[float]
    energy_stderr: Optional[float]
    accept_rate: float
    pretrain_loss: Optional[float]
    wall_ms: int


CSV_HEADER = 'iter,energy_mean,energy_stderr,accept_rate,pretrain_loss,wall_ms'


def _csv_field(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return f'{value:.10f}'
    return str(value)


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, record: TraceRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError(f'Trace iteration {record.iteration} does not follow {self.records[-1].iteration}.')
        self.records.append(record)

    def phase(self, phase: Phase) -> list[TraceRecord]:
        return [record for record in self.records if record.phase is phase]

    def to_csv(self, path: Path, header_lines=()):
        lines = list(header_lines) + [CSV_HEADER]
        for r in self.records:
            fields = (r.iteration, r.energy_mean, r.energy_stderr, r.accept_rate, r.pretrain_loss, r.wall_ms)
            lines.append(','.join(_csv_field(x) for x in fields))
        Path(path).write_text('\n'.join(lines) + '\n')


def make_optimizer(cfg: TrainConfig, learning_rate: float) -> optax.GradientTransformation:
    if cfg.optimizer == 'adam':
        step = optax.adam(learning_rate, b1=0.9, b2=0.999, eps=1e-8)
    else:
        step = optax.sgd(learning_rate)
    if cfg.gradient_clip_norm is None:
        return step
    return optax.chain(optax.clip_by_global_norm(cfg.gradient_clip_norm), step)


def _log_clipping(grads, cfg: TrainConfig):
    if cfg.gradient_clip_norm is None:
        return
    norm = float(optax.global_norm(grads))
    if norm > cfg.gradient_clip_norm:
        logger.debug(f'Gradient norm {norm:.4g} clipped to {cfg.gradient_clip_norm}.')


# pretraining

def make_pretrain_loss(wf: Wavefunction):
    """
    Compiled (loss, grad) of the mean squared difference between ansatz orbitals and HF labels,
    the labels broadcast over determinants.
    """
    def loss(params, positions, labels):
        blocks = jax.vmap(lambda x: orbital_blocks(params, x, wf.nuclei, wf.config))(positions)
        total, count = 0.0, 0
        for block, label in zip(blocks, labels):
            total = total + jnp.sum((block - label[:, None]) ** 2)
            count += block.size
        return total / count

    return jax.jit(jax.value_and_grad(loss))


def pretrain_step(params: Params, opt_state, optimizer, loss_fn, scf: ScfSolution, basis: BasisSet,
                  batch: WalkerBatch, config: AnsatzConfig):
    labels = hf_orbital_values(scf, basis, batch.positions)
    for spin, (label, n_spin) in enumerate(zip(labels, config.spins)):
        if label.shape[-2:] != (n_spin, n_spin):
            raise ConfigError(f'HF provides {label.shape[-2]} occupied orbitals for spin {spin}, '
                              f'the ansatz block has {n_spin} electrons.')
    loss, grads = loss_fn(params, jnp.asarray(batch.positions), tuple(jnp.asarray(label) for label in labels))
    updates, opt_state = optimizer.update(grads, opt_state, params)
    return optax.apply_updates(params, updates), opt_state, float(loss)


# energy minimization

def energy_gradient(local_energies, param_grads_logpsi, mask=None):
    """
    2 * mean_p[(E_p - mean E) * grad log|psi|_p] over unflagged walkers, per parameter tensor.
    `param_grads_logpsi` carries a leading walker axis on every leaf.
    """
    energies = np.asarray(local_energies, dtype=np.float64)
    if mask is None:
        mask = np.isfinite(energies)
    n = int(mask.sum())
    if n < 2:
        raise EstimatorError(f'The energy gradient needs at least 2 unflagged walkers, got {n}.')
    kept = energies[mask]
    centered = kept - np.mean(kept)
    return jax.tree_util.tree_map(
        lambda g: 2.0 * np.tensordot(centered, np.asarray(g)[mask], axes=1) / n,
        param_grads_logpsi,
    )


def winsorize(energies, fence: float = WINSOR_FENCE):
    """
    Clip energies to median +/- fence * IQR.
    """
    energies = np.asarray(energies, dtype=np.float64)
    q1, median, q3 = np.percentile(energies, [25, 50, 75])
    spread = fence * (q3 - q1)
    clipped = np.clip(energies, median - spread, median + spread)
    n_clipped = int(np.sum(clipped != energies))
    if n_clipped:
        logger.warning(f'Winsorized {n_clipped} local energ{"y" if n_clipped == 1 else "ies"} for the gradient.')
    return clipped


def train_step(params: Params, opt_state, optimizer, batch: WalkerBatch, wf: Wavefunction, energy_fn,
               sampler_cfg: SamplerConfig, train_cfg: TrainConfig, rng, iteration: int, wall_clock: bool = False):
    """
    One update: Metropolis steps under the current ansatz, local energies, gradient, optimizer step.
    """
    start = perf_counter()
    log_psi = wf.sampler_fn(params)
    batch = refresh_log_prob(batch, log_psi).reset_counters()
    batch = run_chain(batch, log_psi, sampler_cfg, sampler_cfg.steps_between_updates, rng)

    totals = energy_fn(params, batch.positions).total
    try:
        estimate = expected_energy(totals, train_cfg.blocking)
    except AllSamplesFlaggedError:
        logger.error(f'Iteration {iteration}: every walker gave a non-finite local energy; positions {batch.positions.tolist()}')
        raise
    mask = np.isfinite(totals)
    energies = np.where(mask, totals, 0.0)
    if train_cfg.winsorize:
        energies[mask] = winsorize(totals[mask])

    grads = energy_gradient(energies, wf.param_grad_batch(params, jnp.asarray(batch.positions)), mask)
    _log_clipping(grads, train_cfg)
    updates, opt_state = optimizer.update(grads, opt_state, params)
    params = optax.apply_updates(params, updates)

    record = TraceRecord(
        iteration=iteration,
        phase=Phase.TRAIN,
        energy_mean=estimate.mean,
        energy_stderr=estimate.std_error,
        accept_rate=batch.acceptance_rate,
        pretrain_loss=None,
        wall_ms=int(1000 * (perf_counter() - start)) if wall_clock else 0,
    )
    return params, opt_state, batch, record


# checkpoints

def _pack(arrays) -> bytes:
    buffer = io.BytesIO()
    np.savez(buffer, *[np.asarray(a) for a in arrays])
    return buffer.getvalue()


def _unpack(payload: bytes) -> list[np.ndarray]:
    with np.load(io.BytesIO(payload)) as data:
        return [data[f'arr_{i}'] for i in range(len(data.files))]


def _digest(*payloads) -> str:
    h = hashlib.sha256()
    for payload in payloads:
        h.update(payload)
    return h.hexdigest()


@dataclass
class CheckpointState:
    params: Params
    opt_state: object
    trace: TrainTrace
    phase: Phase
    iteration: int
    configs: dict
    positions: Optional[np.ndarray]
    rng_states: Optional[list]


def save_checkpoint(params: Params, opt_state, trace: TrainTrace, path: Path, *, phase: Phase, iteration: int,
                    configs: dict, batch: Optional[WalkerBatch] = None, rng=None):
    """
    Write a self-contained SQLite checkpoint, replacing any file at `path`.
    `configs` holds 'n_atoms', 'ansatz', 'sampler' and 'train' dictionaries.
    """
    path = Path(path)
    if path.exists():
        path.unlink()
    params_payload = _pack(jax.tree_util.tree_leaves(params))
    optimizer_payload = _pack(jax.tree_util.tree_leaves(opt_state))
    walkers_payload = _pack([batch.positions] if batch is not None else [])
    engine, session = db.connect(path)
    try:
        db.init(engine)
        with session() as s, s.begin():
            checkpoint = db.Checkpoint(
                version=db.CHECKPOINT_VERSION,
                phase=phase,
                iteration=iteration,
                config_json=json.dumps(configs, sort_keys=True),
                params_payload=params_payload,
                optimizer_payload=optimizer_payload,
                walkers_payload=walkers_payload,
                rng_json=json.dumps([gen.bit_generator.state for gen in rng] if rng is not None else None),
                digest=_digest(params_payload, optimizer_payload, walkers_payload),
            )
            s.add(checkpoint)
            s.flush()
            s.add_all([
                db.TraceRow(checkpoint_id=checkpoint.id, iteration=r.iteration, phase=r.phase,
                            energy_mean=r.energy_mean, energy_stderr=r.energy_stderr, accept_rate=r.accept_rate,
                            pretrain_loss=r.pretrain_loss, wall_ms=r.wall_ms)
                for r in trace
            ])
    finally:
        engine.dispose()
    logger.info(f'Checkpoint written to {path} at iteration {iteration}.')


def load_checkpoint(path: Path) -> CheckpointState:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f'No checkpoint at {path}.')
    engine, session = db.connect(path)
    try:
        with session() as s:
            row = db.latest_checkpoint(s)
            if row is None:
                raise CheckpointError(f'{path} holds no checkpoint.')
            rows = db.trace_rows(s, row.id)
    except SQLAlchemyError as e:
        raise CheckpointError(f'{path} is not a readable checkpoint: {e}') from None
    finally:
        engine.dispose()

    if row.version != db.CHECKPOINT_VERSION:
        raise CheckpointError(f'{path} has checkpoint version {row.version}, expected {db.CHECKPOINT_VERSION}.')
    if _digest(row.params_payload, row.optimizer_payload, row.walkers_payload) != row.digest:
        raise CheckpointError(f'{path} is corrupt: payload digest mismatch.')

    try:
        configs = json.loads(row.config_json)
        ansatz_cfg = AnsatzConfig(**configs['ansatz'])
        train_cfg = TrainConfig(**configs['train'])
        template = init_params(jax.random.PRNGKey(0), configs['n_atoms'], ansatz_cfg)
        leaves = [jnp.asarray(a) for a in _unpack(row.params_payload)]
        params = jax.tree_util.tree_unflatten(jax.tree_util.tree_structure(template), leaves)
        learning_rate = train_cfg.learning_rate_pretrain if row.phase is Phase.PRETRAIN else train_cfg.learning_rate_train
        opt_template = make_optimizer(train_cfg, learning_rate).init(template)
        opt_leaves = [jnp.asarray(a) for a in _unpack(row.optimizer_payload)]
        opt_state = jax.tree_util.tree_unflatten(jax.tree_util.tree_structure(opt_template), opt_leaves)
        walkers = _unpack(row.walkers_payload)
    except (KeyError, TypeError, ValueError, OSError) as e:
        raise CheckpointError(f'{path} could not be decoded: {e}') from None

    trace = TrainTrace([
        TraceRecord(r.iteration, r.phase, r.energy_mean, r.energy_stderr, r.accept_rate, r.pretrain_loss, r.wall_ms)
        for r in rows
    ])
    return CheckpointState(
        params=params,
        opt_state=opt_state,
        trace=trace,
        phase=row.phase,
        iteration=row.iteration,
        configs=configs,
        positions=walkers[0] if walkers else None,
        rng_states=json.loads(row.rng_json),
    )


class Trainer:
    """
    Owns the ansatz, walkers and optimizer state of one run and drives both training phases.
    """

    def __init__(self,
                 mol: Molecule,
                 scf: ScfSolution,
                 basis: BasisSet,
                 assignment: ElectronAssignment,
                 ansatz_cfg: AnsatzConfig,
                 sampler_cfg: SamplerConfig,
                 train_cfg: TrainConfig,
                 progress: bool = True,
                 wall_clock: bool = False):
        self.mol = mol
        self.scf = scf
        self.basis = basis
        self.ansatz_cfg = ansatz_cfg
        self.sampler_cfg = sampler_cfg
        self.train_cfg = train_cfg
        self.progress = progress
        self.wall_clock = wall_clock

        self.wf = make_wavefunction(mol, ansatz_cfg)
        self.energy_fn = batch_local_energy(self.wf, mol)
        self.pretrain_loss = make_pretrain_loss(self.wf)
        self.rng = walker_streams(sampler_cfg.seed, sampler_cfg.batch_size)
        self.params = self.wf.init_params(train_cfg.seed)
        self.batch = init_walkers(mol, assignment, sampler_cfg, self.rng, log_psi=self.wf.sampler_fn(self.params))

        self.trace = TrainTrace()
        self.iteration = 0
        self.phase = Phase.PRETRAIN
        self.optimizer = None
        self.opt_state = None

    def __repr__(self):
        return f'Trainer({self.mol}, {self.phase.name}, iteration={self.iteration})'

    @property
    def configs(self) -> dict:
        return {
            'n_atoms': self.mol.n_atoms,
            'ansatz': asdict(self.ansatz_cfg),
            'sampler': asdict(self.sampler_cfg),
            'train': asdict(self.train_cfg),
        }

    def _start_phase(self, phase: Phase):
        learning_rate = (self.train_cfg.learning_rate_pretrain if phase is Phase.PRETRAIN
                         else self.train_cfg.learning_rate_train)
        self.phase = phase
        self.optimizer = make_optimizer(self.train_cfg, learning_rate)
        self.opt_state = self.optimizer.init(self.params)

    def pretrain(self, epochs: Optional[int] = None):
        epochs = self.train_cfg.pretrain_epochs if epochs is None else epochs
        if self.optimizer is None:
            self._start_phase(Phase.PRETRAIN)
        logger.info(f'Pretraining for {epochs} epochs against the HF orbitals.')
        loss = None
        for _ in tqdm(range(epochs), desc='pretrain', disable=not self.progress):
            start = perf_counter()
            log_psi = self.wf.sampler_fn(self.params)
            batch = refresh_log_prob(self.batch, log_psi).reset_counters()
            self.batch = run_chain(batch, log_psi, self.sampler_cfg, self.sampler_cfg.steps_between_updates, self.rng)
            self.params, self.opt_state, loss = pretrain_step(
                self.params, self.opt_state, self.optimizer, self.pretrain_loss,
                self.scf, self.basis, self.batch, self.ansatz_cfg)
            self.trace.append(TraceRecord(
                iteration=self.iteration,
                phase=Phase.PRETRAIN,
                energy_mean=None,
                energy_stderr=None,
                accept_rate=self.batch.acceptance_rate,
                pretrain_loss=loss,
                wall_ms=int(1000 * (perf_counter() - start)) if self.wall_clock else 0,
            ))
            self.iteration += 1
        if loss is not None:
            logger.info(f'Pretraining done, final loss {loss:.6g}.')
        return loss

    def burn_in(self):
        log_psi = self.wf.sampler_fn(self.params)
        self.batch = burn_in(refresh_log_prob(self.batch, log_psi), log_psi, self.sampler_cfg, self.rng, self.progress)

    def train(self, iterations: Optional[int] = None, checkpoint_path: Optional[Path] = None):
        iterations = self.train_cfg.train_iterations if iterations is None else iterations
        if self.phase is not Phase.TRAIN:
            self._start_phase(Phase.TRAIN)
            self.burn_in()
        logger.info(f'Training for {iterations} iterations.')
        for _ in tqdm(range(iterations), desc='train', disable=not self.progress):
            self.params, self.opt_state, self.batch, record = train_step(
                self.params, self.opt_state, self.optimizer, self.batch, self.wf, self.energy_fn,
                self.sampler_cfg, self.train_cfg, self.rng, self.iteration, self.wall_clock)
            self.trace.append(record)
            self.iteration += 1
            logger.debug(f'Iteration {record.iteration}: E = {record.energy_mean:.6f} +/- {record.energy_stderr:.6f}, '
                         f'acceptance {record.accept_rate:.3f}')
            every = self.train_cfg.checkpoint_every
            if checkpoint_path is not None and every and len(self.trace.phase(Phase.TRAIN)) % every == 0:
                self.save(checkpoint_path)

    def evaluate(self, iterations: int) -> EnergyEstimate:
        """
        Energy of the current ansatz without parameter updates: one batch mean per iteration.
        """
        if self.phase is not Phase.TRAIN:
            self._start_phase(Phase.TRAIN)
            self.burn_in()
        log_psi = self.wf.sampler_fn(self.params)
        batch = refresh_log_prob(self.batch, log_psi)
        means = []
        for _ in tqdm(range(iterations), desc='evaluate', disable=not self.progress):
            batch = run_chain(batch, log_psi, self.sampler_cfg, self.sampler_cfg.steps_between_updates, self.rng)
            means.append(expected_energy(self.energy_fn(self.params, batch.positions).total).mean)
        self.batch = batch
        return expected_energy(means)

    def summary(self) -> EnergyEstimate:
        """
        Mean and standard error over the last `final_window` training iterations, or an
        evaluation of the pretrained ansatz when no training iteration ran.
        """
        records = self.trace.phase(Phase.TRAIN)
        if not records:
            return self.evaluate(self.train_cfg.final_window)
        window = records[-self.train_cfg.final_window:]
        return expected_energy([r.energy_mean for r in window])

    def run(self, checkpoint_path: Optional[Path] = None) -> EnergyEstimate:
        """
        Whatever remains of both phases, then the summary estimate.
        """
        if self.phase is Phase.PRETRAIN:
            self.pretrain(max(0, self.train_cfg.pretrain_epochs - len(self.trace.phase(Phase.PRETRAIN))))
        self.train(max(0, self.train_cfg.train_iterations - len(self.trace.phase(Phase.TRAIN))), checkpoint_path)
        return self.summary()

    def save(self, path: Path):
        save_checkpoint(self.params, self.opt_state, self.trace, path, phase=self.phase, iteration=self.iteration,
                        configs=self.configs, batch=self.batch, rng=self.rng)

    def restore(self, path: Path):
        """
        Continue from a checkpoint written by `save` for the same molecule and configuration.
        """
        state = load_checkpoint(path)
        if state.configs != json.loads(json.dumps(self.configs, sort_keys=True)):
            raise CheckpointError(f'{path} was written for a different configuration.')
        self.params = state.params
        self.trace = state.trace
        self.iteration = state.iteration
        self._start_phase(state.phase)
        self.opt_state = state.opt_state
        if state.positions is not None:
            self.batch = refresh_log_prob(WalkerBatch(state.positions, np.zeros(len(state.positions))),
                                          self.wf.sampler_fn(self.params))
        if state.rng_states is not None:
            for gen, rng_state in zip(self.rng, state.rng_states):
                gen.bit_generator.state = rng_state
        logger.info(f'Resumed from {path} at iteration {self.iteration} ({self.phase.name}).')
