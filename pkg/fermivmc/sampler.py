"""
Electron walkers and the Metropolis-Hastings kernel on 2 log|psi|.

Each walker owns its own numpy Generator, so results do not depend on how the batch is
evaluated.
"""
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from tqdm import tqdm

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from .charge_init import ElectronAssignment
from .errors import ConfigError, SamplerError
from .molecule import Molecule

# positions (B, N, 3) -> log|psi| (B,)
LogPsiFn = Callable[[np.ndarray], np.ndarray]

MAX_REDRAWS = 100


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int = 8
    steps_between_updates: int = 10
    proposal_std: float = 0.2
    init_std: float = 1.0
    burn_in_steps: int = 500
    seed: int = 0

    def __post_init__(self):
        for name in ('batch_size', 'steps_between_updates', 'proposal_std', 'init_std'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'Sampler setting {name} must be positive, got {getattr(self, name)}.')
        if self.burn_in_steps < 0:
            raise ConfigError(f'burn_in_steps must be non-negative, got {self.burn_in_steps}.')


@dataclass(frozen=True)
class WalkerBatch:
    positions: np.ndarray
    log_prob: np.ndarray
    accept_count: int = 0
    proposal_count: int = 0

    def __repr__(self):
        batch, n_electrons, _ = self.positions.shape
        return f'WalkerBatch({batch} walkers x {n_electrons} electrons, acceptance={self.acceptance_rate:.3f})'

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.proposal_count if self.proposal_count else 0.0

    def reset_counters(self):
        return replace(self, accept_count=0, proposal_count=0)


def walker_streams(seed: int, batch_size: int) -> list[np.random.Generator]:
    """
    One independent Generator per walker, spawned from a single seed.
    """
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(batch_size)]


def electron_centers(mol: Molecule, assignment: ElectronAssignment) -> np.ndarray:
    """
    Nucleus each electron starts on, up-spin electrons first, atoms in order within each block.
    """
    centers = []
    for counts in (assignment.per_atom_up, assignment.per_atom_down):
        for atom_index, count in enumerate(counts):
            centers.extend([mol.positions[atom_index]] * count)
    return np.array(centers, dtype=np.float64).reshape(-1, 3)


def _evaluate(log_psi: LogPsiFn, positions: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(log_psi(positions), dtype=np.float64)


def init_walkers(mol: Molecule,
                 assignment: ElectronAssignment,
                 cfg: SamplerConfig,
                 rng: Sequence[np.random.Generator],
                 log_psi: Optional[LogPsiFn] = None) -> WalkerBatch:
    """
    Draw every electron from an isotropic Gaussian around its assigned nucleus.
    With `log_psi`, walkers whose log|psi| is non-finite are re-drawn.
    """
    if len(assignment.per_atom_electrons) != mol.n_atoms or sum(assignment.per_atom_electrons) != mol.n_electrons:
        raise SamplerError(f'Electron assignment {assignment.per_atom_electrons} does not match {mol}.')
    if len(rng) != cfg.batch_size:
        raise SamplerError(f'{len(rng)} random streams for {cfg.batch_size} walkers.')

    centers = electron_centers(mol, assignment)

    def draw(b):
        return centers + rng[b].normal(0.0, cfg.init_std, size=centers.shape)

    positions = np.stack([draw(b) for b in range(cfg.batch_size)])
    if log_psi is None:
        return WalkerBatch(positions, np.zeros(cfg.batch_size))

    log_prob = _evaluate(log_psi, positions)
    for attempt in range(MAX_REDRAWS):
        bad = np.flatnonzero(~np.isfinite(log_prob))
        if not bad.size:
            break
        logger.warning(f'Re-drawing {bad.size} walker(s) with non-finite log|psi| (attempt {attempt + 1}).')
        for b in bad:
            positions[b] = draw(b)
        log_prob = _evaluate(log_psi, positions)
    else:
        if not np.all(np.isfinite(log_prob)):
            raise SamplerError(f'Walkers still degenerate after {MAX_REDRAWS} re-draws.')
    return WalkerBatch(positions, log_prob)


def refresh_log_prob(batch: WalkerBatch, log_psi: LogPsiFn) -> WalkerBatch:
    """
    Recompute the cached 2 log|psi| after the wavefunction changed.
    """
    return replace(batch, log_prob=_evaluate(log_psi, batch.positions))


def metropolis_step(batch: WalkerBatch,
                    log_psi: LogPsiFn,
                    cfg: SamplerConfig,
                    rng: Sequence[np.random.Generator]) -> WalkerBatch:
    """
    Joint Gaussian move of all electrons of each walker, accepted iff log(u) <= A
    where A = 2 log|psi(r')| - 2 log|psi(r)|.
    """
    shape = batch.positions.shape[1:]
    noise = np.stack([gen.normal(0.0, cfg.proposal_std, size=shape) for gen in rng])
    log_u = np.log(np.array([gen.uniform() for gen in rng]))

    proposal = batch.positions + noise
    proposal_log_prob = _evaluate(log_psi, proposal)
    A = proposal_log_prob - batch.log_prob
    # non-finite proposals are rejected
    accept = np.isfinite(proposal_log_prob) & (log_u <= A)

    return WalkerBatch(
        positions=np.where(accept[:, None, None], proposal, batch.positions),
        log_prob=np.where(accept, proposal_log_prob, batch.log_prob),
        accept_count=batch.accept_count + int(accept.sum()),
        proposal_count=batch.proposal_count + len(accept),
    )


def run_chain(batch: WalkerBatch,
              log_psi: LogPsiFn,
              cfg: SamplerConfig,
              n_steps: int,
              rng: Sequence[np.random.Generator],
              progress: bool = False) -> WalkerBatch:
    for _ in tqdm(range(n_steps), desc='mcmc', disable=not progress, leave=False):
        batch = metropolis_step(batch, log_psi, cfg, rng)
    if n_steps:
        logger.debug(f'{n_steps} Metropolis steps, running acceptance {batch.acceptance_rate:.3f}')
    return batch


def burn_in(batch: WalkerBatch, log_psi: LogPsiFn, cfg: SamplerConfig, rng, progress: bool = False) -> WalkerBatch:
    batch = run_chain(batch, log_psi, cfg, cfg.burn_in_steps, rng, progress)
    logger.info(f'Burn-in of {cfg.burn_in_steps} steps done, acceptance {batch.acceptance_rate:.3f}')
    return batch.reset_counters()
