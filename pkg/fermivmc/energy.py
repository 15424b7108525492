"""
Local energy of a walker and the expected energy over a batch.
"""
from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from utils.misc import clumped
from .ansatz import AnsatzConfig, Params, Wavefunction, coordinate_derivatives, log_abs_psi
from .errors import AllSamplesFlaggedError
from .molecule import Molecule, nuclear_repulsion


@dataclass(frozen=True)
class LocalEnergyBreakdown:
    kinetic: float
    el_el: float
    nuc_el: float
    nuc_nuc: float
    total: float

    @classmethod
    def from_terms(cls, kinetic, el_el, nuc_el, nuc_nuc):
        return cls(kinetic, el_el, nuc_el, nuc_nuc, kinetic + el_el + nuc_el + nuc_nuc)

    def __getitem__(self, index):
        # slicing a batched breakdown gives one walker's breakdown
        return LocalEnergyBreakdown(*(np.asarray(term)[index] for term in
                                      (self.kinetic, self.el_el, self.nuc_el, self.nuc_nuc, self.total)))


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    std_error: float
    n_samples: int
    n_flagged: int = 0

    def __str__(self):
        return f'{self.mean:.6f} +/- {self.std_error:.6f} Ha ({self.n_samples} samples)'


def kinetic_from_log_psi(f: Callable, positions):
    """
    -1/2 sum over all 3N coordinates of (d log|psi|/dx)^2 + d^2 log|psi|/dx^2.
    """
    grad, laplacian = coordinate_derivatives(f, jnp.asarray(positions))
    return -0.5 * (jnp.sum(grad ** 2) + laplacian)


def kinetic_energy(params: Params, positions, mol: Molecule, config: AnsatzConfig):
    nuclei = jnp.asarray(mol.positions)
    return kinetic_from_log_psi(lambda x: log_abs_psi(params, x, nuclei, config), positions)


def potential_energies(positions, mol: Molecule):
    """
    Electron-electron, nucleus-electron and nucleus-nucleus Coulomb energies of one configuration.
    Coincident particles give non-finite values, which the caller flags.
    """
    positions = jnp.asarray(positions)
    n = positions.shape[0]
    if n > 1:
        i, j = np.triu_indices(n, k=1)
        el_el = jnp.sum(1.0 / jnp.linalg.norm(positions[i] - positions[j], axis=-1))
    else:
        el_el = jnp.zeros(())
    r_ae = jnp.linalg.norm(positions[:, None, :] - jnp.asarray(mol.positions)[None, :, :], axis=-1)
    nuc_el = -jnp.sum(jnp.asarray(mol.charges, dtype=jnp.float64) / r_ae)
    return el_el, nuc_el, nuclear_repulsion(mol)


def local_energy_fn(f: Callable, mol: Molecule):
    """
    Local energy of an arbitrary log|psi| function of positions (N, 3).
    """
    def local(positions):
        el_el, nuc_el, nuc_nuc = potential_energies(positions, mol)
        return LocalEnergyBreakdown.from_terms(kinetic_from_log_psi(f, positions), el_el, nuc_el, nuc_nuc)
    return local


def local_energy(params: Params, positions, mol: Molecule, config: AnsatzConfig) -> LocalEnergyBreakdown:
    nuclei = jnp.asarray(mol.positions)
    return local_energy_fn(lambda x: log_abs_psi(params, x, nuclei, config), mol)(positions)


def batch_local_energy(wavefunction: Wavefunction, mol: Molecule):
    """
    Compiled local energies over walkers: (params, positions (B, N, 3)) -> per-walker breakdown.
    """
    def single(params, positions):
        breakdown = local_energy_fn(lambda x: wavefunction.single(params, x), mol)(positions)
        nuc_nuc = jnp.full_like(breakdown.kinetic, breakdown.nuc_nuc)
        return (breakdown.kinetic, breakdown.el_el, breakdown.nuc_el, nuc_nuc)

    compiled = jax.jit(jax.vmap(single, in_axes=(None, 0)))

    def evaluate(params, positions) -> LocalEnergyBreakdown:
        terms = [np.asarray(term, dtype=np.float64) for term in compiled(params, jnp.asarray(positions))]
        return LocalEnergyBreakdown.from_terms(*terms)

    return evaluate


def flagged(local_energies) -> np.ndarray:
    return ~np.isfinite(np.asarray(local_energies, dtype=np.float64))


def expected_energy(local_energies, block_size: int = 0) -> EnergyEstimate:
    """
    Mean and standard error of the finite local energies. With `block_size`, the error bar is
    taken from means of consecutive blocks to account for autocorrelation.
    """
    values = np.asarray(local_energies, dtype=np.float64).ravel()
    mask = flagged(values)
    n_flagged = int(mask.sum())
    values = values[~mask]
    if not values.size:
        raise AllSamplesFlaggedError(f'All {n_flagged} local energies are non-finite.')
    if n_flagged:
        logger.warning(f'Excluded {n_flagged} flagged sample(s) from the energy estimate.')

    mean = float(np.mean(values))
    samples = values
    if block_size and block_size > 1:
        blocks = np.array([np.mean(block) for block in clumped(values, block_size, complete=True)])
        if blocks.size > 1:
            samples = blocks
    if samples.size > 1:
        std_error = float(np.std(samples, ddof=1) / np.sqrt(samples.size))
    else:
        std_error = 0.0
    return EnergyEstimate(mean, std_error, int(values.size), n_flagged)
