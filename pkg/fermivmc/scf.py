"""
Unrestricted Hartree-Fock in the STO-6G basis, Mulliken populations, and HF orbital values
used as pretraining labels.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from .basis import (BasisSet, basis_function_values, build_basis, eri_tensor, kinetic_matrix,
                    nuclear_attraction_matrix, overlap_matrix)
from .errors import ScfConvergenceError, ScfError
from .molecule import Molecule, electron_count, nuclear_repulsion


@dataclass(frozen=True)
class ScfOptions:
    max_iterations: int = 200
    damping: float = 0.5
    damping_iterations: int = 5
    density_tolerance: float = 1e-8
    energy_tolerance: float = 1e-10


@dataclass
class ScfSolution:
    mo_coefficients: tuple[np.ndarray, np.ndarray]
    orbital_energies: tuple[np.ndarray, np.ndarray]
    density_matrices: tuple[np.ndarray, np.ndarray]
    total_energy: float
    converged: bool
    iterations: int
    n_up: int
    n_down: int
    overlap: np.ndarray = field(repr=False)

    def __repr__(self):
        return (f'ScfSolution(E={self.total_energy:.10f}, converged={self.converged}, '
                f'iterations={self.iterations}, electrons=({self.n_up}, {self.n_down}))')

    @property
    def total_density(self) -> np.ndarray:
        return self.density_matrices[0] + self.density_matrices[1]

    def occupied(self, spin: int) -> np.ndarray:
        """
        Occupied MO coefficient columns of one spin channel (0 = up, 1 = down).
        """
        n = (self.n_up, self.n_down)[spin]
        return self.mo_coefficients[spin][:, :n]

    def require_converged(self):
        if not self.converged:
            raise ScfConvergenceError(f'SCF did not converge after {self.iterations} iterations.', solution=self)


@dataclass(frozen=True)
class MullikenReport:
    populations: np.ndarray
    partial_charges: np.ndarray

    def __repr__(self):
        charges = ', '.join(f'{q:+.5f}' for q in self.partial_charges)
        return f'MullikenReport(charges=[{charges}])'


def _density(coefficients, n_occupied):
    occupied = coefficients[:, :n_occupied]
    return occupied @ occupied.T


def run_uhf(mol: Molecule, basis: BasisSet, n_up: int, n_down: int, opts: ScfOptions = ScfOptions()) -> ScfSolution:
    """
    Roothaan-Pople iterations from the core-Hamiltonian guess, with fixed density damping
    for the first iterations. Non-convergence is reported through `converged`, not raised.
    """
    n_basis = len(basis)
    if n_up + n_down < 1:
        raise ScfError('UHF needs at least one electron.')
    if n_up > n_basis or n_down > n_basis:
        raise ScfError(f'{max(n_up, n_down)} electrons of one spin exceed the basis size {n_basis}.')

    S = overlap_matrix(basis)
    H = kinetic_matrix(basis) + nuclear_attraction_matrix(basis, mol)
    eri = eri_tensor(basis)
    e_nuc = nuclear_repulsion(mol)
    occupations = (n_up, n_down)

    def diagonalize(fock):
        return scipy.linalg.eigh(fock, S)

    # core guess
    energies, coefficients = zip(*(diagonalize(H) for _ in occupations))
    densities = tuple(_density(c, n) for c, n in zip(coefficients, occupations))
    energy = np.inf
    converged = False

    iteration = 0
    for iteration in range(1, opts.max_iterations + 1):
        P_total = densities[0] + densities[1]
        J = np.einsum('pqrs,rs->pq', eri, P_total)
        focks = tuple(H + J - np.einsum('prqs,rs->pq', eri, P) for P in densities)
        new_energy = 0.5 * sum(np.sum(P * (H + F)) for P, F in zip(densities, focks)) + e_nuc

        energies, coefficients = zip(*(diagonalize(F) for F in focks))
        new_densities = tuple(_density(c, n) for c, n in zip(coefficients, occupations))
        if iteration <= opts.damping_iterations:
            new_densities = tuple(opts.damping * old + (1 - opts.damping) * new
                                  for old, new in zip(densities, new_densities))

        delta_p = max(np.max(np.abs(new - old)) for new, old in zip(new_densities, densities))
        delta_e = abs(new_energy - energy)
        logger.debug(f'SCF iteration {iteration}: E = {new_energy:.12f}, dE = {delta_e:.3e}, dP = {delta_p:.3e}')
        densities, energy = new_densities, new_energy
        if iteration > opts.damping_iterations and delta_p < opts.density_tolerance and delta_e < opts.energy_tolerance:
            converged = True
            break

    # final energy and orbitals consistent with the last density
    P_total = densities[0] + densities[1]
    J = np.einsum('pqrs,rs->pq', eri, P_total)
    focks = tuple(H + J - np.einsum('prqs,rs->pq', eri, P) for P in densities)
    energy = 0.5 * sum(np.sum(P * (H + F)) for P, F in zip(densities, focks)) + e_nuc

    solution = ScfSolution(
        mo_coefficients=tuple(coefficients),
        orbital_energies=tuple(energies),
        density_matrices=densities,
        total_energy=float(energy),
        converged=converged,
        iterations=iteration,
        n_up=n_up,
        n_down=n_down,
        overlap=S,
    )
    if converged:
        logger.info(f'UHF converged for {mol} in {iteration} iterations: E = {energy:.10f} Ha')
    else:
        logger.warning(f'UHF for {mol} did not converge within {opts.max_iterations} iterations (E = {energy:.10f} Ha).')
    return solution


def hf_energy(mol: Molecule, opts: ScfOptions = ScfOptions()) -> ScfSolution:
    """
    Whole chain: basis, spin counts and UHF for one molecule. Raises if not converged.
    """
    basis = build_basis(mol)
    n_up, n_down = electron_count(mol)
    solution = run_uhf(mol, basis, n_up, n_down, opts)
    solution.require_converged()
    return solution


def mulliken(scf: ScfSolution, basis: BasisSet, mol: Molecule) -> MullikenReport:
    scf.require_converged()
    gross = np.diag(scf.total_density @ scf.overlap)
    populations = np.array([gross[basis.atom_functions(m)].sum() for m in range(mol.n_atoms)])
    partial_charges = mol.charges - populations
    report = MullikenReport(populations, partial_charges)
    logger.debug(f'Mulliken analysis for {mol}: {report}')
    return report


def hf_orbital_values(scf: ScfSolution, basis: BasisSet, positions) -> tuple[np.ndarray, np.ndarray]:
    """
    Occupied HF orbitals evaluated at electron positions (..., N, 3), electrons ordered up-block first.

    Returns per-spin arrays (..., n_occupied, n_electrons_of_spin) with entry [i, j] = phi_i(r_j).
    """
    scf.require_converged()
    positions = np.asarray(positions, dtype=np.float64)
    blocks = (positions[..., :scf.n_up, :], positions[..., scf.n_up:, :])
    values = []
    for spin, block in enumerate(blocks):
        chi = basis_function_values(basis, block)                     # (n_basis, ..., n_spin)
        orbitals = np.tensordot(scf.occupied(spin).T, chi, axes=1)     # (n_occ, ..., n_spin)
        values.append(np.moveaxis(orbitals, 0, -2))
    return tuple(values)


def dump_matrices(scf: ScfSolution, path: Path):
    """
    Write C, P, S and orbital energies per spin as plain-text row-major blocks headed `# name rows cols`.
    """
    blocks = [('S', scf.overlap)]
    for label, spin in (('up', 0), ('down', 1)):
        blocks.append((f'C_{label}', scf.mo_coefficients[spin]))
        blocks.append((f'P_{label}', scf.density_matrices[spin]))
        blocks.append((f'eps_{label}', scf.orbital_energies[spin][None, :]))
    with open(path, 'w') as f:
        for name, matrix in blocks:
            rows, cols = matrix.shape
            f.write(f'# {name} {rows} {cols}\n')
            for row in matrix:
                f.write(' '.join(f'{x: .16e}' for x in row) + '\n')
    logger.info(f'SCF matrices written to {path}.')


def read_matrices(path: Path) -> dict[str, np.ndarray]:
    matrices = {}
    lines = Path(path).read_text().splitlines()
    index = 0
    while index < len(lines):
        _, name, rows, cols = lines[index].split()
        rows, cols = int(rows), int(cols)
        data = [[float(x) for x in line.split()] for line in lines[index + 1:index + 1 + rows]]
        matrices[name] = np.array(data).reshape(rows, cols)
        index += rows + 1
    return matrices
