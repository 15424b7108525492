"""
Molecular geometry in atomic units and purely nuclear quantities.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from .errors import GeometryError


ELEMENTS = ('H', 'He', 'Li', 'Be', 'B', 'C', 'N', 'O', 'F', 'Ne')
ATOMIC_NUMBERS = {symbol: z for z, symbol in enumerate(ELEMENTS, start=1)}
MAX_ATOMIC_NUMBER = len(ELEMENTS)

# 1 Bohr in Angstrom
BOHR_IN_ANGSTROM = 0.52917721067


@dataclass(frozen=True)
class Atom:
    symbol: str
    atomic_number: int
    position: tuple[float, float, float]

    def __post_init__(self):
        if not 1 <= self.atomic_number <= MAX_ATOMIC_NUMBER:
            raise GeometryError(f'Unsupported element {self.symbol!r} (Z={self.atomic_number}); only H-Ne are supported.')
        if len(self.position) != 3 or not np.all(np.isfinite(self.position)):
            raise GeometryError(f'Atom {self.symbol} has a non-finite or malformed position {self.position}.')

    @classmethod
    def from_symbol(cls, symbol: str, position):
        if symbol not in ATOMIC_NUMBERS:
            if symbol.capitalize() in ATOMIC_NUMBERS:
                symbol = symbol.capitalize()
            else:
                raise GeometryError(f'Unknown or unsupported element symbol {symbol!r}.')
        return cls(symbol, ATOMIC_NUMBERS[symbol], tuple(float(x) for x in position))


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...]
    ionic_charge: int = 0
    spin_multiplicity: Optional[int] = None
    # cached arrays, derived from atoms
    positions: np.ndarray = field(init=False, repr=False, compare=False)
    charges: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'atoms', tuple(self.atoms))
        if not self.atoms:
            raise GeometryError('A molecule needs at least one atom.')
        positions = np.array([atom.position for atom in self.atoms], dtype=np.float64)
        charges = np.array([atom.atomic_number for atom in self.atoms], dtype=np.int64)
        positions.setflags(write=False)
        charges.setflags(write=False)
        object.__setattr__(self, 'positions', positions)
        object.__setattr__(self, 'charges', charges)

        n = self.n_electrons
        if n < 1:
            raise GeometryError(f'Ionic charge {self.ionic_charge:+d} leaves {n} electrons; at least one is required.')
        if self.spin_multiplicity is not None:
            unpaired = self.spin_multiplicity - 1
            if self.spin_multiplicity < 1 or unpaired > n or (n - unpaired) % 2:
                raise GeometryError(f'Multiplicity {self.spin_multiplicity} is infeasible for {n} electrons.')

    def __repr__(self):
        formula = ''.join(atom.symbol for atom in self.atoms)
        return f'Molecule({formula}, charge={self.ionic_charge:+d}, multiplicity={self.spin_multiplicity})'

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_electrons(self) -> int:
        return int(self.charges.sum()) - self.ionic_charge

    def with_charge(self, ionic_charge: int, spin_multiplicity: Optional[int] = None):
        return Molecule(self.atoms, ionic_charge, spin_multiplicity)

    def translated(self, shift):
        shift = np.asarray(shift, dtype=np.float64)
        atoms = [Atom(atom.symbol, atom.atomic_number, tuple(np.asarray(atom.position) + shift)) for atom in self.atoms]
        return Molecule(atoms, self.ionic_charge, self.spin_multiplicity)


def parse_geometry(text: str, ionic_charge: int = 0, spin_multiplicity: Optional[int] = None) -> Molecule:
    """
    Parse a geometry file: an optional `units bohr|angstrom` header, then one `SYMBOL x y z` per line.
    Blank lines and `#` comments are ignored. Positions are returned in Bohr.
    """
    scale = 1.0
    atoms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0].lower() == 'units':
            if atoms:
                raise GeometryError(f'line {lineno}: the units header must come before any atom.')
            if len(tokens) != 2 or tokens[1].lower() not in ('bohr', 'angstrom'):
                raise GeometryError(f'line {lineno}: expected "units bohr" or "units angstrom", got {line!r}.')
            scale = 1.0 if tokens[1].lower() == 'bohr' else 1.0 / BOHR_IN_ANGSTROM
            continue
        if len(tokens) != 4:
            raise GeometryError(f'line {lineno}: expected "SYMBOL x y z", got {line!r}.')
        try:
            coords = [float(x) * scale for x in tokens[1:]]
        except ValueError:
            raise GeometryError(f'line {lineno}: malformed coordinates in {line!r}.') from None
        atoms.append(Atom.from_symbol(tokens[0], coords))

    molecule = Molecule(tuple(atoms), ionic_charge, spin_multiplicity)
    logger.debug(f'Parsed {molecule} with {molecule.n_electrons} electrons.')
    return molecule


def nuclear_repulsion(mol: Molecule) -> float:
    """
    Sum of Z_m Z_n / |R_m - R_n| over nucleus pairs, in Hartree.
    """
    energy = 0.0
    for m in range(mol.n_atoms):
        for n in range(m + 1, mol.n_atoms):
            distance = np.linalg.norm(mol.positions[m] - mol.positions[n])
            if distance == 0.0:
                raise GeometryError(f'Nuclei {m} and {n} occupy the same position.')
            energy += mol.charges[m] * mol.charges[n] / distance
    return float(energy)


def electron_count(mol: Molecule) -> tuple[int, int]:
    n = mol.n_electrons
    unpaired = n % 2 if mol.spin_multiplicity is None else mol.spin_multiplicity - 1
    if unpaired > n or (n - unpaired) % 2:
        raise GeometryError(f'Multiplicity {unpaired + 1} is infeasible for {n} electrons.')
    n_down = (n - unpaired) // 2
    return n_down + unpaired, n_down
