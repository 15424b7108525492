"""
Ionic charge initialization: Mulliken partial charges decide which nuclei gain or lose
electrons when the system carries a net charge.
"""
from dataclasses import dataclass

import numpy as np

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from .errors import ChargeAssignmentError


@dataclass(frozen=True)
class ElectronAssignment:
    per_atom_electrons: tuple[int, ...]
    per_atom_up: tuple[int, ...]
    per_atom_down: tuple[int, ...]

    def __post_init__(self):
        if any(up + down != total for up, down, total in zip(self.per_atom_up, self.per_atom_down, self.per_atom_electrons)):
            raise ChargeAssignmentError(f'Spin counts {self.per_atom_up}/{self.per_atom_down} do not add up to {self.per_atom_electrons}.')
        if min(self.per_atom_up + self.per_atom_down, default=0) < 0:
            raise ChargeAssignmentError('Electron counts must be non-negative.')

    @property
    def n_up(self) -> int:
        return sum(self.per_atom_up)

    @property
    def n_down(self) -> int:
        return sum(self.per_atom_down)


def assign_electrons(partial_charges, atomic_numbers, ionic_charge: int) -> list[int]:
    """
    Start from neutral atoms; while charge remains, add an electron to the most negative atom
    (t < 0) or remove one from the most positive atom (t > 0), moving that atom's charge by one.
    Ties go to the lowest atom index.
    """
    charge = np.array(partial_charges, dtype=np.float64)
    electron = [int(z) for z in atomic_numbers]
    if len(charge) != len(electron):
        raise ChargeAssignmentError(f'{len(charge)} partial charges for {len(electron)} atoms.')
    if sum(electron) - ionic_charge < 0:
        raise ChargeAssignmentError(f'Ionic charge {ionic_charge:+d} removes more electrons than the atoms carry.')

    t = ionic_charge
    while t != 0:
        if t < 0:
            index = int(np.argmin(charge))
            electron[index] += 1
            t += 1
            charge[index] += 1
        else:
            index = int(np.argmax(charge))
            if electron[index] == 0:
                raise ChargeAssignmentError(f'Cannot remove an electron from atom {index}: it has none left.')
            electron[index] -= 1
            t -= 1
            charge[index] -= 1

    logger.debug(f'Charge {ionic_charge:+d} with partial charges {list(partial_charges)} -> electrons {electron}')
    return electron


def split_spins(per_atom_electrons, n_up: int, n_down: int) -> ElectronAssignment:
    """
    Give each atom ceil(e/2) up and floor(e/2) down electrons, then flip single spins in
    atom-index order until the global up/down totals match.
    """
    electrons = [int(e) for e in per_atom_electrons]
    if sum(electrons) != n_up + n_down or n_up < 0 or n_down < 0:
        raise ChargeAssignmentError(f'Cannot split {sum(electrons)} electrons into ({n_up}, {n_down}).')
    up = [(e + 1) // 2 for e in electrons]
    down = [e // 2 for e in electrons]

    while sum(up) > n_up:
        index = next(i for i, count in enumerate(up) if count > 0)
        up[index] -= 1
        down[index] += 1
    while sum(up) < n_up:
        index = next(i for i, count in enumerate(down) if count > 0)
        down[index] -= 1
        up[index] += 1

    return ElectronAssignment(tuple(electrons), tuple(up), tuple(down))
