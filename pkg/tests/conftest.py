import jax
jax.config.update('jax_enable_x64', True)

import pytest

# project imports
from fermivmc.molecule import Atom, Molecule


def molecule(*atoms, ionic_charge=0, spin_multiplicity=None):
    return Molecule(tuple(Atom.from_symbol(symbol, position) for symbol, position in atoms),
                    ionic_charge, spin_multiplicity)


@pytest.fixture
def hydrogen_atom():
    return molecule(('H', (0.0, 0.0, 0.0)))


@pytest.fixture
def helium_atom():
    return molecule(('He', (0.0, 0.0, 0.0)))


@pytest.fixture
def h2():
    return molecule(('H', (0.0, 0.0, 0.0)), ('H', (0.0, 0.0, 1.4)))


@pytest.fixture
def lih():
    return molecule(('Li', (0.0, 0.0, 0.0)), ('H', (0.0, 0.0, 3.015)))


@pytest.fixture
def lih_cation():
    return molecule(('Li', (0.0, 0.0, 0.0)), ('H', (0.0, 0.0, 3.015)), ionic_charge=1)


@pytest.fixture
def write_run(tmp_path):
    """
    Writes a geometry file and a run config into tmp_path; returns the config path.
    """
    def write(geometry: str, name='run', **sections):
        geometry_path = tmp_path / f'{name}.xyz'
        geometry_path.write_text(geometry)
        lines = ['[molecule]', f'geometry = {geometry_path.name}']
        lines += [f'{key} = {value}' for key, value in sections.pop('molecule', {}).items()]
        for section, keys in sections.items():
            lines.append(f'[{section}]')
            lines += [f'{key} = {value}' for key, value in keys.items()]
        config_path = tmp_path / f'{name}.ini'
        config_path.write_text('\n'.join(lines) + '\n')
        return config_path
    return write
