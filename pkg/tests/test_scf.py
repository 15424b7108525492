import numpy as np
import pytest

# project imports
from fermivmc.basis import (basis_function_values, build_basis, eri_tensor, kinetic_matrix,
                            nuclear_attraction_matrix, overlap_matrix)
from fermivmc.errors import ScfConvergenceError
from fermivmc.molecule import electron_count
from fermivmc.scf import (ScfOptions, dump_matrices, hf_energy, hf_orbital_values, mulliken, read_matrices,
                          run_uhf)
from conftest import molecule

# converged STO-6G UHF totals in Hartree, LiH at 3.015 Bohr;
# He and H2 agree with published STO-6G Hartree-Fock energies
REFERENCE_ENERGIES = {
    'H': -0.4710390542,
    'He': -2.8462920948,
    'H2': -1.1253243672,
    'LiH': -7.9519562454,
    'LiH+': -7.7032155935,
}
# Mulliken charges of LiH+ on Li and H at 3.015 Bohr
LIH_CATION_CHARGES = [0.8088, 0.1912]


def solve(mol, opts=ScfOptions()):
    basis = build_basis(mol)
    n_up, n_down = electron_count(mol)
    return run_uhf(mol, basis, n_up, n_down, opts), basis


MOLECULES = {
    'H': molecule(('H', (0, 0, 0))),
    'He': molecule(('He', (0, 0, 0))),
    'H2': molecule(('H', (0, 0, 0)), ('H', (0, 0, 1.4))),
    'LiH': molecule(('Li', (0, 0, 0)), ('H', (0, 0, 3.015))),
    'LiH+': molecule(('Li', (0, 0, 0)), ('H', (0, 0, 3.015)), ionic_charge=1),
}


@pytest.fixture(params=list(MOLECULES))
def any_molecule(request):
    return MOLECULES[request.param]


@pytest.mark.parametrize('name', list(MOLECULES))
def test_total_energy_matches_reference(name):
    scf, _ = solve(MOLECULES[name])
    assert scf.converged
    assert scf.total_energy == pytest.approx(REFERENCE_ENERGIES[name], abs=1e-6)


def test_hydrogen_atom_is_one_function(hydrogen_atom):
    scf, basis = solve(hydrogen_atom)
    assert scf.converged
    assert scf.n_up == 1 and scf.n_down == 0
    assert scf.total_energy == pytest.approx(-0.4710, abs=5e-4)


def test_orbitals_orthonormal_and_density_idempotent(any_molecule):
    scf, basis = solve(any_molecule)
    assert scf.converged
    S = scf.overlap
    for spin, n_occ in enumerate((scf.n_up, scf.n_down)):
        C = scf.mo_coefficients[spin]
        np.testing.assert_allclose(C.T @ S @ C, np.eye(len(basis)), atol=1e-8)
        P = scf.density_matrices[spin]
        assert np.trace(P @ S) == pytest.approx(n_occ, abs=1e-8)
        np.testing.assert_allclose(P @ S @ P, P, atol=1e-8)
        assert np.all(np.diff(scf.orbital_energies[spin]) >= -1e-12)


def test_mulliken_sums(any_molecule):
    scf, basis = solve(any_molecule)
    report = mulliken(scf, basis, any_molecule)
    assert report.populations.sum() == pytest.approx(any_molecule.n_electrons, abs=1e-8)
    assert report.partial_charges.sum() == pytest.approx(any_molecule.ionic_charge, abs=1e-8)


def test_symmetric_molecule_has_zero_charges(h2):
    scf, basis = solve(h2)
    np.testing.assert_allclose(mulliken(scf, basis, h2).partial_charges, 0.0, atol=1e-8)


def test_lih_charges(lih, lih_cation):
    scf, basis = solve(lih)
    # a minimal basis leaves neutral LiH nearly unpolarized near equilibrium
    charges = mulliken(scf, basis, lih).partial_charges
    assert abs(charges[0]) < 0.01
    assert charges.sum() == pytest.approx(0.0, abs=1e-8)
    scf, basis = solve(lih_cation)
    charges = mulliken(scf, basis, lih_cation).partial_charges
    np.testing.assert_allclose(charges, LIH_CATION_CHARGES, atol=1e-3)
    assert charges.sum() == pytest.approx(1.0, abs=1e-8)


def test_closed_shell_populations_double_one_spin(lih):
    scf, basis = solve(lih)
    report = mulliken(scf, basis, lih)
    PS = scf.density_matrices[0] @ scf.overlap
    one_spin = [sum(PS[mu, mu] for mu in basis.atom_functions(m)) for m in range(lih.n_atoms)]
    np.testing.assert_allclose(report.populations, 2 * np.array(one_spin), atol=1e-8)


def test_helium_spins_share_orbitals(helium_atom):
    scf, _ = solve(helium_atom)
    np.testing.assert_allclose(scf.mo_coefficients[0], scf.mo_coefficients[1], atol=1e-8)
    np.testing.assert_allclose(scf.density_matrices[0], scf.density_matrices[1], atol=1e-8)


def test_h2_uhf_lies_above_full_ci(h2):
    basis = build_basis(h2)
    S = overlap_matrix(basis)
    h = kinetic_matrix(basis) + nuclear_attraction_matrix(basis, h2)
    # two functions: bonding and antibonding orbitals are fixed by symmetry
    C = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt([2 * (1 + S[0, 1]), 2 * (1 - S[0, 1])])
    h_mo = C.T @ h @ C
    g = np.einsum('pqrs,pi,qj,rk,sl->ijkl', eri_tensor(basis), C, C, C, C)
    bonding = 2 * h_mo[0, 0] + g[0, 0, 0, 0]
    antibonding = 2 * h_mo[1, 1] + g[1, 1, 1, 1]
    ci = np.array([[bonding, g[0, 1, 0, 1]], [g[0, 1, 0, 1], antibonding]])
    full_ci = np.linalg.eigvalsh(ci)[0] + 1 / 1.4

    scf, _ = solve(h2)
    assert scf.total_energy == pytest.approx(bonding + 1 / 1.4, abs=1e-8)
    assert scf.total_energy > full_ci + 0.01


def test_h2_below_separated_atoms(h2, hydrogen_atom):
    scf, _ = solve(h2)
    atom, _ = solve(hydrogen_atom)
    assert scf.total_energy < 2 * atom.total_energy


def test_energy_translation_invariant(lih):
    scf, _ = solve(lih)
    moved, _ = solve(lih.translated((3.0, -1.0, 0.5)))
    assert moved.total_energy == pytest.approx(scf.total_energy, abs=1e-9)


def test_lih_ionization_energy(lih, lih_cation):
    ip = hf_energy(lih_cation).total_energy - hf_energy(lih).total_energy
    assert ip == pytest.approx(REFERENCE_ENERGIES['LiH+'] - REFERENCE_ENERGIES['LiH'], abs=2e-6)


def test_lih_ionization_energy_at_configured_geometry():
    neutral = molecule(('Li', (0, 0, 0)), ('H', (0, 0, 3.2)))
    ip = hf_energy(neutral.with_charge(1)).total_energy - hf_energy(neutral).total_energy
    assert ip == pytest.approx(0.2387, abs=0.01)


def test_iteration_cap_reports_unconverged(lih):
    scf, basis = solve(lih, ScfOptions(max_iterations=1))
    assert not scf.converged
    with pytest.raises(ScfConvergenceError) as excinfo:
        mulliken(scf, basis, lih)
    assert excinfo.value.solution is scf
    with pytest.raises(ScfConvergenceError):
        hf_energy(lih, ScfOptions(max_iterations=1))


def test_hf_orbital_values_match_basis_expansion(lih):
    scf, basis = solve(lih)
    rng = np.random.default_rng(3)
    positions = rng.normal(0.0, 1.5, size=(5, 4, 3))
    up, down = hf_orbital_values(scf, basis, positions)
    assert up.shape == (5, 2, 2)
    assert down.shape == (5, 2, 2)
    chi = basis_function_values(basis, positions[2, 3])
    assert down[2, 1, 1] == pytest.approx(scf.occupied(1)[:, 1] @ chi)


def test_dump_matrices_round_trip(tmp_path, h2):
    scf, _ = solve(h2)
    path = tmp_path / 'h2.txt'
    dump_matrices(scf, path)
    assert path.read_text().splitlines()[0] == '# S 2 2'
    matrices = read_matrices(path)
    assert set(matrices) == {'S', 'C_up', 'P_up', 'eps_up', 'C_down', 'P_down', 'eps_down'}
    np.testing.assert_allclose(matrices['C_up'], scf.mo_coefficients[0], rtol=1e-15)
    np.testing.assert_allclose(matrices['eps_down'][0], scf.orbital_energies[1], rtol=1e-15)
