import numpy as np
import pytest
from scipy import stats

# project imports
from fermivmc.charge_init import ElectronAssignment
from fermivmc.errors import ConfigError, SamplerError
from fermivmc.sampler import (SamplerConfig, WalkerBatch, burn_in, electron_centers, init_walkers, metropolis_step,
                              refresh_log_prob, run_chain, walker_streams)
from conftest import molecule

ONE_ELECTRON = ElectronAssignment((1,), (1,), (0,))


def gaussian_log_psi(positions):
    # 2 log|psi| = -|r|^2
    return -0.5 * np.sum(positions ** 2, axis=(1, 2))


def constant_log_psi(positions):
    return np.zeros(len(positions))


def make_batch(mol, assignment, cfg, log_psi=None):
    return init_walkers(mol, assignment, cfg, walker_streams(cfg.seed, cfg.batch_size), log_psi)


@pytest.fixture(scope='module')
def gaussian_samples():
    """
    Final positions of 10000 independent walkers after burn-in on the 3-D Gaussian target.
    """
    cfg = SamplerConfig(batch_size=10000, proposal_std=0.6, burn_in_steps=250, seed=11)
    rng = walker_streams(cfg.seed, cfg.batch_size)
    batch = init_walkers(molecule(('H', (0, 0, 0))), ONE_ELECTRON, cfg, rng, gaussian_log_psi)
    batch = burn_in(batch, gaussian_log_psi, cfg, rng)
    return batch.positions.reshape(-1)


def test_gaussian_target_variance(gaussian_samples):
    n = gaussian_samples.size
    variance = np.var(gaussian_samples)
    std_error = 0.5 * np.sqrt(2.0 / n)
    assert abs(variance - 0.5) < 3 * std_error
    assert abs(np.mean(gaussian_samples)) < 3 * np.sqrt(0.5 / n)


def test_gaussian_target_histogram(gaussian_samples):
    edges = np.concatenate([[-np.inf], np.linspace(-1.6, 1.6, 15), [np.inf]])
    observed, _ = np.histogram(gaussian_samples, bins=edges)
    expected = gaussian_samples.size * np.diff(stats.norm.cdf(edges, scale=np.sqrt(0.5)))
    _, p_value = stats.chisquare(observed, expected)
    assert p_value > 0.01


def test_init_mean_at_nucleus():
    nucleus = (0.3, -0.2, 1.0)
    cfg = SamplerConfig(batch_size=100000, init_std=1.0, seed=5)
    batch = make_batch(molecule(('H', nucleus)), ONE_ELECTRON, cfg)
    assert batch.positions.shape == (100000, 1, 3)
    std_error = 1.0 / np.sqrt(cfg.batch_size)
    assert np.all(np.abs(batch.positions.mean(axis=(0, 1)) - nucleus) < 5 * std_error)


def test_init_is_deterministic():
    cfg = SamplerConfig(batch_size=16, seed=3)
    mol = molecule(('Li', (0, 0, 0)), ('H', (0, 0, 3.0)))
    assignment = ElectronAssignment((2, 2), (1, 1), (1, 1))
    first, second = make_batch(mol, assignment, cfg), make_batch(mol, assignment, cfg)
    np.testing.assert_array_equal(first.positions, second.positions)


def test_electron_centers_put_up_block_first():
    mol = molecule(('Li', (0, 0, 0)), ('H', (0, 0, 3.0)))
    centers = electron_centers(mol, ElectronAssignment((3, 1), (2, 0), (1, 1)))
    np.testing.assert_array_equal(centers[:, 2], [0.0, 0.0, 0.0, 3.0])


def test_empty_atom_contributes_no_electrons():
    mol = molecule(('H', (0, 0, 0)), ('H', (0, 0, 4.0)), ionic_charge=1)
    cfg = SamplerConfig(batch_size=200, init_std=0.1)
    batch = make_batch(mol, ElectronAssignment((0, 1), (0, 1), (0, 0)), cfg)
    assert batch.positions.shape == (200, 1, 3)
    assert abs(batch.positions[..., 2].mean() - 4.0) < 0.05


def test_init_rejects_mismatched_assignment():
    cfg = SamplerConfig()
    with pytest.raises(SamplerError):
        make_batch(molecule(('He', (0, 0, 0))), ONE_ELECTRON, cfg)


def test_degenerate_walker_is_redrawn():
    cfg = SamplerConfig(batch_size=4, seed=9)
    mol = molecule(('H', (0, 0, 0)))
    calls = []

    def flaky(positions):
        values = gaussian_log_psi(positions)
        if not calls:
            values[0] = -np.inf
        calls.append(1)
        return values

    plain = make_batch(mol, ONE_ELECTRON, cfg)
    repaired = make_batch(mol, ONE_ELECTRON, cfg, flaky)
    assert len(calls) == 2
    assert np.all(np.isfinite(repaired.log_prob))
    assert not np.array_equal(plain.positions[0], repaired.positions[0])
    np.testing.assert_array_equal(plain.positions[1:], repaired.positions[1:])


def test_persistently_degenerate_walkers_fail():
    cfg = SamplerConfig(batch_size=2)
    with pytest.raises(SamplerError):
        make_batch(molecule(('H', (0, 0, 0))), ONE_ELECTRON, cfg, lambda x: np.full(len(x), -np.inf))


def test_constant_target_accepts_everything():
    cfg = SamplerConfig(batch_size=8)
    rng = walker_streams(cfg.seed, cfg.batch_size)
    batch = init_walkers(molecule(('H', (0, 0, 0))), ONE_ELECTRON, cfg, rng, constant_log_psi)
    batch = run_chain(batch, constant_log_psi, cfg, 25, rng)
    assert batch.acceptance_rate == 1.0
    assert batch.proposal_count == 200


def test_rejected_proposals_leave_state_untouched():
    cfg = SamplerConfig(batch_size=5)
    rng = walker_streams(0, cfg.batch_size)
    positions = np.random.default_rng(1).normal(size=(5, 2, 3))
    batch = WalkerBatch(positions.copy(), np.full(5, -1.25))
    stepped = metropolis_step(batch, lambda x: np.full(len(x), np.nan), cfg, rng)
    np.testing.assert_array_equal(stepped.positions, positions)
    np.testing.assert_array_equal(stepped.log_prob, np.full(5, -1.25))
    assert stepped.accept_count == 0 and stepped.proposal_count == 5


def test_accepted_walkers_cache_new_log_prob():
    cfg = SamplerConfig(batch_size=6)
    rng = walker_streams(2, cfg.batch_size)
    batch = init_walkers(molecule(('H', (0, 0, 0))), ONE_ELECTRON, cfg, rng, gaussian_log_psi)
    batch = run_chain(batch, gaussian_log_psi, cfg, 10, rng)
    np.testing.assert_allclose(batch.log_prob, 2 * gaussian_log_psi(batch.positions), rtol=1e-15)
    assert batch.acceptance_rate == batch.accept_count / batch.proposal_count


def test_zero_steps_is_identity():
    cfg = SamplerConfig(batch_size=3)
    rng = walker_streams(0, cfg.batch_size)
    batch = init_walkers(molecule(('H', (0, 0, 0))), ONE_ELECTRON, cfg, rng, gaussian_log_psi)
    assert run_chain(batch, gaussian_log_psi, cfg, 0, rng) is batch


def test_chains_are_deterministic():
    cfg = SamplerConfig(batch_size=8, seed=21)
    mol = molecule(('H', (0, 0, 0)))

    def trajectory():
        rng = walker_streams(cfg.seed, cfg.batch_size)
        batch = init_walkers(mol, ONE_ELECTRON, cfg, rng, gaussian_log_psi)
        return run_chain(batch, gaussian_log_psi, cfg, 30, rng)

    first, second = trajectory(), trajectory()
    np.testing.assert_array_equal(first.positions, second.positions)
    assert first.accept_count == second.accept_count


def test_refresh_log_prob():
    cfg = SamplerConfig(batch_size=4)
    batch = make_batch(molecule(('H', (0, 0, 0))), ONE_ELECTRON, cfg, constant_log_psi)
    refreshed = refresh_log_prob(batch, gaussian_log_psi)
    np.testing.assert_array_equal(refreshed.positions, batch.positions)
    np.testing.assert_allclose(refreshed.log_prob, -np.sum(batch.positions ** 2, axis=(1, 2)))


@pytest.mark.parametrize('field, value', [
    ('batch_size', 0),
    ('steps_between_updates', 0),
    ('proposal_std', -0.1),
    ('init_std', 0.0),
    ('burn_in_steps', -1),
])
def test_invalid_config(field, value):
    with pytest.raises(ConfigError):
        SamplerConfig(**{field: value})
