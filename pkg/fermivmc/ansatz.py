"""
Permutation-equivariant, multi-determinant neural wavefunction in JAX.

Parameters are a plain pytree of dicts and lists:

    one       list of {'w', 'b'} for the one-electron stream, n_layers entries
    two       list of {'w', 'b'} for the two-electron stream, n_layers - 1 entries
    orbital   [up, down] {'w': (hidden_one, k * n_spin), 'b': (k * n_spin,)}
    envelope  [up, down] {'sigma': (k, n_spin, n_atoms, 3, 3), 'pi': (k, n_spin, n_atoms)}

Electrons are ordered up-spin first. An empty spin block keeps zero-sized parameters and
contributes a factor of one to every determinant product.
"""
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from .errors import ConfigError
from .molecule import Molecule

Params = Any


@dataclass(frozen=True)
class AnsatzConfig:
    n_up: int
    n_down: int
    n_determinants: int = 4
    hidden_one: int = 32
    hidden_two: int = 8
    n_layers: int = 2

    def __post_init__(self):
        if self.n_up < 0 or self.n_down < 0 or self.n_up + self.n_down < 1:
            raise ConfigError(f'Invalid electron counts ({self.n_up}, {self.n_down}).')
        for name in ('n_determinants', 'hidden_one', 'hidden_two', 'n_layers'):
            if getattr(self, name) < 1:
                raise ConfigError(f'Ansatz setting {name} must be at least 1, got {getattr(self, name)}.')

    @property
    def spins(self) -> tuple[int, int]:
        return self.n_up, self.n_down

    @property
    def n_electrons(self) -> int:
        return self.n_up + self.n_down


class FeatureSet(NamedTuple):
    one_electron: jnp.ndarray   # (N, 4M)
    two_electron: jnp.ndarray   # (N, N, 4)


class LogPsi(NamedTuple):
    sign: jnp.ndarray
    log_magnitude: jnp.ndarray


# parameters

def _linear_init(key, n_in, n_out):
    key_w, key_b = jax.random.split(key)
    return {
        'w': jax.random.normal(key_w, (n_in, n_out)) / np.sqrt(n_in),
        'b': jax.random.normal(key_b, (n_out,)),
    }


def init_params(key, n_atoms: int, config: AnsatzConfig) -> Params:
    """
    Variance-scaled random layers; envelopes start at sigma = identity, pi = 1.
    """
    keys = iter(jax.random.split(key, 2 * config.n_layers + 2))
    one_width, two_width = 4 * n_atoms, 4
    params = {'one': [], 'two': [], 'orbital': [], 'envelope': []}
    for layer in range(config.n_layers):
        params['one'].append(_linear_init(next(keys), 3 * one_width + 2 * two_width, config.hidden_one))
        one_width = config.hidden_one
        if layer < config.n_layers - 1:
            params['two'].append(_linear_init(next(keys), two_width, config.hidden_two))
            two_width = config.hidden_two
        else:
            next(keys)

    k = config.n_determinants
    for n_spin in config.spins:
        params['orbital'].append(_linear_init(next(keys), config.hidden_one, k * n_spin))
        params['envelope'].append({
            'sigma': jnp.tile(jnp.eye(3), (k, n_spin, n_atoms, 1, 1)),
            'pi': jnp.ones((k, n_spin, n_atoms)),
        })
    return params


def count_params(params: Params) -> int:
    return sum(int(np.size(leaf)) for leaf in jax.tree_util.tree_leaves(params))


# network

def features(positions, nuclei) -> FeatureSet:
    """
    One-electron features (r_j - R_m, |r_j - R_m|) over nuclei; two-electron features
    (r_i - r_j, |r_i - r_j|), zero on the diagonal.
    """
    positions = jnp.asarray(positions)
    n = positions.shape[0]
    ae = positions[:, None, :] - nuclei[None, :, :]
    r_ae = jnp.linalg.norm(ae, axis=-1, keepdims=True)
    one = jnp.concatenate([ae, r_ae], axis=-1).reshape(n, -1)

    ee = positions[:, None, :] - positions[None, :, :]
    eye = jnp.eye(n)[..., None]
    # the eye shift keeps the derivative of the norm finite on the diagonal
    r_ee = jnp.sqrt(jnp.sum(ee ** 2, axis=-1, keepdims=True) + eye) * (1.0 - eye)
    two = jnp.concatenate([ee, r_ee], axis=-1)
    return FeatureSet(one, two)


def _block_mean(x, start, stop, axis):
    if stop == start:
        shape = list(x.shape)
        del shape[axis]
        return jnp.zeros(shape)
    return jnp.mean(jax.lax.slice_in_dim(x, start, stop, axis=axis), axis=axis)


def _pooled(h_one, h_two, n_up, n_down):
    """
    Same-spin and opposite-spin means of the one-electron stream and of each electron's
    two-electron features.
    """
    n = n_up + n_down
    up = _block_mean(h_one, 0, n_up, 0)
    down = _block_mean(h_one, n_up, n, 0)
    same = jnp.concatenate([jnp.tile(up, (n_up, 1)), jnp.tile(down, (n_down, 1))])
    opposite = jnp.concatenate([jnp.tile(down, (n_up, 1)), jnp.tile(up, (n_down, 1))])

    two_up = _block_mean(h_two, 0, n_up, 1)
    two_down = _block_mean(h_two, n_up, n, 1)
    two_same = jnp.concatenate([two_up[:n_up], two_down[n_up:]])
    two_opposite = jnp.concatenate([two_down[:n_up], two_up[n_up:]])
    return jnp.concatenate([h_one, same, opposite, two_same, two_opposite], axis=-1)


def forward_layers(feats: FeatureSet, params: Params, config: AnsatzConfig):
    """
    Interaction layers: h <- tanh(W [h, pooled means] + b), with a residual connection
    whenever input and output widths agree. Returns the one-electron latents (N, hidden_one).
    """
    h_one, h_two = feats.one_electron, feats.two_electron
    for layer, one in enumerate(params['one']):
        pooled = _pooled(h_one, h_two, config.n_up, config.n_down)
        new_one = jnp.tanh(pooled @ one['w'] + one['b'])
        h_one = new_one + h_one if new_one.shape == h_one.shape else new_one
        if layer < len(params['two']):
            two = params['two'][layer]
            new_two = jnp.tanh(h_two @ two['w'] + two['b'])
            h_two = new_two + h_two if new_two.shape == h_two.shape else new_two
    return h_one


def envelope(position, nuclei, sigma, pi):
    """
    sum_m pi_m exp(-|sigma_m (r - R_m)|) for one electron and one (orbital, determinant, spin) slot.
    sigma: (M, 3, 3), pi: (M,).
    """
    ae = position[None, :] - nuclei
    scaled = jnp.einsum('mab,mb->ma', sigma, ae)
    return jnp.sum(pi * jnp.exp(-jnp.linalg.norm(scaled, axis=-1)))


def envelope_values(positions, nuclei, params: Params, config: AnsatzConfig):
    """
    Envelope of every (determinant, orbital, electron) slot, per spin block: [(k, n, n), ...].
    """
    values = []
    start = 0
    for spin, n_spin in enumerate(config.spins):
        block = positions[start:start + n_spin]
        start += n_spin
        env = params['envelope'][spin]
        ae = block[:, None, :] - nuclei[None, :, :]                    # (j, m, 3)
        scaled = jnp.einsum('kimab,jmb->kijma', env['sigma'], ae)       # (k, i, j, m, 3)
        decay = jnp.exp(-jnp.linalg.norm(scaled, axis=-1))              # (k, i, j, m)
        values.append(jnp.einsum('kim,kijm->kij', env['pi'], decay))
    return values


def orbitals(latents, envelopes, params: Params, config: AnsatzConfig):
    """
    Phi[k][i][j] = (w^{k,i} . h_j + b^{k,i}) * envelope[k][i][j], per spin block.
    """
    k = config.n_determinants
    blocks = []
    start = 0
    for spin, n_spin in enumerate(config.spins):
        h = latents[start:start + n_spin]
        start += n_spin
        orbital = params['orbital'][spin]
        linear = (h @ orbital['w'] + orbital['b']).reshape(n_spin, k, n_spin)   # (j, k, i)
        blocks.append(jnp.transpose(linear, (1, 2, 0)) * envelopes[spin])
    return blocks


def orbital_blocks(params: Params, positions, nuclei, config: AnsatzConfig):
    positions = jnp.asarray(positions)
    latents = forward_layers(features(positions, nuclei), params, config)
    return orbitals(latents, envelope_values(positions, nuclei, params, config), params, config)


def log_psi(params: Params, positions, nuclei, config: AnsatzConfig) -> LogPsi:
    """
    psi = sum_k det(Phi_up_k) det(Phi_down_k), evaluated with signed log-determinants and a
    signed log-sum-exp over k.
    """
    signs = jnp.ones(config.n_determinants)
    logdets = jnp.zeros(config.n_determinants)
    for block in orbital_blocks(params, positions, nuclei, config):
        if block.shape[-1] == 0:
            continue
        sign, logdet = jnp.linalg.slogdet(block)
        signs, logdets = signs * sign, logdets + logdet
    shift = jax.lax.stop_gradient(jnp.max(logdets))
    total = jnp.sum(signs * jnp.exp(logdets - shift))
    return LogPsi(jnp.sign(total), jnp.log(jnp.abs(total)) + shift)


def log_abs_psi(params: Params, positions, nuclei, config: AnsatzConfig):
    return log_psi(params, positions, nuclei, config).log_magnitude


# derivatives

def coordinate_derivatives(f: Callable, positions):
    """
    Gradient (N, 3) and Laplacian of a scalar function of electron positions; the Laplacian is
    the Hessian trace over all 3N coordinates, taken forward-over-reverse one coordinate at a time.
    """
    shape = positions.shape
    x = jnp.reshape(positions, -1)

    def flat(y):
        return f(jnp.reshape(y, shape))

    grad_f = jax.grad(flat)

    def second(v):
        return jnp.vdot(jax.jvp(grad_f, (x,), (v,))[1], v)

    laplacian = jnp.sum(jax.vmap(second)(jnp.eye(x.size)))
    return jnp.reshape(grad_f(x), shape), laplacian


def grad_logpsi(params: Params, positions, nuclei, config: AnsatzConfig):
    return jax.grad(log_abs_psi, argnums=1)(params, jnp.asarray(positions), nuclei, config)


def laplacian_logpsi(params: Params, positions, nuclei, config: AnsatzConfig):
    _, laplacian = coordinate_derivatives(lambda x: log_abs_psi(params, x, nuclei, config), jnp.asarray(positions))
    return laplacian


def param_grad_logpsi(params: Params, positions, nuclei, config: AnsatzConfig) -> Params:
    return jax.grad(log_abs_psi, argnums=0)(params, jnp.asarray(positions), nuclei, config)


class Wavefunction:
    """
    The ansatz bound to one molecule, with batched and compiled evaluators over walkers (B, N, 3).
    """

    def __init__(self, nuclei, config: AnsatzConfig):
        self.nuclei = jnp.asarray(nuclei, dtype=jnp.float64)
        self.config = config

        def single(params, x):
            return log_abs_psi(params, x, self.nuclei, config)

        self.single = single
        self.log_psi_batch = jax.jit(jax.vmap(single, in_axes=(None, 0)))
        self.sign_batch = jax.jit(jax.vmap(lambda p, x: log_psi(p, x, self.nuclei, config).sign, in_axes=(None, 0)))
        self.orbitals_batch = jax.jit(jax.vmap(
            lambda p, x: orbital_blocks(p, x, self.nuclei, config), in_axes=(None, 0)))
        self.param_grad_batch = jax.jit(jax.vmap(jax.grad(single), in_axes=(None, 0)))

    def __repr__(self):
        return f'Wavefunction({self.config})'

    def init_params(self, seed: int) -> Params:
        params = init_params(jax.random.PRNGKey(seed), self.nuclei.shape[0], self.config)
        logger.info(f'Initialized ansatz with {count_params(params)} parameters.')
        return params

    def sampler_fn(self, params: Params):
        """
        numpy-facing log|psi| over a walker batch, for the Metropolis kernel.
        """
        def fn(positions):
            return np.asarray(self.log_psi_batch(params, jnp.asarray(positions)))
        return fn


def make_wavefunction(mol: Molecule, config: AnsatzConfig) -> Wavefunction:
    if config.n_up + config.n_down != mol.n_electrons:
        raise ConfigError(f'Ansatz has {config.n_up + config.n_down} electrons, {mol} has {mol.n_electrons}.')
    return Wavefunction(mol.positions, config)
