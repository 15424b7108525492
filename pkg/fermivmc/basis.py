"""
STO-6G minimal basis and McMurchie-Davidson Gaussian integrals.

Integrals are evaluated per contracted pair/quartet with numpy arrays running over the
primitive exponents, so the recurrences below are written once and broadcast.
"""
import functools
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

# logging setup
import logging
logger = logging.getLogger(__name__)

# project imports
from .errors import BasisError
from .molecule import Molecule


STO6G_PATH = Path(__file__).parent / 'data' / 'sto6g.dat'
N_PRIMITIVES = 6

# cartesian exponents of the functions in a shell, in output order
SHELL_POWERS = {
    0: ((0, 0, 0),),
    1: ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
}

_BOYS_SERIES_CUTOFF = 1e-10


@dataclass(frozen=True)
class PrimitiveGaussian:
    exponent: float
    coefficient: float

    def __post_init__(self):
        if not self.exponent > 0:
            raise BasisError(f'Gaussian exponent must be positive, got {self.exponent}.')


@dataclass(frozen=True)
class ContractedShell:
    center_atom_index: int
    angular_momentum: int
    primitives: tuple[PrimitiveGaussian, ...]
    center: tuple[float, float, float]

    @classmethod
    def normalized(cls, center_atom_index, angular_momentum, exponents, coefficients, center):
        """
        Build a shell from contraction weights of normalized primitives,
        folding primitive and contracted normalization into the coefficients.
        """
        if angular_momentum not in SHELL_POWERS:
            raise BasisError(f'Angular momentum {angular_momentum} is not supported (s and p only).')
        exponents = np.asarray(exponents, dtype=np.float64)
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if np.any(exponents <= 0):
            raise BasisError(f'Gaussian exponents must be positive, got {exponents}.')
        # (2a/pi)^(3/4) (4a)^(l/2); the double factorials are 1 for l <= 1
        norms = (2 * exponents / np.pi) ** 0.75 * (4 * exponents) ** (angular_momentum / 2)
        folded = coefficients * norms
        powers = SHELL_POWERS[angular_momentum][0]
        a, b = exponents[:, None], exponents[None, :]
        self_overlap = np.sum(folded[:, None] * folded[None, :] * _overlap_3d(powers, powers, np.zeros(3), a, b))
        folded = folded / np.sqrt(self_overlap)
        primitives = tuple(PrimitiveGaussian(float(e), float(c)) for e, c in zip(exponents, folded))
        return cls(center_atom_index, angular_momentum, primitives, tuple(float(x) for x in center))

    @property
    def exponents(self) -> np.ndarray:
        return np.array([prim.exponent for prim in self.primitives])

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([prim.coefficient for prim in self.primitives])


@dataclass(frozen=True)
class BasisFunction:
    shell: ContractedShell
    powers: tuple[int, int, int]

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.shell.center)


class BasisSet:

    def __init__(self, shells):
        self.shells: tuple[ContractedShell, ...] = tuple(shells)
        self.functions: list[BasisFunction] = [
            BasisFunction(shell, powers)
            for shell in self.shells
            for powers in SHELL_POWERS[shell.angular_momentum]
        ]
        self.function_to_atom: dict[int, int] = {
            index: function.shell.center_atom_index for index, function in enumerate(self.functions)
        }

    def __len__(self):
        return len(self.functions)

    def __repr__(self):
        return f'BasisSet({len(self.shells)} shells, {len(self)} functions)'

    def atom_functions(self, atom_index: int) -> list[int]:
        return [index for index, atom in self.function_to_atom.items() if atom == atom_index]


@functools.lru_cache(maxsize=None)
def load_sto6g(path: Path = STO6G_PATH) -> dict[str, list[tuple[int, np.ndarray, np.ndarray]]]:
    """
    Read the embedded table into {element: [(l, exponents, coefficients), ...]} in file order.
    """
    rows: dict[str, list[tuple[int, float, float]]] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        try:
            symbol, l, exponent, coefficient = line.split()
            rows.setdefault(symbol, []).append((int(l), float(exponent), float(coefficient)))
        except ValueError:
            raise BasisError(f'{path.name}:{lineno}: malformed basis row {line!r}.') from None

    table = {}
    for symbol, entries in rows.items():
        if len(entries) % N_PRIMITIVES:
            raise BasisError(f'{path.name}: {symbol} has {len(entries)} rows, not a multiple of {N_PRIMITIVES}.')
        shells = []
        for start in range(0, len(entries), N_PRIMITIVES):
            chunk = entries[start:start + N_PRIMITIVES]
            if len({l for l, _, _ in chunk}) != 1:
                raise BasisError(f'{path.name}: {symbol} shell starting at row {start} mixes angular momenta.')
            shells.append((chunk[0][0], np.array([e for _, e, _ in chunk]), np.array([c for _, _, c in chunk])))
        # s before p, file order otherwise
        table[symbol] = sorted(shells, key=lambda shell: shell[0])
    return table


def build_basis(mol: Molecule) -> BasisSet:
    table = load_sto6g()
    shells = []
    for index, atom in enumerate(mol.atoms):
        if atom.symbol not in table:
            raise BasisError(f'No STO-6G data for element {atom.symbol}.')
        for l, exponents, coefficients in table[atom.symbol]:
            shells.append(ContractedShell.normalized(index, l, exponents, coefficients, atom.position))
    basis = BasisSet(shells)
    logger.debug(f'Built {basis} for {mol}.')
    return basis


# Boys function and Hermite recurrences

def boys(n: int, T):
    """
    F_n(T) = int_0^1 t^(2n) exp(-T t^2) dt, via the regularized lower incomplete gamma function.
    """
    T = np.asarray(T, dtype=np.float64)
    safe = np.maximum(T, _BOYS_SERIES_CUTOFF)
    value = special.gamma(n + 0.5) * special.gammainc(n + 0.5, safe) / (2 * safe ** (n + 0.5))
    series = 1 / (2 * n + 1) - T / (2 * n + 3)
    return np.where(T < _BOYS_SERIES_CUTOFF, series, value)


def _hermite_e(i, j, t, Qx, a, b):
    """
    Expansion coefficient of the product of two 1-D Gaussians (powers i, j; separation Qx = Ax - Bx)
    in Hermite Gaussians of order t.
    """
    p = a + b
    q = a * b / p
    if t < 0 or t > i + j or i < 0 or j < 0:
        return 0.0
    if i == j == t == 0:
        return np.exp(-q * Qx * Qx)
    if j == 0:
        return (_hermite_e(i - 1, j, t - 1, Qx, a, b) / (2 * p)
                - q * Qx / a * _hermite_e(i - 1, j, t, Qx, a, b)
                + (t + 1) * _hermite_e(i - 1, j, t + 1, Qx, a, b))
    return (_hermite_e(i, j - 1, t - 1, Qx, a, b) / (2 * p)
            + q * Qx / b * _hermite_e(i, j - 1, t, Qx, a, b)
            + (t + 1) * _hermite_e(i, j - 1, t + 1, Qx, a, b))


def _hermite_r(t, u, v, p, PC, cache=None, n=0):
    """
    Hermite Coulomb integral R^n_{tuv}(p, PC); PC holds the three components as arrays.
    """
    if cache is None:
        cache = {}
    key = (t, u, v, n)
    if key in cache:
        return cache[key]
    if t < 0 or u < 0 or v < 0:
        return 0.0
    if t == u == v == 0:
        T = p * (PC[0] ** 2 + PC[1] ** 2 + PC[2] ** 2)
        value = (-2 * p) ** n * boys(n, T)
    elif t == u == 0:
        value = PC[2] * _hermite_r(t, u, v - 1, p, PC, cache, n + 1)
        if v > 1:
            value = value + (v - 1) * _hermite_r(t, u, v - 2, p, PC, cache, n + 1)
    elif t == 0:
        value = PC[1] * _hermite_r(t, u - 1, v, p, PC, cache, n + 1)
        if u > 1:
            value = value + (u - 1) * _hermite_r(t, u - 2, v, p, PC, cache, n + 1)
    else:
        value = PC[0] * _hermite_r(t - 1, u, v, p, PC, cache, n + 1)
        if t > 1:
            value = value + (t - 1) * _hermite_r(t - 2, u, v, p, PC, cache, n + 1)
    cache[key] = value
    return value


def _overlap_1d(i, j, Qx, a, b):
    return _hermite_e(i, j, 0, Qx, a, b) * np.sqrt(np.pi / (a + b))


def _overlap_3d(powers_a, powers_b, AB, a, b):
    value = 1.0
    for d in range(3):
        value = value * _overlap_1d(powers_a[d], powers_b[d], AB[d], a, b)
    return value


def _kinetic_1d(i, j, Qx, a, b):
    return (b * (2 * j + 1) * _overlap_1d(i, j, Qx, a, b)
            - 2 * b * b * _overlap_1d(i, j + 2, Qx, a, b)
            - 0.5 * j * (j - 1) * _overlap_1d(i, j - 2, Qx, a, b))


class _PairData:
    """
    Primitive-pair quantities of two contracted functions, arrays shaped (n_a, n_b).
    """

    def __init__(self, fa: BasisFunction, fb: BasisFunction):
        a = fa.shell.exponents[:, None]
        b = fb.shell.exponents[None, :]
        A, B = fa.center, fb.center
        self.a, self.b = a, b
        self.p = a + b
        self.P = [(a * A[d] + b * B[d]) / self.p for d in range(3)]
        self.coef = fa.shell.coefficients[:, None] * fb.shell.coefficients[None, :]
        self.powers_a, self.powers_b = fa.powers, fb.powers
        self.AB = A - B
        self.E = [
            [_hermite_e(fa.powers[d], fb.powers[d], t, self.AB[d], a, b) * np.ones_like(self.p)
             for t in range(fa.powers[d] + fb.powers[d] + 1)]
            for d in range(3)
        ]

    def hermite_indices(self):
        return itertools.product(*(range(len(self.E[d])) for d in range(3)))


def _pairs(basis: BasisSet):
    n = len(basis)
    return {(i, j): _PairData(basis.functions[i], basis.functions[j]) for i in range(n) for j in range(i, n)}


def _symmetric_from_pairs(n, pairs, func):
    matrix = np.zeros((n, n))
    for (i, j), pair in pairs.items():
        matrix[i, j] = matrix[j, i] = func(pair)
    return matrix


def overlap_matrix(basis: BasisSet) -> np.ndarray:
    def element(pair):
        return np.sum(pair.coef * _overlap_3d(pair.powers_a, pair.powers_b, pair.AB, pair.a, pair.b))
    return _symmetric_from_pairs(len(basis), _pairs(basis), element)


def kinetic_matrix(basis: BasisSet) -> np.ndarray:
    def element(pair):
        s = [_overlap_1d(pair.powers_a[d], pair.powers_b[d], pair.AB[d], pair.a, pair.b) for d in range(3)]
        t = [_kinetic_1d(pair.powers_a[d], pair.powers_b[d], pair.AB[d], pair.a, pair.b) for d in range(3)]
        return np.sum(pair.coef * (t[0] * s[1] * s[2] + s[0] * t[1] * s[2] + s[0] * s[1] * t[2]))
    return _symmetric_from_pairs(len(basis), _pairs(basis), element)


def nuclear_attraction_matrix(basis: BasisSet, mol: Molecule) -> np.ndarray:
    def element(pair):
        total = 0.0
        for C, Z in zip(mol.positions, mol.charges):
            PC = [pair.P[d] - C[d] for d in range(3)]
            cache = {}
            value = 0.0
            for t, u, v in pair.hermite_indices():
                value = value + pair.E[0][t] * pair.E[1][u] * pair.E[2][v] * _hermite_r(t, u, v, pair.p, PC, cache)
            total += -Z * np.sum(pair.coef * 2 * np.pi / pair.p * value)
        return total
    return _symmetric_from_pairs(len(basis), _pairs(basis), element)


def eri_tensor(basis: BasisSet) -> np.ndarray:
    """
    Chemists' notation (mu nu|lambda sigma), computed over the 8-fold unique quartets.
    """
    n = len(basis)
    pairs = _pairs(basis)
    eri = np.zeros((n, n, n, n))
    keys = sorted(pairs)
    for index, bra_key in enumerate(keys):
        bra = pairs[bra_key]
        # bra arrays -> (na, nb, 1, 1)
        p = bra.p[:, :, None, None]
        P = [component[:, :, None, None] for component in bra.P]
        bra_coef = bra.coef[:, :, None, None]
        bra_E = [[e[:, :, None, None] for e in bra.E[d]] for d in range(3)]
        for ket_key in keys[index:]:
            ket = pairs[ket_key]
            # ket arrays -> (1, 1, nc, nd)
            q = ket.p[None, None, :, :]
            Q = [component[None, None, :, :] for component in ket.P]
            ket_E = [[e[None, None, :, :] for e in ket.E[d]] for d in range(3)]
            alpha = p * q / (p + q)
            PQ = [P[d] - Q[d] for d in range(3)]
            cache = {}
            value = 0.0
            for t, u, v in bra.hermite_indices():
                bra_term = bra_E[0][t] * bra_E[1][u] * bra_E[2][v]
                for tau, nu, phi in ket.hermite_indices():
                    sign = (-1) ** (tau + nu + phi)
                    value = value + (sign * bra_term * ket_E[0][tau] * ket_E[1][nu] * ket_E[2][phi]
                                     * _hermite_r(t + tau, u + nu, v + phi, alpha, PQ, cache))
            prefactor = 2 * np.pi ** 2.5 / (p * q * np.sqrt(p + q))
            integral = np.sum(bra_coef * ket.coef[None, None, :, :] * prefactor * value)
            (i, j), (k, l) = bra_key, ket_key
            for a, b, c, d in ((i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k)):
                eri[a, b, c, d] = eri[c, d, a, b] = integral
    return eri


def basis_function_values(basis: BasisSet, points) -> np.ndarray:
    """
    Values chi_mu(r) of every contracted function at `points` (..., 3); returns (n_functions, ...).
    """
    points = np.asarray(points, dtype=np.float64)
    values = np.empty((len(basis),) + points.shape[:-1])
    for index, function in enumerate(basis.functions):
        displacement = points - function.center
        r2 = np.sum(displacement ** 2, axis=-1)
        radial = np.sum(function.shell.coefficients * np.exp(-np.multiply.outer(r2, function.shell.exponents)), axis=-1)
        angular = np.prod(displacement ** np.asarray(function.powers), axis=-1)
        values[index] = angular * radial
    return values
