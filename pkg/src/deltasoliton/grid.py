"""Uniform grid, discrete function algebra, and the delta-modified operator.

The operator -d^2/dx^2 - gamma*delta is discretized through its quadratic
form: the standard 3-point Laplacian plus a -gamma/h correction on the
diagonal at the origin node.  The grid always has an odd number of points so
that x = 0 is a node and parity symmetrization is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-R, R] with an odd number of nodes."""

    half_length: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise GridError(f"n_points must be odd and >= 3, got {self.n_points}")
        if self.half_length <= 0:
            raise GridError(f"half_length must be positive, got {self.half_length}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_length / (self.n_points - 1)

    @property
    def zero_index(self) -> int:
        return (self.n_points - 1) // 2

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_length, self.half_length, self.n_points)

    def function(self, values) -> "GridFunction":
        return GridFunction(self, np.asarray(values, dtype=complex))

    def sample(self, fn) -> "GridFunction":
        return GridFunction(self, np.asarray(fn(self.x), dtype=complex))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n_points, dtype=complex))


@dataclass(frozen=True)
class GridFunction:
    """Complex-valued samples on a Grid.  Treated as immutable."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.values) != self.grid.n_points:
            raise GridError(
                f"values length {len(self.values)} != n_points {self.grid.n_points}"
            )

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def at_zero(self) -> complex:
        return complex(self.values[self.grid.zero_index])

    def conj(self) -> "GridFunction":
        return GridFunction(self.grid, np.conj(self.values))

    def __add__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__


def _check_same_grid(f: GridFunction, g: GridFunction):
    if f.grid != g.grid:
        raise GridError("grid mismatch between operands")


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Real inner product Re integral f conj(g) dx (trapezoid rule)."""
    _check_same_grid(f, g)
    w = f.values * np.conj(g.values)
    return f.grid.h * float(np.real(np.sum(w) - 0.5 * (w[0] + w[-1])))


def complex_inner_product(f: GridFunction, g: GridFunction) -> complex:
    """Full complex pairing integral f conj(g) dx (trapezoid rule)."""
    _check_same_grid(f, g)
    w = f.values * np.conj(g.values)
    return f.grid.h * complex(np.sum(w) - 0.5 * (w[0] + w[-1]))

def l2_norm(f: GridFunction) -> float:
    return np.sqrt(max(inner_product(f, f), 0.0))


def delta_quadratic_form(f: GridFunction, g: GridFunction, gamma: float) -> float:
    """Form q(f,g) = integral f' conj(g') dx - gamma f(0) conj(g(0)), real part.

    Forward differences; matches the matrix of build_delta_operator in the
    form sense on functions with decaying tails.
    """
    _check_same_grid(f, g)
    h = f.grid.h
    df = np.diff(f.values)
    dg = np.diff(g.values)
    grad = float(np.real(np.sum(df * np.conj(dg)))) / h
    z = f.grid.zero_index
    return grad - gamma * float(np.real(f.values[z] * np.conj(g.values[z])))


@dataclass(frozen=True)
class DeltaOperator:
    """Banded symmetric matrix for -Laplacian - gamma*delta with Dirichlet ends."""

    gamma: float
    grid: Grid
    diag: np.ndarray = field(repr=False)
    offdiag: np.ndarray = field(repr=False)  # length n-1, sub/super diagonal

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out

    def __call__(self, f: GridFunction) -> GridFunction:
        if f.grid != self.grid:
            raise GridError("grid mismatch between operator and function")
        return GridFunction(self.grid, self.apply(f.values))

    def shifted_banded(self, shift: complex) -> np.ndarray:
        """Banded (1,1) representation of M + shift*I for solve_banded."""
        n = self.grid.n_points
        ab = np.zeros((3, n), dtype=np.result_type(self.diag.dtype, type(shift)))
        ab[0, 1:] = self.offdiag
        ab[1, :] = self.diag + shift
        ab[2, :-1] = self.offdiag
        return ab


def build_delta_operator(grid: Grid, gamma: float) -> DeltaOperator:
    """Assemble M = (1/h^2) tridiag(-1,2,-1) with M[0node,0node] += -gamma/h."""
    n = grid.n_points
    h = grid.h
    diag = np.full(n, 2.0 / h**2)
    diag[grid.zero_index] -= gamma / h
    offdiag = np.full(n - 1, -1.0 / h**2)
    return DeltaOperator(gamma=gamma, grid=grid, diag=diag, offdiag=offdiag)


def resolvent_solve(op: DeltaOperator, shift: float, rhs: GridFunction) -> GridFunction:
    """Solve (M + shift*I) v = rhs with residual <= 1e-10 * ||rhs||."""
    if rhs.grid != op.grid:
        raise GridError("grid mismatch between operator and rhs")
    ab = op.shifted_banded(shift)
    v = solve_banded((1, 1), ab, rhs.values)
    res = op.apply(v) + shift * v - rhs.values
    rhs_norm = np.linalg.norm(rhs.values)
    if rhs_norm > 0 and np.linalg.norm(res) > 1e-10 * rhs_norm:
        raise GridError(
            f"resolvent solve residual {np.linalg.norm(res):.3e} exceeds "
            f"1e-10 * ||rhs|| (shift={shift})"
        )
    return GridFunction(op.grid, v)


def h1_norm(f: GridFunction) -> float:
    """Standard H^1 norm sqrt(||f'||^2 + ||f||^2), forward differences."""
    h = f.grid.h
    grad = float(np.sum(np.abs(np.diff(f.values)) ** 2)) / h
    return np.sqrt(grad + inner_product(f, f))


def fourier_xi(grid: Grid) -> np.ndarray:
    """Frequencies for the periodic transform on [-R, R) (n-1 modes)."""
    n = grid.n_points - 1
    return 2.0 * np.pi * np.fft.fftfreq(n, d=grid.h)


def _origin_phase(n_modes: int) -> np.ndarray:
    # e^{i xi_m R} with xi_m R = pi m: alternating signs, exact in floats
    m = np.rint(np.fft.fftfreq(n_modes) * n_modes).astype(int)
    return (1 - 2 * (np.abs(m) % 2)).astype(float)


def fourier_transform(f: GridFunction) -> np.ndarray:
    """Continuum-normalized coefficients hat f(xi_m) (1/sqrt(2 pi) convention,
    origin at x=0)."""
    vals = f.values[:-1]
    n = len(vals)
    return f.grid.h * np.fft.fft(vals) * _origin_phase(n) / np.sqrt(2.0 * np.pi)


def inverse_fourier_transform(grid: Grid, fhat: np.ndarray) -> GridFunction:
    n = grid.n_points - 1
    vals = np.fft.ifft(fhat * _origin_phase(n)) * np.sqrt(2.0 * np.pi) / grid.h
    out = np.empty(grid.n_points, dtype=complex)
    out[:-1] = vals
    out[-1] = vals[0]
    return GridFunction(grid, out)


def hs_norm(f: GridFunction, s: float, lam: float = 1.0) -> float:
    """Shifted fractional Sobolev norm ||(|xi|^2 + lam)^{s/2} hat f||_{L^2}.

    Computed by the discrete Fourier transform on the periodic extension of
    [-R, R); agrees with the lam-shifted H^1 norm at s = 1 up to
    discretization error.
    """
    if not 0.0 <= s <= 2.0:
        raise GridError(f"s must lie in [0, 2], got {s}")
    if lam <= 0:
        raise GridError(f"lam must be positive, got {lam}")
    xi = fourier_xi(f.grid)
    fhat = fourier_transform(f)
    dxi = np.pi / f.grid.half_length
    return np.sqrt(float(np.sum((xi**2 + lam) ** s * np.abs(fhat) ** 2)) * dxi)


def symmetrize(f: GridFunction, parity: int) -> GridFunction:
    """Project onto the even (+1) or odd (-1) subspace; exact on this grid."""
    flipped = f.values[::-1]
    if parity == 1:
        return GridFunction(f.grid, 0.5 * (f.values + flipped))
    if parity == -1:
        return GridFunction(f.grid, 0.5 * (f.values - flipped))
    raise GridError(f"parity must be +1 or -1, got {parity}")


def parity_defect(f: GridFunction, parity: int) -> float:
    """Relative norm of the component with the opposite parity."""
    sym = symmetrize(f, parity)
    n = l2_norm(f)
    if n == 0.0:
        return 0.0
    return l2_norm(f - sym) / n
