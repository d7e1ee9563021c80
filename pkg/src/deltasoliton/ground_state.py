"""Closed-form ground state profile, conserved functionals, and the
Vakhitov-Kolokolov slope.

The standing profile solves -Q'' + omega*Q - Q^p = 0 away from the origin
with derivative jump Q'(0+) - Q'(0-) = -gamma*Q(0), and is given explicitly
by a sech power with a tanh^{-1}(gamma/(2 sqrt(omega))) offset.  All
derivatives here are analytic (chain rule on the closed form); finite
differences appear only in test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .grid import Grid, GridFunction, delta_quadratic_form, inner_product


class GroundStateError(ValueError):
    pass


@dataclass(frozen=True)
class SolitonParams:
    """One soliton: nonlinearity power, delta coupling, frequency, velocity,
    shift, phase.

    A resting soliton (v = 0) sits at the origin and carries the delta
    coupling, which requires omega > gamma^2/4.  A moving soliton uses the
    free profile (its own gamma is 0).
    """

    p: float
    gamma: float
    omega: float
    v: float = 0.0
    x0: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.p <= 1:
            raise GroundStateError(f"p must exceed 1, got {self.p}")
        if self.omega <= 0:
            raise GroundStateError(f"omega must be positive, got {self.omega}")
        if self.v == 0.0:
            if self.gamma > 0:
                raise GroundStateError(
                    f"resting soliton requires gamma <= 0, got {self.gamma}"
                )
            if self.omega <= self.gamma**2 / 4.0:
                raise GroundStateError(
                    f"omega={self.omega} inadmissible: need omega > gamma^2/4 "
                    f"= {self.gamma ** 2 / 4.0} for the standing profile"
                )
            if self.x0 != 0.0:
                raise GroundStateError("resting soliton must have x0 = 0")
        else:
            if self.gamma != 0.0:
                raise GroundStateError(
                    "moving soliton uses the free profile; its gamma must be 0"
                )

    @property
    def alpha_omega(self) -> float:
        """Offset tanh^{-1}(gamma / (2 sqrt(omega))) of the sech argument."""
        return np.arctanh(self.gamma / (2.0 * np.sqrt(self.omega)))


def _sech2(u: np.ndarray) -> np.ndarray:
    """sech^2 without overflow for large arguments (underflows cleanly to 0)."""
    e = np.exp(-np.abs(u))
    return (2.0 * e / (1.0 + e * e)) ** 2


def eval_Q(params: SolitonParams, x) -> np.ndarray:
    """Profile Q_{omega,gamma} evaluated at x (scalar or array), centered at 0."""
    p, w = params.p, params.omega
    u = 0.5 * (p - 1) * np.sqrt(w) * np.abs(np.asarray(x, dtype=float)) + params.alpha_omega
    base = 0.5 * (p + 1) * w * _sech2(u)
    return base ** (1.0 / (p - 1))


def eval_dQ_dx(params: SolitonParams, x) -> np.ndarray:
    """Analytic spatial derivative; at x=0 returns the one-sided mean (0 for gamma=0)."""
    p, w = params.p, params.omega
    xa = np.asarray(x, dtype=float)
    u = 0.5 * (p - 1) * np.sqrt(w) * np.abs(xa) + params.alpha_omega
    # dQ/dx = Q * (1/(p-1)) * (-2 tanh u) * du/dx, du/dx = sign(x)(p-1) sqrt(w)/2
    return eval_Q(params, xa) * (-np.sqrt(w)) * np.tanh(u) * np.sign(xa)


def eval_dQ_domega(params: SolitonParams, x) -> np.ndarray:
    """Analytic omega-derivative of the closed form (even in x)."""
    p, w = params.p, params.omega
    xa = np.abs(np.asarray(x, dtype=float))
    u = 0.5 * (p - 1) * np.sqrt(w) * xa + params.alpha_omega
    dalpha = _dalpha_domega(params.gamma, w)
    du = 0.25 * (p - 1) * xa / np.sqrt(w) + dalpha
    dlog = (1.0 / (p - 1)) * (1.0 / w - 2.0 * np.tanh(u) * du)
    return eval_Q(params, xa) * dlog


def _dalpha_domega(gamma: float, omega: float) -> float:
    """d/domega of tanh^{-1}(gamma/(2 sqrt(omega)))."""
    return -gamma / (4.0 * np.sqrt(omega) * (omega - gamma**2 / 4.0))


def sample_Q(params: SolitonParams, grid: Grid) -> GridFunction:
    return GridFunction(grid, eval_Q(params, grid.x).astype(complex))


def q_peak_identity(params: SolitonParams) -> tuple[float, float]:
    """Return (Q(0)^{p-1}, (p+1) omega/2 (1 - gamma^2/(4 omega))).

    These are equal in exact arithmetic: sech^2(tanh^{-1} z) = 1 - z^2.
    """
    q0 = float(eval_Q(params, 0.0))
    lhs = q0 ** (params.p - 1)
    z = params.gamma / (2.0 * np.sqrt(params.omega))
    rhs = 0.5 * (params.p + 1) * params.omega * (1.0 - z**2)
    return lhs, rhs


def stationary_residual(params: SolitonParams, grid: Grid) -> tuple[float, float]:
    """(interior residual sup-norm away from 0, derivative-jump defect).

    Interior: central second differences of -Q'' + omega Q - Q^p on |x| >= 2h.
    Jump: one-sided second-order differences of Q' at 0 against -gamma*Q(0).
    """
    if params.v != 0.0:
        raise GroundStateError("stationary residual is defined for the v=0 profile")
    h = grid.h
    q = eval_Q(params, grid.x)
    z = grid.zero_index
    lap = np.zeros_like(q)
    lap[1:-1] = (q[2:] - 2.0 * q[1:-1] + q[:-2]) / h**2
    res = -lap + params.omega * q - q**params.p
    mask = np.abs(grid.x) >= 2.0 * h - 1e-14
    mask[0] = mask[-1] = False
    interior = float(np.max(np.abs(res[mask])))
    dplus = (-3.0 * q[z] + 4.0 * q[z + 1] - q[z + 2]) / (2.0 * h)
    dminus = (3.0 * q[z] - 4.0 * q[z - 1] + q[z - 2]) / (2.0 * h)
    jump = abs(dplus - dminus + params.gamma * q[z])
    return interior, jump


def conserved_functionals(u: GridFunction, gamma: float, p: float) -> tuple[float, float]:
    """Energy E_gamma and mass M of a state.

    E_gamma = 1/2 ||u'||^2 - gamma/2 |u(0)|^2 - ||u||_{p+1}^{p+1}/(p+1),
    M = ||u||_{L^2}^2.  Gradient term uses the same forward-difference form
    as the discrete operator.
    """
    kinetic = 0.5 * delta_quadratic_form(u, u, gamma)
    absu = np.abs(u.values) ** (p + 1)
    pot = u.grid.h * (np.sum(absu) - 0.5 * (absu[0] + absu[-1])) / (p + 1)
    mass = inner_product(u, u)
    return float(kinetic - pot), float(mass)


def profile_mass(params: SolitonParams) -> float:
    """||Q||_{L^2}^2 by adaptive quadrature of the closed form."""
    q2 = lambda x: float(eval_Q(params, x)) ** 2
    left, _ = quad(q2, -np.inf, 0.0, limit=200)
    right, _ = quad(q2, 0.0, np.inf, limit=200)
    return left + right


def vk_derivative(params: SolitonParams) -> float:
    """Slope d/domega ||Q||^2 in closed form; negative for p > 5, gamma <= 0.

    (2/w)(1/(p-1) - 1/4)||Q||^2 - (4/(p-1)) (d alpha/d omega / sqrt(w)) Q(0)^2.
    The coefficients follow from differentiating
    ||Q||^2 = 2 A(w)^{2/(p-1)} a(w)^{-1} int_{alpha(w)}^inf sech^{4/(p-1)},
    with A = (p+1)w/2 and a = (p-1)sqrt(w)/2; for gamma = 0 this reduces to
    the exact scaling law ||Q_w||^2 = w^{2/(p-1)-1/2} ||Q_1||^2.
    """
    if params.v != 0.0:
        raise GroundStateError("VK slope is defined for the v=0 profile")
    p, w = params.p, params.omega
    mass = profile_mass(params)
    q0 = float(eval_Q(params, 0.0))
    dalpha = _dalpha_domega(params.gamma, w)
    return (2.0 / w) * (1.0 / (p - 1) - 0.25) * mass - (
        4.0 / (p - 1)
    ) * (dalpha / np.sqrt(w)) * q0**2
