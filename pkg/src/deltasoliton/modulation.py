"""Multi-soliton profiles, modulation decomposition, unstable coordinates,
moving cutoff partition, and localized energy functionals.

The decomposition writes u = sum_k Q_k(x - v_k t - x_k - y_k) e^{i Theta_k}
+ w with translation corrections y_k (absent for the resting soliton, which
the delta pins at the origin) and phase corrections mu_k chosen by Newton
iteration so that w is orthogonal to the translation and phase directions
of every soliton.  Unstable coordinates are the pairings of w with the
modulated unstable eigenfunctions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import PchipInterpolator

from .grid import Grid, GridFunction, complex_inner_product, h1_norm
from .ground_state import SolitonParams, conserved_functionals, eval_Q, eval_dQ_dx
from .linearized import SpectralData


class ModulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProfileParams:
    """A multi-soliton configuration: solitons sorted by strictly increasing
    velocity, at most one resting (it carries the equation's delta coupling),
    plus the velocity family used for the cutoff partition (which may include
    a virtual zero when every soliton moves)."""

    gamma: float
    solitons: tuple[SolitonParams, ...]
    partition_velocities: tuple[float, ...] = ()

    def __post_init__(self):
        if self.gamma > 0:
            raise ModulationError("repulsive coupling required (gamma <= 0)")
        vs = [s.v for s in self.solitons]
        if any(b <= a for a, b in zip(vs, vs[1:])):
            raise ModulationError(f"velocities must be strictly increasing, got {vs}")
        if sum(1 for v in vs if v == 0.0) > 1:
            raise ModulationError("at most one resting soliton")
        for s in self.solitons:
            want = self.gamma if s.v == 0.0 else 0.0
            if s.gamma != want:
                raise ModulationError(
                    f"soliton with v={s.v} must carry gamma={want}, got {s.gamma}"
                )
        if not self.partition_velocities:
            object.__setattr__(self, "partition_velocities", tuple(vs))
        pv = self.partition_velocities
        if any(b <= a for a, b in zip(pv, pv[1:])):
            raise ModulationError("partition velocities must be strictly increasing")
        for v in vs:
            if v not in pv:
                raise ModulationError("every soliton velocity needs a partition slot")

    @property
    def K(self) -> int:
        return len(self.solitons)

    @property
    def k0(self) -> int | None:
        for k, s in enumerate(self.solitons):
            if s.v == 0.0:
                return k
        return None

    @property
    def free_indices(self) -> list[int]:
        """Solitons carrying a translation parameter (all but the resting one)."""
        return [k for k in range(self.K) if k != self.k0]

    def slot_of(self, k: int) -> int:
        return self.partition_velocities.index(self.solitons[k].v)

    def slot_coefficients(self) -> list[tuple[float, float]]:
        """(omega, v) per partition slot; a slot without a soliton (the
        virtual zero velocity) weighs its localized mass with coefficient 1."""
        out = []
        hosted = {self.slot_of(k): k for k in range(self.K)}
        for s, v in enumerate(self.partition_velocities):
            if s in hosted:
                out.append((self.solitons[hosted[s]].omega, v))
            else:
                out.append((1.0, v))
        return out


def virtual_velocity_partition(params: ProfileParams) -> ProfileParams:
    """Insert a zero-velocity slot in the cutoff partition when every soliton
    moves, so the slot boundaries straddle the origin."""
    if params.k0 is not None:
        raise ModulationError("a resting soliton already provides the zero slot")
    pv = sorted(set(params.partition_velocities) | {0.0})
    return replace(params, partition_velocities=tuple(pv))


def _positions_phases(params: ProfileParams, t: float, x: np.ndarray, y, mu):
    for k, s in enumerate(params.solitons):
        X = x - s.v * t - s.x0 - y[k]
        Th = 0.5 * s.v * x + (-0.25 * s.v**2 + s.omega) * t + s.theta + mu[k]
        yield k, s, X, Th


def build_profile(params: ProfileParams, t: float, grid: Grid,
                  y=None, mu=None) -> GridFunction:
    """Profile sum_k Q_k(x - v_k t - x_k - y_k) e^{i(v_k x/2 - v_k^2 t/4 +
    omega_k t + theta_k + mu_k)}; y and mu default to zero (pure profile)."""
    y = np.zeros(params.K) if y is None else y
    mu = np.zeros(params.K) if mu is None else mu
    vals = np.zeros(grid.n_points, dtype=complex)
    for k, s, X, Th in _positions_phases(params, t, grid.x, y, mu):
        vals += eval_Q(s, X) * np.exp(1j * Th)
    return GridFunction(grid, vals)


@dataclass
class ModulationState:
    t: float
    w: GridFunction
    y: np.ndarray          # length K; fixed 0 at the resting index
    mu: np.ndarray         # length K
    residual: float
    a_plus: np.ndarray | None = None
    a_minus: np.ndarray | None = None
    b_plus: float | None = None
    b_minus: float | None = None

    def l_plus(self, params: ProfileParams) -> np.ndarray:
        if params.k0 is None:
            return self.a_plus.copy()
        return np.concatenate([self.a_plus, [self.b_plus]])

    def l_minus(self, params: ProfileParams) -> np.ndarray:
        if params.k0 is None:
            return self.a_minus.copy()
        return np.concatenate([self.a_minus, [self.b_minus]])


def _orthogonality_residuals(u_vals, params, t, grid, y, mu):
    x = grid.x
    total = np.zeros(grid.n_points, dtype=complex)
    fields = []
    for k, s, X, Th in _positions_phases(params, t, x, y, mu):
        phase = np.exp(1j * Th)
        qv = eval_Q(s, X)
        total += qv * phase
        fields.append((k, s, X, phase, qv))
    w = u_vals - total
    h = grid.h

    def pair(vals):
        prod = vals * np.conj(w)
        return h * (np.sum(prod) - 0.5 * (prod[0] + prod[-1]))

    res = []
    for k, s, X, phase, qv in fields:
        if k != params.k0:
            res.append(float(np.real(pair(eval_dQ_dx(s, X) * phase))))
    for k, s, X, phase, qv in fields:
        res.append(float(np.imag(pair(qv * phase))))
    return np.asarray(res), w


def decompose(
    u: GridFunction,
    params: ProfileParams,
    t: float,
    eps0: float = 0.1,
    tol: float = 1e-9,
    max_iter: int = 50,
    initial: ModulationState | None = None,
) -> ModulationState:
    """Newton solve for the translation/phase corrections making w orthogonal
    to the modulation directions.  Residuals are driven below ``tol``; the
    closeness precondition ||u - profile||_H1 <= eps0 is enforced."""
    grid = u.grid
    dist = h1_norm(u - build_profile(params, t, grid))
    if dist > eps0:
        raise ModulationError(
            f"state is {dist:.3e} from the profile in H1, beyond eps0={eps0}"
        )
    free = params.free_indices
    n_free = len(free)
    theta = np.zeros(n_free + params.K)
    if initial is not None:
        theta[:n_free] = initial.y[free]
        theta[n_free:] = initial.mu

    def unpack(th):
        y = np.zeros(params.K)
        y[free] = th[:n_free]
        return y, th[n_free:]

    def residual(th):
        y, mu = unpack(th)
        return _orthogonality_residuals(u.values, params, t, grid, y, mu)

    res, w = residual(theta)
    fd = 1e-7
    for _ in range(max_iter):
        if np.linalg.norm(res) <= tol:
            break
        jac = np.empty((len(res), len(theta)))
        for j in range(len(theta)):
            th2 = theta.copy()
            th2[j] += fd
            jac[:, j] = (residual(th2)[0] - res) / fd
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise ModulationError(f"singular modulation Jacobian: {exc}") from exc
        theta = theta + delta
        res, w = residual(theta)
    else:
        raise ModulationError(
            f"modulation Newton failed: residual {np.linalg.norm(res):.3e} "
            f"after {max_iter} iterations"
        )
    y, mu = unpack(theta)
    return ModulationState(
        t=t, w=GridFunction(grid, w), y=y, mu=mu, residual=float(np.linalg.norm(res))
    )


def recompose(state: ModulationState, params: ProfileParams) -> GridFunction:
    prof = build_profile(params, state.t, state.w.grid, state.y, state.mu)
    return prof + state.w


def modulated_mode_values(
    params: ProfileParams,
    k: int,
    spec: SpectralData,
    kind: str,
    sign: int,
    t: float,
    grid: Grid,
    y,
    mu,
) -> np.ndarray:
    """Values of the modulated unstable mode (kind 'Y' or 'Z', sign +-1) of
    soliton k.  The resting soliton is grid-aligned and uses the spectral
    arrays directly (its modes keep the derivative kink at the origin);
    moving solitons are evaluated by spline translation."""
    s = params.solitons[k]
    X = grid.x - s.v * t - s.x0 - y[k]
    Th = 0.5 * s.v * grid.x + (-0.25 * s.v**2 + s.omega) * t + s.theta + mu[k]
    if k == params.k0:
        base = spec.Yplus if kind == "Y" else spec.Zplus
        re, im = base.values.real, base.values.imag
    else:
        if kind != "Y":
            raise ModulationError("only the resting soliton has the odd mode")
        re = spec.mode_spline("Y1")(X)
        im = spec.mode_spline("Y2")(X)
    return (re + 1j * sign * im) * np.exp(1j * Th)


def unstable_coords(
    state: ModulationState,
    params: ProfileParams,
    spectra: dict[int, SpectralData],
) -> ModulationState:
    """Fill the mode pairings a_k+- and b+- of w.

    a^+ pairs with the modulated '+' eigenfunction: since conj(Y^+) = Y^-,
    that pairing extracts the coefficient of the mode decaying like
    e^{-y t} forward in time, i.e. the coordinate that grows under backward
    integration and that the shooting loop must control; a^- is its
    backward-decaying partner.
    """
    grid = state.w.grid
    K = params.K
    a_plus = np.empty(K)
    a_minus = np.empty(K)
    for k in range(K):
        for sign, out in ((1, a_plus), (-1, a_minus)):
            mode = modulated_mode_values(
                params, k, spectra[k], "Y", sign, state.t, grid, state.y, state.mu
            )
            val = complex_inner_product(GridFunction(grid, mode), state.w)
            out[k] = float(np.imag(val))
    state.a_plus = a_plus
    state.a_minus = a_minus
    k0 = params.k0
    if k0 is not None:
        for sign, name in ((1, "b_plus"), (-1, "b_minus")):
            mode = modulated_mode_values(
                params, k0, spectra[k0], "Z", sign, state.t, grid, state.y, state.mu
            )
            val = complex_inner_product(GridFunction(grid, mode), state.w)
            setattr(state, name, float(np.imag(val)))
    return state


def decay_rate_c0(params: ProfileParams, spectra: dict[int, SpectralData]) -> float:
    """Base decay rate: sqrt(c0) = (1/10) min{sqrt(omega_k), velocity gaps,
    sqrt(y_k), sqrt(z_k0)} over the partition family."""
    entries = [np.sqrt(s.omega) for s in params.solitons]
    pv = params.partition_velocities
    entries += [b - a for a, b in zip(pv, pv[1:])]
    for k in range(params.K):
        entries.append(np.sqrt(spectra[k].frak_y))
        if k == params.k0:
            if spectra[k].frak_z is None:
                raise ModulationError("resting soliton spectral data lacks the odd mode")
            entries.append(np.sqrt(spectra[k].frak_z))
    return float((0.1 * min(entries)) ** 2)


# --- cutoff partition ------------------------------------------------------

_BUMP_NODES = 10001


def _bump(y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    yi = y[inside]
    out[inside] = np.exp(-1.0 / (1.0 - yi**2))
    return out


def _bump_tables():
    yy = np.linspace(-1.0, 1.0, _BUMP_NODES)
    vals = _bump(yy)
    integral = cumulative_trapezoid(vals, yy, initial=0.0)
    c_norm = 1.0 / integral[-1]
    return yy, integral * c_norm, c_norm


_YY, _PSI_TABLE, _C_NORM = _bump_tables()
_PSI_INTERP = PchipInterpolator(_YY, _PSI_TABLE)


def psi(y) -> np.ndarray:
    """C^3 step: 0 for y<=-1, normalized bump integral inside, 1 for y>=1."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    out[y <= -1.0] = 0.0
    out[y >= 1.0] = 1.0
    mid = np.abs(y) < 1.0
    out[mid] = _PSI_INTERP(y[mid])
    return out


def psi_prime(y) -> np.ndarray:
    return _C_NORM * _bump(np.asarray(y, dtype=float))


def psi_second(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    r = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    yi = y[inside]
    r[inside] = -2.0 * yi / (1.0 - yi**2) ** 2
    return psi_prime(y) * r


def psi_third(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    yi = y[inside]
    r = -2.0 * yi / (1.0 - yi**2) ** 2
    r_prime = -2.0 / (1.0 - yi**2) ** 2 - 8.0 * yi**2 / (1.0 - yi**2) ** 3
    out[inside] = (psi_prime(y)[inside]) * (r**2 + r_prime)
    return out


@dataclass(frozen=True)
class CutoffPartition:
    """Moving partition of unity subordinate to the velocity family: slot
    boundaries travel at the midpoint velocities sigma_k."""

    L: float
    velocities: tuple[float, ...]

    def __post_init__(self):
        if self.L <= 0:
            raise ModulationError("cutoff width L must be positive")
        if len(self.velocities) < 1:
            raise ModulationError("need at least one velocity slot")

    @property
    def sigmas(self) -> np.ndarray:
        v = self.velocities
        return np.array([(a + b) / 2.0 for a, b in zip(v, v[1:])])

    @property
    def n_slots(self) -> int:
        return len(self.velocities)

    def members(self, t: float, x: np.ndarray) -> list[np.ndarray]:
        """Slot weights psi_k(t, x); they sum to 1 exactly (telescoping)."""
        sig = self.sigmas
        steps = [psi((x - s * t) / self.L) for s in sig]
        out = []
        for k in range(self.n_slots):
            left = steps[k - 1] if k >= 1 else np.ones_like(x)
            right = steps[k] if k < len(steps) else np.zeros_like(x)
            out.append(left - right)
        return out

    def members_dx(self, t: float, x: np.ndarray) -> list[np.ndarray]:
        sig = self.sigmas
        dsteps = [psi_prime((x - s * t) / self.L) / self.L for s in sig]
        out = []
        for k in range(self.n_slots):
            left = dsteps[k - 1] if k >= 1 else np.zeros_like(x)
            right = dsteps[k] if k < len(dsteps) else np.zeros_like(x)
            out.append(left - right)
        return out


def partition_for(params: ProfileParams, L: float) -> CutoffPartition:
    return CutoffPartition(L=L, velocities=params.partition_velocities)


def default_cutoff_width(params: ProfileParams) -> float:
    pv = params.partition_velocities
    gaps = [b - a for a, b in zip(pv, pv[1:])]
    min_gap = min(gaps) if gaps else 1.0
    return 20.0 / min_gap


def localized_functionals(
    u: GridFunction, part: CutoffPartition, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Localized masses M_k = int psi_k |u|^2 and momenta
    P_k = Im int psi_k conj(u) u_x."""
    grid = u.grid
    h = grid.h
    du = np.gradient(u.values, h)
    dens_m = np.abs(u.values) ** 2
    dens_p = np.imag(np.conj(u.values) * du)
    masses, momenta = [], []
    for w in part.members(t, grid.x):
        wm = w * dens_m
        wp = w * dens_p
        masses.append(h * float(np.sum(wm) - 0.5 * (wm[0] + wm[-1])))
        momenta.append(h * float(np.sum(wp) - 0.5 * (wp[0] + wp[-1])))
    return np.asarray(masses), np.asarray(momenta)


def boosted_energy(
    u: GridFunction,
    params: ProfileParams,
    part: CutoffPartition,
    t: float,
    p: float,
) -> float:
    """E_gamma(u) + sum over slots of (omega_s + v_s^2/4)/2 * M_s - v_s/2 * P_s."""
    e, _ = conserved_functionals(u, params.gamma, p)
    masses, momenta = localized_functionals(u, part, t)
    total = e
    for (omega_s, v_s), m_s, p_s in zip(params.slot_coefficients(), masses, momenta):
        total += 0.5 * (omega_s + v_s**2 / 4.0) * m_s - 0.5 * v_s * p_s
    return float(total)


def h_gamma_form(
    w: GridFunction,
    params: ProfileParams,
    part: CutoffPartition,
    t: float,
    p: float,
    y=None,
    mu=None,
) -> float:
    """Quadratic form controlling ||w||_H1^2 near the profile: gradient +
    delta + linearized potential wells + velocity-boosted localized terms."""
    grid = w.grid
    h = grid.h
    y = np.zeros(params.K) if y is None else y
    mu = np.zeros(params.K) if mu is None else mu
    dw = np.diff(w.values)
    total = float(np.real(np.sum(dw * np.conj(dw)))) / h
    total -= params.gamma * abs(w.at_zero()) ** 2

    def integral(vals):
        return h * float(np.sum(vals) - 0.5 * (vals[0] + vals[-1]))

    for k, s, X, Th in _positions_phases(params, t, grid.x, y, mu):
        prof = eval_Q(s, X) * np.exp(1j * Th)
        absw2 = np.abs(w.values) ** 2
        total -= integral(np.abs(prof) ** (p - 1.0) * absw2)
        total -= (p - 1.0) * integral(
            np.abs(prof) ** (p - 3.0) * np.real(np.conj(prof) * w.values) ** 2
        )
    masses, momenta = localized_functionals(w, part, t)
    for (omega_s, v_s), m_s, p_s in zip(params.slot_coefficients(), masses, momenta):
        total += (omega_s + v_s**2 / 4.0) * m_s - v_s * p_s
    return total
