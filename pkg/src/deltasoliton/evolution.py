"""Time integration of the delta-NLS flow with conservation diagnostics.

Strang splitting: half-step exact phase rotation by the nonlinearity,
Crank-Nicolson for the linear part (the delta term lives in the operator
matrix, so it is treated exactly at the form level and the substep is
unitary up to solver tolerance), half-step rotation again.  Backward
integration uses the time-reversal symmetry u(t,x) -> conj(u)(-t,x) so a
single forward code path is exercised everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .grid import Grid, GridFunction, build_delta_operator
from .ground_state import conserved_functionals


class EvolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    p: float
    gamma: float
    record_every: int = 10
    dt_guard: float | None = 0.5  # require dt <= dt_guard * h unless None

    def __post_init__(self):
        if self.dt <= 0:
            raise EvolutionError(f"dt must be positive, got {self.dt}")
        if self.p <= 1:
            raise EvolutionError(f"p must exceed 1, got {self.p}")


@dataclass(frozen=True)
class StateSnapshot:
    t: float
    u: GridFunction
    E_gamma: float
    M: float


def snapshot(t: float, u: GridFunction, cfg: EvolutionConfig) -> StateSnapshot:
    e, m = conserved_functionals(u, cfg.gamma, cfg.p)
    return StateSnapshot(t=t, u=u, E_gamma=e, M=m)


class Stepper:
    """Reusable Strang/CN stepper for one grid and one dt."""

    def __init__(self, grid: Grid, cfg: EvolutionConfig):
        if cfg.dt_guard is not None and cfg.dt > cfg.dt_guard * grid.h:
            raise EvolutionError(
                f"dt={cfg.dt} violates the dt <= {cfg.dt_guard}*h guard "
                f"(h={grid.h:.4g}); pass dt_guard=None to override"
            )
        self.grid = grid
        self.cfg = cfg
        self.op = build_delta_operator(grid, cfg.gamma)
        z = 0.5j * cfg.dt
        n = grid.n_points
        self._lhs = np.zeros((3, n), dtype=complex)
        self._lhs[0, 1:] = z * self.op.offdiag
        self._lhs[1, :] = 1.0 + z * self.op.diag
        self._lhs[2, :-1] = z * self.op.offdiag
        self._z = z

    def _phase_half(self, v: np.ndarray) -> np.ndarray:
        return v * np.exp(0.5j * self.cfg.dt * np.abs(v) ** (self.cfg.p - 1.0))

    def step_values(self, v: np.ndarray) -> np.ndarray:
        v = self._phase_half(v)
        rhs = v - self._z * self.op.apply(v)
        v = solve_banded((1, 1), self._lhs, rhs)
        return self._phase_half(v)

    def step(self, u: GridFunction) -> GridFunction:
        if u.grid != self.grid:
            raise EvolutionError("grid mismatch")
        return GridFunction(self.grid, self.step_values(u.values.copy()))


def step(u: GridFunction, cfg: EvolutionConfig) -> GridFunction:
    return Stepper(u.grid, cfg).step(u)


def evolve(
    u0: GridFunction,
    t0: float,
    t1: float,
    cfg: EvolutionConfig,
) -> list[StateSnapshot]:
    """Integrate from t0 to t1 (either direction), recording snapshots every
    record_every steps (plus the endpoints).  On NaN the run aborts and the
    snapshots up to the last good state are returned."""
    if t1 == t0:
        return [snapshot(t0, u0, cfg)]
    span = abs(t1 - t0)
    n_steps = max(1, round(span / cfg.dt))
    dt_eff = span / n_steps
    eff_cfg = EvolutionConfig(
        dt=dt_eff, p=cfg.p, gamma=cfg.gamma,
        record_every=cfg.record_every, dt_guard=cfg.dt_guard,
    )
    backward = t1 < t0
    v = np.conj(u0.values) if backward else u0.values.copy()
    stepper = Stepper(u0.grid, eff_cfg)

    def emit(t, vals):
        u = GridFunction(u0.grid, np.conj(vals) if backward else vals.copy())
        return snapshot(t, u, cfg)

    out = [emit(t0, v)]
    sign = -1.0 if backward else 1.0
    for k in range(1, n_steps + 1):
        v = stepper.step_values(v)
        if not np.all(np.isfinite(v)):
            break
        if k % cfg.record_every == 0 or k == n_steps:
            out.append(emit(t0 + sign * k * dt_eff, v))
    return out


def gradient(u: GridFunction) -> np.ndarray:
    """Central-difference spatial derivative (one-sided at the ends)."""
    return np.gradient(u.values, u.grid.h)


@dataclass
class VirialWeights:
    """Evaluated weight functions for the two localized identities.

    ``g`` must vanish near the origin (checked); derivatives are supplied
    analytically by the caller.
    """

    f: np.ndarray | None = None
    f_prime: np.ndarray | None = None
    g: np.ndarray | None = None
    g_prime: np.ndarray | None = None
    g_third: np.ndarray | None = None


@dataclass
class VirialReport:
    mass_defect: float = np.nan
    momentum_defect: float = np.nan
    times: np.ndarray = field(default_factory=lambda: np.empty(0))


def virial_diagnostics(
    snapshots: list[StateSnapshot],
    weights: VirialWeights,
    p: float,
    origin_radius: float = 0.5,
) -> VirialReport:
    """Check the localized mass/momentum identities along a trajectory.

    d/dt int f |u|^2 = 2 Im int f' conj(u) u_x
    d/dt Im int g conj(u) u_x
        = int g' (2|u_x|^2 - (p-1)/(p+1)|u|^{p+1}) - 1/2 int g''' |u|^2

    Time derivatives by centered differences between recorded snapshots.
    """
    if len(snapshots) < 3:
        raise EvolutionError("need at least three snapshots")
    grid = snapshots[0].u.grid
    h = grid.h
    x = grid.x
    report = VirialReport(times=np.array([s.t for s in snapshots[1:-1]]))

    def integral(vals):
        return h * float(np.sum(vals) - 0.5 * (vals[0] + vals[-1]))

    if weights.f is not None:
        series = [integral(weights.f * np.abs(s.u.values) ** 2) for s in snapshots]
        defects = []
        for k in range(1, len(snapshots) - 1):
            dt_rec = snapshots[k + 1].t - snapshots[k - 1].t
            lhs = (series[k + 1] - series[k - 1]) / dt_rec
            du = gradient(snapshots[k].u)
            rhs = 2.0 * integral(
                weights.f_prime * np.imag(np.conj(snapshots[k].u.values) * du)
            )
            defects.append(abs(lhs - rhs))
        report.mass_defect = float(np.max(defects))

    if weights.g is not None:
        near = np.abs(x) <= origin_radius
        if np.any(np.abs(weights.g[near]) > 1e-14):
            raise EvolutionError("momentum weight must vanish near the origin")
        series = []
        for s in snapshots:
            du = gradient(s.u)
            series.append(integral(weights.g * np.imag(np.conj(s.u.values) * du)))
        defects = []
        for k in range(1, len(snapshots) - 1):
            dt_rec = snapshots[k + 1].t - snapshots[k - 1].t
            lhs = (series[k + 1] - series[k - 1]) / dt_rec
            u = snapshots[k].u.values
            du = gradient(snapshots[k].u)
            rhs = integral(
                weights.g_prime
                * (2.0 * np.abs(du) ** 2 - (p - 1.0) / (p + 1.0) * np.abs(u) ** (p + 1.0))
            ) - 0.5 * integral(weights.g_third * np.abs(u) ** 2)
            defects.append(abs(lhs - rhs))
        report.momentum_defect = float(np.max(defects))

    return report
