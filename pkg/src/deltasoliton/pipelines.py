"""Mode pipelines: turn a validated config into artifacts and a verdict.

Every artifact embeds the config hash; exit code 0 means all scientific
checks passed, 2 means a check failed, and operational failures raise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import artifacts as art
from .config import ExperimentConfig
from .evolution import EvolutionConfig, evolve
from .frac_sobolev import (
    FracParams,
    c_f0_decay_check,
    default_lambda,
    equivalence_constant,
    hgamma_norm,
    hs_shifted_norm,
    norm_equivalence_report,
)
from .grid import Grid, GridFunction, h1_norm, inner_product, l2_norm, parity_defect
from .ground_state import (
    SolitonParams,
    conserved_functionals,
    eval_dQ_domega,
    eval_Q,
    profile_mass,
    q_peak_identity,
    sample_Q,
    stationary_residual,
    vk_derivative,
)
from .linearized import (
    build_eigenfunctions,
    build_linearized,
    coercivity_check,
    gram_matrix,
    lambda_pair,
)
from .modulation import (
    CutoffPartition,
    ProfileParams,
    build_profile,
    psi,
    psi_prime,
    psi_second,
    virtual_velocity_partition,
)
from .multisoliton import ShootingConfig, shoot


@dataclass
class RunOutcome:
    mode: str
    passed: bool
    exit_code: int
    summary: dict
    artifacts: dict[str, object] = field(default_factory=dict)


def run(cfg: ExperimentConfig) -> RunOutcome:
    runner = {
        "groundstate": run_groundstate,
        "spectrum": run_spectrum,
        "evolve": run_evolve,
        "shoot": run_shoot,
        "norm-equiv": run_norm_equiv,
        "verify": run_verify,
    }[cfg.mode]
    return runner(cfg)


def _grid(cfg: ExperimentConfig) -> Grid:
    return Grid(cfg.grid.half_length, cfg.grid.n_points)


def _hash(cfg: ExperimentConfig) -> str:
    # output_dir is operational, not part of the scientific identity
    return art.config_hash(cfg.model_dump(exclude={"output_dir"}))


def _profile_params(cfg: ExperimentConfig) -> ProfileParams:
    gamma = cfg.physics.gamma
    solitons = []
    for s in sorted(cfg.profile.solitons, key=lambda s: s.v):
        gk = gamma if s.v == 0.0 else 0.0
        solitons.append(
            SolitonParams(p=cfg.physics.p, gamma=gk, omega=s.omega, v=s.v,
                          x0=s.x0, theta=s.theta)
        )
    params = ProfileParams(gamma=gamma, solitons=tuple(solitons))
    if params.k0 is None:
        params = virtual_velocity_partition(params)
    return params


def _spectra(params: ProfileParams, grid: Grid):
    cache: dict[tuple, object] = {}
    out = {}
    for k, s in enumerate(params.solitons):
        key = (s.p, s.gamma, s.omega)
        if key not in cache:
            rest = SolitonParams(p=s.p, gamma=s.gamma, omega=s.omega)
            cache[key] = build_eigenfunctions(build_linearized(rest, grid))
        out[k] = cache[key]
    return out


def run_groundstate(cfg: ExperimentConfig) -> RunOutcome:
    h = _hash(cfg)
    grid = _grid(cfg)
    params = SolitonParams(p=cfg.physics.p, gamma=cfg.physics.gamma,
                           omega=cfg.groundstate.omega)
    lhs, rhs = q_peak_identity(params)
    peak_err = abs(lhs - rhs) / abs(rhs)
    res_coarse = stationary_residual(params, grid)
    fine = Grid(grid.half_length, 2 * grid.n_points - 1)
    res_fine = stationary_residual(params, fine)
    orders = tuple(
        float(np.log2(max(c, 1e-300) / max(f, 1e-300)))
        for c, f in zip(res_coarse, res_fine)
    )
    vk = vk_derivative(params)
    eps = 1e-4 * params.omega
    fd = (
        profile_mass(SolitonParams(p=params.p, gamma=params.gamma, omega=params.omega + eps))
        - profile_mass(SolitonParams(p=params.p, gamma=params.gamma, omega=params.omega - eps))
    ) / (2 * eps)
    vk_err = abs(vk - fd) / abs(fd)
    q = sample_Q(params, grid)
    e, m = conserved_functionals(q, params.gamma, params.p)
    passed = peak_err <= 1e-12 and vk < 0 and vk_err <= 1e-4 and all(o >= 0.9 for o in orders)
    summary = {
        "peak_identity_rel_error": peak_err,
        "interior_residual": res_coarse[0],
        "jump_defect": res_coarse[1],
        "refinement_orders": orders,
        "vk_slope": vk,
        "vk_fd_rel_error": vk_err,
        "energy": e,
        "mass": m,
    }
    rows = [
        [x, float(eval_Q(params, x)), float(eval_dQ_domega(params, x))]
        for x in grid.x
    ]
    return RunOutcome(
        mode="groundstate", passed=passed, exit_code=0 if passed else 2,
        summary=summary,
        artifacts={
            "groundstate.json": art.render_json(summary, h),
            "profile.csv": art.render_csv(["x", "Q", "dQ_domega"], rows, h),
        },
    )


def run_spectrum(cfg: ExperimentConfig) -> RunOutcome:
    h = _hash(cfg)
    grid = _grid(cfg)
    rows = []
    worst = 0.0
    for case in cfg.spectrum.cases:
        gamma = cfg.physics.gamma if case.gamma is None else case.gamma
        params = SolitonParams(p=cfg.physics.p, gamma=gamma, omega=case.omega)
        data = build_eigenfunctions(build_linearized(params, grid))
        worst = max(worst, data.residual_Y, data.residual_Z or 0.0)
        rows.append([
            cfg.physics.p, gamma, case.omega, data.mu1,
            data.mu2 if data.mu2 is not None else float("nan"),
            data.frak_y,
            data.frak_z if data.frak_z is not None else float("nan"),
            data.residual_Y,
            data.residual_Z if data.residual_Z is not None else float("nan"),
        ])
    passed = worst <= 1e-5
    return RunOutcome(
        mode="spectrum", passed=passed, exit_code=0 if passed else 2,
        summary={"cases": len(rows), "worst_eigen_residual": worst},
        artifacts={
            "spectral_report.csv": art.render_csv(
                ["p", "gamma", "omega", "mu1", "mu2", "frak_y", "frak_z",
                 "residual_Y", "residual_Z"],
                rows, h,
            )
        },
    )


def run_evolve(cfg: ExperimentConfig) -> RunOutcome:
    h = _hash(cfg)
    grid = _grid(cfg)
    params = _profile_params(cfg)
    ev = cfg.evolution
    u0 = build_profile(params, ev.t0, grid)
    econf = EvolutionConfig(dt=ev.dt, p=cfg.physics.p, gamma=cfg.physics.gamma,
                            record_every=ev.record_every)
    snaps = evolve(u0, ev.t0, ev.t1, econf)
    rows = []
    for s in snaps:
        dist = h1_norm(s.u - build_profile(params, s.t, grid))
        rows.append([s.t, s.M, s.E_gamma, dist])
    m_drift = abs(snaps[-1].M - snaps[0].M) / max(snaps[0].M, 1e-300)
    e_drift = abs(snaps[-1].E_gamma - snaps[0].E_gamma) / max(abs(snaps[0].E_gamma), 1e-300)
    completed = abs(snaps[-1].t - ev.t1) < 1e-9
    passed = completed and m_drift <= 1e-8
    summary = {
        "mass_drift": m_drift,
        "energy_drift": e_drift,
        "completed": completed,
        "final_profile_distance": rows[-1][3],
    }
    return RunOutcome(
        mode="evolve", passed=passed, exit_code=0 if passed else 2,
        summary=summary,
        artifacts={
            "trajectory.csv": art.render_csv(
                ["t", "M", "E_gamma", "H1_distance_to_profile"], rows, h
            ),
            "final_state.dsol": art.checkpoint_bytes(snaps[-1].u, snaps[-1].t),
        },
    )


def run_shoot(cfg: ExperimentConfig) -> RunOutcome:
    h = _hash(cfg)
    grid = _grid(cfg)
    params = _profile_params(cfg)
    spectra = _spectra(params, grid)
    sh = cfg.shooting
    scfg = ShootingConfig(
        t_start=sh.t_start, t_end=sh.t_end, dt=sh.dt, sample_dt=sh.sample_dt,
        newton_tol=sh.newton_tol, max_outer=sh.max_outer, fd_step=sh.fd_step,
        eps0=sh.eps0, stage_efolds=sh.stage_efolds,
    )
    result = shoot(params, scfg, grid, spectra)
    K = params.K
    cols = ["t", "dist_H1", "w_H1"]
    cols += [f"y_{k + 1}" for k in range(K)]
    cols += [f"mu_{k + 1}" for k in range(K)]
    cols += [f"a_{k + 1}_plus" for k in range(K)]
    cols += [f"a_{k + 1}_minus" for k in range(K)]
    if params.k0 is not None:
        cols += ["b_plus", "b_minus"]
    rows = []
    for pt in result.trajectory:
        row = [pt.t, pt.dist_h1, pt.w_h1, *pt.y, *pt.mu]
        if params.k0 is None:
            row += [*pt.l_plus, *pt.l_minus]
        else:
            row += [*pt.l_plus[:-1], *pt.l_minus[:-1], pt.l_plus[-1], pt.l_minus[-1]]
        rows.append(row)
    verdict = {
        "passed": result.passed,
        "envelope_ok": result.envelope_ok,
        "envelope_margins": {k: float(v) for k, v in result.envelopes.items()},
        "fitted_rate": result.fitted_rate,
        "fit_constant": result.fit_constant,
        "c0": result.c0,
        "unstable_rates": result.rates.tolist(),
        "coeff_norm": result.coeffs.norm(),
        "coeff_bound": float(np.exp(-result.c0 * sh.t_end)),
        "stages": result.stages,
    }
    coeffs = {
        "alpha_plus": result.coeffs.alpha_plus.tolist(),
        "alpha_minus": result.coeffs.alpha_minus.tolist(),
        "beta_plus": result.coeffs.beta_plus,
        "beta_minus": result.coeffs.beta_minus,
        "target_l_plus": result.frak_l_plus.tolist(),
    }
    return RunOutcome(
        mode="shoot", passed=result.passed, exit_code=0 if result.passed else 2,
        summary=verdict,
        artifacts={
            "trajectory.csv": art.render_csv(cols, rows, h),
            "coeffs.json": art.render_json(coeffs, h),
            "verdict.json": art.render_json(verdict, h),
        },
    )


def run_norm_equiv(cfg: ExperimentConfig) -> RunOutcome:
    h = _hash(cfg)
    grid = _grid(cfg)
    gamma = cfg.physics.gamma
    if gamma == 0.0:
        raise ValueError("norm-equiv mode needs a nonzero gamma")
    fr = cfg.frac
    lam = default_lambda(gamma) if fr.lam is None else fr.lam
    rows = norm_equivalence_report(grid, gamma, fr.s_values, lam, fr.quad_nodes)
    constant = equivalence_constant(rows)
    fine = Grid(grid.half_length, 2 * grid.n_points - 1)
    constant_fine = equivalence_constant(
        norm_equivalence_report(fine, gamma, fr.s_values, lam, fr.quad_nodes)
    )
    stability = abs(constant - constant_fine) / constant_fine
    odd = grid.function(grid.x * np.exp(-grid.x**2))
    odd_dev = 0.0
    for s in fr.s_values:
        pp = FracParams(s=s, gamma=gamma, lam=lam, quad_nodes=fr.quad_nodes)
        odd_dev = max(odd_dev, abs(hgamma_norm(odd, pp) / hs_shifted_norm(odd, s, lam) - 1.0))
    decay = c_f0_decay_check(
        grid.function(np.exp(-grid.x**2)),
        FracParams(s=fr.s_values[0], gamma=gamma, lam=lam, quad_nodes=fr.quad_nodes),
    )
    passed = (
        np.isfinite(constant)
        and stability <= 0.2
        and odd_dev <= 1e-10
        and decay.fitted_exponent <= -0.70
    )
    csv_rows = [[r.s, r.gamma, r.lam, r.test_id, r.ratio, r.inverse_ratio] for r in rows]
    summary = {
        "equivalence_constant": constant,
        "refined_constant": constant_fine,
        "refinement_stability": stability,
        "odd_input_deviation": odd_dev,
        "c_f0_decay_exponent": decay.fitted_exponent,
    }
    return RunOutcome(
        mode="norm-equiv", passed=bool(passed), exit_code=0 if passed else 2,
        summary=summary,
        artifacts={
            "equivalence_report.csv": art.render_csv(
                ["s", "gamma", "lambda", "test_function_id", "ratio", "inverse_ratio"],
                csv_rows, h,
            ),
            "summary.json": art.render_json(summary, h),
        },
    )


def run_verify(cfg: ExperimentConfig) -> RunOutcome:
    """Fast cross-module invariant sweep on one parameter set."""
    h = _hash(cfg)
    grid = _grid(cfg)
    p, gamma = cfg.physics.p, cfg.physics.gamma
    omega = cfg.verify.omega
    params = SolitonParams(p=p, gamma=gamma, omega=omega)
    checks: dict[str, bool] = {}
    values: dict[str, float] = {}

    lhs, rhs = q_peak_identity(params)
    values["peak_identity_rel"] = abs(lhs - rhs) / abs(rhs)
    checks["peak_identity"] = values["peak_identity_rel"] <= 1e-12

    q = sample_Q(params, grid)
    checks["phase_orthogonality"] = abs(inner_product(q, q * 1j)) <= 1e-12

    vk = vk_derivative(params)
    values["vk_slope"] = vk
    checks["vk_negative"] = vk < 0

    ops = build_linearized(params, grid)
    values["kernel_residual"] = float(
        np.sqrt(grid.h) * np.linalg.norm(ops.apply_minus(ops.Q)) / l2_norm(q)
    )
    checks["lminus_kernel"] = values["kernel_residual"] <= 10 * grid.h

    data = build_eigenfunctions(ops)
    values["frak_y"] = data.frak_y
    values["residual_Y"] = data.residual_Y
    checks["eigen_residual_Y"] = data.residual_Y <= 1e-5
    checks["Y_parity"] = parity_defect(data.Yplus, 1) <= 1e-10
    if gamma < 0:
        values["frak_z"] = data.frak_z
        checks["eigen_residual_Z"] = data.residual_Z <= 1e-5
        checks["Z_parity"] = parity_defect(data.Zplus, -1) <= 1e-10

    G = gram_matrix(data.Yplus, data.Yminus)
    n1 = l2_norm(GridFunction(grid, data.Yplus.values.real.astype(complex)))
    n2 = l2_norm(GridFunction(grid, data.Yplus.values.imag.astype(complex)))
    det = float(np.linalg.det(G))
    values["gram_det_rel"] = abs(det - 4 * n1**2 * n2**2) / abs(det)
    checks["gram_identity"] = values["gram_det_rel"] <= 1e-8

    lam_pair = lambda_pair(ops)
    checks["lplus_even_mode_negative"] = lam_pair.lambda0 < 0

    c = coercivity_check(ops, data, trials=cfg.verify.coercivity_trials, seed=cfg.seed)
    values["coercivity_constant"] = c
    checks["coercivity"] = c > 0

    part = CutoffPartition(L=5.0, velocities=(0.0, 1.0))
    members = part.members(1.0, grid.x)
    values["partition_defect"] = float(np.max(np.abs(sum(members) - 1.0)))
    checks["partition_of_unity"] = values["partition_defect"] == 0.0
    yy = np.linspace(-1.0, 1.0, 2001)
    checks["psi_prime_bound"] = float(np.max(psi_prime(yy) ** 2 / np.maximum(psi(yy), 1e-300))) < 10
    checks["psi_second_bound"] = float(
        np.max(psi_second(yy) ** 2 / np.maximum(psi_prime(yy), 1e-300))
    ) < 100

    econf = EvolutionConfig(dt=min(0.4 * grid.h, 5e-3), p=p, gamma=gamma,
                            record_every=10**9)
    fw = evolve(q, 0.0, 0.5, econf)[-1].u
    back = evolve(fw, 0.5, 0.0, econf)[-1].u
    values["round_trip_error"] = l2_norm(back - q) / l2_norm(q)
    checks["evolution_round_trip"] = values["round_trip_error"] <= 1e-8

    passed = all(checks.values())
    summary = {"checks": checks, "values": values}
    return RunOutcome(
        mode="verify", passed=passed, exit_code=0 if passed else 2,
        summary=summary,
        artifacts={"verify.json": art.render_json(summary, h)},
    )
