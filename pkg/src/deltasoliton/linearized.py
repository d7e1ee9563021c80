"""Linearized operators around the standing profile and their unstable modes.

L+ = -Lap_gamma + omega - p Q^{p-1} and L- = -Lap_gamma + omega - Q^{p-1}
are real symmetric tridiagonal matrices here.  The unstable eigenvalues of
the real-linear operator  f1 + i f2  ->  -i L+ f1 + L- f2  are found by
minimizing the constrained Rayleigh quotient <L+ f, f> / <(L-)^{-1} f, f>
over even f orthogonal to Q (and over odd f), via inverse iteration with
parity symmetrization on the banded product L- L+: applying L- to the
Euler-Lagrange relation L+ xi = mu (L-)^{-1} xi + beta Q turns the minimizer
into an eigenvector of L- L+ with the multiplier annihilated, and mu is the
unique negative eigenvalue on the parity subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .grid import (
    Grid,
    GridFunction,
    h1_norm,
    inner_product,
    l2_norm,
    symmetrize,
)
from .ground_state import SolitonParams, eval_dQ_dx, eval_Q


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearizedOps:
    """Tridiagonal L+ / L- around Q_{omega,gamma} on a grid, with a cached
    bordered factorization for inverting L- on the complement of Q."""

    params: SolitonParams
    grid: Grid
    Q: np.ndarray = field(repr=False)
    dplus: np.ndarray = field(repr=False)
    dminus: np.ndarray = field(repr=False)
    offdiag: np.ndarray = field(repr=False)
    _bordered_lu: object = field(repr=False, default=None, compare=False)

    def apply_plus(self, v: np.ndarray) -> np.ndarray:
        return _tri_apply(self.dplus, self.offdiag, v)

    def apply_minus(self, v: np.ndarray) -> np.ndarray:
        return _tri_apply(self.dminus, self.offdiag, v)

    def apply_L(self, values: np.ndarray) -> np.ndarray:
        """Real-linear operator: f1 + i f2  ->  L- f2 - i L+ f1."""
        return self.apply_minus(values.imag) - 1j * self.apply_plus(values.real)

    def q_function(self) -> GridFunction:
        return GridFunction(self.grid, self.Q.astype(complex))


def _tri_apply(diag, off, v):
    out = diag * v
    out[:-1] += off * v[1:]
    out[1:] += off * v[:-1]
    return out


def build_linearized(params: SolitonParams, grid: Grid) -> LinearizedOps:
    if params.v != 0.0:
        raise SpectralError("linearization is taken around the resting profile (v=0)")
    h = grid.h
    q = eval_Q(params, grid.x)
    base = np.full(grid.n_points, 2.0 / h**2)
    base[grid.zero_index] -= params.gamma / h
    qp = q ** (params.p - 1.0)
    dplus = base + params.omega - params.p * qp
    dminus = base + params.omega - qp
    off = np.full(grid.n_points - 1, -1.0 / h**2)
    lu = _bordered_factorization(dminus, off, q, h)
    return LinearizedOps(
        params=params, grid=grid, Q=q, dplus=dplus, dminus=dminus, offdiag=off,
        _bordered_lu=lu,
    )


def _bordered_factorization(diag, off, q, h):
    """LU of [[L-, q], [h q^T, 0]]; the border pins the Q-component, keeping
    the solve well conditioned despite the near-kernel of L-."""
    n = len(diag)
    rows, cols, vals = [], [], []
    rows += list(range(n)); cols += list(range(n)); vals += list(diag)
    rows += list(range(n - 1)); cols += list(range(1, n)); vals += list(off)
    rows += list(range(1, n)); cols += list(range(n - 1)); vals += list(off)
    rows += list(range(n)); cols += [n] * n; vals += list(q)
    rows += [n] * n; cols += list(range(n)); vals += list(h * q)
    mat = csc_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
    return splu(mat)


def lminus_inverse_on_orthogonal(ops: LinearizedOps, f: GridFunction) -> GridFunction:
    """Solve L- g = f + c Q with g orthogonal to Q; input is projected onto
    the orthogonal complement of Q first."""
    if f.grid != ops.grid:
        raise SpectralError("grid mismatch")
    h = ops.grid.h
    qq = h * float(ops.Q @ ops.Q)
    proj = f.values - (h * (f.values @ ops.Q) / qq) * ops.Q
    out = np.empty(ops.grid.n_points, dtype=complex)
    for part, comp in (("real", proj.real), ("imag", proj.imag)):
        sol = ops._bordered_lu.solve(np.concatenate([comp, [0.0]]))
        setattr(out, part, sol[:-1])
    res = ops.apply_minus(out) - proj
    res -= (h * (res @ ops.Q) / qq) * ops.Q
    scale = max(l2_norm(f), 1e-300)
    if np.sqrt(h) * np.linalg.norm(res) > 1e-9 * scale:
        raise SpectralError("bordered L- solve residual exceeds 1e-9")
    return GridFunction(ops.grid, out)


def _product_banded(dleft, dright, off):
    """5-band representation (for solve_banded) of tri(dleft) @ tri(dright)
    with the shared off-diagonal ``off``."""
    n = len(dleft)
    ab = np.zeros((5, n))
    ab[0, 2:] = off[:-1] * off[1:]                      # super-super
    ab[1, 1:] = dleft[:-1] * off + off * dright[1:]     # super
    ab[2, :] = dleft * dright
    ab[2, :-1] += off**2
    ab[2, 1:] += off**2
    ab[3, :-1] = off * dright[:-1] + dleft[1:] * off    # sub
    ab[4, :-2] = off[:-1] * off[1:]                     # sub-sub
    return ab


def _apply_banded5(ab, v):
    n = len(v)
    out = ab[2] * v
    out[:-1] += ab[1, 1:] * v[1:]
    out[:-2] += ab[0, 2:] * v[2:]
    out[1:] += ab[3, :-1] * v[:-1]
    out[2:] += ab[4, :-2] * v[:-2]
    return out


def negative_modes(ops: LinearizedOps) -> dict:
    """Two lowest eigenpairs of L+ split by parity (even ground mode, odd mode).

    Parity reduction to the half grid keeps the matrices tridiagonal: even
    functions reflect through the origin node (symmetrizable with a sqrt(2)
    similarity on the first off-diagonal), odd ones vanish there.
    """
    n, z = ops.grid.n_points, ops.grid.zero_index
    # even reduction on nodes z..n-1
    d_e = ops.dplus[z:].copy()
    e_e = ops.offdiag[z:].copy()
    e_e[0] *= np.sqrt(2.0)
    vals_e, vecs_e = eigh_tridiagonal(d_e, e_e, select="i", select_range=(0, 0))
    v = vecs_e[:, 0].copy()
    v[0] *= np.sqrt(2.0)  # undo the similarity scaling at the origin node
    full_even = np.empty(n)
    full_even[z:] = v
    full_even[:z] = v[1:][::-1]
    # odd reduction on nodes z+1..n-1 (value 0 at origin)
    vals_o, vecs_o = eigh_tridiagonal(
        ops.dplus[z + 1:], ops.offdiag[z + 1:], select="i", select_range=(0, 0)
    )
    w = vecs_o[:, 0]
    full_odd = np.zeros(n)
    full_odd[z + 1:] = w
    full_odd[:z] = -w[::-1]
    ge = GridFunction(ops.grid, full_even.astype(complex))
    go = GridFunction(ops.grid, full_odd.astype(complex))
    ge = ge * (1.0 / l2_norm(ge))
    go = go * (1.0 / l2_norm(go))
    if float(ge.values.real[z]) < 0:
        ge = ge * (-1.0)
    if float(go.values.real[z + 1]) < 0:
        go = go * (-1.0)
    return {
        "lambda0": float(vals_e[0]),
        "lambda1": float(vals_o[0]),
        "g0": ge,
        "g1": go,
    }


@dataclass(frozen=True)
class LambdaPair:
    lambda0: float
    lambda1: float
    g0: GridFunction
    g1: GridFunction


def lambda_pair(ops: LinearizedOps) -> LambdaPair:
    m = negative_modes(ops)
    return LambdaPair(m["lambda0"], m["lambda1"], m["g0"], m["g1"])


def _pencil_rayleigh(ops: LinearizedOps, x: np.ndarray) -> float:
    f = GridFunction(ops.grid, x.astype(complex))
    g = lminus_inverse_on_orthogonal(ops, f)
    denom = inner_product(g, f)
    num = ops.grid.h * float(x @ ops.apply_plus(x))
    return num / denom


def _min_negative_T_eig(ops: LinearizedOps, parity: int, tol=1e-13, max_iter=200):
    """Genuinely negative eigenpair of T = L- L+ on the given parity subspace
    by shifted inverse iteration; returns (mu, xi) with xi l2-normalized.

    The discrete T also carries a near-zero even eigenvalue from the
    frequency-scaling direction dQ/domega (exactly zero in the continuum)
    whose sign is not controlled; converged vectors aligned with it are
    rejected and the search restarts with a deeper shift.
    """
    from .ground_state import eval_dQ_domega

    grid = ops.grid
    tb = _product_banded(ops.dminus, ops.dplus, ops.offdiag)
    modes = negative_modes(ops)
    seed = modes["g0"] if parity == 1 else modes["g1"]
    x = seed.values.real.copy()
    scaling_dir = None
    if parity == 1:
        qf = ops.Q
        x = x - (x @ qf) / (qf @ qf) * qf
        scaling_dir = eval_dQ_domega(ops.params, grid.x)
        scaling_dir = scaling_dir / np.linalg.norm(scaling_dir)
        x = x - (x @ scaling_dir) * scaling_dir
    x /= np.linalg.norm(x)
    ray0 = _pencil_rayleigh(ops, x)
    sigma = 3.0 * ray0 if ray0 < 0 else -1.0
    t_scale = np.max(np.abs(tb[2]))
    for restart in range(12):
        y = x.copy()
        mu_prev = np.inf
        for it in range(max_iter):
            ab = tb.copy()
            ab[2] -= sigma
            try:
                y_new = solve_banded((2, 2), ab, y)
            except np.linalg.LinAlgError:
                sigma *= 1.0 + 1e-3
                continue
            y_new = symmetrize(GridFunction(grid, y_new.astype(complex)), parity).values.real
            nrm = np.linalg.norm(y_new)
            if not np.isfinite(nrm) or nrm == 0.0:
                break
            y = y_new / nrm
            ty = _apply_banded5(tb, y)
            mu = float(y @ ty)
            res = np.linalg.norm(ty - mu * y)
            if res <= tol * t_scale or abs(mu - mu_prev) <= 1e-16 * abs(mu):
                if mu < 0:
                    aligned = (
                        scaling_dir is not None
                        and abs(float(y @ scaling_dir)) > 0.99
                    )
                    if not aligned:
                        return mu, y
                break
            mu_prev = mu
            if it >= 2 and mu < 0:
                sigma = mu - 0.1 * abs(mu)
        sigma = 2.0 * sigma - 1.0
    raise SpectralError(
        f"inverse iteration failed to locate the negative mode "
        f"(parity={parity}, last shift={sigma:.3e}, rayleigh seed={ray0:.3e})"
    )


def minimize_rayleigh_even(ops: LinearizedOps):
    """Even constrained minimum of <L+ f,f>/<(L-)^{-1}f,f> over f orthogonal
    to Q.  Returns (mu1, xi1, beta) with <(L-)^{-1} xi1, xi1> = 1."""
    mu, x = _min_negative_T_eig(ops, parity=1)
    xi = GridFunction(ops.grid, x.astype(complex))
    g = lminus_inverse_on_orthogonal(ops, xi)
    s = inner_product(g, xi)
    if s <= 0:
        raise SpectralError("pencil normalization <(L-)^{-1} xi, xi> is not positive")
    xi = xi * (1.0 / np.sqrt(s))
    if float(xi.values.real[ops.grid.zero_index]) < 0:
        xi = xi * (-1.0)
    g = lminus_inverse_on_orthogonal(ops, xi)
    qf = ops.q_function()
    resid = GridFunction(
        ops.grid, (ops.apply_plus(xi.values.real) - mu * g.values.real).astype(complex)
    )
    beta = inner_product(resid, qf) / inner_product(qf, qf)
    return mu, xi, float(beta)


def minimize_rayleigh_odd(ops: LinearizedOps):
    """Odd minimum of the same quotient; exists only for gamma < 0.  Returns
    (mu2, xi2) or None when gamma = 0 (no odd unstable direction)."""
    if ops.params.gamma == 0.0:
        return None
    mu, x = _min_negative_T_eig(ops, parity=-1)
    xi = GridFunction(ops.grid, x.astype(complex))
    g = lminus_inverse_on_orthogonal(ops, xi)
    s = inner_product(g, xi)
    if s <= 0:
        raise SpectralError("pencil normalization <(L-)^{-1} xi, xi> is not positive")
    xi = xi * (1.0 / np.sqrt(s))
    if float(xi.values.real[ops.grid.zero_index + 1]) < 0:
        xi = xi * (-1.0)
    return mu, xi


@dataclass
class SpectralData:
    """Unstable spectrum of the linearization around one resting profile."""

    params: SolitonParams
    grid: Grid
    mu1: float
    frak_y: float
    xi1: GridFunction
    beta: float
    Yplus: GridFunction
    Yminus: GridFunction
    residual_Y: float
    mu2: float | None = None
    frak_z: float | None = None
    xi2: GridFunction | None = None
    Zplus: GridFunction | None = None
    Zminus: GridFunction | None = None
    residual_Z: float | None = None
    _splines: dict = field(default_factory=dict, repr=False)

    @property
    def has_odd_mode(self) -> bool:
        return self.frak_z is not None

    def mode_spline(self, name: str):
        """Cubic-spline evaluator for Y1/Y2/Z1/Z2 at off-grid points (zero
        outside the grid); used when the profile is translated."""
        if name not in self._splines:
            comp = {
                "Y1": self.Yplus.values.real,
                "Y2": self.Yplus.values.imag,
                "Z1": None if self.Zplus is None else self.Zplus.values.real,
                "Z2": None if self.Zplus is None else self.Zplus.values.imag,
            }[name]
            if comp is None:
                raise SpectralError(f"mode {name} absent (gamma=0 profile)")
            self._splines[name] = CubicSpline(self.grid.x, comp, bc_type="natural")
        spl = self._splines[name]
        R = self.grid.half_length

        def evaluate(pts):
            pts = np.asarray(pts, dtype=float)
            out = np.zeros_like(pts)
            inside = np.abs(pts) < R
            out[inside] = spl(pts[inside])
            return out

        return evaluate


def _eigen_residual(ops: LinearizedOps, Y: GridFunction, rate: float) -> float:
    r = ops.apply_L(Y.values) - rate * Y.values
    return np.sqrt(ops.grid.h) * np.linalg.norm(r) / max(
        np.sqrt(ops.grid.h) * np.linalg.norm(Y.values), 1e-300
    )


def build_eigenfunctions(ops: LinearizedOps, residual_tol: float = 1e-5) -> SpectralData:
    """Assemble Y+- (and Z+- for gamma<0) from the constrained minimizers.

    The imaginary part is -L+ xi / rate, which coincides with
    rate*(L-)^{-1}xi - beta*Q/rate whenever the Euler-Lagrange relation
    holds, and makes the discrete eigen-residual exactly the iteration
    residual.
    """
    mu1, xi1, beta = minimize_rayleigh_even(ops)
    y = np.sqrt(-mu1)
    eta1 = -ops.apply_plus(xi1.values.real) / y
    Yp = GridFunction(ops.grid, xi1.values.real + 1j * eta1)
    Ym = GridFunction(ops.grid, xi1.values.real - 1j * eta1)
    rY = _eigen_residual(ops, Yp, y)
    data = SpectralData(
        params=ops.params, grid=ops.grid, mu1=mu1, frak_y=y, xi1=xi1, beta=beta,
        Yplus=Yp, Yminus=Ym, residual_Y=rY,
    )
    odd = minimize_rayleigh_odd(ops)
    if odd is not None:
        mu2, xi2 = odd
        zrate = np.sqrt(-mu2)
        eta2 = -ops.apply_plus(xi2.values.real) / zrate
        Zp = GridFunction(ops.grid, xi2.values.real + 1j * eta2)
        Zm = GridFunction(ops.grid, xi2.values.real - 1j * eta2)
        data.mu2 = mu2
        data.frak_z = zrate
        data.xi2 = xi2
        data.Zplus = Zp
        data.Zminus = Zm
        data.residual_Z = _eigen_residual(ops, Zp, zrate)
    worst = max(data.residual_Y, data.residual_Z or 0.0)
    if worst > residual_tol:
        raise SpectralError(f"eigen-residual {worst:.3e} exceeds {residual_tol:.1e}")
    return data


def compute_spectral_data(params: SolitonParams, grid: Grid) -> SpectralData:
    return build_eigenfunctions(build_linearized(params, grid))


def bilinear_B(ops: LinearizedOps, u: GridFunction, w: GridFunction) -> float:
    """Hessian form B(u,w) = <L+ Re u, Re w> + <L- Im u, Im w>."""
    if u.grid != w.grid or u.grid != ops.grid:
        raise SpectralError("grid mismatch")
    h = ops.grid.h
    return h * float(
        ops.apply_plus(u.values.real) @ w.values.real
        + ops.apply_minus(u.values.imag) @ w.values.imag
    )


def gram_matrix(A_plus: GridFunction, A_minus: GridFunction) -> np.ndarray:
    """2x2 matrix of real pairings of the two modes."""
    return np.array(
        [
            [inner_product(A_plus, A_plus), inner_product(A_plus, A_minus)],
            [inner_product(A_minus, A_plus), inner_product(A_minus, A_minus)],
        ]
    )


def coercivity_directions(ops: LinearizedOps, spec: SpectralData) -> list[GridFunction]:
    """Spanning directions whose removal makes B positive: for gamma<0 the
    list is {iQ, iY+, iY-, iZ+, iZ-}; for gamma=0 it is {dQ/dx, iQ, iY+, iY-}."""
    iq = GridFunction(ops.grid, 1j * ops.Q.astype(complex))
    dirs = [iq, spec.Yplus * 1j, spec.Yminus * 1j]
    if ops.params.gamma < 0:
        dirs += [spec.Zplus * 1j, spec.Zminus * 1j]
    else:
        dq = GridFunction(ops.grid, eval_dQ_dx(ops.params, ops.grid.x).astype(complex))
        dirs = [dq] + dirs
    return dirs


def project_out(f: GridFunction, directions: list[GridFunction]) -> GridFunction:
    """Remove the real-linear span of the directions (Gram-Schmidt on the fly)."""
    basis: list[GridFunction] = []
    for d in directions:
        v = d
        for b in basis:
            v = v - inner_product(v, b) * b
        n = l2_norm(v)
        if n > 1e-12:
            basis.append(v * (1.0 / n))
    out = f
    for b in basis:
        out = out - inner_product(out, b) * b
    return out


def random_trial_functions(grid: Grid, count: int, rng, scale: float = 1.0):
    """Smooth random fields: complex combinations of a few Gaussian bumps.

    Bump parameters are drawn in continuum units so the same seed produces
    the same functions on any grid (needed for refinement stability checks).
    """
    x = grid.x
    for _ in range(count):
        n_bumps = int(rng.integers(2, 6))
        vals = np.zeros(grid.n_points, dtype=complex)
        for _ in range(n_bumps):
            a = rng.uniform(0.05, 1.5) * scale
            b = rng.uniform(-6.0, 6.0) / np.sqrt(scale)
            c = rng.normal() + 1j * rng.normal()
            k = rng.uniform(-2.0, 2.0) * scale
            vals += c * np.exp(-a * (x - b) ** 2) * np.exp(1j * k * x)
        yield GridFunction(grid, vals)


def coercivity_check(
    ops: LinearizedOps,
    spec: SpectralData,
    trials: int = 1000,
    seed: int = 7,
) -> float:
    """Empirical coercivity constant: minimum of B(f,f)/||f||_H1^2 over
    random trials projected off the spanning directions.  Raises if the
    minimum is not positive."""
    dirs = coercivity_directions(ops, spec)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for f in random_trial_functions(ops.grid, trials, rng, scale=ops.params.omega):
        g = project_out(f, dirs)
        nrm = h1_norm(g)
        if nrm < 1e-8:
            continue
        quot = bilinear_B(ops, g, g) / nrm**2
        worst = min(worst, quot)
    if not np.isfinite(worst) or worst <= 0:
        raise SpectralError(
            f"coercivity violated: min quotient {worst:.3e} (spectral data inconsistent)"
        )
    return float(worst)


def dense_matrix_eigenvalues(ops: LinearizedOps) -> np.ndarray:
    """Oracle: eigenvalues of the full 2n x 2n real matrix [[0, L-], [-L+, 0]]."""
    n = ops.grid.n_points
    Lp = np.diag(ops.dplus) + np.diag(ops.offdiag, 1) + np.diag(ops.offdiag, -1)
    Lm = np.diag(ops.dminus) + np.diag(ops.offdiag, 1) + np.diag(ops.offdiag, -1)
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = Lm
    M[n:, :n] = -Lp
    return np.linalg.eigvals(M)


def unstable_rates_from_dense(eigs: np.ndarray, re_tol: float = 1e-2) -> np.ndarray:
    """Distinct positive real parts of eigenvalues off the imaginary axis."""
    pos = sorted(e.real for e in eigs if e.real > re_tol)
    rates: list[float] = []
    for r in pos:
        if not rates or abs(r - rates[-1]) > re_tol * max(1.0, abs(r)):
            rates.append(r)
    return np.asarray(rates)


def _symmetry_span(ops: LinearizedOps) -> np.ndarray:
    """Real 2n-vectors spanning the discrete symmetry (zero-mode) directions.

    Phase/frequency gives {iQ, dQ/domega} for every gamma<=0; at gamma=0
    translation and the velocity boost add {dQ/dx, i x Q / 2}.  Under
    discretization these Jordan blocks split into O(h)-size eigenvalue pairs
    that must not be mistaken for unstable modes.
    """
    from .ground_state import eval_dQ_domega

    n = ops.grid.n_points
    x = ops.grid.x
    cols = []

    def as_real(vec_complex):
        return np.concatenate([vec_complex.real, vec_complex.imag])

    cols.append(as_real(1j * ops.Q.astype(complex)))
    cols.append(as_real(eval_dQ_domega(ops.params, x).astype(complex)))
    if ops.params.gamma == 0.0:
        cols.append(as_real(eval_dQ_dx(ops.params, x).astype(complex)))
        cols.append(as_real(0.5j * x * ops.Q))
    S = np.stack(cols, axis=1)
    q, _ = np.linalg.qr(S)
    return q


def dense_unstable_rates(ops: LinearizedOps, re_tol: float = 1e-3) -> np.ndarray:
    """Oracle unstable rates with the symmetry-artifact filter.

    Eigenvalues with positive real part whose eigenvectors live mostly in
    the discrete symmetry span are Jordan-block splitting artifacts and are
    discarded; the rest are the genuine unstable rates.
    """
    n = ops.grid.n_points
    Lp = np.diag(ops.dplus) + np.diag(ops.offdiag, 1) + np.diag(ops.offdiag, -1)
    Lm = np.diag(ops.dminus) + np.diag(ops.offdiag, 1) + np.diag(ops.offdiag, -1)
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = Lm
    M[n:, :n] = -Lp
    vals, vecs = np.linalg.eig(M)
    span = _symmetry_span(ops)
    rates: list[float] = []
    for k in np.argsort(vals.real):
        lam = vals[k]
        if lam.real <= re_tol:
            continue
        v = vecs[:, k]
        # real eigenvalue of a real matrix: rotate the eigenvector real
        phase = np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
        vr = (v * phase).real
        vr /= np.linalg.norm(vr)
        # artifacts sit in the symmetry span up to O(h^2) (overlap -> 1);
        # genuine modes keep an O(1) distance from it
        overlap = np.linalg.norm(span.T @ vr)
        if overlap > 0.99:
            continue
        if not rates or abs(lam.real - rates[-1]) > 1e-6 * max(1.0, lam.real):
            rates.append(float(lam.real))
    return np.asarray(sorted(rates))
