"""Solver for min_s ||H s - d||^2 + lambda ||s||_1 with the regularization
parameter chosen per iteration.

The l1 term is handled by iteratively reweighted norms: ||s||_1 is replaced by
||L(s) s||^2 with L(s) = diag(1/sqrt(f_tau(|s_i|))), and the changing diagonal
preconditioner is absorbed by a flexible Golub-Kahan process that maintains

    H P_k = U_{k+1} M_k        (M_k upper Hessenberg)
    H^T U_{k+1} = V_{k+1} T_{k+1}   (T upper triangular)

with orthonormal U, V and P_k = [L_1^{-1} v_1, ..., L_k^{-1} v_k].  Each step
solves the small projected Tikhonov problem, with lambda picked by weighted
generalized cross validation on the projected problem.

A fixed-lambda ISTA step for the CP scaling vector is provided as a baseline,
together with the closed-form soft-threshold proximal map.
"""

from dataclasses import dataclass

import numpy as np

from .cp_model import reconstruct
from .tensor_ops import as_tensor, cached_einsum

__all__ = [
    "soft_threshold",
    "ista_alpha_step",
    "IRNWeights",
    "irn_weights",
    "FGKState",
    "fgk_init",
    "fgk_expand",
    "projected_tikhonov",
    "wgcv_select",
    "HybridConfig",
    "solve_l1_hybrid",
]

_BREAKDOWN_RTOL = 1e-14


def soft_threshold(v, lam):
    """Proximal map of lambda * ||.||_1: zero inside [-lambda, lambda], shrink outside."""
    if lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def ista_alpha_step(m, t, lam, ctl):
    """One thresholded-Landweber step on the scaling vector at fixed lambda.

    alpha <- prox(alpha - (alpha Q - t) Q^T / (s eta), lambda / (s eta)) with
    eta the largest eigenvalue of Q Q^T; Q never needs materializing because
    Q Q^T is the Hadamard product of the three factor Grams.
    """
    t = as_tensor(t)
    gram = (m.A.T @ m.A) * (m.B.T @ m.B) * (m.C.T @ m.C)
    eta = max(float(np.linalg.eigvalsh(gram)[-1]), 1e-12)
    step = 1.0 / (ctl.s * eta)
    resid = reconstruct(m) - t
    grad = cached_einsum("ijk,ir,jr,kr->r", resid, m.A, m.B, m.C)
    return soft_threshold(m.alpha - step * grad, lam * step)


@dataclass
class IRNWeights:
    """Diagonal of L(s) = diag(1/sqrt(f_tau(|s_i|))) with its thresholds."""

    tau1: float
    tau2: float
    diag: np.ndarray

    def apply_inverse(self, v):
        return v / self.diag


def irn_weights(s, tau1, tau2):
    """Reweighting diagonal for the l2 surrogate of the l1 norm.

    f_tau(|s_i|) is |s_i| where |s_i| >= tau1 and tau2 below, so entries that
    have effectively vanished get a huge weight and are pinned near zero.
    """
    if not 0.0 < tau2 < tau1:
        raise ValueError(f"need 0 < tau2 < tau1, got tau1={tau1}, tau2={tau2}")
    mag = np.abs(np.asarray(s, dtype=np.float64))
    f = np.where(mag >= tau1, mag, tau2)
    return IRNWeights(tau1, tau2, 1.0 / np.sqrt(f))


def _operator(op):
    """Normalize an ndarray / LinearOperator-style object to (matvec, rmatvec, shape)."""
    if isinstance(op, np.ndarray):
        if op.ndim != 2:
            raise ValueError("operator array must be two-dimensional")
        return (lambda x: op @ x), (lambda y: op.T @ y), op.shape
    if hasattr(op, "matvec") and hasattr(op, "rmatvec") and hasattr(op, "shape"):
        return op.matvec, op.rmatvec, tuple(op.shape)
    raise TypeError("operator must be an ndarray or expose matvec/rmatvec/shape")


class FGKState:
    """Flexible Golub-Kahan bases and projected factors after k expansions.

    U (m x u_cols) and V (n x v_cols) have orthonormal columns, P (n x k)
    holds the preconditioned directions, M ((k+1) x k) is upper Hessenberg
    and Tt (v_cols x u_cols) upper triangular.  ``breakdown`` is set once a
    new direction vanished; the state then stops expanding but can still be
    solved at the current k.  Buffers grow geometrically so expansion does
    not copy the bases every step.
    """

    def __init__(self, u1, v1, t11, beta1, capacity=8):
        # Basis vectors are stored as rows so Gram-Schmidt runs on contiguous
        # blocks; the public properties expose the column-oriented views.
        m, n = u1.size, v1.size
        self._u = np.zeros((capacity + 1, m))
        self._v = np.zeros((capacity + 1, n))
        self._p = np.zeros((capacity, n))
        self._m = np.zeros((capacity + 1, capacity))
        self._t = np.zeros((capacity + 1, capacity + 1))
        self._u[0] = u1
        self._v[0] = v1
        self._t[0, 0] = t11
        self._nu = 1
        self._nv = 1
        self._svd_cache = None
        self.beta1 = beta1
        self.k = 0
        self.breakdown = False

    def _ensure_capacity(self):
        if self.k < self._p.shape[0]:
            return
        cap = 2 * self._p.shape[0]

        def grow(buf, rows, cols):
            out = np.zeros((rows, cols))
            out[: buf.shape[0], : buf.shape[1]] = buf
            return out

        self._u = grow(self._u, cap + 1, self._u.shape[1])
        self._v = grow(self._v, cap + 1, self._v.shape[1])
        self._p = grow(self._p, cap, self._p.shape[1])
        self._m = grow(self._m, cap + 1, cap)
        self._t = grow(self._t, cap + 1, cap + 1)

    @property
    def U(self):
        return self._u[: self._nu].T

    @property
    def V(self):
        return self._v[: self._nv].T

    @property
    def P(self):
        return self._p[: self.k].T

    @property
    def M(self):
        # (k+1) x k even if a u-side breakdown left the last row zero.
        return self._m[: self.k + 1, : self.k]

    @property
    def Tt(self):
        return self._t[: self._nv, : self._nu]


def fgk_init(op, d, capacity=8):
    """Bootstrap u_1 = d/||d|| and v_1 = H^T u_1 / ||H^T u_1||.

    Returns None when d or H^T d vanishes (the solution of the regularized
    problem is zero and there is nothing to expand).
    """
    matvec, rmatvec, (mrows, ncols) = _operator(op)
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.size != mrows:
        raise ValueError(f"data length {d.size} does not match operator rows {mrows}")
    beta1 = float(np.linalg.norm(d))
    if beta1 == 0.0:
        return None
    u1 = d / beta1
    z = rmatvec(u1)
    t11 = float(np.linalg.norm(z))
    if t11 <= _BREAKDOWN_RTOL * beta1:
        return None
    return FGKState(u1, z / t11, t11, beta1, capacity=capacity)


def _orthogonalize(rows, w):
    # Classical Gram-Schmidt against basis vectors stored as rows, with one
    # refinement pass; returns (coeffs, residual).
    h = rows @ w
    w = w - h @ rows
    h2 = rows @ w
    w = w - h2 @ rows
    return h + h2, w


def fgk_expand(state, op, weights=None):
    """Grow the flexible Golub-Kahan factorization by one step.

    Appends p_k = L_k^{-1} v_k, orthogonalizes H p_k against U to fill M's new
    column, then orthogonalizes H^T u_{k+1} against V to extend Tt.  On
    breakdown the state is marked and the caller should solve at the current
    size; both relations keep holding with the zero-padded column.
    """
    if state.breakdown:
        raise ValueError("cannot expand a broken-down state")
    matvec, rmatvec, _ = _operator(op)
    state._ensure_capacity()
    state._svd_cache = None
    v = state._v[state.k]
    p = v.copy() if weights is None else weights.apply_inverse(v)

    w = matvec(p)
    scale = float(np.linalg.norm(w))
    mcol, w = _orthogonalize(state._u[: state._nu], w)
    beta = float(np.linalg.norm(w))

    state._p[state.k] = p
    k = state.k = state.k + 1
    state._m[: mcol.size, k - 1] = mcol
    if beta <= _BREAKDOWN_RTOL * scale:
        state.breakdown = True
        return state
    state._m[k, k - 1] = beta
    state._u[state._nu] = w / beta
    state._nu += 1

    z = rmatvec(state._u[state._nu - 1])
    zscale = float(np.linalg.norm(z))
    tcol, z = _orthogonalize(state._v[: state._nv], z)
    gamma = float(np.linalg.norm(z))
    state._t[: tcol.size, state._nu - 1] = tcol
    if gamma <= _BREAKDOWN_RTOL * zscale:
        state.breakdown = True
        return state
    state._t[state._nv, state._nu - 1] = gamma
    state._v[state._nv] = z / gamma
    state._nv += 1
    return state


def _projected_svd(state):
    cache = getattr(state, "_svd_cache", None)
    if cache is not None:
        return cache
    u, s, vt = np.linalg.svd(state.M, full_matrices=False)
    c = state.beta1 * u[0]
    rho2 = max(state.beta1**2 - float(c @ c), 0.0)
    result = (s, c, vt, rho2)
    if hasattr(state, "_svd_cache"):
        state._svd_cache = result
    return result


def projected_tikhonov(state, lam):
    """Minimizer of ||M q - beta1 e1||^2 + lambda ||q||^2 via the small SVD.

    lambda = 0 falls back to the pseudoinverse solution.  The full-space
    solution is s = P q.
    """
    if lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    s, c, vt, _ = _projected_svd(state)
    if lam == 0.0:
        cutoff = (s[0] * 1e-14) if s.size else 0.0
        filt = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    else:
        filt = s / (s**2 + lam)
    return vt.T @ (filt * c)


_UNIT_GRID = np.logspace(-10.0, 0.0, 200)


def _wgcv_value(lam, s2, c2, rho2, k, rows, omega):
    f = s2 / (s2 + lam)
    num = k * (float(((1.0 - f) ** 2) @ c2) + rho2)
    den = (rows - omega * float(f.sum())) ** 2
    return num / den


def wgcv_select(state, omega, fallback):
    """Weighted GCV choice of lambda on the projected problem.

    Minimizes k * ||(I - M Phi_lam) beta1 e1||^2 / trace(I - omega M Phi_lam)^2
    over a 200-point logarithmic grid spanning [1e-10, 1] * sigma_max(M),
    followed by golden-section refinement.  Returns ``fallback`` when the
    objective is not finite anywhere on the grid.
    """
    if not 0.0 < omega <= 1.0:
        raise ValueError(f"omega must lie in (0, 1], got {omega}")
    if state.k < 1:
        raise ValueError("wgcv_select needs at least one expansion step")
    s, c, _, rho2 = _projected_svd(state)
    smax = float(s[0]) if s.size else 0.0
    if smax <= 0.0 or not np.isfinite(smax):
        return fallback
    s2, c2 = s**2, c**2
    k, rows = state.M.shape[1], state.M.shape[0]
    grid = smax * _UNIT_GRID
    filt = s2[None, :] / (s2[None, :] + grid[:, None])
    num = k * (((1.0 - filt) ** 2) @ c2 + rho2)
    den = (rows - omega * filt.sum(axis=1)) ** 2
    vals = num / den
    finite = np.isfinite(vals)
    if not finite.any():
        return fallback
    vals = np.where(finite, vals, np.inf)
    best = int(np.argmin(vals))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]

    # Golden-section on log(lambda); fixed iteration count keeps it
    # deterministic (16 steps resolve the bracket to ~0.1% of a decade).
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log(lo), np.log(hi)
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1 = _wgcv_value(np.exp(x1), s2, c2, rho2, k, rows, omega)
    f2 = _wgcv_value(np.exp(x2), s2, c2, rho2, k, rows, omega)
    for _ in range(16):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = _wgcv_value(np.exp(x1), s2, c2, rho2, k, rows, omega)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = _wgcv_value(np.exp(x2), s2, c2, rho2, k, rows, omega)
    lam = float(np.exp((a + b) / 2.0))
    candidates = [(vals[best], grid[best]), (_wgcv_value(lam, s2, c2, rho2, k, rows, omega), lam)]
    val, lam = min(candidates, key=lambda t: t[0])
    return float(lam) if np.isfinite(val) else fallback


def _omega_estimate(state, lam_ref=None):
    # Weight that makes the WGCV curve stationary at a reference lambda:
    # setting dG/dlambda(lam_ref) = 0 and solving for omega gives
    # omega = N'(rows) / (N'F - 2NF') with N the numerator and F the sum of
    # the filter factors.  The default reference is sigma_min(M)^2, the
    # smallest scale the projected problem can resolve, which guards against
    # the over-smoothing plain GCV exhibits on projected problems.
    s, c, _, rho2 = _projected_svd(state)
    if not s.size or s[0] <= 0.0:
        return 1.0
    s2, c2 = s**2, c**2
    k, rows = state.M.shape[1], state.M.shape[0]
    if lam_ref is None:
        lam_ref = float(s[-1]) ** 2
    lam = max(float(lam_ref), 1e-300)
    f = s2 / (s2 + lam)
    dfac = s2 / (s2 + lam) ** 2
    n_val = k * (float(((1.0 - f) ** 2) @ c2) + rho2)
    n_prime = k * float((2.0 * (1.0 - f) * dfac) @ c2)
    f_sum = float(f.sum())
    f_prime = -float(dfac.sum())
    den = n_prime * f_sum - 2.0 * n_val * f_prime
    if not np.isfinite(den) or den <= 0.0:
        return 1.0
    return float(np.clip(n_prime * rows / den, 1e-3, 1.0))


def _reduce_tall_problem(op, matvec, rmatvec, d, ncols):
    # Coordinates of [d, H] in an orthonormal basis of their span, obtained
    # from the Cholesky factor of the joint Gram matrix: C^T C = [d H]^T [d H]
    # means (C[:, 0], C[:, 1:]) pose the same problem, every inner product
    # preserved.  Returns None when the Gram is numerically indefinite (then
    # the caller just runs on the original operator).
    if hasattr(op, "gram"):
        g = op.gram()
    else:
        hmat = np.empty((d.size, ncols))
        eye = np.eye(ncols)
        for r in range(ncols):
            hmat[:, r] = matvec(eye[r])
        g = hmat.T @ hmat
    xtx = np.empty((ncols + 1, ncols + 1))
    xtx[0, 0] = d @ d
    xtx[0, 1:] = xtx[1:, 0] = rmatvec(d)
    xtx[1:, 1:] = g
    try:
        c = np.linalg.cholesky(xtx).T
    except np.linalg.LinAlgError:
        return None
    return c[:, 1:], c[:, 0]


@dataclass
class HybridConfig:
    """Knobs for :func:`solve_l1_hybrid`.

    ``omega`` is either a fixed weight in (0, 1] or "adapt", which averages
    per-iteration estimates (clamped to [1e-3, 1]).  ``lambda_init`` seeds the
    first iteration's fallback only; every lambda is then selected by WGCV.
    """

    k_max: int = 50
    tau1: float = 1e-10
    tau2: float = 1e-14
    omega: object = "adapt"
    lambda_init: float = 1.0
    stagnation_tol: float = 1e-6


def solve_l1_hybrid(op, d, cfg=None):
    """Run the flexible hybrid iteration; returns (s, lambda_history).

    Per step: refresh L from the current iterate (identity before one
    exists), expand the flexible Golub-Kahan factorization, pick lambda by
    WGCV, solve the projected Tikhonov problem and map back through P.
    Stops at k_max, on breakdown, or when s stagnates.

    Very tall operators are first rotated onto an orthonormal basis of
    span([d, range(H)]); the process only ever visits that (n+1)-dimensional
    subspace, so the iteration is unchanged while every product shrinks to
    the coordinate problem.
    """
    cfg = cfg or HybridConfig()
    matvec, rmatvec, (mrows, ncols) = _operator(op)
    d = np.asarray(d, dtype=np.float64).ravel()
    if mrows >= 4 * ncols and mrows > 64:
        reduced = _reduce_tall_problem(op, matvec, rmatvec, d, ncols)
        if reduced is not None:
            op, d = reduced
    state = fgk_init(op, d, capacity=cfg.k_max)
    if state is None:
        return np.zeros(ncols), np.empty(0)

    s_prev = None
    lam_prev = cfg.lambda_init
    omega_estimates = []
    lam_history = []
    sol = np.zeros(ncols)
    for _ in range(cfg.k_max):
        weights = None if s_prev is None else irn_weights(s_prev, cfg.tau1, cfg.tau2)
        fgk_expand(state, op, weights)
        if cfg.omega == "adapt":
            omega_estimates.append(_omega_estimate(state))
            omega = float(np.clip(np.mean(omega_estimates), 1e-3, 1.0))
        elif cfg.omega == "adapt-prev":
            omega_estimates.append(_omega_estimate(state, lam_prev))
            omega = float(np.clip(np.mean(omega_estimates), 1e-3, 1.0))
        else:
            omega = float(cfg.omega)
        lam = wgcv_select(state, omega, fallback=lam_prev)
        q = projected_tikhonov(state, lam)
        sol = state.P @ q
        lam_history.append(lam)
        lam_prev = lam
        if state.breakdown:
            break
        if s_prev is not None:
            denom = float(np.linalg.norm(s_prev))
            if denom > 0.0 and float(np.linalg.norm(sol - s_prev)) <= cfg.stagnation_tol * denom:
                break
        s_prev = sol
    return sol, np.asarray(lam_history)
