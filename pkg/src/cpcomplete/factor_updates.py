"""Majorize-minimize factor updates with unit-column projection, gradient and
step-size kernels, and the damped ALS sweep used by the model-reduction path."""

from dataclasses import dataclass, field

import numpy as np

from .cp_model import reconstruct
from .exceptions import NumericalRankError
from .tensor_ops import as_tensor, cached_einsum

__all__ = ["StepControl", "gradient", "lipschitz_estimate", "mm_update", "regularized_als_step"]

_MODES = ("A", "B", "C")


@dataclass
class StepControl:
    """Step-size bookkeeping for the MM updates.

    ``s`` is the safety factor (> 1); the per-mode fields hold the block
    Lipschitz estimates refreshed by :func:`mm_update`, so the effective step
    for a mode is 1 / (s * estimate).
    """

    s: float = 1.05
    lipschitz: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.s <= 1.0:
            raise ValueError(f"safety factor must exceed 1, got {self.s}")


def _mode_gram(mode, m):
    # Gram of the mode's Khatri-Rao matrix, via the Hadamard identity
    # (X kr Y)^T (X kr Y) = X^T X * Y^T Y.
    if mode == "A":
        return (m.C.T @ m.C) * (m.B.T @ m.B)
    if mode == "B":
        return (m.C.T @ m.C) * (m.A.T @ m.A)
    if mode == "C":
        return (m.B.T @ m.B) * (m.A.T @ m.A)
    raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def _mode_mttkrp(mode, t, m):
    # Unfolding-times-Khatri-Rao product for the requested mode.
    if mode == "A":
        return cached_einsum("ijk,jr,kr->ir", t, m.B, m.C)
    if mode == "B":
        return cached_einsum("ijk,ir,kr->jr", t, m.A, m.C)
    if mode == "C":
        return cached_einsum("ijk,ir,jr->kr", t, m.A, m.B)
    raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def gradient(mode, m, t):
    """Gradient of f = 0.5 * ||t - reconstruct(m)||_F^2 in the given factor block.

    For mode A this is (A D W^T - T(1)) W D with W the Khatri-Rao product of
    the other two factors; modes B and C are analogous.
    """
    t = as_tensor(t)
    gram = _mode_gram(mode, m)
    mtt = _mode_mttkrp(mode, t, m)
    x = {"A": m.A, "B": m.B, "C": m.C}[mode]
    d = m.alpha
    # (X D W^T W - T(mode) W) D, using the Gram identity instead of forming W.
    return ((x * d) @ gram - mtt) * d


def lipschitz_estimate(mode, m):
    """Largest eigenvalue of D W^T W D for the mode, floored at 1e-12.

    This is the exact Lipschitz constant of the block gradient, since f is
    quadratic in each factor.
    """
    gram = _mode_gram(mode, m)
    d = m.alpha
    h = gram * np.outer(d, d)
    lam = float(np.linalg.eigvalsh(h)[-1])
    return max(lam, 1e-12)


def mm_update(mode, m, t, ctl):
    """One majorize-minimize step on a single factor with unit-column projection.

    Takes the gradient step X - grad / (s * L) and renormalizes each column;
    a column that collapses to zero keeps its previous value.  Refreshes the
    mode's Lipschitz estimate in ``ctl``.
    """
    lip = lipschitz_estimate(mode, m)
    ctl.lipschitz[mode] = lip
    step = 1.0 / (ctl.s * lip)
    d = {"A": m.A, "B": m.B, "C": m.C}[mode] - step * gradient(mode, m, t)
    norms = np.linalg.norm(d, axis=0)
    out = m.copy()
    target = {"A": out.A, "B": out.B, "C": out.C}[mode]
    for r in range(m.R):
        if norms[r] > 0.0:
            target[:, r] = d[:, r] / norms[r]
    return out


def regularized_als_step(m, t, rho):
    """One Tikhonov-damped alternating least-squares sweep over A, B, C.

    Each mode solves (W^T W + rho I) G^T = W^T T(mode)^T for G = X D, then
    splits G into unit columns and the scaling vector.  With rho = 0 and a
    full-column-rank W this is the exact ALS subproblem solution.
    """
    t = as_tensor(t)
    if rho < 0.0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    work = m.copy()
    eye = np.eye(m.R)
    alpha = work.alpha
    for mode in _MODES:
        gram = _mode_gram(mode, work)
        lhs = gram + rho * eye
        evals = np.linalg.eigvalsh(lhs)
        if evals[-1] <= 0.0 or evals[0] <= 1e-13 * evals[-1]:
            raise NumericalRankError(
                "normal equations are numerically singular; pass rho > 0 to damp them"
            )
        g = np.linalg.solve(lhs, _mode_mttkrp(mode, t, work).T).T
        norms = np.linalg.norm(g, axis=0)
        target = {"A": work.A, "B": work.B, "C": work.C}[mode]
        for r in range(work.R):
            if norms[r] > 0.0:
                target[:, r] = g[:, r] / norms[r]
        alpha = norms
        work.alpha = alpha
    return work


def objective(m, t):
    """f = 0.5 * ||t - reconstruct(m)||_F^2, the smooth data-fit term."""
    return 0.5 * float(np.linalg.norm((as_tensor(t) - reconstruct(m)).ravel()) ** 2)
