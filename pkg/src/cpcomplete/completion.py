"""Outer tensor-completion driver: impute missing entries from the current
model, update factors cyclically, solve the scaling vector, repeat."""

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .cp_model import CPModel, reconstruct, truncate_rank
from .exceptions import DataError
from .factor_updates import StepControl, mm_update
from .hybrid_l1 import HybridConfig, ista_alpha_step, solve_l1_hybrid
from .tensor_ops import Mask, as_tensor, cached_einsum, khatri_rao, masked_copy

__all__ = [
    "CompletionConfig",
    "CompletionTrace",
    "CPScalingOperator",
    "complete",
    "make_random_mask",
    "relative_error",
]


@dataclass
class CompletionConfig:
    """Driver settings.

    ``mode`` is "hybrid" (per-iteration lambda by WGCV) or "fixed" with ``lam``
    the constant regularization parameter for the ISTA baseline.  ``R0`` is
    the upper-bound rank; the rank actually reported comes from truncating the
    converged scaling vector at ``eps_truncate`` times its maximum.
    """

    R0: int = 50
    m_max: int = 500
    eps_tol: float = 1e-3
    mode: str = "hybrid"
    lam: float = 35.0
    seed: int = 0
    eps_truncate: float = 1e-2
    step_safety: float = 1.05
    hybrid: HybridConfig = field(default_factory=HybridConfig)

    def __post_init__(self):
        if self.R0 < 1 or self.m_max < 1:
            raise ValueError("R0 and m_max must be at least 1")
        if not 0.0 < self.eps_tol < 1.0:
            raise ValueError(f"eps_tol must lie in (0, 1), got {self.eps_tol}")
        if self.mode not in ("hybrid", "fixed"):
            raise ValueError(f"mode must be 'hybrid' or 'fixed', got {self.mode!r}")


@dataclass
class CompletionTrace:
    """Per-iteration diagnostics: observed-entry residual, lambda, wall time."""

    iteration: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    def append(self, iteration, residual, lam, wall_ms):
        self.iteration.append(int(iteration))
        self.residual.append(float(residual))
        self.lam.append(float(lam))
        self.wall_ms.append(float(wall_ms))

    def __len__(self):
        return len(self.iteration)


class CPScalingOperator:
    """The map alpha -> vectorize(sum_r alpha_r a_r o b_r o c_r) as an operator.

    matvec is Q^T applied to a coefficient vector, rmatvec is Q applied to a
    vectorized tensor; the R x IJK dictionary is never materialized, only the
    (JK x R) Khatri-Rao factor shared by every product with these factors.
    """

    def __init__(self, m):
        self.A = m.A
        i, j, k = m.dims
        self.dims = (i, j, k)
        self.shape = (i * j * k, m.R)
        self._w = khatri_rao(m.C, m.B)  # row index k*J + j
        self._gram = (m.A.T @ m.A) * (m.B.T @ m.B) * (m.C.T @ m.C)

    def gram(self):
        """Q Q^T via the Hadamard product of the three factor Grams."""
        return self._gram

    def matvec(self, x):
        i, j, k = self.dims
        m1 = (self.A * x) @ self._w.T
        return np.ascontiguousarray(m1.reshape(i, k, j).transpose(0, 2, 1)).ravel()

    def rmatvec(self, y):
        i, j, k = self.dims
        y1 = y.reshape(i, j, k).transpose(0, 2, 1).reshape(i, k * j)
        return ((self.A.T @ y1) * self._w.T).sum(axis=1)

    def reconstruct(self, x):
        return self.matvec(x).reshape(self.dims)


def make_random_mask(dims, fraction, seed=0):
    """Uniform mask observing ceil(fraction * IJK) entries, seeded."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    total = int(np.prod(dims))
    count = int(np.ceil(fraction * total))
    rng = np.random.default_rng(seed)
    flat = rng.choice(total, size=count, replace=False)
    triples = np.stack(np.unravel_index(np.sort(flat), dims), axis=1)
    return Mask(dims, triples)


def relative_error(s, a):
    """Frobenius-norm relative error ||s - a|| / ||a||."""
    s = as_tensor(s)
    a = as_tensor(a)
    if s.shape != a.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {a.shape}")
    denom = float(np.linalg.norm(a.ravel()))
    if denom == 0.0:
        raise ValueError("reference tensor has zero norm")
    return float(np.linalg.norm((s - a).ravel())) / denom


def _init_model(t_zero_filled, dims, r0, rng):
    def unit_columns(n):
        x = rng.standard_normal((n, r0))
        return x / np.linalg.norm(x, axis=0)

    a, b, c = (unit_columns(d) for d in dims)
    gram = (a.T @ a) * (b.T @ b) * (c.T @ c)
    rhs = cached_einsum("ijk,ir,jr,kr->r", t_zero_filled, a, b, c)
    alpha, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    # Exact zeros would freeze components (D = 0 annihilates the gradients).
    small = np.abs(alpha) < 1e-8
    alpha[small] = np.where(alpha[small] < 0.0, -1e-8, 1e-8)
    return CPModel(a, b, c, alpha)


def complete(t, mask, cfg):
    """Recover a low-rank CP model of ``t`` given the observed entries.

    Each outer iteration imputes the unobserved entries from the current
    reconstruction, runs one MM update per factor, then refits the scaling
    vector (hybrid solver or fixed-lambda ISTA step).  Stops when the
    relative residual on the observed entries drops below ``cfg.eps_tol``.

    Returns ``(model, s, trace)`` where ``model`` is truncated at
    ``cfg.eps_truncate`` (components sorted by descending |alpha|) and ``s``
    is the completed tensor with the observed entries copied back verbatim.
    """
    t = as_tensor(t)
    if not np.all(np.isfinite(t)):
        raise DataError("input tensor contains non-finite values")
    if mask.dims != t.shape:
        raise ValueError(f"mask dims {mask.dims} do not match tensor {t.shape}")
    if mask.count == 0:
        raise ValueError("mask observes no entries")

    rng = np.random.default_rng(cfg.seed)
    zeros = np.zeros(t.shape)
    model = _init_model(masked_copy(t, zeros, mask), t.shape, cfg.R0, rng)
    ctl = StepControl(s=cfg.step_safety)
    hybrid_cfg = cfg.hybrid
    if hybrid_cfg.k_max > cfg.R0:
        # the operator has only R0 columns, so the process breaks down by then
        hybrid_cfg = dataclasses.replace(hybrid_cfg, k_max=cfg.R0)

    t_obs = t[mask.where]
    obs_norm = float(np.linalg.norm(t_obs))
    trace = CompletionTrace()
    s_hat = reconstruct(model)
    start = time.perf_counter()
    for n in range(1, cfg.m_max + 1):
        t_work = masked_copy(t, s_hat, mask)
        for mode in ("A", "B", "C"):
            model = mm_update(mode, model, t_work, ctl)
        if cfg.mode == "hybrid":
            op = CPScalingOperator(model)
            alpha, lam_hist = solve_l1_hybrid(op, t_work.ravel(), hybrid_cfg)
            model.alpha = alpha
            lam = float(lam_hist[-1]) if lam_hist.size else float("nan")
            s_hat = op.reconstruct(alpha)
        else:
            model.alpha = ista_alpha_step(model, t_work, cfg.lam, ctl)
            lam = cfg.lam
            s_hat = reconstruct(model)
        residual = float(np.linalg.norm(s_hat[mask.where] - t_obs)) / max(obs_norm, 1e-300)
        trace.append(n, residual, lam, (time.perf_counter() - start) * 1e3)
        if residual <= cfg.eps_tol:
            break

    s_out = masked_copy(t, s_hat, mask)
    return truncate_rank(model, cfg.eps_truncate), s_out, trace
