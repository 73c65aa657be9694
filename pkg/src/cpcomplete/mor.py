"""Model-order-reduction pipeline: spectral solver for a parametrized
diffusion problem, snapshot tensor assembly, CP-derived and POD reduced
bases, projection errors, and compression ratios."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from .completion import CompletionConfig, complete
from .factor_updates import regularized_als_step
from .hybrid_l1 import HybridConfig
from .tensor_ops import Mask, as_tensor

__all__ = [
    "cheb_diff",
    "DiffusionProblem",
    "solve_diffusion",
    "diffusion_residual",
    "parameter_grid",
    "assemble_snapshots",
    "ReducedBasis",
    "cp_reduced_basis",
    "pod_basis",
    "project_error",
    "compression_ratio",
    "run_mor_demo",
]


def cheb_diff(n):
    """Chebyshev-Gauss-Lobatto points cos(j pi / n) and the differentiation matrix.

    Standard construction with the negative-sum trick on the diagonal, so the
    derivative of constants is exactly zero.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** j
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


@dataclass
class DiffusionProblem:
    """(1 + mu1 x) u_xx + (1 + mu2 y) u_yy = e^{4xy} on [-1,1]^2, u = 0 on the boundary.

    ``nx`` is the number of collocation points per direction including the
    boundary; |mu| <= 0.99 keeps the coefficients positive (ellipticity).
    """

    nx: int
    mu1: float
    mu2: float

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError("nx must be at least 3 for a nonempty interior")
        if max(abs(self.mu1), abs(self.mu2)) > 0.99:
            raise ValueError("|mu| must not exceed 0.99")


def _diffusion_system(p):
    # Interior collocation system; boundary rows/columns are eliminated before
    # the Kronecker assembly since the boundary values vanish.
    x, d = cheb_diff(p.nx - 1)
    d2 = d @ d
    xi = x[1:-1]
    d2i = sparse.csr_matrix(d2[1:-1, 1:-1])
    ax = sparse.diags(1.0 + p.mu1 * xi)
    ay = sparse.diags(1.0 + p.mu2 * xi)
    eye = sparse.identity(p.nx - 2, format="csr")
    op = sparse.kron(ax @ d2i, eye, format="csc") + sparse.kron(eye, ay @ d2i, format="csc")
    rhs = np.exp(4.0 * np.outer(xi, xi)).ravel()
    return op, rhs


def solve_diffusion(p):
    """Collocation solution on the full grid, boundary values exactly zero."""
    op, rhs = _diffusion_system(p)
    u_int = splinalg.spsolve(op, rhs)
    u = np.zeros((p.nx, p.nx))
    u[1:-1, 1:-1] = u_int.reshape(p.nx - 2, p.nx - 2)
    return u


def diffusion_residual(p, u):
    """||A u_int - f|| / ||f|| of the discrete interior system for a full-grid u."""
    op, rhs = _diffusion_system(p)
    res = op @ u[1:-1, 1:-1].ravel() - rhs
    return float(np.linalg.norm(res)) / float(np.linalg.norm(rhs))


def parameter_grid(n, lo=-0.99, hi=0.99):
    """Tensorial n x n cartesian grid over [lo, hi]^2, mu1 varying slowest."""
    vals = np.linspace(lo, hi, n)
    return [(float(m1), float(m2)) for m1 in vals for m2 in vals]


def assemble_snapshots(grid, nx):
    """nx x nx x len(grid) tensor whose slice k solves the problem at grid[k]."""
    if not grid:
        raise ValueError("parameter grid is empty")
    snaps = np.zeros((nx, nx, len(grid)))
    for k, (m1, m2) in enumerate(grid):
        snaps[:, :, k] = solve_diffusion(DiffusionProblem(nx, m1, m2))
    return snaps


@dataclass
class ReducedBasis:
    """Orthonormal basis columns plus the scheme that produced them."""

    phi: np.ndarray
    source: str


def default_rho(t, r):
    """Damping for the ALS sweeps: 1e-6 * ||t||_F / sqrt(R)."""
    return 1e-6 * float(np.linalg.norm(np.asarray(t).ravel())) / np.sqrt(r)


def cp_reduced_basis(
    a,
    r0=50,
    eps=1e-2,
    m_max=200,
    seed=0,
    lambda_init=10.0,
    als_sweeps=200,
    als_tol=1e-8,
    rho=None,
):
    """Reduced basis from a rank-revealing CP fit of the snapshot tensor.

    Runs the completion driver on the fully observed tensor to find the rank
    (components surviving truncation at ``eps`` times the largest scaling),
    polishes the factors with damped ALS sweeps at that rank, vectorizes the
    spatial outer products x_r o y_r, and orthonormalizes them by pivoted QR,
    dropping columns whose pivot falls below 1e-10 times the largest.
    """
    a = as_tensor(a)
    cfg = CompletionConfig(
        R0=r0,
        m_max=m_max,
        eps_tol=1e-3,
        mode="hybrid",
        seed=seed,
        eps_truncate=eps,
        hybrid=HybridConfig(lambda_init=lambda_init),
    )
    model, _, _ = complete(a, Mask.full(a.shape), cfg)
    if rho is None:
        rho = default_rho(a, model.R)
    for _ in range(als_sweeps):
        prev = model.A.copy()
        model = regularized_als_step(model, a, rho)
        delta = np.linalg.norm(model.A - prev) / max(np.linalg.norm(prev), 1e-300)
        if delta <= als_tol:
            break

    nx = a.shape[0]
    phi_hat = np.empty((nx * a.shape[1], model.R))
    for r in range(model.R):
        phi_hat[:, r] = np.outer(model.A[:, r], model.B[:, r]).ravel()
    q, rr, _ = scipy.linalg.qr(phi_hat, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rr))
    kept = int(np.sum(diag >= 1e-10 * diag.max()))
    return ReducedBasis(np.ascontiguousarray(q[:, :kept]), "cp")


def pod_basis(a, r):
    """Leading left singular vectors of the snapshot matrix (slices as columns)."""
    a = as_tensor(a)
    i, j, k = a.shape
    y = a.reshape(i * j, k)
    if r < 1 or r > min(i * j, k):
        raise ValueError(f"rank {r} out of range for a {i * j} x {k} snapshot matrix")
    u, _, _ = np.linalg.svd(y, full_matrices=False)
    return ReducedBasis(np.ascontiguousarray(u[:, :r]), "pod")


def project_error(basis, tests, nx):
    """l2 error of the orthogonal projection of each truth solve onto the basis."""
    phi = basis.phi
    if phi.shape[0] != nx * nx:
        raise ValueError(f"basis rows {phi.shape[0]} do not match grid size {nx * nx}")
    errors = np.zeros(len(tests))
    for idx, (m1, m2) in enumerate(tests):
        u = solve_diffusion(DiffusionProblem(nx, m1, m2)).ravel()
        proj = phi @ (phi.T @ u)
        errors[idx] = np.linalg.norm(u - proj)
    return errors


def compression_ratio(dims, r, scheme):
    """Stored-entry ratio of the raw tensor to the compressed representation."""
    if r < 1:
        raise ValueError(f"rank must be at least 1, got {r}")
    i, j, k = dims
    total = i * j * k
    if scheme == "pod":
        return total / (r * (i * j + k + 1))
    if scheme == "cp":
        return total / (r * (i + j + k + 1))
    raise ValueError(f"scheme must be 'pod' or 'cp', got {scheme!r}")


def run_mor_demo(nx=40, grid_n=9, r0=50, eps=1e-2, n_tests=10, pod_rank=20, seed=0, m_max=200):
    """Full pipeline on one parameter grid; returns bases, per-test errors and ratios."""
    grid = parameter_grid(grid_n)
    snaps = assemble_snapshots(grid, nx)
    cp = cp_reduced_basis(snaps, r0=r0, eps=eps, m_max=m_max, seed=seed)
    pod = pod_basis(snaps, pod_rank)
    rng = np.random.default_rng(seed)
    tests = [(float(m1), float(m2)) for m1, m2 in rng.uniform(-0.99, 0.99, size=(n_tests, 2))]
    cp_err = project_error(cp, tests, nx)
    pod_err = project_error(pod, tests, nx)
    dims = snaps.shape
    return {
        "snapshots": snaps,
        "grid": grid,
        "tests": tests,
        "cp_basis": cp,
        "pod_basis": pod,
        "cp_errors": cp_err,
        "pod_errors": pod_err,
        "ratios": {
            "cp": compression_ratio(dims, cp.phi.shape[1], "cp"),
            "pod": compression_ratio(dims, pod_rank, "pod"),
        },
    }
