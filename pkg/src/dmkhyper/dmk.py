"""Dynamical Monge-Kantorovich dynamics on a P1/P0 finite-element mesh.

The potential ``u`` lives on mesh vertices (piecewise linear), the
conductivity ``mu`` on triangles (piecewise constant). One step is

    solve  -div(mu grad u) = f   (no-flux boundary, zero weighted mean)
    mu <- max(mu + dt * ((mu |grad u|)**beta - mu), mu_floor)
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh

logger = logging.getLogger(__name__)

DENSE_MAX_VERTICES = 500


class SolverError(RuntimeError):
    """Raised when the elliptic solve fails to reach the requested residual."""

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


@dataclass(frozen=True)
class ForcingField:
    values: np.ndarray
    source_support: frozenset = frozenset()
    sink_support: frozenset = frozenset()

    def __post_init__(self):
        if self.source_support & self.sink_support:
            raise ValueError("source and sink supports overlap")

    def imbalance(self, mesh: Mesh) -> float:
        return float(np.dot(self.values, mesh.vertex_weights()))


@dataclass(frozen=True)
class ConductivityField:
    mu: np.ndarray
    time_index: int = 0


@dataclass(frozen=True)
class PotentialField:
    u: np.ndarray


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    energy: float
    structure: float


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1.5
    dt: float = 0.1
    max_iter: int = 300
    tau: float = 1e-12
    mu_floor: float = 1e-10
    linear_tol: float = 1e-10
    mu0: float = 1.0
    linear_solver: str = "cg"

    def __post_init__(self):
        if not 1.0 < self.beta < 2.0:
            raise ValueError(f"beta must lie in the open interval (1, 2), got {self.beta}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise ValueError(f"max_iter must be a nonnegative integer, got {self.max_iter}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.mu_floor <= 0:
            raise ValueError(f"mu_floor must be positive, got {self.mu_floor}")
        if self.linear_tol <= 0:
            raise ValueError(f"linear_tol must be positive, got {self.linear_tol}")
        if self.mu0 <= 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")
        if self.linear_solver not in ("cg", "dense"):
            raise ValueError(f"linear_solver must be 'cg' or 'dense', got {self.linear_solver!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class TransportProblem:
    """One optimal-transport instance: a mesh and a balanced forcing."""

    mesh: Mesh
    forcing: ForcingField
    spec: object = None


@dataclass
class DMKStep:
    conductivity: ConductivityField
    potential: PotentialField
    cost: CostBreakdown

    @property
    def t(self) -> int:
        return self.conductivity.time_index


@dataclass
class DMKRun:
    problem: TransportProblem
    config: SolverConfig
    steps: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def n_updates(self) -> int:
        return len(self.steps) - 1

    def cost_trace(self) -> np.ndarray:
        """Rows of (L, E, M) per time step."""
        return np.array([[s.cost.total, s.cost.energy, s.cost.structure] for s in self.steps])


@lru_cache(maxsize=16)
def _local_stiffness(mesh: Mesh):
    g = mesh.gradients()
    local = mesh.triangle_areas[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return local.reshape(len(tri), 9), rows, cols


def stiffness_matrix(mesh: Mesh, mu) -> sp.csr_matrix:
    """Assemble the weighted P1 stiffness matrix ``K[i, j] = sum_T mu_T a_T grad phi_i . grad phi_j``."""
    local, rows, cols = _local_stiffness(mesh)
    data = (np.asarray(mu, float)[:, None] * local).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def load_vector(mesh: Mesh, f) -> np.ndarray:
    return mesh.vertex_weights() * np.asarray(f, float)


def _check_balance(mesh: Mesh, values: np.ndarray) -> None:
    w = mesh.vertex_weights()
    scale = max(1.0, float(np.dot(np.abs(values), w)))
    imbalance = float(np.dot(values, w))
    if abs(imbalance) > 1e-10 * scale:
        raise ValueError(f"forcing is not mass balanced: sum f*w = {imbalance:.3e}")


def _dense_solve(K, b, w):
    n = len(b)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = K.toarray()
    A[:n, n] = w
    A[n, :n] = w
    rhs = np.append(b, 0.0)
    return np.linalg.solve(A, rhs)[:n]


def assemble_and_solve_potential(mesh: Mesh, mu, f, linear_tol=1e-10, method="cg", maxiter=None):
    """Solve the weighted Neumann problem for the transport potential.

    ``f`` may be a :class:`ForcingField` or a per-vertex array. The result
    has zero weighted mean and satisfies ``||K u - b|| <= linear_tol * ||b||``
    where ``b`` is the mean-free lumped load.
    """
    values = np.asarray(getattr(f, "values", f), float)
    mu = np.asarray(getattr(mu, "mu", mu), float)
    if np.any(mu <= 0):
        raise ValueError("conductivity must be strictly positive")
    _check_balance(mesh, values)

    w = mesh.vertex_weights()
    b = load_vector(mesh, values)
    b = b - b.mean()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return PotentialField(np.zeros(mesh.n_vertices))

    K = stiffness_matrix(mesh, mu)
    if method == "dense":
        if mesh.n_vertices > DENSE_MAX_VERTICES:
            raise ValueError(f"dense path limited to {DENSE_MAX_VERTICES} vertices")
        u = _dense_solve(K, b, w)
    elif method == "cg":
        d = K.diagonal()
        precond = sp.diags(1.0 / d)
        maxiter = maxiter or 20 * mesh.n_vertices
        u = np.zeros_like(b)
        # restarts guard against drift between the recursive and true residual
        for _ in range(4):
            u, info = spla.cg(K, b, x0=u, rtol=0.5 * linear_tol, atol=0.0, M=precond, maxiter=maxiter)
            res = np.linalg.norm(K @ u - b)
            if res <= linear_tol * bnorm:
                break
        else:
            raise SolverError(
                f"conjugate gradient stalled at relative residual {res / bnorm:.3e}",
                residual=res / bnorm,
            )
    else:
        raise ValueError(f"unknown linear solver {method!r}")

    u = u - np.dot(u, w) / w.sum()
    return PotentialField(u)


def gradient(mesh: Mesh, u) -> np.ndarray:
    """Constant gradient of the linear interpolant of ``u`` on each triangle, shape (m, 2)."""
    u = np.asarray(getattr(u, "u", u), float)
    return np.einsum("ti,tik->tk", u[mesh.triangles], mesh.gradients())


def compute_flux_magnitude(mesh: Mesh, mu, u) -> np.ndarray:
    mu = np.asarray(getattr(mu, "mu", mu), float)
    return mu * np.linalg.norm(gradient(mesh, u), axis=1)


def update_conductivity(mu, flux_magnitude, beta, dt, mu_floor=1e-10) -> np.ndarray:
    """Forward-Euler step ``mu + dt * (flux**beta - mu)`` clamped at ``mu_floor``."""
    mu = np.asarray(mu, float)
    new = mu + dt * (np.power(flux_magnitude, beta) - mu)
    return np.maximum(new, mu_floor)


def lyapunov_cost(mesh: Mesh, mu, u, beta) -> CostBreakdown:
    if beta == 2:
        raise ValueError("beta = 2 makes the structural cost undefined")
    mu = np.asarray(getattr(mu, "mu", mu), float)
    a = mesh.triangle_areas
    g2 = np.sum(gradient(mesh, u) ** 2, axis=1)
    energy = 0.5 * float(np.sum(a * mu * g2))
    structure = 0.5 * float(np.sum(a * np.power(mu, (2.0 - beta) / beta))) / (2.0 - beta)
    return CostBreakdown(energy + structure, energy, structure)


def run_dmk(problem: TransportProblem, config: SolverConfig, callback=None) -> DMKRun:
    """Integrate the dynamics from a uniform ``mu0`` until the max-norm
    update drops below ``tau`` or ``max_iter`` updates have been taken."""
    mesh = problem.mesh
    forcing = problem.forcing
    mu = np.full(mesh.n_triangles, float(config.mu0))
    run = DMKRun(problem, config)

    def solve(mu, t):
        try:
            return assemble_and_solve_potential(mesh, mu, forcing, config.linear_tol, config.linear_solver)
        except SolverError as exc:
            exc.step = t
            raise SolverError(f"elliptic solve failed at step {t}: {exc}", exc.residual, t) from exc

    pot = solve(mu, 0)
    run.steps.append(DMKStep(ConductivityField(mu, 0), pot, lyapunov_cost(mesh, mu, pot.u, config.beta)))
    if callback is not None:
        callback(run.steps[-1])

    for t in range(1, int(config.max_iter) + 1):
        flux = compute_flux_magnitude(mesh, mu, pot.u)
        new_mu = update_conductivity(mu, flux, config.beta, config.dt, config.mu_floor)
        change = float(np.max(np.abs(new_mu - mu)))
        mu = new_mu
        pot = solve(mu, t)
        run.steps.append(DMKStep(ConductivityField(mu, t), pot, lyapunov_cost(mesh, mu, pot.u, config.beta)))
        if callback is not None:
            callback(run.steps[-1])
        if change < config.tau:
            run.converged = True
            logger.debug("converged at step %d (update %.3e)", t, change)
            break
    return run
