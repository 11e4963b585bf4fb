"""Batch latent goal analysis: turn a fitted quadratic reward model into a
goal-detection map, a self-detection map and residual cost matrices.

The cross block of the reward matrix is truncated by SVD to the requested
latent dimension; a small optimizer then balances how much reward mass the
residual cost terms keep, by choosing a rotation and a positive diagonal
scale for the latent space.
"""

from dataclasses import dataclass

import numpy as np

from . import container
from ._compiled import optimize_projection_kernel
from .errors import DomainError
from .reward_models import QuadraticRewardModel, signed_svd

SCALE_FLOOR = 1e-9
RANK_RTOL = 1e-12


@dataclass
class ProjectionSolution:
    """Converged rotation/scale placement of goals and outcomes in the
    latent space, with optimizer diagnostics."""

    rotation: np.ndarray
    scale: np.ndarray
    residual_cost: float
    cost_history: np.ndarray
    max_orthonormality_error: float
    clamped: bool


def optimize_projection(ctx_proj, act_proj, singular_values, step=0.001,
                        max_iters=100_000, tol=1e-10):
    """Minimize ||Rc|| + ||Ra|| (Frobenius) over an orthonormal rotation and
    a positive diagonal scale, starting from the identity.

    Accepted steps never increase the cost; the step width is backtracked
    and regrown around `step` so convergence to `tol` happens within the
    iteration budget.
    """
    sigma = np.ascontiguousarray(singular_values, dtype=float)
    if np.any(sigma <= 0):
        raise DomainError("singular values must be positive")
    kcc = np.ascontiguousarray(ctx_proj, dtype=float)
    kaa = np.ascontiguousarray(act_proj, dtype=float)
    n = sigma.shape[0]
    if kcc.shape != (n, n) or kaa.shape != (n, n):
        raise DomainError("projected blocks must be n x n")
    v, s, history, max_ortho, clamp_count = optimize_projection_kernel(
        kcc, kaa, sigma, float(step), int(max_iters), float(tol), SCALE_FLOOR)
    return ProjectionSolution(rotation=v, scale=s, residual_cost=float(history[-1]),
                              cost_history=history, max_orthonormality_error=float(max_ortho),
                              clamped=clamp_count > 0)


@dataclass
class LgaDecomposition:
    """Reward decomposed as -|goal_map c - self_map a|^2 plus quadratic
    residual costs in the context and action features."""

    goal_map: np.ndarray
    self_map: np.ndarray
    context_residual: np.ndarray
    action_residual: np.ndarray
    latent_dim: int
    singular_values: np.ndarray
    projection: ProjectionSolution | None = None

    @property
    def context_dim(self):
        return self.goal_map.shape[1]

    @property
    def action_dim(self):
        return self.self_map.shape[1]

    def goal_detect(self, psi_c):
        psi_c = np.asarray(psi_c, dtype=float)
        if psi_c.shape != (self.context_dim,):
            raise DomainError("context feature dimension mismatch")
        return self.goal_map @ psi_c

    def self_detect(self, psi_a):
        psi_a = np.asarray(psi_a, dtype=float)
        if psi_a.shape != (self.action_dim,):
            raise DomainError("action feature dimension mismatch")
        return self.self_map @ psi_a

    def residual_costs(self, psi_c, psi_a):
        psi_c = np.asarray(psi_c, dtype=float)
        psi_a = np.asarray(psi_a, dtype=float)
        if psi_c.shape != (self.context_dim,) or psi_a.shape != (self.action_dim,):
            raise DomainError("feature dimension mismatch")
        return float(psi_c @ self.context_residual @ psi_c), \
            float(psi_a @ self.action_residual @ psi_a)

    def reconstruct_reward(self, psi_c, psi_a):
        ec, ea = self.residual_costs(psi_c, psi_a)
        diff = self.goal_detect(psi_c) - self.self_detect(psi_a)
        return float(-diff @ diff + ec + ea)


def effective_rank(singular_values):
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.sum(s >= RANK_RTOL * s[0]))


def _assemble(model, n, basis_u, sigma, basis_v, rotation, scale, projection=None):
    # goal map = diag(1/scale) rotation^T diag(sigma) U'^T,
    # self map = diag(scale) rotation^T V'^T; their product restores the
    # rank-n cross block for any rotation/scale choice.
    goal_map = ((rotation.T * sigma[None, :]) / scale[:, None]) @ basis_u.T
    self_map = (rotation.T * scale[:, None]) @ basis_v.T
    rc = model.context_block + goal_map.T @ goal_map
    ra = model.action_block + self_map.T @ self_map
    return LgaDecomposition(goal_map=goal_map, self_map=self_map,
                            context_residual=0.5 * (rc + rc.T),
                            action_residual=0.5 * (ra + ra.T),
                            latent_dim=n, singular_values=sigma.copy(),
                            projection=projection)


def _truncated_cross_svd(model, n):
    p, m = model.context_dim, model.action_dim
    if not 1 <= n <= min(p, m):
        raise DomainError(f"n={n} out of range [1, {min(p, m)}]")
    u, s, vt = signed_svd(model.cross_block)
    rank = effective_rank(s)
    if n > rank:
        raise DomainError(
            f"n={n} exceeds the effective rank {rank} of the cross block; "
            "zero singular values cannot span latent dimensions")
    return u[:, :n], s[:n].copy(), vt[:n, :].T.copy()


def decompose(model, n, step=0.001, max_iters=100_000, tol=1e-10):
    """Latent goal analysis of a quadratic reward model at latent dimension n."""
    if not isinstance(model, QuadraticRewardModel):
        raise DomainError("decompose expects a QuadraticRewardModel")
    basis_u, sigma, basis_v = _truncated_cross_svd(model, n)
    ctx_proj = basis_u.T @ model.context_block @ basis_u
    act_proj = basis_v.T @ model.action_block @ basis_v
    sol = optimize_projection(ctx_proj, act_proj, sigma, step=step,
                              max_iters=max_iters, tol=tol)
    return _assemble(model, n, basis_u, sigma, basis_v, sol.rotation, sol.scale,
                     projection=sol)


def assemble_decomposition(model, n, rotation, scale):
    """Decomposition with an explicitly chosen rotation/scale (skips the
    optimizer); useful for studying how the choice shifts reward mass
    between the distance and residual terms."""
    basis_u, sigma, basis_v = _truncated_cross_svd(model, n)
    rotation = np.asarray(rotation, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if rotation.shape != (n, n) or scale.shape != (n,):
        raise DomainError("rotation must be n x n and scale length n")
    if np.any(scale <= 0):
        raise DomainError("scale entries must be positive")
    if np.linalg.norm(rotation.T @ rotation - np.eye(n)) > 1e-6:
        raise DomainError("rotation must be orthonormal")
    return _assemble(model, n, basis_u, sigma, basis_v, rotation, scale)


DECOMPOSITION_VERSION = 1


def save_decomposition(path, dec):
    payload = {
        "latent_dim": dec.latent_dim,
        "goal_map": container.matrix_to_json(dec.goal_map),
        "self_map": container.matrix_to_json(dec.self_map),
        "context_residual": container.matrix_to_json(dec.context_residual),
        "action_residual": container.matrix_to_json(dec.action_residual),
        "singular_values": container.matrix_to_json(dec.singular_values),
    }
    container.save(path, "lga-decomposition", DECOMPOSITION_VERSION, payload)


def load_decomposition(path):
    doc = container.load(path, "lga-decomposition", DECOMPOSITION_VERSION)
    return LgaDecomposition(
        goal_map=container.matrix_from_json(doc["goal_map"]),
        self_map=container.matrix_from_json(doc["self_map"]),
        context_residual=container.matrix_from_json(doc["context_residual"]),
        action_residual=container.matrix_from_json(doc["action_residual"]),
        latent_dim=int(doc["latent_dim"]),
        singular_values=container.matrix_from_json(doc["singular_values"]),
    )
