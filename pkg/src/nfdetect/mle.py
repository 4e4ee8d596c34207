"""Solver state for the relaxed covariance-fit likelihood problem.

The state tracks the activity iterate a, the inverse signal covariance
(maintained by low-rank Woodbury updates), the residual y - mean(a) and
an incrementally maintained log-determinant.  The negative log-likelihood
objective is

    f(a) = log|Sigma_a| + (y - ybar_a)^H Sigma_a^{-1} (y - ybar_a),

with Sigma_a = sum_j a_j X_j X_j^H + noise * I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synthesis import covariance_matrix, mean_vector

__all__ = ["NumericalFailure", "StepKernel", "FullState",
           "projected_gradient_violation"]

# Refuse a Woodbury update whose inner system is worse conditioned than this.
CONDITION_LIMIT = 1e12


class NumericalFailure(RuntimeError):
    """Non-finite intermediate or irrecoverably ill-conditioned update."""


@dataclass
class StepKernel:
    """Quantities defining one coordinate's one-dimensional subproblem.

    gram      -- G = X^H Sigma^{-1} X, Hermitian PSD (r x r)
    resid_proj -- u = X^H Sigma^{-1} (y - ybar_a)
    mean_proj -- t = X^H Sigma^{-1} m, with m the coordinate's mean vector
    mean_lin  -- Re((y - ybar_a)^H Sigma^{-1} m)
    mean_quad -- m^H Sigma^{-1} m
    box       -- feasible step interval (-a_j, 1 - a_j)

    The exact objective change for a step d is

        log|I + d G| - 2 d mean_lin + d^2 mean_quad
        - d u^H (I + d G)^{-1} u + 2 d^2 Re(u^H (I + d G)^{-1} t)
        - d^3 t^H (I + d G)^{-1} t.
    """

    gram: np.ndarray
    resid_proj: np.ndarray
    mean_proj: np.ndarray
    mean_lin: float
    mean_quad: float
    box: tuple[float, float]

    @property
    def rank(self) -> int:
        return self.gram.shape[0]

    def gradient(self) -> float:
        """Directional derivative of f at d = 0."""
        return float(np.real(np.trace(self.gram))
                     - np.sum(np.abs(self.resid_proj) ** 2)
                     - 2.0 * self.mean_lin)

    def objective_delta(self, d: float) -> float:
        """Exact f(a + d e_j) - f(a) given the maintained inverse."""
        if d == 0.0:
            return 0.0
        r = self.rank
        c = np.eye(r) + d * self.gram
        sign, logabs = np.linalg.slogdet(c)
        if not np.isfinite(logabs) or np.real(sign) <= 0:
            return np.inf
        sol = np.linalg.solve(c, np.stack([self.resid_proj, self.mean_proj], axis=1))
        uu = float(np.real(self.resid_proj.conj() @ sol[:, 0]))
        ut = float(np.real(self.resid_proj.conj() @ sol[:, 1]))
        tt = float(np.real(self.mean_proj.conj() @ sol[:, 1]))
        return (logabs - 2.0 * d * self.mean_lin + d * d * self.mean_quad
                - d * uu + 2.0 * d * d * ut - d ** 3 * tt)


def projected_gradient_violation(a: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Coordinate-wise distance |Proj(a - grad) - a| with Proj onto [0, 1]."""
    return np.abs(np.clip(a - grad, 0.0, 1.0) - a)


class FullState:
    """Dense solver state holding the full LM x LM inverse covariance."""

    def __init__(self, pop, y: np.ndarray, a0: np.ndarray | None = None,
                 recompute_interval: int | None = None):
        self.pop = pop
        self.y = np.asarray(y, dtype=complex)
        if self.y.shape != (pop.signal_dim,):
            raise ValueError("signal length does not match the population")
        n = pop.n_coordinates
        self.a = np.zeros(n) if a0 is None else np.asarray(a0, dtype=float).copy()
        self.recompute_interval = (10 * n if recompute_interval is None
                                   else recompute_interval)
        self._updates_since_recompute = 0
        self._recompute_dense()

    # -- maintained quantities ------------------------------------------

    def _recompute_dense(self):
        sigma = covariance_matrix(self.pop, self.a)
        self.sigma_inv = np.linalg.inv(sigma)
        self.sigma_inv = 0.5 * (self.sigma_inv + self.sigma_inv.conj().T)
        sign, self.logdet = np.linalg.slogdet(sigma)
        self.residual = self.y - mean_vector(self.pop, self.a)
        self._updates_since_recompute = 0

    def objective(self) -> float:
        quad = np.real(self.residual.conj() @ (self.sigma_inv @ self.residual))
        val = self.logdet + float(quad)
        if not np.isfinite(val):
            raise NumericalFailure("non-finite objective")
        return val

    # -- per-coordinate machinery ---------------------------------------

    def kernel(self, j: int) -> StepKernel:
        x = self.pop.coordinate_factor(j)
        m = self.pop.coordinate_mean(j)
        b = self.sigma_inv @ x
        gram = x.conj().T @ b
        gram = 0.5 * (gram + gram.conj().T)
        w = self.sigma_inv @ self.residual
        sm = self.sigma_inv @ m
        return StepKernel(
            gram=gram,
            resid_proj=x.conj().T @ w,
            mean_proj=x.conj().T @ sm,
            mean_lin=float(np.real(self.residual.conj() @ sm)),
            mean_quad=float(np.real(m.conj() @ sm)),
            box=(-self.a[j], 1.0 - self.a[j]),
        )

    def gradient_entry(self, j: int) -> float:
        return self.kernel(j).gradient()

    def rank_of(self, j: int) -> int:
        return self.pop.coordinate_rank(j)

    @property
    def n_coordinates(self) -> int:
        return self.pop.n_coordinates

    def apply_update(self, j: int, d: float):
        """Woodbury-update the inverse, log-determinant and residual."""
        if d == 0.0:
            return
        x = self.pop.coordinate_factor(j)
        b = self.sigma_inv @ x
        gram = x.conj().T @ b
        c = np.eye(gram.shape[0]) + d * gram
        self.a[j] += d
        self.residual -= d * self.pop.coordinate_mean(j)
        if np.linalg.cond(c) > CONDITION_LIMIT:
            self._recompute_dense()
            return
        sign, logabs = np.linalg.slogdet(c)
        self.sigma_inv -= d * (b @ np.linalg.solve(c, b.conj().T))
        self.sigma_inv = 0.5 * (self.sigma_inv + self.sigma_inv.conj().T)
        self.logdet += logabs
        self._updates_since_recompute += 1
        if self._updates_since_recompute >= self.recompute_interval:
            self._recompute_dense()

    # -- whole-vector diagnostics ---------------------------------------

    def gradient(self) -> np.ndarray:
        """Full gradient, evaluated with two stacked matrix products."""
        pop = self.pop
        n = pop.n_coordinates
        xall = np.concatenate([pop.coordinate_factor(j) for j in range(n)], axis=1)
        means = np.stack([pop.coordinate_mean(j) for j in range(n)], axis=1)
        z = self.sigma_inv @ xall
        w = self.sigma_inv @ self.residual
        traces = np.real(np.sum(xall.conj() * z, axis=0))
        u_all = xall.conj().T @ w
        lin = np.real(means.conj().T @ w)
        grad = np.empty(n)
        col = 0
        for j in range(n):
            r = pop.coordinate_rank(j)
            grad[j] = (traces[col:col + r].sum()
                       - np.sum(np.abs(u_all[col:col + r]) ** 2)
                       - 2.0 * lin[j])
            col += r
        return grad

    def optimality(self) -> tuple[np.ndarray, float]:
        """Projected-gradient violation vector and its 2-norm."""
        v = projected_gradient_violation(self.a, self.gradient())
        return v, float(np.linalg.norm(v))
