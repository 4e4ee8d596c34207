"""Block-diagonal acceleration for populations with few correlated devices.

When the correlated devices' correlation matrices sum to a rank-deficient
matrix (rank r' < M), a unitary change of basis confines all correlation
to the first r' antenna coordinates.  The transformed covariance is block
diagonal: one Lr' x Lr' head block plus M - r' identical L x L tail
blocks, so the inverse can be maintained in O((Lr')^2 + L^2) storage,
independent of M.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mle import CONDITION_LIMIT, NumericalFailure, StepKernel, \
    projected_gradient_violation
from .population import DevicePopulation

__all__ = ["LowRankBasis", "BlockProblem", "BlockState", "build_basis",
           "truncate_basis", "transform_problem", "transform_signal"]

RANK_TOL = 1e-9


@dataclass
class LowRankBasis:
    """Unitary basis confining correlated energy to the leading coordinates."""

    u: np.ndarray                      # M x M unitary
    r_prime: int
    n_corr: int
    corr_hat_factors: list[np.ndarray]  # per correlated device, r' x r_n
    eigvals: np.ndarray                # of the correlation sum, descending
    approximate: bool = False

    @property
    def energy_fraction(self) -> float:
        total = float(np.sum(self.eigvals))
        if total == 0.0:
            return 1.0
        return float(np.sum(self.eigvals[:self.r_prime])) / total


def _check_split(pop: DevicePopulation, n_corr: int):
    for n, ch in enumerate(pop.channels):
        if n < n_corr and ch.is_identity_corr:
            raise ValueError(f"device {n} declared correlated but has scaled-"
                             "identity correlation")
        if n >= n_corr and not ch.is_identity_corr:
            raise ValueError(f"device {n} must have scaled-identity correlation")


def _basis_from_sum(pop: DevicePopulation, n_corr: int):
    m = pop.antenna_count
    total = np.zeros((m, m), dtype=complex)
    for n in range(n_corr):
        f = pop.channels[n].corr_factor
        total += f @ f.conj().T
    lam, u = np.linalg.eigh(total)
    order = np.argsort(lam)[::-1]
    return np.maximum(lam[order], 0.0), u[:, order]


def build_basis(pop: DevicePopulation, n_corr: int) -> LowRankBasis:
    """Exact common basis; requires the correlation sum to be rank-deficient."""
    _check_split(pop, n_corr)
    lam, u = _basis_from_sum(pop, n_corr)
    m = pop.antenna_count
    cutoff = RANK_TOL * lam[0] if n_corr > 0 and lam[0] > 0 else 0.0
    r_prime = int(np.sum(lam > cutoff))
    if r_prime >= m:
        raise ValueError("correlation sum has full rank; use truncate_basis "
                         "for an approximate construction")
    factors = [(u.conj().T @ pop.channels[n].corr_factor)[:r_prime]
               for n in range(n_corr)]
    return LowRankBasis(u=u, r_prime=r_prime, n_corr=n_corr,
                        corr_hat_factors=factors, eigvals=lam)


def truncate_basis(pop: DevicePopulation, n_corr: int,
                   r_dd: int) -> LowRankBasis:
    """Approximate basis keeping only the leading r_dd coordinates.

    Useful when the correlation sum is full rank; the captured energy
    fraction is reported on the result, and the solved activity vector is
    intended as a warm start for the exact solver.
    """
    _check_split(pop, n_corr)
    m = pop.antenna_count
    if not 0 < r_dd < m:
        raise ValueError("truncation rank must satisfy 0 < r'' < M")
    lam, u = _basis_from_sum(pop, n_corr)
    factors = [(u.conj().T @ pop.channels[n].corr_factor)[:r_dd]
               for n in range(n_corr)]
    return LowRankBasis(u=u, r_prime=r_dd, n_corr=n_corr,
                        corr_hat_factors=factors, eigvals=lam,
                        approximate=True)


def transform_signal(y: np.ndarray, basis: LowRankBasis,
                     seq_len: int) -> np.ndarray:
    """y' = (U^H (x) I_L) y for the antenna-major vectorization."""
    m = basis.u.shape[0]
    z = np.asarray(y, dtype=complex).reshape(m, seq_len)
    return (basis.u.conj().T @ z).reshape(m * seq_len)


class BlockProblem:
    """Transformed per-coordinate data consumed by :class:`BlockState`."""

    def __init__(self, pop: DevicePopulation, basis: LowRankBasis):
        self.pop = pop
        self.basis = basis
        self.means_prime = np.stack(
            [basis.u.conj().T @ ch.los_mean for ch in pop.channels])
        self.gains = np.array([ch.large_scale_gain for ch in pop.channels])
        self._xhat_cache: dict[int, np.ndarray] = {}

    @property
    def n_coordinates(self) -> int:
        return self.pop.n_coordinates

    @property
    def seq_len(self) -> int:
        return self.pop.seq_len

    @property
    def antenna_count(self) -> int:
        return self.pop.antenna_count

    @property
    def r_prime(self) -> int:
        return self.basis.r_prime

    def is_correlated(self, j: int) -> bool:
        n, _ = self.pop.coordinate_device(j)
        return n < self.basis.n_corr

    def coordinate_rank(self, j: int) -> int:
        if self.is_correlated(j):
            return self.pop.coordinate_rank(j)
        return self.antenna_count

    def head_factor(self, j: int) -> np.ndarray:
        """Transformed Kronecker factor restricted to the head block.

        Correlated devices: Rhat^{1/2} (x) s, shape (L r', r_n).
        Uncorrelated devices: sqrt(g) I_{r'} (x) s, shape (L r', r').
        """
        x = self._xhat_cache.get(j)
        if x is None:
            n, q = self.pop.coordinate_device(j)
            s = self.pop.signatures.sequences[n, q]
            if self.is_correlated(j):
                x = np.kron(self.basis.corr_hat_factors[n], s[:, None])
            else:
                x = np.kron(np.sqrt(self.gains[n]) * np.eye(self.r_prime),
                            s[:, None])
            self._xhat_cache[j] = x
        return x

    def coordinate_mean(self, j: int) -> np.ndarray:
        n, q = self.pop.coordinate_device(j)
        return np.kron(self.means_prime[n], self.pop.signatures.sequences[n, q])

    def coordinate_sequence(self, j: int) -> np.ndarray:
        n, q = self.pop.coordinate_device(j)
        return self.pop.signatures.sequences[n, q]

    def coordinate_gain(self, j: int) -> float:
        n, _ = self.pop.coordinate_device(j)
        return float(self.gains[n])


def transform_problem(pop: DevicePopulation, y: np.ndarray,
                      basis: LowRankBasis) -> tuple[BlockProblem, np.ndarray]:
    return BlockProblem(pop, basis), transform_signal(y, basis, pop.seq_len)


class BlockState:
    """Solver state storing only the head and tail inverse blocks."""

    def __init__(self, problem: BlockProblem, y_prime: np.ndarray,
                 a0: np.ndarray | None = None,
                 recompute_interval: int | None = None):
        self.problem = problem
        self.y = np.asarray(y_prime, dtype=complex)
        n = problem.n_coordinates
        self.a = np.zeros(n) if a0 is None else np.asarray(a0, dtype=float).copy()
        self.recompute_interval = (10 * n if recompute_interval is None
                                   else recompute_interval)
        self._updates_since_recompute = 0
        self._recompute_dense()

    # -- block geometry --------------------------------------------------

    @property
    def n_coordinates(self) -> int:
        return self.problem.n_coordinates

    @property
    def _head_len(self) -> int:
        return self.problem.seq_len * self.problem.r_prime

    def _tail_slices(self, vec: np.ndarray) -> np.ndarray:
        l = self.problem.seq_len
        return vec[self._head_len:].reshape(-1, l)

    # -- maintained quantities -------------------------------------------

    def _recompute_dense(self):
        prob = self.problem
        l = prob.seq_len
        noise = prob.pop.noise_power
        hat = noise * np.eye(self._head_len, dtype=complex)
        tilde = noise * np.eye(l, dtype=complex)
        for j in np.nonzero(self.a)[0]:
            x = prob.head_factor(int(j))
            hat += self.a[j] * (x @ x.conj().T)
            if not prob.is_correlated(int(j)):
                s = prob.coordinate_sequence(int(j))
                tilde += self.a[j] * prob.coordinate_gain(int(j)) * \
                    np.outer(s, s.conj())
        self.sigma_hat_inv = np.linalg.inv(hat)
        self.sigma_hat_inv = 0.5 * (self.sigma_hat_inv
                                    + self.sigma_hat_inv.conj().T)
        self.sigma_tilde_inv = np.linalg.inv(tilde)
        self.sigma_tilde_inv = 0.5 * (self.sigma_tilde_inv
                                      + self.sigma_tilde_inv.conj().T)
        _, self.logdet_hat = np.linalg.slogdet(hat)
        _, self.logdet_tilde = np.linalg.slogdet(tilde)
        self.residual = self.y.copy()
        for j in np.nonzero(self.a)[0]:
            self.residual -= self.a[j] * prob.coordinate_mean(int(j))
        self._updates_since_recompute = 0

    @property
    def logdet(self) -> float:
        m, rp = self.problem.antenna_count, self.problem.r_prime
        return self.logdet_hat + (m - rp) * self.logdet_tilde

    def quadratic_form(self, xi: np.ndarray, eta: np.ndarray) -> complex:
        """xi^H (Sigma')^{-1} eta without materializing the full inverse."""
        h = self._head_len
        head = xi[:h].conj() @ (self.sigma_hat_inv @ eta[:h])
        xt, et = self._tail_slices(xi), self._tail_slices(eta)
        tail = np.sum(xt.conj() * (et @ self.sigma_tilde_inv.T))
        return complex(head + tail)

    def objective(self) -> float:
        val = self.logdet + float(np.real(
            self.quadratic_form(self.residual, self.residual)))
        if not np.isfinite(val):
            raise NumericalFailure("non-finite objective")
        return val

    def inverse_times(self, vec: np.ndarray) -> np.ndarray:
        """(Sigma')^{-1} vec, block by block."""
        h = self._head_len
        out = np.empty_like(vec)
        out[:h] = self.sigma_hat_inv @ vec[:h]
        out[h:] = (self._tail_slices(vec) @ self.sigma_tilde_inv.T).ravel()
        return out

    # -- per-coordinate machinery ----------------------------------------

    def rank_of(self, j: int) -> int:
        return self.problem.coordinate_rank(j)

    def kernel(self, j: int) -> StepKernel:
        prob = self.problem
        h = self._head_len
        m_vec = prob.coordinate_mean(j)
        z = self.inverse_times(self.residual)
        sm = self.inverse_times(m_vec)
        xhat = prob.head_factor(j)
        gram_head = xhat.conj().T @ (self.sigma_hat_inv @ xhat)
        gram_head = 0.5 * (gram_head + gram_head.conj().T)
        u_head = xhat.conj().T @ z[:h]
        t_head = xhat.conj().T @ sm[:h]
        if prob.is_correlated(j):
            gram, u, t = gram_head, u_head, t_head
        else:
            # tail columns of the equivalent factor sqrt(g) I_M (x) s act on
            # one antenna slice each with the shared L x L inverse
            s = prob.coordinate_sequence(j)
            root_g = np.sqrt(prob.coordinate_gain(j))
            lam_tilde = prob.coordinate_gain(j) * float(np.real(
                s.conj() @ (self.sigma_tilde_inv @ s)))
            n_tail = prob.antenna_count - prob.r_prime
            gram = np.zeros((prob.antenna_count, prob.antenna_count),
                            dtype=complex)
            gram[:prob.r_prime, :prob.r_prime] = gram_head
            gram[prob.r_prime:, prob.r_prime:] = lam_tilde * np.eye(n_tail)
            u = np.concatenate([u_head,
                                root_g * (self._tail_slices(z) @ s.conj())])
            t = np.concatenate([t_head,
                                root_g * (self._tail_slices(sm) @ s.conj())])
        return StepKernel(
            gram=gram, resid_proj=u, mean_proj=t,
            mean_lin=float(np.real(self.residual.conj() @ sm)),
            mean_quad=float(np.real(m_vec.conj() @ sm)),
            box=(-self.a[j], 1.0 - self.a[j]),
        )

    def apply_update(self, j: int, d: float):
        if d == 0.0:
            return
        prob = self.problem
        xhat = prob.head_factor(j)
        b = self.sigma_hat_inv @ xhat
        gram = xhat.conj().T @ b
        c = np.eye(gram.shape[0]) + d * gram
        self.a[j] += d
        self.residual -= d * prob.coordinate_mean(j)
        if np.linalg.cond(c) > CONDITION_LIMIT:
            self._recompute_dense()
            return
        _, logabs = np.linalg.slogdet(c)
        self.sigma_hat_inv -= d * (b @ np.linalg.solve(c, b.conj().T))
        self.sigma_hat_inv = 0.5 * (self.sigma_hat_inv
                                    + self.sigma_hat_inv.conj().T)
        self.logdet_hat += logabs
        if not prob.is_correlated(j):
            s = prob.coordinate_sequence(j)
            g = prob.coordinate_gain(j)
            w = self.sigma_tilde_inv @ s
            denom = 1.0 + d * g * float(np.real(s.conj() @ w))
            if abs(denom) < 1.0 / CONDITION_LIMIT:
                self._recompute_dense()
                return
            self.sigma_tilde_inv -= (d * g / denom) * np.outer(w, w.conj())
            self.sigma_tilde_inv = 0.5 * (self.sigma_tilde_inv
                                          + self.sigma_tilde_inv.conj().T)
            self.logdet_tilde += np.log(abs(denom))
        self._updates_since_recompute += 1
        if self._updates_since_recompute >= self.recompute_interval:
            self._recompute_dense()

    # -- whole-vector diagnostics ----------------------------------------

    def gradient(self) -> np.ndarray:
        prob = self.problem
        n = prob.n_coordinates
        h = self._head_len
        z = self.inverse_times(self.residual)
        z_tail = self._tail_slices(z)
        # block trace sum_i (Sigma_hat^{-1})_{ii} for uncorrelated traces
        l, rp = prob.seq_len, prob.r_prime
        blocks = self.sigma_hat_inv.reshape(rp, l, rp, l)
        block_trace = np.einsum("iaib->ab", blocks)
        n_tail = prob.antenna_count - rp
        grad = np.empty(n)
        for j in range(n):
            m_vec = prob.coordinate_mean(j)
            lin = float(np.real(z.conj() @ m_vec))
            if prob.is_correlated(j):
                xhat = prob.head_factor(j)
                tr = float(np.real(np.sum(
                    xhat.conj() * (self.sigma_hat_inv @ xhat))))
                usq = float(np.sum(np.abs(xhat.conj().T @ z[:h]) ** 2))
            else:
                s = prob.coordinate_sequence(j)
                g = prob.coordinate_gain(j)
                lam_tilde = g * float(np.real(
                    s.conj() @ (self.sigma_tilde_inv @ s)))
                tr = g * float(np.real(s.conj() @ (block_trace @ s))) \
                    + n_tail * lam_tilde
                u_head = np.sqrt(g) * (z[:h].reshape(rp, l) @ s.conj())
                u_tail = np.sqrt(g) * (z_tail @ s.conj())
                usq = float(np.sum(np.abs(u_head) ** 2)
                            + np.sum(np.abs(u_tail) ** 2))
            grad[j] = tr - usq - 2.0 * lin
        return grad

    def gradient_entry(self, j: int) -> float:
        return self.kernel(j).gradient()

    def optimality(self) -> tuple[np.ndarray, float]:
        v = projected_gradient_violation(self.a, self.gradient())
        return v, float(np.linalg.norm(v))
