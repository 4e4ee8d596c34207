"""Signature sequences, activity sampling and received-signal synthesis.

Works on a :class:`~nfdetect.population.DevicePopulation`; the received
signal is the vectorization y = vec(Y) with index m*L + l for antenna m
and chip l, matching h (x) s Kronecker ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QPSK_ALPHABET",
    "SignatureSet",
    "ActivityTruth",
    "ReceivedSignal",
    "generate_sequences",
    "sample_truth",
    "synthesize_signal",
    "mean_vector",
    "covariance_matrix",
]

# Unit-power QPSK points (+-1 +-j)/sqrt(2).
QPSK_ALPHABET = np.array(
    [1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j], dtype=complex) / np.sqrt(2.0)


@dataclass(frozen=True)
class SignatureSet:
    """Per-device signature sequences, shape (N, Q, L)."""

    sequences: np.ndarray
    alphabet: np.ndarray = field(default_factory=lambda: QPSK_ALPHABET.copy())

    @property
    def n_devices(self) -> int:
        return self.sequences.shape[0]

    @property
    def seqs_per_device(self) -> int:
        return self.sequences.shape[1]

    @property
    def seq_len(self) -> int:
        return self.sequences.shape[2]


@dataclass(frozen=True)
class ActivityTruth:
    """Ground-truth active devices and, per active device, the sent sequence."""

    active_set: tuple[int, ...]
    symbols: tuple[int, ...]  # sequence index q per active device

    def activity_vector(self, n_devices: int, seqs_per_device: int = 1) -> np.ndarray:
        a = np.zeros(n_devices * seqs_per_device)
        for n, q in zip(self.active_set, self.symbols):
            a[n * seqs_per_device + q] = 1.0
        return a


@dataclass(frozen=True)
class ReceivedSignal:
    """One vectorized received-signal realization with its generating truth."""

    y: np.ndarray
    truth: ActivityTruth
    noise_power: float


def generate_sequences(n_devices: int, seq_len: int, seqs_per_device: int = 1,
                       rng: np.random.Generator | None = None) -> SignatureSet:
    """Draw i.i.d. uniform QPSK sequences, shape (N, Q, L)."""
    if min(n_devices, seq_len, seqs_per_device) < 1:
        raise ValueError("all counts must be positive")
    rng = np.random.default_rng(rng)
    idx = rng.integers(0, 4, size=(n_devices, seqs_per_device, seq_len))
    return SignatureSet(sequences=QPSK_ALPHABET[idx])


def sample_truth(n_devices: int, n_active: int, seqs_per_device: int = 1,
                 rng: np.random.Generator | None = None) -> ActivityTruth:
    """Uniformly choose the active set and one sequence per active device."""
    rng = np.random.default_rng(rng)
    active = rng.choice(n_devices, size=n_active, replace=False)
    symbols = rng.integers(0, seqs_per_device, size=n_active)
    return ActivityTruth(active_set=tuple(int(n) for n in np.sort(active)),
                         symbols=tuple(int(q) for q in symbols[np.argsort(active)]))


def _complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def synthesize_signal(pop, truth: ActivityTruth,
                      rng: np.random.Generator | None = None) -> ReceivedSignal:
    """Draw one realization y = sum_n h_n (x) s_{n,q_n} + w.

    Channels are sampled in factor form h = h_mean + F z with z standard
    complex normal of length rank(F), avoiding a Cholesky factorization of
    a rank-deficient correlation matrix.
    """
    rng = np.random.default_rng(rng)
    lm = pop.seq_len * pop.antenna_count
    y = np.zeros(lm, dtype=complex)
    for n, q in zip(truth.active_set, truth.symbols):
        if not (0 <= n < pop.n_devices and 0 <= q < pop.seqs_per_device):
            raise ValueError(f"truth index ({n}, {q}) out of range")
        ch = pop.channels[n]
        z = _complex_normal(rng, ch.corr_rank)
        h = ch.los_mean + ch.corr_factor @ z
        y += np.kron(h, pop.signatures.sequences[n, q])
    y += np.sqrt(pop.noise_power) * _complex_normal(rng, lm)
    return ReceivedSignal(y=y, truth=truth, noise_power=pop.noise_power)


def mean_vector(pop, a: np.ndarray) -> np.ndarray:
    """Signal mean sum_{n,q} a_{n,q} h_mean_n (x) s_{n,q}."""
    a = np.asarray(a, dtype=float)
    lm = pop.seq_len * pop.antenna_count
    out = np.zeros(lm, dtype=complex)
    for j in np.nonzero(a)[0]:
        out += a[j] * pop.coordinate_mean(j)
    return out


def covariance_matrix(pop, a: np.ndarray) -> np.ndarray:
    """Dense covariance sum a_{n,q} R_n (x) s s^H + noise * I.

    Reference/oracle path only; solvers never materialize this in hot loops.
    """
    a = np.asarray(a, dtype=float)
    lm = pop.seq_len * pop.antenna_count
    sigma = pop.noise_power * np.eye(lm, dtype=complex)
    for j in np.nonzero(a)[0]:
        x = pop.coordinate_factor(j)
        sigma += a[j] * (x @ x.conj().T)
    return sigma
