"""Kramers-Wannier duality for parity-check models at finite temperature.

Energies use the product convention: each check contributes
``-(-1)^{(Hs)_i}``, so

    Z_H(beta) = sum_s exp(beta * sum_i (-1)^{(Hs)_i})
              = e^{beta M} sum_s exp(-2 beta * #violated(s)).

With this convention ``Z_H(beta) = 2^N cosh(beta)^M Z_R(tanh beta)`` holds
exactly, where ``Z_R(alpha) = sum_q alpha^{|R^T q|}`` runs over the
redundancies ``R`` (the left kernel of ``H``).  A model with energy equal to
the number of violated checks at inverse temperature ``b`` is the product
convention at ``beta = b / 2``.

Both sides are exact enumerations: a Gray-code walk accumulates an integer
histogram of Hamming weights, which is then summed in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CapacityError, ConfigError
from .f2linalg import BitMatrix, left_kernel_basis, row_reduce
from .plaquette import ParityCheckSystem
from .replica import ReplicaSystem, build_H2, build_H4

__all__ = [
    "RedundancyBasis",
    "DualModel",
    "redundancy_basis",
    "dual_model",
    "dual_partition_log",
    "partition_log_bruteforce",
    "kw_identity_check",
    "finite_beta_renyi2",
    "weak_measurement_params",
    "self_dual_beta",
    "dual_check_weight_histogram",
    "Q_MAX",
    "N_MAX",
]

Q_MAX = 24
N_MAX = 20


def _matrix(obj) -> BitMatrix:
    if isinstance(obj, BitMatrix):
        return obj
    if isinstance(obj, ParityCheckSystem):
        return obj.H
    if isinstance(obj, ReplicaSystem):
        return obj.H_rep
    raise TypeError(f"expected a BitMatrix, ParityCheckSystem or ReplicaSystem, got {type(obj)!r}")


@dataclass(frozen=True)
class RedundancyBasis:
    """``R`` (Q x M) with ``R H = 0``; ``N``, ``M`` are the parent's shape."""

    R: BitMatrix
    N: int
    M: int

    @property
    def Q(self) -> int:
        return self.R.rows


@dataclass(frozen=True)
class DualModel:
    """``R^T`` as an M x Q parity-check matrix at the dual coupling."""

    Rt: BitMatrix
    beta: float
    alpha: float
    beta_dual: float


def redundancy_basis(obj) -> RedundancyBasis:
    H = _matrix(obj)
    return RedundancyBasis(left_kernel_basis(H), H.cols, H.rows)


def dual_model(basis: RedundancyBasis, beta: float) -> DualModel:
    alpha = math.tanh(beta)
    beta_dual = -0.5 * math.log(alpha) if alpha > 0 else math.inf
    return DualModel(basis.R.T, float(beta), alpha, beta_dual)


# ---------------------------------------------------------------------------
# enumeration kernels


@njit(cache=True)
def _popcount64(v):
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _gray_weight_histogram(gens, nbits):
    """Histogram of |sum of a subset of gens| over all 2^K subsets."""
    K, nw = gens.shape
    hist = np.zeros(nbits + 1, dtype=np.int64)
    acc = np.zeros(nw, dtype=np.uint64)
    hist[0] += 1
    total = np.int64(1) << np.int64(K)
    w = np.int64(0)
    for i in range(1, total):
        j = 0
        while not (i >> j) & 1:
            j += 1
        w = 0
        for k in range(nw):
            acc[k] ^= gens[j, k]
            w += np.int64(_popcount64(acc[k]))
        hist[w] += 1
    return hist


def _weight_histogram(gens: BitMatrix) -> np.ndarray:
    if gens.rows == 0:
        h = np.zeros(gens.cols + 1, dtype=np.int64)
        h[0] = 1
        return h
    words = np.ascontiguousarray(gens.words, dtype=np.uint64)
    return _gray_weight_histogram(words, gens.cols)


def _logsumexp_hist(hist: np.ndarray, exponent_per_unit: float) -> float:
    """log sum_w hist[w] exp(w * exponent_per_unit); -inf exponents allowed."""
    w = np.flatnonzero(hist)
    if exponent_per_unit == -math.inf:
        return math.log(hist[0]) if hist[0] else -math.inf
    terms = np.log(hist[w].astype(float)) + w * exponent_per_unit
    m = terms.max()
    return float(m + math.log(math.fsum(np.exp(terms - m))))


# ---------------------------------------------------------------------------
# partition functions


def dual_partition_log(basis: RedundancyBasis, alpha: float, q_max: int = Q_MAX) -> float:
    """``log Z_R(alpha)`` by exact enumeration of all 2^Q dual configurations."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]")
    if basis.Q > q_max:
        raise CapacityError(f"Q = {basis.Q} redundancies exceeds the enumeration limit {q_max}")
    hist = _weight_histogram(basis.R)
    return _logsumexp_hist(hist, math.log(alpha) if alpha > 0 else -math.inf)


def violation_histogram(obj, n_max: int = N_MAX) -> np.ndarray:
    """Number of spin configurations with each count of violated checks."""
    H = _matrix(obj)
    if H.cols > n_max:
        raise CapacityError(f"N = {H.cols} spins exceeds the brute-force limit {n_max}")
    return _weight_histogram(H.T)


def _log_cosh_shifted(beta: float) -> float:
    """log cosh(beta) - beta, accurate for large beta."""
    return math.log1p(math.exp(-2.0 * beta)) - math.log(2.0)


def partition_log_bruteforce(obj, beta: float, n_max: int = N_MAX, convention: str = "product") -> float:
    """``log Z_H`` summed over all 2^N spin configurations.

    ``convention="product"`` uses the energy ``-sum_i (-1)^{(Hs)_i}``;
    ``"violations"`` uses the number of violated checks.
    """
    hist = violation_histogram(obj, n_max)
    M = _matrix(obj).rows
    if convention == "product":
        return beta * M + _logsumexp_hist(hist, -2.0 * beta)
    if convention == "violations":
        return _logsumexp_hist(hist, -beta)
    raise ConfigError(f"unknown energy convention {convention!r}")


def _reduced_log_bruteforce(H: BitMatrix, beta: float, n_max: int) -> float:
    """``log Z_H - beta M`` by brute force."""
    return _logsumexp_hist(violation_histogram(H, n_max), -2.0 * beta if beta < math.inf else -math.inf)


def _reduced_log_dual(H: BitMatrix, beta: float, q_max: int) -> float:
    """``log Z_H - beta M`` through the dual model."""
    basis = redundancy_basis(H)
    alpha = math.tanh(beta)
    shift = _log_cosh_shifted(beta) if beta < math.inf else -math.log(2.0)
    return H.cols * math.log(2.0) + H.rows * shift + dual_partition_log(basis, alpha, q_max)


def kw_identity_check(obj, beta: float, q_max: int = Q_MAX, n_max: int = N_MAX) -> float:
    """``|log Z_H - (N log 2 + M log cosh beta + log Z_R(tanh beta))|``."""
    H = _matrix(obj)
    basis = redundancy_basis(H)
    brute = partition_log_bruteforce(H, beta, n_max)
    dual = H.cols * math.log(2.0) + H.rows * math.log(math.cosh(beta)) + dual_partition_log(
        basis, math.tanh(beta), q_max
    )
    return abs(brute - dual)


def _reduced_log(H: BitMatrix, beta: float, q_max: int, n_max: int) -> tuple[float, str]:
    Q = H.rows - H.rank()
    if Q <= q_max:
        return _reduced_log_dual(H, beta, q_max), "dual"
    if H.cols <= n_max:
        return _reduced_log_bruteforce(H, beta, n_max), "brute"
    raise CapacityError(
        f"system has Q = {Q} redundancies and N = {H.cols} spins; "
        f"exact evaluation needs Q <= {q_max} or N <= {n_max}"
    )


def finite_beta_renyi2(
    sys: ParityCheckSystem, A, beta: float, q_max: int = Q_MAX, n_max: int = N_MAX
) -> float:
    """``2 log Z2 - log Z4`` in nats at inverse temperature ``beta``.

    The ``e^{beta M}`` factors are pulled out of each replica partition
    function before subtracting, so large ``beta`` does not cancel
    catastrophically; ``beta = inf`` gives ``(2 k2 - k4) log 2``.
    """
    if beta < 0:
        raise ConfigError("beta must be nonnegative")
    H2 = build_H2(sys).H_rep
    H4 = build_H4(sys, A).H_rep
    r2, _ = _reduced_log(H2, beta, q_max, n_max)
    r4, _ = _reduced_log(H4, beta, q_max, n_max)
    extra = beta * (2 * H2.rows - H4.rows) if beta < math.inf else 0.0
    return 2.0 * r2 - r4 + extra


# ---------------------------------------------------------------------------
# temperature maps


def weak_measurement_params(beta: float) -> tuple[float, float]:
    """``(gamma, beta_dual)`` with ``exp(-2 gamma) = exp(-2 beta_dual) = tanh beta``."""
    if not beta > 0:
        raise ConfigError("beta must be positive")
    e = math.exp(-2.0 * beta)
    # -log(tanh beta) / 2 written to stay accurate when tanh beta rounds to 1
    g = 0.5 * (math.log1p(e) - math.log1p(-e))
    return g, g


def self_dual_beta() -> float:
    """Fixed point of ``tanh beta = exp(-2 beta)``."""
    return 0.5 * math.log1p(math.sqrt(2.0))


def dual_check_weight_histogram(basis: RedundancyBasis) -> dict:
    """Support size of every dual check (row of ``R^T``) for the reduced basis.

    Each dual check is one original check; its support counts the
    redundancies that involve it.
    """
    if basis.Q == 0:
        return {"sizes": np.zeros(0, dtype=np.int64), "histogram": {}, "zero_fraction": 0.0, "mean": 0.0}
    reduced, _, _ = row_reduce(basis.R)
    sizes = reduced.to_dense().sum(axis=0).astype(np.int64)
    values, counts = np.unique(sizes, return_counts=True)
    return {
        "sizes": sizes,
        "histogram": {int(v): int(c) for v, c in zip(values, counts)},
        "zero_fraction": float((sizes == 0).mean()),
        "mean": float(sizes.mean()),
    }
