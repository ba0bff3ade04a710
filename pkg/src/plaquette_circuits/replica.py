"""Second Renyi entropy of the circuit state from the classical model.

Two routes give the same integer (in bits):

* replicas: ``S = 2 k2 - k4`` with ``k2``/``k4`` the nullities of two and four
  copies of ``H`` whose top-boundary columns are identified (for four copies,
  A columns glue 0-3 and 1-2, the rest 0-2 and 1-3);
* groups: ``S = dim G/G_B - dim G_A/G_B - dim G_Abar/G_B`` from a single copy,
  where ``G_A`` holds the symmetries whose boundary footprint lies in A.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .f2linalg import BitMatrix, column_set, projected_rank, rank, subgroup_vanishing_on
from .plaquette import DisorderGrid, ParityCheckSystem, build_parity_checks, symmetry_basis

__all__ = [
    "ReplicaSystem",
    "build_H2",
    "build_H4",
    "renyi2_via_replicas",
    "renyi2_via_groups",
    "half_boundary",
    "gamma_estimate",
    "beta_c_estimate",
    "ensemble_half_entropy",
]

# partner copies for A and for its complement in the four-copy system
_GLUE_A = (0, 1, 1, 0)
_GLUE_ABAR = (0, 1, 0, 1)


@dataclass(frozen=True)
class ReplicaSystem:
    """Glued copies of one parity-check system.

    ``column_map[c, j]`` is the replica column of original column ``j`` in
    copy ``c``.  Each original check appears once per copy, copy ``c`` in
    rows ``c*M .. (c+1)*M - 1``.
    """

    H_rep: BitMatrix
    copies: int
    column_map: np.ndarray
    region: tuple[int, ...]
    n_bulk: int
    n_boundary: int

    @property
    def nullity(self) -> int:
        return self.H_rep.cols - rank(self.H_rep)

    @property
    def N(self) -> int:
        return self.H_rep.cols

    @property
    def M(self) -> int:
        return self.H_rep.rows


def _assemble(sys: ParityCheckSystem, column_map: np.ndarray, ncols: int) -> BitMatrix:
    h = sys.H.to_dense()
    M = h.shape[0]
    copies = column_map.shape[0]
    rep = np.zeros((copies * M, ncols), dtype=np.uint8)
    for c in range(copies):
        rep[c * M : (c + 1) * M, column_map[c]] = h
    return BitMatrix.from_dense(rep)


def _region(sys: ParityCheckSystem, A) -> tuple[int, ...]:
    A = column_set(A, sys.n_bits)
    bset = set(sys.boundary_columns)
    extra = [c for c in A if c not in bset]
    if extra:
        raise ConfigError(f"region columns {extra[:5]} are not on the top boundary")
    return A


def half_boundary(sys: ParityCheckSystem, cells: int | None = None) -> tuple[int, ...]:
    """Top-boundary columns of cells ``0 .. cells-1`` (default L // 2)."""
    return sys.boundary_cells(range(sys.L // 2 if cells is None else cells))


def build_H2(sys: ParityCheckSystem) -> ReplicaSystem:
    n = sys.n_bits
    bnd = np.asarray(sys.boundary_columns, dtype=np.int64)
    bulk = np.setdiff1d(np.arange(n), bnd)
    cmap = np.empty((2, n), dtype=np.int64)
    nb, nd = bulk.size, bnd.size
    cmap[0, bulk] = np.arange(nb)
    cmap[1, bulk] = nb + np.arange(nb)
    cmap[:, bnd] = 2 * nb + np.arange(nd)
    return ReplicaSystem(_assemble(sys, cmap, 2 * nb + nd), 2, cmap, (), nb, nd)


def build_H4(sys: ParityCheckSystem, A) -> ReplicaSystem:
    A = _region(sys, A)
    n = sys.n_bits
    bnd = np.asarray(sys.boundary_columns, dtype=np.int64)
    bulk = np.setdiff1d(np.arange(n), bnd)
    nb, nd = bulk.size, bnd.size
    in_a = np.isin(bnd, np.asarray(A, dtype=np.int64))
    cmap = np.empty((4, n), dtype=np.int64)
    for c in range(4):
        cmap[c, bulk] = c * nb + np.arange(nb)
    base = 4 * nb
    # two shared columns per boundary site: one per glued pair of copies
    for c in range(4):
        pair = np.where(in_a, _GLUE_A[c], _GLUE_ABAR[c])
        cmap[c, bnd] = base + 2 * np.arange(nd) + pair
    return ReplicaSystem(_assemble(sys, cmap, 4 * nb + 2 * nd), 4, cmap, A, nb, nd)


def renyi2_via_replicas(sys: ParityCheckSystem, A) -> int:
    k2 = build_H2(sys).nullity
    k4 = build_H4(sys, A).nullity
    return 2 * k2 - k4


def renyi2_via_groups(sys: ParityCheckSystem, A, basis=None) -> int:
    A = _region(sys, A)
    G = (basis if basis is not None else symmetry_basis(sys)).generators
    bnd = sys.boundary_columns
    abar = tuple(c for c in bnd if c not in set(A))
    full = projected_rank(G, bnd)
    in_a = projected_rank(subgroup_vanishing_on(G, abar), bnd)
    in_abar = projected_rank(subgroup_vanishing_on(G, A), bnd)
    return full - in_a - in_abar


def ensemble_half_entropy(
    L: int, T: int, p: float, n_realizations: int, seed: int = 0, initial_condition: str = "fixed-zero"
) -> np.ndarray:
    """Half-cut S2 (bits) for ``n_realizations`` random grids."""
    out = np.empty(n_realizations, dtype=np.int64)
    for i in range(n_realizations):
        grid = DisorderGrid.random(L, T, p, np.random.SeedSequence([seed, L, i]))
        sys = build_parity_checks(grid, initial_condition)
        out[i] = renyi2_via_groups(sys, half_boundary(sys))
    return out


def gamma_estimate(samples: Mapping[int, Sequence[float]]) -> tuple[float, float]:
    """Slope of mean half-cut S2 versus L, with its standard error.

    ``samples`` maps system size to the entropies of its realizations.
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 system sizes")
    Ls = np.array(sorted(samples), dtype=float)
    means = np.array([np.mean(samples[int(L)]) for L in Ls])
    A = np.vstack([Ls, np.ones_like(Ls)]).T
    coef, *_ = np.linalg.lstsq(A, means, rcond=None)
    resid = means - A @ coef
    dof = max(Ls.size - 2, 1)
    cov = float(resid @ resid) / dof * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(np.sqrt(cov[0, 0]))


def beta_c_estimate(gamma: float, alpha: float = 0.5) -> float:
    """Critical inverse temperature from the free-energy balance (inf if gamma = 0)."""
    if gamma <= 0:
        return float("inf")
    return gamma * np.log(2) / min(alpha, 1 - alpha)
