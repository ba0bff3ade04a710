"""Sign-free stabilizer states on 2L qubits.

Qubit ``a`` of cell ``x`` has index ``x`` and qubit ``b`` has index ``L + x``.
A :class:`Tableau` stores the X and Z blocks of its generators as dense
uint8 arrays (one generator per row).  Signs are never tracked, since no
quantity computed here depends on them.

:class:`SplitTableau` is the fast path for CSS ("sector-pure") states under
CNOT, SWAP and single-qubit X/Z measurements: it keeps the X-type group ``V``
and the Z-type group ``W`` separately, with ``W`` the symplectic complement
of ``V``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .f2linalg import BitMatrix, rank

__all__ = [
    "SiteAddress",
    "Tableau",
    "SplitTableau",
    "product_state",
    "apply_cnot",
    "apply_swap",
    "apply_cz",
    "measure_pauli",
    "entanglement_entropy",
    "participation_entropy",
    "sector_counts",
    "half_cut",
    "cell_region",
]

X = "X"
Z = "Z"


def _axis(axis: str) -> str:
    axis = str(axis).upper()
    if axis not in (X, Z):
        raise ValueError(f"axis must be 'X' or 'Z', got {axis!r}")
    return axis


@dataclass(frozen=True)
class SiteAddress:
    """Qubit ``sublattice`` ('a' or 'b') in unit cell ``cell``."""

    cell: int
    sublattice: str

    def __post_init__(self):
        if self.sublattice not in ("a", "b"):
            raise ValueError("sublattice must be 'a' or 'b'")
        if self.cell < 0:
            raise ValueError("cell must be nonnegative")

    def index(self, L: int) -> int:
        if self.cell >= L:
            raise ValueError(f"cell {self.cell} outside chain of {L} cells")
        return self.cell if self.sublattice == "a" else L + self.cell


def _rank_dense(a: np.ndarray) -> int:
    if a.size == 0:
        return 0
    return rank(BitMatrix.from_dense(a))


def cell_region(L: int, cells: Iterable[int]) -> np.ndarray:
    """Qubit indices (both sublattices) of the given cells."""
    c = np.asarray(sorted(set(int(i) for i in cells)), dtype=np.int64)
    if c.size and (c.min() < 0 or c.max() >= L):
        raise ValueError("cell index out of range")
    return np.concatenate([c, c + L])


def half_cut(L: int, cells: int | None = None) -> np.ndarray:
    """Qubits of the first ``cells`` unit cells (default L // 2)."""
    return cell_region(L, range(L // 2 if cells is None else cells))


class Tableau:
    """Stabilizer generators as X and Z bit blocks, ``x[i, q]`` / ``z[i, q]``."""

    def __init__(self, x: np.ndarray, z: np.ndarray):
        x = np.asarray(x, dtype=np.uint8)
        z = np.asarray(z, dtype=np.uint8)
        if x.shape != z.shape or x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise ValueError("x and z blocks must both be n x n")
        self.x = x.copy()
        self.z = z.copy()

    @property
    def n_qubits(self) -> int:
        return self.x.shape[1]

    @property
    def L(self) -> int:
        if self.n_qubits % 2:
            raise ValueError("SiteAddress needs an even qubit count")
        return self.n_qubits // 2

    def qubit(self, site: SiteAddress | int) -> int:
        if isinstance(site, SiteAddress):
            return site.index(self.L)
        q = int(site)
        if not 0 <= q < self.n_qubits:
            raise ValueError(f"qubit {q} out of range")
        return q

    @property
    def generators(self) -> BitMatrix:
        return BitMatrix.from_dense(np.hstack([self.x, self.z]))

    def copy(self) -> "Tableau":
        return Tableau(self.x, self.z)

    def check_invariants(self) -> None:
        from .errors import InvariantViolation

        comm = (self.x.astype(np.int64) @ self.z.T.astype(np.int64)
                + self.z.astype(np.int64) @ self.x.T.astype(np.int64)) & 1
        if comm.any():
            raise InvariantViolation("generators do not commute")
        if rank(self.generators) != self.n_qubits:
            raise InvariantViolation("generators are not independent")

    def canonical(self) -> BitMatrix:
        """Reduced row-echelon form of the generator matrix (a group fingerprint)."""
        from .f2linalg import row_reduce

        return row_reduce(self.generators)[0]

    def same_group(self, other: "Tableau") -> bool:
        return self.canonical() == other.canonical()

    def __repr__(self) -> str:
        return f"Tableau(n_qubits={self.n_qubits})"


def product_state(n_qubits: int, basis_per_qubit: Sequence[str]) -> Tableau:
    if len(basis_per_qubit) != n_qubits:
        raise ValueError("need one basis label per qubit")
    x = np.zeros((n_qubits, n_qubits), dtype=np.uint8)
    z = np.zeros_like(x)
    for q, b in enumerate(basis_per_qubit):
        if _axis(b) == X:
            x[q, q] = 1
        else:
            z[q, q] = 1
    return Tableau(x, z)


def _pair(t: Tableau, q1, q2) -> tuple[int, int]:
    i, j = t.qubit(q1), t.qubit(q2)
    if i == j:
        raise ValueError("two-qubit gate needs distinct qubits")
    return i, j


def apply_cnot(t: Tableau, control, target) -> Tableau:
    c, g = _pair(t, control, target)
    t.x[:, g] ^= t.x[:, c]
    t.z[:, c] ^= t.z[:, g]
    return t


def apply_swap(t: Tableau, q1, q2) -> Tableau:
    i, j = _pair(t, q1, q2)
    t.x[:, [i, j]] = t.x[:, [j, i]]
    t.z[:, [i, j]] = t.z[:, [j, i]]
    return t


def apply_cz(t: Tableau, q1, q2) -> Tableau:
    i, j = _pair(t, q1, q2)
    t.z[:, j] ^= t.x[:, i]
    t.z[:, i] ^= t.x[:, j]
    return t


def measure_pauli(t: Tableau, axis: str, site, rng=None) -> Tableau:
    """Projective single-qubit X or Z measurement, outcome discarded.

    The anticommuting generator with the lowest row index is multiplied into
    the other anticommuting generators and then replaced by the measured
    Pauli.  ``rng`` is accepted for interface symmetry; without sign tracking
    the outcome never has to be drawn.
    """
    axis = _axis(axis)
    q = t.qubit(site)
    anti = t.x[:, q] if axis == Z else t.z[:, q]
    rows = np.flatnonzero(anti)
    if rows.size == 0:
        return t
    p = rows[0]
    others = rows[1:]
    if others.size:
        t.x[others] ^= t.x[p]
        t.z[others] ^= t.z[p]
    t.x[p] = 0
    t.z[p] = 0
    if axis == X:
        t.x[p, q] = 1
    else:
        t.z[p, q] = 1
    return t


def _region(n: int, region) -> np.ndarray:
    r = np.asarray(sorted(set(int(i) for i in region)), dtype=np.int64)
    if r.size and (r.min() < 0 or r.max() >= n):
        raise ValueError("region index out of range")
    return r


def entanglement_entropy(t: Tableau, region) -> int:
    """Entanglement entropy in bits (all Renyi indices agree for stabilizer states)."""
    if isinstance(t, SplitTableau):
        return t.entanglement_entropy(region)
    r = _region(t.n_qubits, region)
    if r.size == 0:
        return 0
    return _rank_dense(np.hstack([t.x[:, r], t.z[:, r]])) - r.size


def participation_entropy(t: Tableau, basis: str) -> int:
    """log2 of the number of basis states in the support of the state.

    In the Z basis this is the rank of the X block (and vice versa).
    """
    if isinstance(t, SplitTableau):
        return t.participation_entropy(basis)
    return _rank_dense(t.x if _axis(basis) == Z else t.z)


def sector_counts(t: Tableau) -> tuple[int, int] | None:
    """``(N_X, N_Z)`` for a sector-pure state, ``None`` otherwise."""
    if isinstance(t, SplitTableau):
        return t.sector_counts()
    n = t.n_qubits
    n_z = n - _rank_dense(t.x)
    n_x = n - _rank_dense(t.z)
    if n_x + n_z < n:
        return None
    return n_x, n_z


# ---------------------------------------------------------------------------
# split representation


def _drop_pivot(g: np.ndarray, col: int) -> tuple[np.ndarray, bool]:
    """Basis of {v in span(g) : v[col] = 0}; second value says whether anything changed."""
    rows = np.flatnonzero(g[:, col])
    if rows.size == 0:
        return g, False
    p = rows[0]
    if rows.size > 1:
        g[rows[1:]] ^= g[p]
    return np.delete(g, p, axis=0), True


def _unit(n: int, q: int) -> np.ndarray:
    e = np.zeros((1, n), dtype=np.uint8)
    e[0, q] = 1
    return e


class SplitTableau:
    """CSS stabilizer state: X-type generators ``V`` and Z-type generators ``W``.

    Both are kept as independent row bases of length ``2L`` with
    ``dim V + dim W = 2L`` and ``V W^T = 0``.
    """

    def __init__(self, L: int, V: np.ndarray, W: np.ndarray):
        self.L = int(L)
        n = 2 * self.L
        self.V = np.asarray(V, dtype=np.uint8).reshape(-1, n).copy()
        self.W = np.asarray(W, dtype=np.uint8).reshape(-1, n).copy()

    @property
    def n_qubits(self) -> int:
        return 2 * self.L

    @classmethod
    def product(cls, L: int, x_polarized: np.ndarray) -> "SplitTableau":
        """Product state with qubit q in an X eigenstate iff ``x_polarized[q]``."""
        xp = np.asarray(x_polarized, dtype=bool)
        if xp.size != 2 * L:
            raise ValueError("need one flag per qubit")
        eye = np.eye(2 * L, dtype=np.uint8)
        return cls(L, eye[xp], eye[~xp])

    def copy(self) -> "SplitTableau":
        return SplitTableau(self.L, self.V, self.W)

    def to_tableau(self) -> Tableau:
        n = self.n_qubits
        x = np.vstack([self.V, np.zeros((self.W.shape[0], n), np.uint8)])
        z = np.vstack([np.zeros((self.V.shape[0], n), np.uint8), self.W])
        return Tableau(x, z)

    def measure_x(self, q: int) -> None:
        self.W, hit = _drop_pivot(self.W, q)
        if hit:
            self.V = np.vstack([self.V, _unit(self.n_qubits, q)])

    def measure_z(self, q: int) -> None:
        self.V, hit = _drop_pivot(self.V, q)
        if hit:
            self.W = np.vstack([self.W, _unit(self.n_qubits, q)])

    def cnot_swap_layer(self) -> None:
        """CNOTs b_j -> a_{j-1}, a_j, a_{j+1} followed by the a/b swap, on both groups.

        X bits follow a' = b, b' = a + b_{x-1} + b_x + b_{x+1};
        Z bits follow a' = b + a_{x-1} + a_x + a_{x+1}, b' = a.
        """
        L = self.L
        va, vb = self.V[:, :L], self.V[:, L:]
        nb = va ^ vb ^ np.roll(vb, 1, axis=1) ^ np.roll(vb, -1, axis=1)
        self.V = np.hstack([vb, nb])
        wa, wb = self.W[:, :L], self.W[:, L:]
        na = wb ^ wa ^ np.roll(wa, 1, axis=1) ^ np.roll(wa, -1, axis=1)
        self.W = np.hstack([na, wa])

    def entanglement_entropy(self, region) -> int:
        r = _region(self.n_qubits, region)
        if r.size == 0 or self.V.shape[0] == 0:
            return 0
        comp = np.setdiff1d(np.arange(self.n_qubits), r)
        return _rank_dense(self.V[:, r]) + _rank_dense(self.V[:, comp]) - self.V.shape[0]

    def participation_entropy(self, basis: str) -> int:
        return self.V.shape[0] if _axis(basis) == Z else self.W.shape[0]

    def sector_counts(self) -> tuple[int, int]:
        return self.V.shape[0], self.W.shape[0]

    def check_invariants(self) -> None:
        from .errors import InvariantViolation

        if self.V.shape[0] + self.W.shape[0] != self.n_qubits:
            raise InvariantViolation("group dimensions do not add up to 2L")
        if ((self.V.astype(np.int64) @ self.W.T.astype(np.int64)) & 1).any():
            raise InvariantViolation("X and Z groups do not commute")
