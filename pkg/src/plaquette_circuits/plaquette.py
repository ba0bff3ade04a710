"""Random plaquette parity-check model on an L x T strip, periodic in x.

Sites are ``(x, r)`` with rows ``r = 0 .. T-1``.  A site in rows
``1 .. T-2`` carries one check: ``q = 5`` couples ``(x, r)``, ``(x +- 1, r)``
and ``(x, r +- 1)``; ``q = 1`` is the single-bit check on ``(x, r)``.  The
two top rows carry the boundary (the circuit's final state).  The two bottom
rows encode the initial state: a site there is either a free bit or fixed to
zero, in which case its column is removed.

Read as a cellular automaton, a 5-body check at ``(x, r)`` determines row
``r + 1`` from rows ``r - 1`` and ``r``; a 1-body check instead forces
``s[x, r] = 0`` and leaves ``s[x, r + 1]`` unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvariantViolation
from .f2linalg import (
    BitMatrix,
    BitVector,
    kernel_basis,
    projected_rank,
    restrict_columns,
    row_reduce,
    subgroup_vanishing_on,
)

__all__ = [
    "DisorderGrid",
    "ParityCheckSystem",
    "SymmetryBasis",
    "BoundaryGroupReport",
    "build_parity_checks",
    "symmetry_basis",
    "bulk_subgroup",
    "boundary_quotient_generators",
    "support_statistics",
    "localization_lengths",
    "automaton_evolve",
]


@dataclass(frozen=True)
class DisorderGrid:
    """``q[x, r] in {1, 5}``; only rows ``1 .. T-2`` are read.

    ``initial_free`` optionally fixes the bottom boundary per site: a (2, L)
    boolean array for rows 0 and 1, True where the bit is free.
    """

    q: np.ndarray
    initial_free: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.int8)
        if q.ndim != 2:
            raise ValueError("q must be an L x T array")
        if not np.isin(q, (1, 5)).all():
            raise ValueError("grid entries must be 1 or 5")
        object.__setattr__(self, "q", q)
        q.flags.writeable = False
        if self.initial_free is not None:
            f = np.asarray(self.initial_free, dtype=bool)
            if f.shape != (2, q.shape[0]):
                raise ValueError("initial_free must have shape (2, L)")
            f.flags.writeable = False
            object.__setattr__(self, "initial_free", f)

    @property
    def L(self) -> int:
        return self.q.shape[0]

    @property
    def T(self) -> int:
        return self.q.shape[1]

    @classmethod
    def uniform(cls, L: int, T: int, value: int = 5) -> "DisorderGrid":
        return cls(np.full((L, T), value, dtype=np.int8))

    @classmethod
    def random(cls, L: int, T: int, p: float, seed=None) -> "DisorderGrid":
        """Interior sites are 1-body with probability ``p``."""
        rng = np.random.default_rng(seed)
        q = np.full((L, T), 5, dtype=np.int8)
        if T > 2:
            q[:, 1 : T - 1] = np.where(rng.random((L, T - 2)) < p, 1, 5)
        return cls(q)

    def with_initial(self, initial_free) -> "DisorderGrid":
        return DisorderGrid(self.q, initial_free)

    def measured_fraction(self) -> float:
        inner = self.q[:, 1 : self.T - 1]
        return float((inner == 1).mean()) if inner.size else 0.0

    def to_text(self) -> str:
        lines = [f"{self.L} {self.T}"]
        lines += ["".join(str(int(v)) for v in self.q[:, r]) for r in range(self.T)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DisorderGrid":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise ConfigError("empty disorder grid file")
        try:
            L, T = (int(tok) for tok in lines[0].split())
        except ValueError as exc:
            raise ConfigError(f"bad grid header {lines[0]!r}") from exc
        if len(lines) - 1 != T:
            raise ConfigError(f"grid header says {T} rows, found {len(lines) - 1}")
        q = np.empty((L, T), dtype=np.int8)
        for r, ln in enumerate(lines[1:]):
            if len(ln) != L or set(ln) - {"1", "5"}:
                raise ConfigError(f"bad grid row {r}: {ln!r}")
            q[:, r] = [int(c) for c in ln]
        return cls(q)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "DisorderGrid":
        return cls.from_text(Path(path).read_text())


def _initial_free(grid: DisorderGrid, initial_condition) -> np.ndarray:
    L = grid.L
    if initial_condition is None:
        if grid.initial_free is not None:
            return grid.initial_free
        initial_condition = "fixed-zero"
    if isinstance(initial_condition, str):
        if initial_condition == "fixed-zero":
            return np.array([[False] * L, [True] * L])
        if initial_condition == "free":
            return np.ones((2, L), dtype=bool)
        raise ConfigError(f"unknown initial condition {initial_condition!r}")
    f = np.asarray(initial_condition, dtype=bool)
    if f.shape != (2, L):
        raise ConfigError("initial condition array must have shape (2, L)")
    return f


@dataclass
class ParityCheckSystem:
    """Parity checks ``H`` of one grid.

    ``col_of[x, r]`` is the column of site ``(x, r)`` or -1 if that site was
    fixed to zero; ``site_of`` is the inverse list.  Row ``i`` of ``H`` is the
    check centred on ``check_sites[i]``.
    """

    grid: DisorderGrid
    H: BitMatrix
    col_of: np.ndarray
    site_of: np.ndarray
    check_sites: np.ndarray
    initial_free: np.ndarray
    boundary_columns: tuple[int, ...]
    bottom_columns: tuple[int, ...]
    fixed_sites: tuple[tuple[int, int], ...] = field(default=())

    @property
    def L(self) -> int:
        return self.grid.L

    @property
    def T(self) -> int:
        return self.grid.T

    @property
    def n_bits(self) -> int:
        return self.H.cols

    @property
    def n_checks(self) -> int:
        return self.H.rows

    def column(self, x: int, r: int) -> int:
        return int(self.col_of[x % self.L, r])

    def boundary_cells(self, cells) -> tuple[int, ...]:
        """Boundary columns (both top rows) of the given cells, skipping fixed sites."""
        out = []
        for r in (self.T - 2, self.T - 1):
            for x in cells:
                c = self.col_of[int(x), r]
                if c >= 0:
                    out.append(int(c))
        return tuple(out)

    def cell_of_column(self) -> np.ndarray:
        return self.site_of[:, 0]


def build_parity_checks(grid: DisorderGrid, initial_condition=None) -> ParityCheckSystem:
    """Parity-check matrix of ``grid``.

    ``initial_condition`` is ``"fixed-zero"`` (row 0 fixed, row 1 free; the
    default), ``"free"`` (both bottom rows free), or a (2, L) boolean array of
    free flags.  When omitted, the grid's own ``initial_free`` is used if set.
    Fixed sites are constants, so their columns are dropped from every check.
    """
    L, T = grid.L, grid.T
    if L < 3:
        raise ConfigError("need L >= 3 so the five-site stencil touches distinct sites")
    if T < 3:
        raise ConfigError("need T >= 3")
    free0 = _initial_free(grid, initial_condition)
    keep = np.ones((L, T), dtype=bool)
    keep[:, 0] = free0[0]
    keep[:, 1] = free0[1]
    col_of = np.full((L, T), -1, dtype=np.int64)
    order = np.argwhere(keep.T)[:, ::-1]  # row-major by r then x
    col_of[order[:, 0], order[:, 1]] = np.arange(order.shape[0])
    n = order.shape[0]

    rows = []
    check_sites = []
    for r in range(1, T - 1):
        for x in range(L):
            if grid.q[x, r] == 5:
                sites = ((x, r), ((x - 1) % L, r), ((x + 1) % L, r), (x, r - 1), (x, r + 1))
            else:
                sites = ((x, r),)
            cols = [col_of[sx, sr] for sx, sr in sites]
            rows.append([c for c in cols if c >= 0])
            check_sites.append((x, r))
    dense = np.zeros((len(rows), n), dtype=np.uint8)
    for i, cols in enumerate(rows):
        dense[i, cols] = 1
    top = tuple(int(c) for r in (T - 2, T - 1) for c in col_of[:, r] if c >= 0)
    bottom = tuple(int(c) for r in (0, 1) for c in col_of[:, r] if c >= 0 and r < T - 2)
    fixed = tuple((int(x), int(r)) for x, r in np.argwhere(~keep))
    return ParityCheckSystem(
        grid=grid,
        H=BitMatrix.from_dense(dense),
        col_of=col_of,
        site_of=order,
        check_sites=np.asarray(check_sites, dtype=np.int64).reshape(-1, 2),
        initial_free=free0,
        boundary_columns=top,
        bottom_columns=bottom,
        fixed_sites=fixed,
    )


@dataclass(frozen=True)
class SymmetryBasis:
    generators: BitMatrix

    @property
    def k(self) -> int:
        return self.generators.rows

    def ground_state_count(self) -> int:
        return 2**self.k


def symmetry_basis(sys: ParityCheckSystem) -> SymmetryBasis:
    return SymmetryBasis(kernel_basis(sys.H))


def bulk_subgroup(sys: ParityCheckSystem, basis: SymmetryBasis) -> SymmetryBasis:
    """Generators of G_B, the symmetries vanishing on the top boundary."""
    return SymmetryBasis(subgroup_vanishing_on(basis.generators, sys.boundary_columns))


# ---------------------------------------------------------------------------
# boundary footprints and their locality


def _arc_candidates(dense: np.ndarray, cell: np.ndarray, L: int):
    """Yield ``(length, row)`` for vectors supported on arcs ``[x0, x0 + o]``.

    For each start ``x0`` the columns are ordered by decreasing offset from
    ``x0``; after elimination a row whose leading column has offset ``o`` is
    zero outside the arc, and these rows span every vector supported there.
    """
    for x0 in range(L):
        off = (cell - x0) % L
        order = np.argsort(-off, kind="stable")
        m = BitMatrix.from_dense(dense[:, order])
        reduced, r, piv = row_reduce(m)
        if r == 0:
            continue
        red = reduced.to_dense()[:r]
        back = np.empty_like(order)
        back[order] = np.arange(order.size)
        for i in range(r):
            yield int(off[order[piv[i]]]) + 1, red[i][back]


def localization_lengths(dense: np.ndarray, cell: np.ndarray, L: int) -> np.ndarray:
    """Minimal arc lengths of a basis of the row space of ``dense``.

    ``cell[j]`` is the x coordinate of column ``j`` on a ring of ``L`` cells.
    Greedy insertion of arc-supported vectors in order of arc length yields a
    basis whose sorted lengths are pointwise minimal; each entry is the
    localization length of one generator.
    """
    dense = np.asarray(dense, dtype=np.uint8)
    if dense.shape[0] == 0 or dense.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    cands = sorted(_arc_candidates(dense, np.asarray(cell), L), key=lambda c: c[0])
    target = BitMatrix.from_dense(dense).rank()
    pivots: dict[int, int] = {}
    lengths = []
    for length, row in cands:
        v = int("".join(map(str, row[::-1])), 2)
        while v:
            top = v.bit_length() - 1
            if top in pivots:
                v ^= pivots[top]
            else:
                pivots[top] = v
                lengths.append(length)
                break
        if len(lengths) == target:
            break
    return np.asarray(lengths, dtype=np.int64)


@dataclass(frozen=True)
class BoundaryGroupReport:
    """Generators of G / G_B described by their boundary footprints.

    ``support`` holds the Hamming weights of the reduced footprints and
    ``localization`` the minimal arc length (in cells) of each generator.
    """

    L: int
    dim: int
    footprints: BitMatrix
    support: np.ndarray
    localization: np.ndarray
    boundary_columns: tuple[int, ...]


def boundary_quotient_generators(
    sys: ParityCheckSystem, basis: SymmetryBasis, include_bottom: bool | None = None
) -> BoundaryGroupReport:
    """Footprints of the symmetry generators on the boundary, modulo bulk ones.

    The boundary is the two top rows, plus the free bottom rows when
    ``include_bottom`` is set (default: only when both bottom rows are fully
    free, i.e. a cylinder open at both ends).
    """
    if include_bottom is None:
        include_bottom = bool(sys.initial_free.all())
    cols = tuple(sys.boundary_columns) + (tuple(sys.bottom_columns) if include_bottom else ())
    if not cols or basis.k == 0:
        empty = np.zeros(0, dtype=np.int64)
        return BoundaryGroupReport(sys.L, 0, BitMatrix.zeros(0, len(cols)), empty, empty, cols)
    foot = restrict_columns(basis.generators, cols)
    reduced, r, _ = row_reduce(foot)
    reduced = reduced.take_rows(range(r))
    cell = sys.site_of[np.asarray(cols, dtype=np.int64), 0]
    loc = localization_lengths(reduced.to_dense(), cell, sys.L)
    return BoundaryGroupReport(sys.L, r, reduced, reduced.row_weights(), loc, cols)


def support_statistics(report: BoundaryGroupReport, measure: str = "support") -> dict:
    """Histogram of generator sizes and the fraction with size >= L / 2.

    ``measure`` selects the Hamming weight of the reduced footprint
    (``"support"``) or the minimal arc length in cells (``"localization"``),
    which does not depend on the choice of basis.
    """
    if measure not in ("localization", "support"):
        raise ValueError("measure must be 'localization' or 'support'")
    sizes = report.localization if measure == "localization" else report.support
    values, counts = np.unique(sizes, return_counts=True)
    n = int(sizes.size)
    return {
        "measure": measure,
        "n_generators": n,
        "histogram": {int(v): int(c) for v, c in zip(values, counts)},
        "mean": float(sizes.mean()) if n else 0.0,
        "extensive_fraction": float((sizes >= report.L / 2).mean()) if n else 0.0,
    }


# ---------------------------------------------------------------------------
# cellular automaton


def automaton_evolve(
    initial_row_pair: tuple[BitVector, BitVector], grid: DisorderGrid, strict: bool = True
) -> tuple[BitVector, BitVector]:
    """Run the automaton from rows 0, 1 up to rows T-2, T-1.

    ``s[r+1] = s[r-1] + s[r] + s[r]_{x-1} + s[r]_{x+1}``.  At a 1-body site
    the current bit must already be zero; the bit it would determine is then
    unconstrained and set to its automaton value (the free generator it
    contributes is not added).  With ``strict`` a nonzero measured bit raises
    :class:`InvariantViolation`; otherwise it is zeroed.
    """
    prev = np.asarray(initial_row_pair[0].to_array(), dtype=np.uint8)
    cur = np.asarray(initial_row_pair[1].to_array(), dtype=np.uint8)
    L = grid.L
    if prev.size != L or cur.size != L:
        raise ValueError("row lengths must equal L")
    for r in range(1, grid.T - 1):
        measured = grid.q[:, r] == 1
        bad = measured & (cur == 1)
        if bad.any():
            if strict:
                x = int(np.flatnonzero(bad)[0])
                raise InvariantViolation(f"measured site ({x}, {r}) carries a nonzero bit")
            cur = np.where(measured, 0, cur).astype(np.uint8)
        nxt = prev ^ cur ^ np.roll(cur, 1) ^ np.roll(cur, -1)
        prev, cur = cur, nxt
    return BitVector.from_bits(prev), BitVector.from_bits(cur)


def automaton_evolve_group(initial_generators: np.ndarray, grid: DisorderGrid) -> np.ndarray:
    """Evolve a whole group of row-pair patterns (k x 2L, rows ``[prev | cur]``).

    Measured sites project the group onto ``cur[x] = 0`` and add the unit
    generator on the next row, mirroring the circuit's measurement update.
    """
    L = grid.L
    g = np.asarray(initial_generators, dtype=np.uint8).reshape(-1, 2 * L).copy()
    for r in range(1, grid.T - 1):
        for x in np.flatnonzero(grid.q[:, r] == 1):
            col = L + x
            hit = np.flatnonzero(g[:, col])
            if hit.size:
                if hit.size > 1:
                    g[hit[1:]] ^= g[hit[0]]
                g = np.delete(g, hit[0], axis=0)
        prev, cur = g[:, :L], g[:, L:]
        nxt = prev ^ cur ^ np.roll(cur, 1, axis=1) ^ np.roll(cur, -1, axis=1)
        g = np.hstack([cur, nxt])
        fresh = np.flatnonzero(grid.q[:, r] == 1)
        if fresh.size:
            add = np.zeros((fresh.size, 2 * L), dtype=np.uint8)
            add[np.arange(fresh.size), L + fresh] = 1
            g = np.vstack([g, add])
            g = _independent_rows(g)
    return g


def _independent_rows(g: np.ndarray) -> np.ndarray:
    if g.shape[0] == 0:
        return g
    reduced, r, _ = row_reduce(BitMatrix.from_dense(g))
    return reduced.to_dense()[:r]
