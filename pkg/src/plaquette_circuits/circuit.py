"""The measurement circuit on a periodic chain of L two-qubit cells.

One step: each cell is measured with probability p (X on ``a``, then Z on
``b``); every ``b_j`` then controls CNOTs onto ``a_{j-1}, a_j, a_{j+1}``;
finally ``a`` and ``b`` swap in every cell.

A measurement in cell ``x`` during step ``s`` (0-based) becomes the 1-body
check at grid site ``(x, s + 1)`` of the classical model with ``T = t_max + 2``
rows.  Rows 0 and 1 of that grid are the X bits of the initial ``a`` and
``b`` qubits: free for X-polarized qubits, fixed to zero for Z-polarized ones.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InvariantViolation
from .plaquette import DisorderGrid
from .stabilizer import (
    SplitTableau,
    Tableau,
    apply_cnot,
    apply_cz,
    apply_swap,
    entanglement_entropy,
    half_cut,
    measure_pauli,
    participation_entropy,
)

__all__ = [
    "CircuitConfig",
    "TrajectoryRecord",
    "MeasurementMask",
    "initial_polarization",
    "initial_state",
    "step",
    "run",
    "export_disorder",
    "final_state",
    "record_times",
    "fit_log_slope",
    "trajectory_seed",
]

INITIAL_KINDS = ("uniform-X", "uniform-Z", "staggered", "random")
PERTURBATIONS = ("none", "flipped-cnot", "cz-substitution")
CSV_COLUMNS = ("t", "S_half", "S_quarter", "N_X", "N_Z", "PE_Z", "PE_X")

_INIT_ALIASES = {
    "x": "uniform-X",
    "uniform-x": "uniform-X",
    "z": "uniform-Z",
    "uniform-z": "uniform-Z",
    "staggered": "staggered",
}


def _parse_initial(spec: str) -> tuple[str, float]:
    s = str(spec).strip()
    low = s.lower()
    if low in _INIT_ALIASES:
        return _INIT_ALIASES[low], 0.0
    if low.startswith("random"):
        _, _, val = low.partition(":")
        val = val or low.partition("(")[2].rstrip(")")
        try:
            return "random", float(val)
        except ValueError as exc:
            raise ConfigError(f"initial_state {spec!r}: expected random:<p_X>") from exc
    raise ConfigError(f"unknown initial_state {spec!r}")


def _parse_perturbation(spec: str) -> tuple[str, float]:
    s = str(spec).strip().lower()
    if s in ("", "none"):
        return "none", 0.0
    name, _, val = s.partition(":")
    if name in ("flipped-cnot", "flip"):
        name = "flipped-cnot"
    elif name in ("cz-substitution", "cz"):
        name = "cz-substitution"
    else:
        raise ConfigError(f"unknown perturbation {spec!r}")
    try:
        return name, float(val)
    except ValueError as exc:
        raise ConfigError(f"perturbation {spec!r}: expected {name}:<fraction>") from exc


@dataclass(frozen=True)
class CircuitConfig:
    """Circuit parameters.

    ``initial_state`` is one of ``x``/``uniform-X``, ``z``/``uniform-Z``,
    ``staggered`` (Z on ``a``, X on ``b``) or ``random:<p_X>``.
    ``perturbation`` is ``none``, ``flipped-cnot:<p_CN>`` or
    ``cz-substitution:<fraction>``.  ``record`` is ``all`` (every step) or
    ``log:<n>`` (about n log-spaced steps).
    """

    L: int
    t_max: int
    p: float
    initial_state: str = "uniform-X"
    perturbation: str = "none"
    seed: int = 0
    record: str = "all"

    def __post_init__(self):
        if int(self.L) < 2:
            raise ConfigError("L must be at least 2")
        if int(self.t_max) < 0:
            raise ConfigError("t_max must be nonnegative")
        if not 0.0 <= float(self.p) <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        kind, px = _parse_initial(self.initial_state)
        if not 0.0 <= px <= 1.0:
            raise ConfigError("p_X must lie in [0, 1]")
        pert, frac = _parse_perturbation(self.perturbation)
        if not 0.0 <= frac <= 1.0:
            raise ConfigError("perturbation fraction must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        record_times(int(self.t_max), self.record)
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "t_max", int(self.t_max))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def init_kind(self) -> str:
        return _parse_initial(self.initial_state)[0]

    @property
    def p_x(self) -> float:
        return _parse_initial(self.initial_state)[1]

    @property
    def perturbation_kind(self) -> tuple[str, float]:
        return _parse_perturbation(self.perturbation)

    @property
    def sector_pure(self) -> bool:
        return self.perturbation_kind[0] != "cz-substitution"

    def with_seed(self, seed: int) -> "CircuitConfig":
        d = asdict(self)
        d["seed"] = int(seed)
        return CircuitConfig(**d)


def trajectory_seed(master_seed: int, index: int) -> int:
    """64-bit seed of ensemble member ``index``."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def record_times(t_max: int, record: str = "all") -> np.ndarray:
    """Steps after which observables are recorded (always includes 0 and t_max)."""
    if record == "all":
        return np.arange(t_max + 1)
    name, _, val = str(record).partition(":")
    if name != "log":
        raise ConfigError(f"record must be 'all' or 'log:<n>', got {record!r}")
    try:
        n = int(val)
    except ValueError as exc:
        raise ConfigError(f"record {record!r}: expected log:<n>") from exc
    if n < 2:
        raise ConfigError("log record needs at least 2 points")
    if t_max == 0:
        return np.array([0])
    pts = np.unique(np.round(np.logspace(0, np.log10(t_max), n)).astype(np.int64))
    return np.concatenate([[0], pts])


@dataclass
class MeasurementMask:
    """``fired[s, x]`` is True if cell ``x`` was measured during step ``s``.

    ``initial_x[q]`` records which qubits started X-polarized; the classical
    model needs it to decide which bottom bits are free.
    """

    L: int
    t_max: int
    fired: np.ndarray
    initial_x: np.ndarray

    def __post_init__(self):
        self.fired = np.asarray(self.fired, dtype=bool).reshape(self.t_max, self.L)
        self.initial_x = np.asarray(self.initial_x, dtype=bool).reshape(2 * self.L)

    def pairs(self) -> set[tuple[int, int]]:
        return {(int(x), int(t)) for t, x in np.argwhere(self.fired)}

    @classmethod
    def from_pairs(cls, L: int, t_max: int, pairs, initial_x) -> "MeasurementMask":
        fired = np.zeros((t_max, L), dtype=bool)
        for x, t in pairs:
            if not (0 <= x < L and 0 <= t < t_max):
                raise ValueError(f"measurement ({x}, {t}) outside the L x t_max window")
            fired[t, x] = True
        return cls(L, t_max, fired, initial_x)


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    S_half: np.ndarray
    S_quarter: np.ndarray
    N_X: np.ndarray
    N_Z: np.ndarray
    PE_Z: np.ndarray
    PE_X: np.ndarray
    metadata: dict = field(default_factory=dict)

    def columns(self) -> dict[str, np.ndarray]:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def pe_bound_violations(self) -> int:
        """Recorded steps where S_half or S_quarter exceeds min(N_X, N_Z)."""
        bound = np.minimum(self.N_X, self.N_Z)
        pure = (self.N_X + self.N_Z) == 2 * self.metadata.get("L", 0)
        bad = ((self.S_half > bound) | (self.S_quarter > bound)) & pure
        return int(bad.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        cols = self.columns()
        for i in range(self.t.size):
            w.writerow([int(cols[c][i]) for c in CSV_COLUMNS])
        return buf.getvalue()


def initial_polarization(cfg: CircuitConfig, rng: np.random.Generator) -> np.ndarray:
    """Boolean per qubit (a_0..a_{L-1}, b_0..b_{L-1}): True if X-polarized."""
    L = cfg.L
    kind = cfg.init_kind
    if kind == "uniform-X":
        return np.ones(2 * L, dtype=bool)
    if kind == "uniform-Z":
        return np.zeros(2 * L, dtype=bool)
    if kind == "staggered":
        return np.concatenate([np.zeros(L, dtype=bool), np.ones(L, dtype=bool)])
    return rng.random(2 * L) < cfg.p_x


def initial_state(cfg: CircuitConfig, x_polarized: np.ndarray, split: bool):
    st = SplitTableau.product(cfg.L, x_polarized)
    return st if split else st.to_tableau()


def _gate_layer(t: Tableau, L: int, flips: np.ndarray, cz: np.ndarray) -> None:
    """CNOTs for j = 0..L-1 and targets j-1, j, j+1 in that order, then swaps."""
    for j in range(L):
        b = L + j
        for k, target in enumerate(((j - 1) % L, j, (j + 1) % L)):
            if cz[j, k]:
                apply_cz(t, b, target)
            elif flips[j, k]:
                apply_cnot(t, target, b)
            else:
                apply_cnot(t, b, target)
    for j in range(L):
        apply_swap(t, j, L + j)


def step(state, cfg: CircuitConfig, step_index: int, rng: np.random.Generator):
    """Advance ``state`` (a Tableau or SplitTableau) by one step in place.

    Returns ``(state, fired)`` with ``fired`` the boolean per-cell mask.
    Random draws per step: one uniform per cell for measurements, then, if a
    perturbation is configured, one uniform per CNOT.
    """
    L = cfg.L
    if state.n_qubits != 2 * L:
        raise ValueError("state does not have 2L qubits")
    fired = rng.random(L) < cfg.p
    pert, frac = cfg.perturbation_kind
    if pert != "none":
        draws = rng.random((L, 3)) < frac
    if isinstance(state, SplitTableau):
        if pert != "none":
            raise ValueError("the split representation only handles the unperturbed circuit")
        for x in np.flatnonzero(fired):
            state.measure_x(int(x))
            state.measure_z(L + int(x))
        state.cnot_swap_layer()
        return state, fired
    for x in np.flatnonzero(fired):
        measure_pauli(state, "X", int(x))
        measure_pauli(state, "Z", L + int(x))
    none = np.zeros((L, 3), dtype=bool)
    if pert == "flipped-cnot":
        _gate_layer(state, L, draws, none)
    elif pert == "cz-substitution":
        _gate_layer(state, L, none, draws)
    else:
        _gate_layer(state, L, none, none)
    return state, fired


def _observe(state, L: int) -> tuple[int, ...]:
    n = 2 * L
    pe_z = participation_entropy(state, "Z")
    pe_x = participation_entropy(state, "X")
    # dimensions of the X-only and Z-only subgroups
    n_x, n_z = n - pe_x, n - pe_z
    s_half = entanglement_entropy(state, half_cut(L))
    s_quarter = entanglement_entropy(state, half_cut(L, L // 4))
    return s_half, s_quarter, n_x, n_z, pe_z, pe_x


def run(cfg: CircuitConfig, split: bool | None = None, check: bool = False):
    """Simulate one trajectory; returns ``(TrajectoryRecord, MeasurementMask)``.

    ``split`` selects the CSS fast path (default: whenever there is no
    perturbation).  With ``check`` the state invariants are verified after
    every step.
    """
    L = cfg.L
    pert = cfg.perturbation_kind[0]
    if split is None:
        split = pert == "none"
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, circ_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    xpol = initial_polarization(cfg, init_rng)
    state = initial_state(cfg, xpol, split)
    times = record_times(cfg.t_max, cfg.record)
    rec = np.zeros((times.size, 6), dtype=np.int64)
    fired = np.zeros((cfg.t_max, L), dtype=bool)
    k = 0
    if times[0] == 0:
        rec[0] = _observe(state, L)
        k = 1
    for s in range(cfg.t_max):
        state, fired[s] = step(state, cfg, s, circ_rng)
        if check:
            state.check_invariants()
        if k < times.size and times[k] == s + 1:
            rec[k] = _observe(state, L)
            k += 1
    meta = {**asdict(cfg), "split": bool(split)}
    record = TrajectoryRecord(times.copy(), *(rec[:, i] for i in range(6)), metadata=meta)
    if check and cfg.sector_pure and record.pe_bound_violations():
        raise InvariantViolation("entanglement exceeds min(N_X, N_Z)")
    return record, MeasurementMask(L, cfg.t_max, fired, xpol)


def final_state(cfg: CircuitConfig, split: bool | None = None):
    """Run ``cfg`` and return the final state together with the mask."""
    L = cfg.L
    if split is None:
        split = cfg.perturbation_kind[0] == "none"
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, circ_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    xpol = initial_polarization(cfg, init_rng)
    state = initial_state(cfg, xpol, split)
    fired = np.zeros((cfg.t_max, L), dtype=bool)
    for s in range(cfg.t_max):
        state, fired[s] = step(state, cfg, s, circ_rng)
    return state, MeasurementMask(L, cfg.t_max, fired, xpol)


def export_disorder(mask: MeasurementMask, cfg: CircuitConfig | None = None) -> DisorderGrid:
    """Classical grid for a measurement record; the initial bases go along."""
    L, t_max = mask.L, mask.t_max
    if cfg is not None and (cfg.L != L or cfg.t_max != t_max):
        raise ConfigError("mask does not match config")
    q = np.full((L, t_max + 2), 5, dtype=np.int8)
    q[:, 1 : t_max + 1][mask.fired.T] = 1
    free = mask.initial_x.reshape(2, L)
    return DisorderGrid(q, free)


def fit_log_slope(t: np.ndarray, s: np.ndarray, t_min: float, t_max: float) -> tuple[float, float, float]:
    """Least-squares fit ``s = a log10 t + c`` on ``t_min <= t <= t_max``.

    Returns ``(a, c, stderr_a)``.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    sel = (t >= t_min) & (t <= t_max) & (t > 0)
    if sel.sum() < 3:
        raise ValueError("need at least 3 points in the fit window")
    x = np.log10(t[sel])
    y = s[sel]
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(int(sel.sum()) - 2, 1)
    resid = y - A @ coef
    var = float(resid @ resid) / dof
    cov = var * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(coef[1]), float(np.sqrt(cov[0, 0]))
