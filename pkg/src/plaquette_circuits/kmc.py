"""Rejection-free continuous-time Glauber dynamics for the random plaquette model.

Spins ``s_i = +-1`` live on an L x L torus (site ``i = x + L*y``).  Every
site carries one check: with probability ``1 - p`` the 5-body product
``h_i = s_i s_{x-1} s_{x+1} s_{y-1} s_{y+1}``, otherwise ``h_i = s_i``.  The
energy is ``E = sum_i (1 - h_i)`` (0 or 2 per check), so flipping site ``i``
costs ``dE_i = 2 sum_{c contains i} h_c``.  Sites flip at the heat-bath rate
``1 / (1 + exp(beta dE_i))``.

Each event picks a site with probability proportional to its rate through a
Fenwick tree and advances the clock by an exponential waiting time.  The
state owns a splitmix64 generator, so runs are reproducible per state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, InvariantViolation

__all__ = [
    "KmcState",
    "QuenchTrace",
    "local_energy_delta",
    "kmc_step",
    "run_quench",
    "collapse_transform",
    "detect_plateaus",
    "stationary_check",
    "exact_boltzmann",
    "fenwick_build",
    "fenwick_update",
    "fenwick_prefix",
    "fenwick_search",
    "REBUILD_EVERY",
]

REBUILD_EVERY = 1_000_000

# kernel status codes
_RUNNING, _DONE, _ABSORBED, _ENERGY_MISMATCH = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# random numbers


@njit(cache=True)
def _splitmix(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _uniform(state):
    """Uniform double in (0, 1]."""
    return (np.float64(_splitmix(state) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# Fenwick tree over rates (1-indexed internally)


@njit(cache=True)
def fenwick_build(values):
    n = values.size
    tree = np.zeros(n + 1, dtype=np.float64)
    for i in range(n):
        tree[i + 1] = values[i]
    for i in range(1, n + 1):
        j = i + (i & -i)
        if j <= n:
            tree[j] += tree[i]
    return tree


@njit(cache=True)
def fenwick_update(tree, i, delta):
    n = tree.size - 1
    i += 1
    while i <= n:
        tree[i] += delta
        i += i & -i


@njit(cache=True)
def fenwick_prefix(tree, i):
    """Sum of the first ``i`` values."""
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & -i
    return s


@njit(cache=True)
def fenwick_search(tree, target):
    """Smallest index ``i`` with prefix(i + 1) >= target (clamped to the last index)."""
    n = tree.size - 1
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    rem = target
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] < rem:
            pos = nxt
            rem -= tree[nxt]
        step //= 2
    if pos >= n:
        pos = n - 1
    return pos


# ---------------------------------------------------------------------------
# model kernels


@njit(cache=True)
def _neighbours(L):
    n = L * L
    nbr = np.empty((n, 4), dtype=np.int64)
    for y in range(L):
        for x in range(L):
            i = x + L * y
            nbr[i, 0] = (x - 1) % L + L * y
            nbr[i, 1] = (x + 1) % L + L * y
            nbr[i, 2] = x + L * ((y - 1) % L)
            nbr[i, 3] = x + L * ((y + 1) % L)
    return nbr


@njit(cache=True)
def _check_values(spins, is5, nbr):
    n = spins.size
    h = np.empty(n, dtype=np.int8)
    for c in range(n):
        v = spins[c]
        if is5[c]:
            for k in range(4):
                v *= spins[nbr[c, k]]
        h[c] = v
    return h


@njit(cache=True)
def _delta(i, h, is5, nbr):
    d = np.int64(h[i])
    for k in range(4):
        c = nbr[i, k]
        if is5[c]:
            d += h[c]
    return 2 * d


@njit(cache=True)
def _rate(beta, dE):
    if dE == 0:
        return 0.5
    x = beta * dE
    if x > 700.0:
        return 0.0
    if x < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


@njit(cache=True)
def _energy(h):
    e = np.int64(0)
    for c in range(h.size):
        e += 1 - h[c]
    return e


@njit(cache=True)
def _all_rates(h, is5, nbr, beta):
    n = h.size
    r = np.empty(n, dtype=np.float64)
    for i in range(n):
        r[i] = _rate(beta, _delta(i, h, is5, nbr))
    return r


@njit(cache=True)
def _set_rate(j, rates, tree, h, is5, nbr, beta):
    """Recompute site j's rate; returns the change in the positive-rate count."""
    new = _rate(beta, _delta(j, h, is5, nbr))
    old = rates[j]
    if new != old:
        fenwick_update(tree, j, new - old)
        rates[j] = new
    return (1 if new > 0.0 else 0) - (1 if old > 0.0 else 0)


@njit(cache=True)
def _flip(i, spins, h, is5, nbr, rates, tree, beta):
    """Flip site i; returns (energy change, change in positive-rate count)."""
    spins[i] = -spins[i]
    dE = np.int64(0)
    dnz = 0
    # checks containing i: its own and each 5-body neighbour
    checks = np.empty(5, dtype=np.int64)
    nc = 0
    checks[nc] = i
    nc += 1
    for k in range(4):
        c = nbr[i, k]
        if is5[c]:
            checks[nc] = c
            nc += 1
    for a in range(nc):
        c = checks[a]
        dE += 2 * h[c]
        h[c] = -h[c]
    for a in range(nc):
        c = checks[a]
        dnz += _set_rate(c, rates, tree, h, is5, nbr, beta)
        if is5[c]:
            for k in range(4):
                dnz += _set_rate(nbr[c, k], rates, tree, h, is5, nbr, beta)
    return dE, dnz


@njit(cache=True)
def _advance(
    spins, is5, nbr, h, rates, tree, beta, rng, scalars, t_end, max_events,
    sample_times, sample_energy, occupancy, rebuild_every,
):
    """Run events until the clock passes ``t_end`` or ``max_events`` happen.

    ``scalars`` = [clock, energy, events, next_sample, n_positive,
    since_rebuild, state_index, recounts] is read and written back in place.
    A nonempty ``occupancy`` accumulates the time spent in each state index.
    """
    clock = scalars[0]
    energy = np.int64(scalars[1])
    events = np.int64(scalars[2])
    k = np.int64(scalars[3])
    npos = np.int64(scalars[4])
    since = np.int64(scalars[5])
    sidx = np.int64(scalars[6])
    recounts = np.int64(scalars[7])
    nsamp = sample_times.size
    track = occupancy.size > 0
    n = spins.size
    status = _RUNNING
    done = 0
    while True:
        if done >= max_events:
            status = _RUNNING
            break
        if npos == 0:
            while k < nsamp and sample_times[k] <= t_end:
                sample_energy[k] = energy
                k += 1
            if track and clock < t_end < np.inf:
                occupancy[sidx] += t_end - clock
            if t_end < np.inf:
                clock = max(clock, t_end)
            status = _ABSORBED
            break
        lam = fenwick_prefix(tree, n)
        if lam <= 0.0:
            tree[:] = fenwick_build(rates)
            lam = fenwick_prefix(tree, n)
        dt = -math.log(_uniform(rng)) / lam
        t_new = clock + dt
        while k < nsamp and sample_times[k] < t_new and sample_times[k] <= t_end:
            sample_energy[k] = energy
            k += 1
        if t_new > t_end:
            if track:
                occupancy[sidx] += t_end - clock
            clock = t_end
            status = _DONE
            break
        if track:
            occupancy[sidx] += dt
        clock = t_new
        target = (1.0 - _uniform(rng)) * lam
        i = fenwick_search(tree, target)
        if rates[i] <= 0.0:
            # rounding landed on a zero-rate slot; take the nearest positive one
            j = i
            while j > 0 and rates[j] <= 0.0:
                j -= 1
            if rates[j] <= 0.0:
                j = i
                while j < n - 1 and rates[j] <= 0.0:
                    j += 1
            i = j
        dE, dnz = _flip(i, spins, h, is5, nbr, rates, tree, beta)
        energy += dE
        npos += dnz
        if track:
            sidx ^= np.int64(1) << np.int64(i)
        events += 1
        done += 1
        since += 1
        if since >= rebuild_every:
            since = 0
            tree[:] = fenwick_build(rates)
            recounts += 1
            if _energy(_check_values(spins, is5, nbr)) != energy:
                status = _ENERGY_MISMATCH
                break
    scalars[0] = clock
    scalars[1] = energy
    scalars[2] = events
    scalars[3] = k
    scalars[4] = npos
    scalars[5] = since
    scalars[6] = sidx
    scalars[7] = recounts
    return status


# ---------------------------------------------------------------------------
# Python-facing state


class KmcState:
    """Spins, disorder, rates and Fenwick index of one quench."""

    def __init__(self, spins: np.ndarray, is5: np.ndarray, beta: float, seed: int = 0):
        spins = np.asarray(spins, dtype=np.int8)
        if spins.ndim != 2 or spins.shape[0] != spins.shape[1]:
            raise ConfigError("spins must be an L x L array")
        L = spins.shape[0]
        if L < 3:
            raise ConfigError("the torus needs L >= 3")
        if not np.isin(spins, (-1, 1)).all():
            raise ConfigError("spins must be +-1")
        if beta < 0 or math.isnan(beta):
            raise ConfigError("beta must be nonnegative")
        self.L = L
        self.beta = float(beta)
        self.spins = spins.reshape(-1).copy()
        self.is5 = np.asarray(is5, dtype=np.bool_).reshape(-1).copy()
        if self.is5.size != self.spins.size:
            raise ConfigError("disorder must match the spin array")
        self.nbr = _neighbours(L)
        self.h = _check_values(self.spins, self.is5, self.nbr)
        self.rates = _all_rates(self.h, self.is5, self.nbr, self.beta)
        self.tree = fenwick_build(self.rates)
        self.rng = np.array([np.uint64(seed % 2**64)], dtype=np.uint64)
        # clock, energy, events, next sample, positive rates, since rebuild, state index, recounts
        self.scalars = np.zeros(8, dtype=np.float64)
        self.scalars[1] = _energy(self.h)
        self.scalars[4] = np.count_nonzero(self.rates > 0)
        self.scalars[6] = self._state_index() if self.N <= 20 else 0

    @classmethod
    def random(cls, L: int, p: float, beta: float, seed: int = 0) -> "KmcState":
        """i.i.d. +-1 spins and 1-body checks with probability ``p``."""
        if not 0.0 <= p <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
        spins = np.where(rng.random((L, L)) < 0.5, 1, -1).astype(np.int8)
        is5 = rng.random((L, L)) >= p
        kseed = int(np.random.SeedSequence([int(seed), 2]).generate_state(1, dtype=np.uint64)[0])
        return cls(spins, is5, beta, kseed)

    @property
    def N(self) -> int:
        return self.spins.size

    @property
    def clock(self) -> float:
        return float(self.scalars[0])

    @property
    def energy(self) -> int:
        return int(self.scalars[1])

    @property
    def events(self) -> int:
        return int(self.scalars[2])

    @property
    def total_rate(self) -> float:
        return float(fenwick_prefix(self.tree, self.N))

    def _state_index(self) -> int:
        bits = (self.spins < 0).astype(np.int64)
        return int((bits << np.arange(self.N, dtype=np.int64)).sum())

    def recount_energy(self) -> int:
        return int(_energy(_check_values(self.spins, self.is5, self.nbr)))

    def check_invariants(self, tol: float = 1e-9) -> None:
        h = _check_values(self.spins, self.is5, self.nbr)
        if not np.array_equal(h, self.h):
            raise InvariantViolation("cached check values are stale")
        if int(_energy(h)) != self.energy:
            raise InvariantViolation("incremental energy differs from recount")
        if not np.array_equal(_all_rates(h, self.is5, self.nbr, self.beta), self.rates):
            raise InvariantViolation("cached rates are stale")
        prefix = np.array([fenwick_prefix(self.tree, i) for i in range(1, self.N + 1)])
        if np.abs(prefix - np.cumsum(self.rates)).max() > tol:
            raise InvariantViolation("Fenwick prefix sums drifted")

    def rebuild(self) -> None:
        self.tree = fenwick_build(self.rates)

    def advance(self, t_end=math.inf, max_events=2**62, sample_times=None, occupancy=None,
                rebuild_every=REBUILD_EVERY) -> tuple[int, np.ndarray]:
        """Run the event loop; returns (status, sampled energies)."""
        st = np.asarray(sample_times if sample_times is not None else [], dtype=np.float64)
        se = np.full(st.size, -1, dtype=np.int64)
        occ = occupancy if occupancy is not None else np.zeros(0, dtype=np.float64)
        self.scalars[3] = 0
        status = _advance(
            self.spins, self.is5, self.nbr, self.h, self.rates, self.tree, self.beta, self.rng,
            self.scalars, float(t_end), int(max_events), st, se, occ, int(rebuild_every),
        )
        if status == _ENERGY_MISMATCH:
            raise InvariantViolation("incremental energy differs from recount")
        return status, se


def local_energy_delta(state: KmcState, site: int) -> int:
    if not 0 <= site < state.N:
        raise IndexError(site)
    return int(_delta(site, state.h, state.is5, state.nbr))


def kmc_step(state: KmcState) -> tuple[int, float] | None:
    """One event: returns (flipped site, waiting time), or None when no site can flip."""
    before = state.spins.copy()
    t0 = state.clock
    status, _ = state.advance(max_events=1)
    if status == _ABSORBED:
        return None
    site = int(np.flatnonzero(before != state.spins)[0])
    return site, state.clock - t0


# ---------------------------------------------------------------------------
# quenches and analysis


@dataclass
class QuenchTrace:
    t: np.ndarray
    epsilon: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["t,epsilon"]
        lines += [f"{t:.10g},{e:.10g}" for t, e in zip(self.t, self.epsilon)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "QuenchTrace":
        rows = [ln.split(",") for ln in text.strip().splitlines()]
        if not rows or [c.strip() for c in rows[0]] != ["t", "epsilon"]:
            raise ConfigError("trace CSV must have header 't,epsilon'")
        data = np.array(rows[1:], dtype=float).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1], dict(metadata or {}))


def sample_grid(t_max: float, n_samples: int = 50, t_min: float = 0.1) -> np.ndarray:
    if not t_max > t_min > 0:
        raise ConfigError("need 0 < t_min < t_max")
    return np.logspace(math.log10(t_min), math.log10(t_max), int(n_samples))


def run_quench(L: int, p: float, beta: float, t_max: float, seed: int = 0, n_samples: int = 50,
               t_min: float = 0.1) -> QuenchTrace:
    """Quench from i.i.d. spins; energy density at log-spaced clock times.

    Each sample is the energy just before its sample time.
    """
    state = KmcState.random(L, p, beta, seed)
    times = sample_grid(t_max, n_samples, t_min)
    _, se = state.advance(t_end=float(t_max), sample_times=times)
    meta = {"L": L, "p": p, "beta": beta, "seed": seed, "events": state.events,
            "final_energy": state.energy, "energy_recount": state.recount_energy()}
    if meta["energy_recount"] != state.energy:
        raise InvariantViolation("incremental energy differs from recount")
    return QuenchTrace(times, se / state.N, meta)


def _interp_on(logx: np.ndarray, y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    order = np.argsort(logx)
    return np.interp(grid, logx[order], y[order])


def _pairwise_rms(curves: list[np.ndarray]) -> float:
    d = []
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            d.append(math.sqrt(float(np.mean((curves[i] - curves[j]) ** 2))))
    return float(np.mean(d))


def _score(logxs, ys, n_grid):
    lo = max(float(x.min()) for x in logxs)
    hi = min(float(x.max()) for x in logxs)
    if not hi > lo:
        raise ConfigError("traces have disjoint abscissa windows")
    grid = np.linspace(lo, hi, n_grid)
    curves = [_interp_on(x, y, grid) for x, y in zip(logxs, ys)]
    return _pairwise_rms(curves), grid, curves


def collapse_transform(traces: list[QuenchTrace], betas=None, n_grid: int = 200,
                       t_min: float = 1.0) -> dict:
    """Rescale traces to ``t^{1/beta}`` and score how well they overlap.

    The score is the mean pairwise RMS distance of the curves, interpolated
    in log abscissa over the common window.  ``raw_score`` repeats this with
    the unscaled clock time.  Samples before ``t_min`` are left out of both:
    rates never exceed 1, so earlier times belong to the downhill transient,
    which is not activated and does not depend on beta.  ``t_min=0`` keeps
    every sample.
    """
    if len(traces) < 2:
        raise ConfigError("collapse needs at least two traces")
    betas = [tr.metadata["beta"] for tr in traces] if betas is None else list(betas)
    if len(betas) != len(traces):
        raise ConfigError("one beta per trace")
    keys = {(tr.metadata.get("L"), tr.metadata.get("p")) for tr in traces}
    if len(keys) > 1:
        raise ConfigError("traces must share L and p")
    keep = [np.asarray(tr.t, dtype=float) >= t_min for tr in traces]
    if any(k.sum() < 2 for k in keep):
        raise ConfigError("fewer than two samples after t_min")
    ys = [np.asarray(tr.epsilon, dtype=float)[k] for tr, k in zip(traces, keep)]
    log_t = [np.log10(np.asarray(tr.t, dtype=float)[k]) for tr, k in zip(traces, keep)]
    scaled = [lt / float(b) for lt, b in zip(log_t, betas)]
    score, grid, curves = _score(scaled, ys, n_grid)
    raw, _, _ = _score(log_t, ys, n_grid)
    return {
        "score": score,
        "raw_score": raw,
        "log10_x": grid,
        "curves": curves,
        "betas": betas,
        "improvement": raw / score if score > 0 else math.inf,
        "t_min": t_min,
    }


def detect_plateaus(t, epsilon, rel_tol: float = 0.1, decade: float = 1.0, min_level: float = 1e-12) -> list[dict]:
    """Find stretches where the energy changes by less than ``rel_tol`` per decade.

    A sample at ``t`` is flat when ``|eps(t * 10**decade) - eps(t)| <
    rel_tol * eps(t)``, with ``eps`` interpolated in ``log t``.  Consecutive
    flat samples form one plateau spanning ``[t_first, 10**decade * t_last]``.
    Plateaus whose levels differ by less than ``rel_tol`` are merged, and
    plateaus at zero energy (full relaxation) are dropped.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(epsilon, dtype=float)
    lt = np.log10(t)
    inside = lt + decade <= lt[-1] + 1e-12
    ahead = np.interp(lt + decade, lt, e)
    flat = inside & (np.abs(ahead - e) < rel_tol * np.maximum(e, min_level)) & (e > min_level)
    runs = []
    i = 0
    while i < t.size:
        if flat[i]:
            j = i
            while j + 1 < t.size and flat[j + 1]:
                j += 1
            sel = (lt >= lt[i]) & (lt <= lt[j] + decade)
            runs.append({"t_start": float(t[i]), "t_end": float(10 ** (lt[j] + decade)),
                         "level": float(np.mean(e[sel]))})
            i = j + 1
        else:
            i += 1
    merged: list[dict] = []
    for r in runs:
        if merged and abs(r["level"] - merged[-1]["level"]) < rel_tol * merged[-1]["level"]:
            merged[-1]["t_end"] = r["t_end"]
        else:
            merged.append(r)
    return merged


def exact_boltzmann(L: int, is5: np.ndarray, beta: float) -> np.ndarray:
    """Boltzmann weights over all 2^(L*L) states, indexed by the bits of flipped-down spins."""
    n = L * L
    if n > 20:
        raise ConfigError("exact enumeration limited to 20 spins")
    nbr = _neighbours(L)
    is5 = np.asarray(is5, dtype=np.bool_).reshape(-1)
    idx = np.arange(2**n, dtype=np.int64)
    energies = np.empty(idx.size, dtype=np.int64)
    for s in range(idx.size):
        spins = np.where((s >> np.arange(n)) & 1, -1, 1).astype(np.int8)
        energies[s] = _energy(_check_values(spins, is5, nbr))
    if math.isinf(beta):
        w = (energies == energies.min()).astype(float)
    else:
        w = np.exp(-beta * (energies - energies.min()))
    return w / w.sum()


def stationary_check(L: int = 3, beta: float = 1.0, n_events: int = 10**7, p: float = 0.0,
                     seed: int = 0, spins=None) -> dict:
    """Total-variation distance of time-weighted occupation to the Boltzmann law."""
    if L * L > 20:
        raise ConfigError("stationary check needs at most 20 spins")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    is5 = rng.random((L, L)) >= p
    if spins is None:
        spins = np.where(rng.random((L, L)) < 0.5, 1, -1).astype(np.int8)
    state = KmcState(spins, is5, beta, seed=int(seed) + 17)
    occ = np.zeros(2 ** (L * L), dtype=np.float64)
    status, _ = state.advance(max_events=int(n_events), occupancy=occ)
    if status == _ABSORBED:
        # no site can flip, so the chain stays in its final state forever
        occ[:] = 0.0
        occ[state._state_index()] = 1.0
    emp = occ / occ.sum()
    exact = exact_boltzmann(L, is5, beta)
    tv = 0.5 * float(np.abs(emp - exact).sum())
    return {"tv": tv, "events": state.events, "empirical": emp, "exact": exact,
            "energy": state.energy, "energy_recount": state.recount_energy(),
            "absorbed": status == _ABSORBED}
