"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line (collected again in the terminal
summary).  The slow ones take minutes each; deselect them with
``-m "not slow"`` during development.
"""

import math
import time

import numpy as np
import pytest

from plaquette_circuits.circuit import CircuitConfig, export_disorder, final_state, fit_log_slope, run, trajectory_seed
from plaquette_circuits.kmc import collapse_transform, detect_plateaus, run_quench, stationary_check
from plaquette_circuits.kw import finite_beta_renyi2, kw_identity_check
from plaquette_circuits.plaquette import (
    DisorderGrid,
    boundary_quotient_generators,
    build_parity_checks,
    support_statistics,
    symmetry_basis,
)
from plaquette_circuits.replica import half_boundary, renyi2_via_groups, renyi2_via_replicas
from plaquette_circuits.stabilizer import entanglement_entropy, half_cut

from conftest import ACCEPTANCE_LINES

# PE-bound violations seen by the circuit criteria, keyed by criterion
_PE_VIOLATIONS: dict[int, int] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# --- 1 and 2: quantum / classical exactness -------------------------------------------


def _instances(n=120):
    rng = np.random.default_rng(20240)
    inits = ("x", "staggered", "z", "random:0.5")
    for i in range(n):
        L = int(rng.integers(3, 11))
        t_max = int(rng.integers(1, 9))  # T = t_max + 2 <= 10
        p = (0.1, 0.3, 0.5)[i % 3]
        yield CircuitConfig(L, t_max, p, inits[i % 4], seed=int(rng.integers(2**63)))


@pytest.fixture(scope="module")
def exactness():
    rows = []
    t0 = time.perf_counter()
    for cfg in _instances():
        state, mask = final_state(cfg)
        sys = build_parity_checks(export_disorder(mask, cfg))
        A = half_boundary(sys)
        rows.append((entanglement_entropy(state, half_cut(cfg.L)), renyi2_via_replicas(sys, A),
                     renyi2_via_groups(sys, A)))
    return np.array(rows), time.perf_counter() - t0


def test_criterion_1_quantum_classical_exactness(exactness):
    rows, secs = exactness
    agree = int((rows[:, 0] == rows[:, 1]).sum())
    ok = agree == len(rows) >= 100 and secs < 60
    report(1, ok, f"{agree}/{len(rows)} instances S_tableau == S_replica exactly, {secs:.1f} s")


def test_criterion_2_group_formula(exactness):
    rows, _ = exactness
    agree = int((rows[:, 1] == rows[:, 2]).sum())
    report(2, agree == len(rows) >= 100, f"{agree}/{len(rows)} instances S_groups == S_replica exactly")


# --- 3: KW identity ------------------------------------------------------------------


def test_criterion_3_kw_identity():
    rng = np.random.default_rng(3)
    shapes = [(3, 4, "fixed-zero"), (4, 4, "fixed-zero"), (3, 5, "fixed-zero"), (4, 5, "fixed-zero"),
              (3, 4, "free")]
    worst, count = 0.0, 0
    t0 = time.perf_counter()
    for i in range(50):
        L, T, init = shapes[i % len(shapes)]
        sys = build_parity_checks(DisorderGrid.random(L, T, float(rng.uniform(0, 0.6)), int(rng.integers(2**32))), init)
        assert sys.n_bits <= 16
        for beta in (0.3, 1.0, 3.0):
            worst = max(worst, kw_identity_check(sys, beta))
            count += 1
    secs = time.perf_counter() - t0
    report(3, worst < 1e-10 and secs < 60, f"max residual {worst:.2e} over {count} (system, beta) pairs, {secs:.1f} s")


# --- 4: logarithmic growth -------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_log_slope():
    slopes, sems, fit_se, secs = {}, {}, {}, {}
    violations = 0
    for p in (0.05, 0.1, 0.15):
        t0 = time.perf_counter()
        curves, per_traj = [], []
        for i in range(50):
            rec, _ = run(CircuitConfig(100, 10_000, p, "x", seed=trajectory_seed(4000 + int(p * 100), i),
                                       record="log:120"))
            violations += rec.pe_bound_violations()
            curves.append(rec.S_half)
            per_traj.append(fit_log_slope(rec.t, rec.S_half, 1e2, 1e4)[0])
        t = rec.t
        a, _, se = fit_log_slope(t, np.mean(curves, axis=0), 1e2, 1e4)
        slopes[p], fit_se[p] = a, se
        sems[p] = float(np.std(per_traj, ddof=1) / math.sqrt(len(per_traj)))
        secs[p] = time.perf_counter() - t0
    _PE_VIOLATIONS[4] = violations
    in_band = all(abs(a - 3.7) <= 0.5 for a in slopes.values())
    ps = sorted(slopes)
    consistent = all(
        abs(slopes[a] - slopes[b]) <= 2 * math.hypot(sems[a], sems[b]) for i, a in enumerate(ps) for b in ps[i + 1:]
    )
    fast = all(s <= 600 for s in secs.values())
    detail = ", ".join(f"p={p}: {slopes[p]:.2f} +- {sems[p]:.2f} (regression {fit_se[p]:.2f}, {secs[p]:.0f} s)"
                       for p in ps)
    report(4, in_band and consistent and fast, f"slopes {detail}; pairwise within 2 sigma: {consistent}")


# --- 5: volume law -------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_volume_law():
    t0 = time.perf_counter()
    Ls = (100, 150, 200, 250)
    means = []
    violations = 0
    for L in Ls:
        vals = []
        for i in range(10):
            rec, _ = run(CircuitConfig(L, L, 0.1, "staggered", seed=trajectory_seed(5000 + L, i)))
            violations += rec.pe_bound_violations()
            vals.append(rec.S_quarter[rec.t >= L // 2].mean())
        means.append(float(np.mean(vals)))
    _PE_VIOLATIONS[5] = violations
    slope, offset = np.polyfit(Ls, means, 1)
    secs = time.perf_counter() - t0
    report(5, abs(slope - 0.23) <= 0.05 and secs <= 1200,
           f"S_L/4 = {slope:.3f} L + {offset:.2f} (steady means {', '.join(f'{m:.1f}' for m in means)}), {secs:.0f} s")


# --- 6: PE bound ---------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_pe_bound():
    if set(_PE_VIOLATIONS) != {4, 5}:
        pytest.fail("criterion 6 needs the trajectories of criteria 4 and 5 (run the whole module)")
    total = sum(_PE_VIOLATIONS.values())
    report(6, total == 0, f"{total} violations of S <= min(N_X, N_Z) over all recorded steps of criteria 4-5")


# --- 7: structural transition --------------------------------------------------------


def test_criterion_7_support_transition():
    t0 = time.perf_counter()
    frac = {}
    for p in (0.1, 0.4):
        vals = []
        for i in range(20):
            sys = build_parity_checks(DisorderGrid.random(40, 80, p, trajectory_seed(7000, i)), "free")
            rep = boundary_quotient_generators(sys, symmetry_basis(sys))
            vals.append(support_statistics(rep)["extensive_fraction"])
        frac[p] = float(np.mean(vals))
    ok = frac[0.1] > 0.5 and frac[0.4] < 0.05
    report(7, ok, f"extensive-support fraction {frac[0.1]:.3f} at p=0.1, {frac[0.4]:.3f} at p=0.4 "
                  f"({time.perf_counter() - t0:.0f} s)")


# --- 8: finite temperature -----------------------------------------------------------


def test_criterion_8_finite_beta():
    ordered, converged, worst = 0, 0, 0.0
    n = 10
    for i in range(n):
        sys = build_parity_checks(DisorderGrid.random(8, 6, 0.1, trajectory_seed(8000, i)))
        A = half_boundary(sys)
        hot = finite_beta_renyi2(sys, A, 0.5)
        cold = finite_beta_renyi2(sys, A, 2.0)
        exact = renyi2_via_replicas(sys, A) * math.log(2)
        err = abs(finite_beta_renyi2(sys, A, 30.0) - exact)
        worst = max(worst, err)
        ordered += cold > hot
        converged += err < 1e-6
    report(8, ordered == n and converged == n,
           f"S(beta=2) > S(beta=0.5) on {ordered}/{n}; beta=30 within 1e-6 nats on {converged}/{n} "
           f"(max deviation {worst:.1e})")


# --- 9: glassy plateaus --------------------------------------------------------------


@pytest.mark.slow
def test_criterion_9_plateaus_and_collapse():
    t0 = time.perf_counter()
    means = []
    for beta in (4.0, 6.0):
        traces = [run_quench(128, 0.0, beta, 1e6, seed=trajectory_seed(9000 + int(beta), i), n_samples=50)
                  for i in range(6)]
        tr = traces[0]
        tr.epsilon = np.mean([x.epsilon for x in traces], axis=0)
        means.append(tr)
    per_beta = {m.metadata["beta"]: detect_plateaus(m.t, m.epsilon) for m in means}
    levels = [pl["level"] for pls in per_beta.values() for pl in pls]
    distinct = []
    for lv in sorted(levels):
        if not distinct or abs(lv - distinct[-1]) >= 0.1 * distinct[-1]:
            distinct.append(lv)
    col = collapse_transform(means)
    full = collapse_transform(means, t_min=0.0)
    counts = ", ".join(f"beta={b:g}: {len(v)}" for b, v in per_beta.items())
    ok = len(distinct) >= 2 and col["improvement"] >= 3
    report(9, ok, f"{len(distinct)} distinct plateau levels ({counts}; levels "
                  f"{', '.join(f'{x:.3f}' for x in distinct)}); collapse improvement {col['improvement']:.2f}x "
                  f"for t >= 1 ({full['improvement']:.2f}x over the full window), {time.perf_counter() - t0:.0f} s")


# --- 10: equilibrium -----------------------------------------------------------------


@pytest.mark.slow
def test_criterion_10_stationary_distribution():
    parts, ok = [], True
    for beta in (0.0, 0.5, 1.0):
        res = stationary_check(3, beta, n_events=10**7, seed=10)
        exact_energy = res["energy"] == res["energy_recount"]
        ok &= res["tv"] < 0.01 and exact_energy and res["events"] == 10**7
        parts.append(f"beta={beta}: TV {res['tv']:.4f}, energy recount {'exact' if exact_energy else 'MISMATCH'}")
    report(10, ok, "; ".join(parts))
