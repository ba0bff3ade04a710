import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaquette_circuits.circuit import (
    CSV_COLUMNS,
    CircuitConfig,
    MeasurementMask,
    TrajectoryRecord,
    export_disorder,
    final_state,
    fit_log_slope,
    initial_state,
    record_times,
    run,
    step,
    trajectory_seed,
)
from plaquette_circuits.errors import ConfigError, InvariantViolation
from plaquette_circuits.f2linalg import BitVector
from plaquette_circuits.plaquette import automaton_evolve, DisorderGrid
from plaquette_circuits.stabilizer import Tableau, entanglement_entropy, half_cut


def test_config_validation():
    with pytest.raises(ConfigError):
        CircuitConfig(4, 10, 1.5)
    with pytest.raises(ConfigError):
        CircuitConfig(4, 10, 0.1, initial_state="y")
    with pytest.raises(ConfigError):
        CircuitConfig(4, 10, 0.1, perturbation="cz-substitution:2")
    with pytest.raises(ConfigError):
        CircuitConfig(4, 10, 0.1, record="every")
    assert CircuitConfig(4, 10, 0.1, initial_state="random:0.3").p_x == 0.3
    assert not CircuitConfig(4, 10, 0.1, perturbation="cz:0.1").sector_pure


def test_record_times():
    assert record_times(5).tolist() == [0, 1, 2, 3, 4, 5]
    t = record_times(10_000, "log:50")
    assert t[0] == 0 and t[-1] == 10_000 and np.all(np.diff(t) > 0)


def test_no_measurements_means_no_entanglement():
    rec, mask = run(CircuitConfig(8, 40, 0.0, "x", seed=3))
    assert not rec.S_half.any()
    assert not mask.fired.any()


def test_full_measurement_gives_product_state():
    rec, _ = run(CircuitConfig(6, 12, 1.0, "x", seed=1))
    assert (rec.S_half[2:] == 0).all()
    assert (rec.S_quarter[2:] == 0).all()


@pytest.mark.parametrize("init", ["x", "z", "staggered", "random:0.5"])
def test_split_and_general_tableau_agree(init):
    cfg = CircuitConfig(6, 30, 0.2, init, seed=11)
    a, ma = run(cfg, split=True, check=True)
    b, mb = run(cfg, split=False, check=True)
    for c in CSV_COLUMNS:
        assert np.array_equal(a.columns()[c], b.columns()[c]), c
    assert np.array_equal(ma.fired, mb.fired)


@pytest.mark.parametrize("pert", ["flipped-cnot:0.2", "cz-substitution:0.2"])
def test_perturbed_runs_keep_invariants(pert):
    rec, _ = run(CircuitConfig(5, 20, 0.1, "staggered", pert, seed=2), check=True)
    assert rec.t.size == 21
    if pert.startswith("flipped"):
        assert ((rec.N_X + rec.N_Z) == 10).all()


def test_cz_substitution_breaks_sector_purity():
    rec, _ = run(CircuitConfig(5, 20, 0.0, "x", "cz-substitution:0.5", seed=4))
    assert ((rec.N_X + rec.N_Z) < 10).any()


@given(st.integers(3, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_pe_bound_and_sector_purity(L, seed):
    rec, _ = run(CircuitConfig(L, 3 * L, 0.15, "x", seed=seed))
    assert ((rec.N_X + rec.N_Z) == 2 * L).all()
    assert rec.pe_bound_violations() == 0
    assert (rec.S_half <= np.minimum(rec.PE_Z, rec.PE_X)).all()


def test_seeding_is_deterministic_and_member_independent():
    base = CircuitConfig(6, 20, 0.2, "x")
    s3 = trajectory_seed(9, 3)
    a, _ = run(base.with_seed(s3))
    b, _ = run(base.with_seed(trajectory_seed(9, 3)))
    assert a.to_csv() == b.to_csv()
    assert trajectory_seed(9, 3) != trajectory_seed(9, 4)
    assert trajectory_seed(9, 3) != trajectory_seed(10, 3)


def test_csv_header_is_stable():
    rec, _ = run(CircuitConfig(4, 3, 0.1))
    assert rec.to_csv().splitlines()[0] == "t,S_half,S_quarter,N_X,N_Z,PE_Z,PE_X"


def test_pe_bound_violation_counter():
    one = np.array([0, 1])
    rec = TrajectoryRecord(one, np.array([0, 3]), np.array([0, 0]), np.array([2, 2]), np.array([2, 2]),
                           one, one, metadata={"L": 2})
    assert rec.pe_bound_violations() == 1


# --- circuit step vs cellular automaton ----------------------------------------------


def _z_rows_after_step(z_rows: np.ndarray, L: int) -> np.ndarray:
    n = 2 * L
    k = z_rows.shape[0]
    x = np.zeros((n, n), dtype=np.uint8)
    z = np.zeros((n, n), dtype=np.uint8)
    z[:k] = z_rows
    t = Tableau(x, z)
    cfg = CircuitConfig(L, 1, 0.0)
    step(t, cfg, 0, np.random.default_rng(0))
    assert not t.x.any()
    return t.z[:k]


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_z_strings_follow_the_automaton(L, seed):
    rng = np.random.default_rng(seed)
    za, zb = rng.integers(0, 2, size=(2, L), dtype=np.uint8)
    out = _z_rows_after_step(np.concatenate([za, zb])[None, :], L)[0]
    grid = DisorderGrid.uniform(L, 3)
    prev, cur = automaton_evolve((BitVector.from_bits(zb), BitVector.from_bits(za)), grid)
    assert np.array_equal(out[:L], cur.to_array())
    assert np.array_equal(out[L:], prev.to_array())


def test_single_z_on_a0_spreads_to_three_cells():
    L = 5
    za = np.zeros(L, dtype=np.uint8)
    za[0] = 1
    out = _z_rows_after_step(np.concatenate([za, np.zeros(L, dtype=np.uint8)])[None, :], L)[0]
    assert np.flatnonzero(out[:L]).tolist() == [0, 1, 4]
    assert np.flatnonzero(out[L:]).tolist() == [0]


# --- export --------------------------------------------------------------------------


def test_export_empty_and_full_masks():
    L, t = 4, 3
    empty = export_disorder(MeasurementMask(L, t, np.zeros((t, L)), np.ones(2 * L)))
    assert (empty.q == 5).all() and empty.T == t + 2
    full = export_disorder(MeasurementMask(L, t, np.ones((t, L)), np.ones(2 * L)))
    assert (full.q[:, 1 : t + 1] == 1).all()
    assert (full.q[:, [0, t + 1]] == 5).all()


def test_export_single_measurement():
    L, t = 6, 5
    mask = MeasurementMask.from_pairs(L, t, [(2, 3)], np.ones(2 * L))
    grid = export_disorder(mask)
    assert np.argwhere(grid.q == 1).tolist() == [[2, 4]]
    with pytest.raises(ValueError):
        MeasurementMask.from_pairs(L, t, [(6, 0)], np.ones(2 * L))


def test_export_rejects_mismatched_config():
    _, mask = final_state(CircuitConfig(4, 3, 0.2))
    with pytest.raises(ConfigError):
        export_disorder(mask, CircuitConfig(5, 3, 0.2))


# --- fits ----------------------------------------------------------------------------


def test_fit_log_slope_recovers_line():
    t = np.logspace(1, 4, 30)
    a, c, se = fit_log_slope(t, 3.7 * np.log10(t) + 2.0, 10, 1e4)
    assert a == pytest.approx(3.7) and c == pytest.approx(2.0) and se < 1e-9
    with pytest.raises(ValueError):
        fit_log_slope(t, t, 1e5, 1e6)


def test_initial_state_entropy_is_zero():
    cfg = CircuitConfig(6, 0, 0.0, "random:0.5", seed=5)
    st_ = initial_state(cfg, np.random.default_rng(0).random(12) < 0.5, split=False)
    assert entanglement_entropy(st_, half_cut(6)) == 0
