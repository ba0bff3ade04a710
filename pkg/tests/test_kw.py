import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaquette_circuits.errors import CapacityError, ConfigError
from plaquette_circuits.f2linalg import BitMatrix
from plaquette_circuits.kw import (
    RedundancyBasis,
    dual_check_weight_histogram,
    dual_model,
    dual_partition_log,
    finite_beta_renyi2,
    kw_identity_check,
    partition_log_bruteforce,
    redundancy_basis,
    self_dual_beta,
    weak_measurement_params,
)
from plaquette_circuits.plaquette import DisorderGrid, build_parity_checks, symmetry_basis
from plaquette_circuits.replica import half_boundary, renyi2_via_replicas


def _log_z_direct(H: BitMatrix, beta: float) -> float:
    """Plain sum over spin configurations of exp(beta * sum_i (-1)^{(Hs)_i})."""
    h = H.to_dense().astype(np.int64)
    total = 0.0
    for bits in itertools.product((0, 1), repeat=H.cols):
        viol = (h @ np.array(bits)) % 2
        total += math.exp(beta * float(np.sum(1 - 2 * viol)))
    return math.log(total)


def test_ising_ring_redundancy(ising_ring):
    b = redundancy_basis(ising_ring)
    assert b.Q == 1 and b.R.to_dense().tolist() == [[1, 1, 1]]


def test_full_rank_has_no_redundancy():
    assert redundancy_basis(BitMatrix.identity(4)).Q == 0


def test_dual_partition_limits():
    empty = RedundancyBasis(BitMatrix.zeros(0, 3), 3, 3)
    assert dual_partition_log(empty, 0.4) == 0.0
    b = RedundancyBasis(BitMatrix.from_rows(["1100", "0011"]), 4, 4)
    assert dual_partition_log(b, 1.0) == pytest.approx(2 * math.log(2))
    with pytest.raises(ConfigError):
        dual_partition_log(b, 1.5)


@pytest.mark.parametrize("beta", [0.3, 1.0, 3.0])
def test_ising_ring_identity_by_hand(ising_ring, beta):
    a = math.tanh(beta)
    dual = 3 * math.log(2) + 3 * math.log(math.cosh(beta)) + math.log1p(a**3)
    assert dual_partition_log(redundancy_basis(ising_ring), a) == pytest.approx(math.log1p(a**3), rel=1e-12)
    assert partition_log_bruteforce(ising_ring, beta) == pytest.approx(_log_z_direct(ising_ring, beta), rel=1e-12)
    assert partition_log_bruteforce(ising_ring, beta) == pytest.approx(dual, rel=1e-10)


def test_bruteforce_limits():
    sys = build_parity_checks(DisorderGrid.random(3, 4, 0.3, 1))
    assert partition_log_bruteforce(sys, 0.0) == pytest.approx(sys.n_bits * math.log(2))
    k = symmetry_basis(sys).k
    M = sys.n_checks
    # at large beta only ground states survive: log Z - beta M -> k log 2
    assert partition_log_bruteforce(sys, 40.0) - 40.0 * M == pytest.approx(k * math.log(2), abs=1e-9)
    assert partition_log_bruteforce(sys, 1.0, convention="violations") == pytest.approx(
        partition_log_bruteforce(sys, 0.5) - 0.5 * M
    )


def test_capacity_errors():
    sys = build_parity_checks(DisorderGrid.random(8, 8, 0.1, 1))
    with pytest.raises(CapacityError):
        partition_log_bruteforce(sys, 1.0)
    with pytest.raises(CapacityError):
        dual_partition_log(RedundancyBasis(BitMatrix.identity(30), 30, 30), 0.5)


@given(st.integers(1, 10), st.integers(1, 14), st.sampled_from([0.0, 0.3, 1.0, 3.0]), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_identity_on_random_matrices(M, N, beta, seed):
    rng = np.random.default_rng(seed)
    H = BitMatrix.from_dense(rng.integers(0, 2, size=(M, N), dtype=np.uint8))
    assert kw_identity_check(H, beta) < 1e-10


def test_identity_with_no_redundancy():
    H = BitMatrix.identity(5)
    assert partition_log_bruteforce(H, 0.7) == pytest.approx(5 * math.log(2) + 5 * math.log(math.cosh(0.7)))


def test_dual_map_is_an_involution():
    for beta in (0.1, 0.44, 1.0, 2.5):
        d = dual_model(redundancy_basis(BitMatrix.from_rows(["110", "011", "101"])), beta)
        back = 0.5 * -math.log(math.tanh(d.beta_dual))
        assert back == pytest.approx(beta, rel=1e-9)
    b = self_dual_beta()
    assert math.tanh(b) == pytest.approx(math.exp(-2 * b))


def test_weak_measurement_params():
    g, bd = weak_measurement_params(1.0)
    assert g == bd == pytest.approx(-0.5 * math.log(math.tanh(1.0)))
    assert weak_measurement_params(50.0)[0] < 1e-40
    with pytest.raises(ConfigError):
        weak_measurement_params(0.0)


def test_finite_beta_limits():
    for seed in range(5):
        sys = build_parity_checks(DisorderGrid.random(4, 4, 0.1, seed))
        A = half_boundary(sys)
        exact = renyi2_via_replicas(sys, A) * math.log(2)
        assert finite_beta_renyi2(sys, A, 30.0) == pytest.approx(exact, abs=1e-6)
        assert finite_beta_renyi2(sys, A, math.inf) == pytest.approx(exact, abs=1e-12)
        assert finite_beta_renyi2(sys, A, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_finite_beta_dual_and_brute_routes_agree():
    sys = build_parity_checks(DisorderGrid.random(3, 4, 0.2, 5))
    A = half_boundary(sys)
    for beta in (0.3, 1.0, 2.0):
        a = finite_beta_renyi2(sys, A, beta, q_max=64, n_max=0)
        b = finite_beta_renyi2(sys, A, beta, q_max=-1, n_max=30)
        assert a == pytest.approx(b, abs=1e-10)


def test_dual_check_weight_histogram(ising_ring):
    h = dual_check_weight_histogram(redundancy_basis(ising_ring))
    assert h["histogram"] == {1: 3} and h["zero_fraction"] == 0.0
    assert dual_check_weight_histogram(redundancy_basis(BitMatrix.identity(3)))["sizes"].size == 0
