import itertools

import numpy as np
import pytest

from plaquette_circuits.f2linalg import BitMatrix


def enumerate_kernel(dense: np.ndarray) -> set[tuple[int, ...]]:
    """All x with dense @ x = 0 (mod 2), by exhaustion."""
    dense = np.asarray(dense, dtype=np.int64)
    n = dense.shape[1]
    out = set()
    for bits in itertools.product((0, 1), repeat=n):
        v = np.array(bits, dtype=np.int64)
        if not (dense @ v % 2).any():
            out.add(bits)
    return out


def span(dense: np.ndarray) -> set[tuple[int, ...]]:
    """All GF(2) combinations of the rows of ``dense``."""
    dense = np.asarray(dense, dtype=np.int64)
    k, n = dense.shape
    out = set()
    for coeffs in itertools.product((0, 1), repeat=k):
        v = np.zeros(n, dtype=np.int64)
        for c, row in zip(coeffs, dense):
            if c:
                v ^= row
        out.add(tuple(int(b) for b in v))
    if k == 0:
        out.add(tuple([0] * n))
    return out


@pytest.fixture
def ising_ring() -> BitMatrix:
    return BitMatrix.from_rows(["110", "011", "101"])


def _subset_xors(masks: list[int]) -> list[int]:
    out = [0]
    for m in masks:
        out += [v ^ m for v in out]
    return out


def count_solutions(dense: np.ndarray) -> int:
    """Number of x with dense @ x = 0 (mod 2), by meet-in-the-middle enumeration."""
    dense = np.asarray(dense, dtype=np.uint8)
    masks = [int("".join(map(str, col[::-1])), 2) if col.size else 0 for col in dense.T]
    half = len(masks) // 2
    left = {}
    for v in _subset_xors(masks[:half]):
        left[v] = left.get(v, 0) + 1
    return sum(left.get(v, 0) for v in _subset_xors(masks[half:]))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
