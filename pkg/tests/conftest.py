import numpy as np
import pytest

from twospin_cs.phase_space import State
from twospin_cs.verify import sample_state


@pytest.fixture(params=[2, 3, 4, 5])
def n(request):
    return request.param


@pytest.fixture
def state(n):
    return sample_state(n, seed=11)


def zero_spin_state(u, v) -> State:
    n = len(u)
    m = n * (n - 1) // 2
    return State(n, u, v, np.zeros(m), np.zeros(m))


def rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))
