import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exf.errors import InvalidInputError, InvalidParameterError
from exf.optim import AdamWState, Schedule, adamw_step, lr_at


def test_pure_decay():
    (p,), _ = adamw_step([np.array([1.0])], [np.array([0.0])], AdamWState(base_lr=0.1, weight_decay=0.01))
    assert p[0] == pytest.approx(0.999, abs=1e-15)


def test_first_step():
    (p,), st_ = adamw_step([np.array([1.0])], [np.array([1.0])], AdamWState(base_lr=0.1, weight_decay=0.01))
    # m_hat = v_hat = 1
    assert p[0] == pytest.approx(1 - 0.1 / (1 + 1e-8) - 0.001, abs=1e-15)
    assert p[0] == pytest.approx(0.899, abs=1e-8)
    assert st_.step == 1


def test_identical_tensors_evolve_identically():
    state = AdamWState(base_lr=0.05)
    params = [np.ones(3), np.ones(3)]
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = rng.normal(size=3)
        params, state = adamw_step(params, [g, g.copy()], state)
    assert np.array_equal(params[0], params[1])


def test_shape_mismatch():
    with pytest.raises(InvalidInputError):
        adamw_step([np.ones(3)], [np.ones(2)], AdamWState())


def test_step_bounded_by_lr():
    state = AdamWState(base_lr=0.01, weight_decay=0.0)
    p = [np.zeros(4)]
    g = [np.array([1e-6, 1.0, -30.0, 5e3])]
    for _ in range(50):
        new, state = adamw_step(p, g, state)
        assert np.max(np.abs(new[0] - p[0])) <= 0.01 * (1 + 1e-6)
        p = new


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6))
@settings(max_examples=50, deadline=None)
def test_finite_output(values):
    g = np.array(values)
    new, _ = adamw_step([np.ones_like(g)], [g], AdamWState(base_lr=1e-3))
    assert np.all(np.isfinite(new[0]))


class TestSchedule:
    def test_endpoints(self):
        s = Schedule(total_epochs=10, base_lr=0.1, warmup_epochs=2, min_lr=0.01)
        assert lr_at(s, 0) == 0.0
        assert lr_at(s, 2) == pytest.approx(0.1)
        assert lr_at(s, 10) == pytest.approx(0.01)

    def test_midpoint(self):
        s = Schedule(total_epochs=10, base_lr=0.2)
        assert lr_at(s, 5) == pytest.approx(0.1)

    def test_continuity_at_warmup(self):
        s = Schedule(total_epochs=20, base_lr=1.0, warmup_epochs=5)
        assert abs(lr_at(s, 5 - 1e-9) - lr_at(s, 5)) < 1e-8

    def test_monotone_decay(self):
        s = Schedule(total_epochs=30, base_lr=1.0, warmup_epochs=3)
        vals = [lr_at(s, e / 4) for e in range(12, 121)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("epoch", [-0.1, 10.5])
    def test_out_of_range(self, epoch):
        with pytest.raises(InvalidParameterError):
            lr_at(Schedule(total_epochs=10, base_lr=0.1), epoch)

    def test_invalid_warmup(self):
        with pytest.raises(InvalidParameterError):
            Schedule(total_epochs=5, base_lr=0.1, warmup_epochs=5)

    def test_cosine_formula(self):
        s = Schedule(total_epochs=8, base_lr=0.3, warmup_epochs=0, min_lr=0.05)
        for e in np.linspace(0, 8, 17):
            assert lr_at(s, e) == pytest.approx(0.05 + 0.125 * (1 + math.cos(math.pi * e / 8)))
