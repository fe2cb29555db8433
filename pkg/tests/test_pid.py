"""Controller-law and gain-search tests."""

import numpy as np
import pytest

from satgnc.dynamics import Torque
from satgnc.pid import (GAINS_FORMAT_VERSION, PidGains, PidState,
                        accumulate_cost, default_gain_bounds,
                        default_initial_gains, load_gains, optimize_gains,
                        pid_control, pid_raw, pid_step, saturate, save_gains)

GAINS = PidGains(kp=(-2.0, -2.0, -2.0), kd=(-1.0, -1.0, -1.0),
                 kq=(-0.1, -0.1, -0.1), kw=(-0.05, -0.05, -0.05), mc_max=1.0)


class TestSaturate:
    def test_inside_untouched(self):
        t = Torque(0.5, -0.5, 0.0)
        assert saturate(t, 1.0) == t

    def test_clamped_per_axis(self):
        assert saturate(Torque(3.0, -3.0, 0.2), 1.0) == Torque(1.0, -1.0, 0.2)

    def test_invalid_bound(self):
        with pytest.raises(ValueError):
            saturate(Torque.zero(), 0.0)


class TestControlLaw:
    def test_zero_error_zero_torque(self):
        state = PidState()
        mc = pid_control((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), state, GAINS)
        assert mc == Torque.zero()

    def test_proportional_term(self):
        state = PidState()
        mc = pid_control((0.1, 0.0, 0.0), (0.0, 0.0, 0.0), state, GAINS)
        assert mc.m1 == pytest.approx(-0.2)
        assert mc.m2 == mc.m3 == 0.0

    def test_raw_matches_unsaturated_sum(self):
        state = PidState(int_qe=[0.5, 0.0, 0.0], int_w=[0.0, 0.2, 0.0])
        qe, w = (0.3, -0.1, 0.2), (0.05, 0.0, -0.4)
        raw = pid_raw(qe, w, state, GAINS)
        for i in range(3):
            want = (GAINS.kp[i] * qe[i] + GAINS.kd[i] * w[i]
                    + GAINS.kq[i] * state.int_qe[i] + GAINS.kw[i] * state.int_w[i])
            assert raw[i] == pytest.approx(want)

    def test_control_is_pure(self):
        state = PidState()
        pid_control((0.3, 0.3, 0.3), (0.1, 0.1, 0.1), state, GAINS)
        assert state.int_qe == [0.0, 0.0, 0.0]
        assert state.int_w == [0.0, 0.0, 0.0]

    def test_step_advances_integrators(self):
        state = PidState()
        pid_step((0.1, 0.0, 0.0), (0.0, 0.2, 0.0), state, GAINS, 0.01)
        assert state.int_qe[0] == pytest.approx(0.001)
        assert state.int_w[1] == pytest.approx(0.002)

    def test_anti_windup_freezes_saturated_axis(self):
        state = PidState()
        # axis 1 saturates (kp * 1.0 = -2.0 beyond the bound), axis 2 does not
        mc = pid_step((1.0, 0.01, 0.0), (0.0, 0.0, 0.0), state, GAINS, 0.01)
        assert mc.m1 == -1.0
        assert state.saturated[0] is True
        assert state.int_qe[0] == 0.0
        assert state.int_qe[1] == pytest.approx(0.0001)

    def test_reset(self):
        state = PidState(int_qe=[1.0, 1.0, 1.0], int_w=[2.0, 2.0, 2.0],
                         saturated=[True, True, True])
        state.reset()
        assert state == PidState()


class TestCost:
    def test_accumulation(self):
        c = accumulate_cost(0.0, (0.1, -0.2, 0.3), (0.4, -0.5, 0.6), 0.01)
        assert c == pytest.approx(0.01 * 2.1)

    def test_invalid_dt(self):
        with pytest.raises(ValueError):
            accumulate_cost(0.0, (0.0,) * 3, (0.0,) * 3, 0.0)


class TestGainsType:
    def test_vector_round_trip(self):
        v = GAINS.to_vector()
        assert len(v) == 12
        assert PidGains.from_vector(v, GAINS.mc_max) == GAINS

    def test_bad_vector_length(self):
        with pytest.raises(ValueError):
            PidGains.from_vector(np.zeros(11), 1.0)

    def test_invalid_mc_max(self):
        with pytest.raises(ValueError):
            PidGains((-1.0,) * 3, (-1.0,) * 3, mc_max=0.0)

    def test_non_finite_gain_rejected(self):
        with pytest.raises(ValueError):
            PidGains((float("nan"), -1.0, -1.0), (-1.0,) * 3)

    def test_defaults_scale_with_inertia(self):
        g = default_initial_gains((1.5, 2.6, 3.0))
        assert g.kp == (-3.0, -5.2, -6.0)
        bounds = default_gain_bounds((1.5, 2.6, 3.0))
        assert len(bounds) == 12
        assert all(lo < hi for lo, hi in bounds)


class TestOptimize:
    @staticmethod
    def quadratic(center):
        def objective(gains):
            return float(np.sum((gains.to_vector() - center) ** 2))
        return objective

    def test_improves_on_quadratic(self):
        center = -np.linspace(0.5, 2.0, 12)
        initial = default_initial_gains((1.5, 2.6, 3.0))
        res = optimize_gains(self.quadratic(center), initial, budget=400)
        assert res.cost < self.quadratic(center)(initial)
        assert res.n_evaluations <= 400

    def test_deterministic(self):
        center = -np.ones(12)
        initial = default_initial_gains((1.5, 2.6, 3.0))
        a = optimize_gains(self.quadratic(center), initial, budget=200)
        b = optimize_gains(self.quadratic(center), initial, budget=200)
        assert a.gains == b.gains
        assert a.history == b.history

    def test_never_worse_than_initial(self):
        initial = default_initial_gains((1.5, 2.6, 3.0))

        def hostile(gains):
            return float("nan")  # every point non-finite

        res = optimize_gains(hostile, initial, budget=60)
        assert res.gains == initial

    def test_budget_floor(self):
        with pytest.raises(ValueError):
            optimize_gains(lambda g: 0.0,
                           default_initial_gains((1.0, 1.0, 1.0)), budget=10)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "gains.ini"
        save_gains(GAINS, path, extra={"cost": 0.123})
        assert load_gains(path) == GAINS

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_gains(tmp_path / "nope.ini")

    def test_version_checked(self, tmp_path):
        path = tmp_path / "gains.ini"
        save_gains(GAINS, path)
        text = path.read_text().replace(f"version = {GAINS_FORMAT_VERSION}",
                                        "version = 999")
        path.write_text(text)
        with pytest.raises(ValueError, match="version"):
            load_gains(path)
