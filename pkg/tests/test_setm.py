import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from platoon_setm.setm import (SetmConfig, SetmState, TriggerOrderError, interevent_stats, measurement_error,
                               on_trigger, reduction_percent, should_trigger, switched_sigma, trigger_function,
                               trigger_mask, zeno_lower_bound)

CFG = SetmConfig(0.05, 0.5, 0.1)


def held(z):
    return SetmState(held_z2=z)


def test_config_ordering_enforced():
    for args in [(0.5, 0.05, 0.1), (0.1, 0.1, 0.1), (0.0, 0.5, 0.1), (0.1, 1.0, 0.1), (0.1, 0.5, 0.0)]:
        with pytest.raises(ValueError):
            SetmConfig(*args)
    assert CFG.sigma_max == 0.5


def test_measurement_error_values():
    assert measurement_error(held(1.0), 0.7) == pytest.approx(0.3, abs=1e-15)
    assert measurement_error(held(0.4), 0.4) == 0.0


@given(a=st.floats(-1e6, 1e6), b=st.floats(-1e6, 1e6))
def test_measurement_error_antisymmetric(a, b):
    assert measurement_error(held(a), b) == -measurement_error(held(b), a)


def test_switched_sigma_branches():
    assert switched_sigma(CFG, 0.5) == 0.05
    assert switched_sigma(CFG, 0.01) == 0.5
    assert switched_sigma(CFG, -0.5) == 0.05
    assert switched_sigma(CFG, 0.1) == 0.05  # boundary takes the larger-error branch
    assert switched_sigma(CFG, np.nextafter(0.1, 0)) == 0.5
    assert switched_sigma(CFG, [0.06, 0.08]) == 0.05  # vector norm 0.1


def test_should_trigger_examples():
    assert not should_trigger(CFG, held(0.3), 0.3)
    assert should_trigger(CFG, held(0.0), 0.0)
    c = SetmConfig(0.25, 0.5, 1.0)
    assert should_trigger(c, held(np.array([2.0 + 1.001, 0.0])), np.array([2.0, 0.0]))
    assert not should_trigger(c, held(np.array([2.0 + 0.999, 0.0])), np.array([2.0, 0.0]))


@given(h=st.floats(-10, 10), z=st.floats(-10, 10))
def test_should_trigger_is_sign_of_psi(h, z):
    sigma = 0.05 if abs(z) >= 0.1 else 0.5
    psi = (h - z) ** 2 - sigma * z * z
    assert should_trigger(CFG, held(h), z) == (psi >= 0)
    assert trigger_function(CFG, np.array([h]), np.array([z]))[0] == pytest.approx(psi, abs=1e-12)


@given(h=st.floats(-10, 10), z=st.floats(-10, 10))
def test_trigger_mask_is_rule_without_zero_error(h, z):
    fired = bool(trigger_mask(0.05, 0.5, 0.1, np.array([h]), np.array([z]))[0])
    assert fired == (should_trigger(CFG, held(h), z) and h != z)


def test_trigger_mask_suppresses_origin():
    assert not trigger_mask(0.05, 0.5, 0.1, np.zeros(3), np.zeros(3)).any()


def test_on_trigger_logs_and_holds():
    s = SetmState()
    on_trigger(s, 0.004, 0.2, -100.0)
    on_trigger(s, 0.009, 0.1, -50.0)
    assert s.event_log == [0.004, 0.009] and s.trigger_count == 2
    assert s.held_u == -50.0 and s.held_z2 == 0.1
    assert measurement_error(s, 0.1) == 0.0


@pytest.mark.parametrize("t", [0.009, 0.005])
def test_on_trigger_rejects_non_increasing_time(t):
    s = on_trigger(SetmState(), 0.009, 0.2, 1.0)
    with pytest.raises(TriggerOrderError):
        on_trigger(s, t, 0.1, 2.0)
    assert s.event_log == [0.009] and s.held_u == 1.0


def test_hold_contract_over_script():
    rng = np.random.default_rng(3)
    z = np.cumsum(rng.normal(0, 0.05, 2000))
    s = SetmState()
    applied = []
    for k, zk in enumerate(z):
        if k == 0 or should_trigger(CFG, s, zk):
            on_trigger(s, k * 0.001, zk, -60.0 * zk)
        applied.append(s.held_u)
    applied = np.array(applied)
    idx = np.round(np.array(s.event_log) / 0.001).astype(int)
    changes = np.flatnonzero(np.diff(applied) != 0) + 1
    assert set(changes) <= set(idx)
    np.testing.assert_array_equal(np.diff(s.event_log) > 0, True)


def test_reduction_table_values():
    assert reduction_percent(212, 50.0, 0.001) == pytest.approx(99.576)
    assert round(reduction_percent(212, 50.0, 0.001), 2) == 99.58
    assert round(reduction_percent(678, 50.0, 0.001), 2) == 98.64


def test_interevent_stats():
    st_ = interevent_stats([0.0, 0.004, 0.009, 0.019], 50.0, 0.001)
    assert st_.count == 4
    assert st_.min_interval == pytest.approx(0.004)
    assert st_.max_interval == pytest.approx(0.010)
    assert st_.mean_interval == pytest.approx(0.019 / 3)
    one = interevent_stats(SetmState(event_log=[1.0]), 50.0, 0.001)
    assert one.count == 1 and one.min_interval is None and one.mean_interval is None
    assert interevent_stats([], 50.0, 0.001).count == 0
    with pytest.raises(ValueError):
        interevent_stats([], 0.0, 0.001)


def test_zeno_bound():
    assert zeno_lower_bound(CFG, 2.0) == pytest.approx(math.sqrt(0.05) * 0.1 / 2.0)
    assert zeno_lower_bound(CFG, 0.0) == math.inf


def _replay(z2, delta2, delta1=0.05, epsilon=0.1):
    """Scalar-loop replay of the trigger rule over a fixed trajectory; returns per-channel counts."""
    ticks, n, axes = z2.shape
    counts = np.zeros((n, axes), dtype=int)
    for i in range(n):
        for a in range(axes):
            h = z2[0, i, a]
            c = 1
            for k in range(1, ticks):
                z = z2[k, i, a]
                sigma = delta1 if abs(z) >= epsilon else delta2
                if (h - z) ** 2 >= sigma * z * z and h != z:
                    h = z
                    c += 1
            counts[i, a] = c
    return counts


@pytest.mark.slow
def test_raising_delta2_never_adds_triggers_on_a_fixed_trajectory(periodic_log):
    # the periodic baseline trajectory does not depend on the trigger rule
    z2 = periodic_log.z2[::2, periodic_log.controlled, :]
    counts = [_replay(z2, d2) for d2 in (0.1, 0.5, 0.9)]
    for lo, hi in zip(counts, counts[1:]):
        assert np.all(hi <= lo)


def test_closed_loop_first_tick_triggers_every_controlled_channel(shipped_log):
    log = shipped_log
    assert log.triggered[0, log.controlled].all()
    assert not log.triggered[:, ~log.controlled].any()


def test_closed_loop_error_resets_at_triggers_and_holds_between(shipped_log):
    log = shipped_log
    c = log.controlled
    fired = log.triggered[:, c]
    held_z2, z2 = log.held_z2[:, c], log.z2[:, c]
    np.testing.assert_array_equal(held_z2[fired], z2[fired])
    u = log.u_applied[:, c]
    same = ~fired[1:]
    np.testing.assert_array_equal(u[1:][same], u[:-1][same])
    np.testing.assert_array_equal(held_z2[1:][same], held_z2[:-1][same])


def test_closed_loop_psi_negative_between_triggers(shipped_log):
    log = shipped_log
    c = log.controlled
    e = log.held_z2[:, c] - log.z2[:, c]
    z = log.z2[:, c]
    sigma = np.where(np.abs(z) >= 0.1, 0.05, 0.5)
    psi = e * e - sigma * z * z
    between = ~log.triggered[:, c]
    assert np.all((psi[between] < 0) | (e[between] == 0))
