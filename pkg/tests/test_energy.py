import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iesim import energy as en
from iesim.clock import working_windows
from iesim.modes import MODES, OperatingMode as OM
from iesim.rng import Rng


def ledger(device="dev", window=(0.0, 100.0), intervals=(), events=()):
    led = en.EnergyLedger(device, window)
    led.intervals = [en.ModeInterval(m, s, d) for m, s, d in intervals]
    led.peripheral_events = list(events)
    led.validate()
    return led


def test_mode_energy_single_interval(simple_profile):
    led = ledger(intervals=[(OM.RX, 0.0, 10.0)])
    profile = en.DeviceProfile(
        "x", {OM.LPM: 1e-4, OM.CPU: 1e-3, OM.TX: 0.018, OM.RX: 0.02}, 3.0, 1.0
    )
    assert en.mode_energy(led, profile, OM.RX) == pytest.approx(0.6)


def test_mode_energy_empty_sum(simple_profile):
    led = ledger(intervals=[(OM.RX, 0.0, 10.0)])
    assert en.mode_energy(led, simple_profile, OM.TX) == 0.0


def test_mode_energy_hand_sum():
    profile = en.DeviceProfile(
        "x", {OM.LPM: 1e-4, OM.CPU: 0.0018, OM.TX: 0.018, OM.RX: 0.02}, 3.0, 1.0
    )
    led = ledger(intervals=[(OM.CPU, 0.0, 2.0), (OM.CPU, 5.0, 3.0)])
    assert en.mode_energy(led, profile, OM.CPU) == pytest.approx(0.0018 * 3.0 * 5.0)


def test_total_energy_empty_ledger(simple_profile):
    assert en.total_energy(ledger(), simple_profile) == 0.0


def test_total_energy_additive_over_modes():
    profile = en.DeviceProfile(
        "x", {OM.LPM: 0.001, OM.CPU: 0.002, OM.TX: 0.004, OM.RX: 0.008}, 1.0, 1.0
    )
    led = ledger(
        intervals=[
            (OM.LPM, 0.0, 1000.0),
            (OM.CPU, 1000.0, 500.0),
            (OM.TX, 1500.0, 250.0),
            (OM.RX, 1750.0, 125.0),
        ],
        window=(0.0, 2000.0),
    )
    # each mode contributes exactly 1 J
    assert en.total_energy(led, profile) == pytest.approx(4.0)


def test_total_energy_includes_peripherals(simple_profile):
    led = ledger(
        intervals=[(OM.RX, 0.0, 10.0)],
        events=[(1.0, "read:temperature"), (2.0, "read:temperature")],
    )
    base = en.mode_energy(led, simple_profile, OM.RX)
    assert en.total_energy(led, simple_profile) == pytest.approx(base + 0.1)


def test_total_energy_unknown_event(simple_profile):
    led = ledger(events=[(1.0, "read:co2")], intervals=[(OM.LPM, 0.0, 1.0)])
    with pytest.raises(en.EnergyModelError, match="read:co2"):
        en.total_energy(led, simple_profile)


def test_duty_cycle_energy_single_mode(simple_profile):
    led = ledger(intervals=[(OM.TX, 0.0, 5.0)])
    assert en.duty_cycle_energy(led, simple_profile, OM.TX) == pytest.approx(1.0)


def test_duty_cycle_energy_symmetry():
    profile = en.DeviceProfile(
        "x", {OM.LPM: 0.001, OM.CPU: 0.002, OM.TX: 0.004, OM.RX: 0.008}, 1.0, 1.0
    )
    led = ledger(intervals=[(OM.TX, 0.0, 10.0), (OM.RX, 10.0, 5.0)])
    assert en.duty_cycle_energy(led, profile, OM.TX) == pytest.approx(0.5)
    assert en.duty_cycle_energy(led, profile, OM.RX) == pytest.approx(0.5)


def test_duty_cycle_energy_lpm_vs_rx():
    profile = en.DeviceProfile(
        "x", {OM.LPM: 0.0001, OM.CPU: 0.002, OM.TX: 0.018, OM.RX: 0.02}, 3.0, 1.0
    )
    led = ledger(intervals=[(OM.LPM, 0.0, 90.0), (OM.RX, 90.0, 10.0)])
    assert en.duty_cycle_energy(led, profile, OM.RX) == pytest.approx(0.6 / 0.627)


def test_duty_cycle_energy_undefined_on_zero_total(simple_profile):
    with pytest.raises(en.EnergyModelError):
        en.duty_cycle_energy(ledger(), simple_profile, OM.RX)


def test_duty_cycle_time_examples():
    led = ledger(intervals=[(OM.LPM, 0.0, 90.0), (OM.RX, 90.0, 10.0)])
    assert en.duty_cycle_time(led, OM.RX) == pytest.approx(0.10)
    assert en.duty_cycle_time(led, OM.TX) == 0.0
    full = ledger(intervals=[(OM.CPU, 0.0, 100.0)])
    assert en.duty_cycle_time(full, OM.CPU) == pytest.approx(1.0)


def test_lifetime_unit_identity():
    profile = en.DeviceProfile(
        "x", {OM.LPM: 0.01, OM.CPU: 0.02, OM.TX: 0.4, OM.RX: 1.0}, 3.0, 1.0
    )
    # 1 W continuous on the Rx draw of 1 A at 3 V over a third of the time
    led = ledger(intervals=[(OM.RX, 0.0, 100.0)], window=(0.0, 100.0))
    # P_avg = 3 W, battery 1 Ah * 3 V -> 1 hour
    assert en.lifetime(profile, led) == pytest.approx(1.0)


def test_lifetime_low_power():
    profile = en.DeviceProfile(
        "x", {OM.LPM: 0.002, OM.CPU: 0.004, OM.TX: 0.4, OM.RX: 1.0}, 3.0, 2.0
    )
    led = ledger(intervals=[(OM.LPM, 0.0, 100.0)], window=(0.0, 100.0))
    # P_avg = 0.006 W -> (2 Ah * 3 V) / 0.006 W = 1000 h
    assert en.lifetime(profile, led) == pytest.approx(1000.0)


def test_lifetime_linear_in_capacity():
    p1 = en.DeviceProfile("a", {OM.LPM: 0.001, OM.CPU: 0.01, OM.TX: 0.02, OM.RX: 0.02}, 3.0, 1.0)
    p2 = en.DeviceProfile("b", {OM.LPM: 0.001, OM.CPU: 0.01, OM.TX: 0.02, OM.RX: 0.02}, 3.0, 2.0)
    led = ledger(intervals=[(OM.RX, 0.0, 50.0)], window=(0.0, 100.0))
    assert en.lifetime(p2, led) == pytest.approx(2.0 * en.lifetime(p1, led))


def test_lifetime_errors(simple_profile):
    with pytest.raises(en.EnergyModelError):
        en.lifetime(simple_profile, ledger(window=(5.0, 5.0)))
    with pytest.raises(en.EnergyModelError):
        en.lifetime(simple_profile, ledger())


def test_lifetime_invariant_under_uniform_time_scaling(simple_profile):
    base = ledger(
        intervals=[(OM.LPM, 0.0, 50.0), (OM.RX, 50.0, 25.0)], window=(0.0, 100.0)
    )
    scaled = ledger(
        intervals=[(OM.LPM, 0.0, 150.0), (OM.RX, 150.0, 75.0)], window=(0.0, 300.0)
    )
    assert en.lifetime(simple_profile, base) == pytest.approx(
        en.lifetime(simple_profile, scaled)
    )


def test_profile_validation():
    with pytest.raises(en.EnergyModelError, match="LPM"):
        en.DeviceProfile("x", {OM.LPM: 0.05, OM.CPU: 0.002, OM.TX: 0.02, OM.RX: 0.02}, 3.0, 1.0)
    with pytest.raises(en.EnergyModelError):
        en.DeviceProfile("x", {OM.LPM: 0.001, OM.CPU: 0.002, OM.TX: 0.02}, 3.0, 1.0)
    with pytest.raises(en.EnergyModelError):
        en.DeviceProfile("x", {OM.LPM: -1, OM.CPU: 0.002, OM.TX: 0.02, OM.RX: 0.02}, 3.0, 1.0)


def test_voltage_defaults_to_vcc(simple_profile):
    assert simple_profile.voltage(OM.TX) == simple_profile.vcc


# ---------------------------------------------------------------------------
# randomized oracles and invariants


def random_ledger(rng: Rng, device="dev"):
    t = 0.0
    intervals = []
    for _ in range(rng.randrange(40) + 1):
        mode = MODES[rng.randrange(4)]
        gap = rng.uniform(0.0, 2.0) if rng.random() < 0.3 else 0.0
        dur = rng.uniform(0.0, 50.0)
        intervals.append(en.ModeInterval(mode, t + gap, dur))
        t += gap + dur
    led = en.EnergyLedger(device, (0.0, t + rng.uniform(0.0, 5.0)))
    led.intervals = intervals
    if rng.random() < 0.5:
        led.peripheral_events = [(1.0, "read:temperature")] * (rng.randrange(4))
    led.validate()
    return led


def brute_force_mode_energy(led, profile, mode):
    total = 0.0
    for iv in led.intervals:
        if iv.mode is mode:
            total += profile.current_a[mode] * profile.voltage(mode) * iv.duration
    return total


def test_mode_energy_matches_brute_force_oracle(simple_profile):
    rng = Rng(2024)
    for _ in range(300):
        led = random_ledger(rng)
        for mode in MODES:
            got = en.mode_energy(led, simple_profile, mode)
            want = brute_force_mode_energy(led, simple_profile, mode)
            assert got == pytest.approx(want, rel=1e-9)


def test_energy_share_sums_to_one(simple_profile):
    rng = Rng(77)
    for _ in range(200):
        led = random_ledger(rng)
        try:
            total = en.total_energy(led, simple_profile)
        except en.EnergyModelError:
            continue
        if total <= 0:
            continue
        shares = math.fsum(en.duty_cycle_energy(led, simple_profile, m) for m in MODES)
        shares += led.peripheral_energy(simple_profile) / total
        assert shares == pytest.approx(1.0, rel=1e-12)


def test_time_share_sums_to_at_most_one(simple_profile):
    rng = Rng(78)
    for _ in range(200):
        led = random_ledger(rng)
        if led.window_length() <= 0:
            continue
        total = math.fsum(en.duty_cycle_time(led, m) for m in MODES)
        assert total <= 1.0 + 1e-12


def test_total_energy_additive_under_concat(simple_profile):
    a = ledger(window=(0.0, 50.0), intervals=[(OM.RX, 0.0, 20.0), (OM.LPM, 20.0, 30.0)],
               events=[(5.0, "read:temperature")])
    b = ledger(window=(50.0, 100.0), intervals=[(OM.TX, 50.0, 10.0), (OM.CPU, 60.0, 40.0)])
    both = en.concat_ledgers([a, b])
    assert en.total_energy(both, simple_profile) == pytest.approx(
        en.total_energy(a, simple_profile) + en.total_energy(b, simple_profile), rel=1e-12
    )


def test_ledger_validation_rejects_overlap():
    led = en.EnergyLedger("dev", (0.0, 10.0))
    led.intervals = [en.ModeInterval(OM.LPM, 0.0, 5.0), en.ModeInterval(OM.RX, 4.0, 2.0)]
    with pytest.raises(en.EnergyModelError):
        led.validate()


def test_scoped_mode_seconds():
    led = ledger(
        window=(0.0, 86400.0),
        intervals=[(OM.RX, 7 * 3600.0, 7200.0)],  # 07:00 to 09:00
    )
    wins = working_windows(0.0, 86400.0)
    assert led.mode_seconds(OM.RX, wins) == pytest.approx(3600.0)


@given(st.integers(min_value=0, max_value=2**32))
@settings(max_examples=60, deadline=None)
def test_randomized_ledgers_stay_consistent(seed):
    profile = en.DeviceProfile(
        "x", {OM.LPM: 0.0001, OM.CPU: 0.002, OM.TX: 0.018, OM.RX: 0.02}, 3.0, 1.0
    )
    led = random_ledger(Rng(seed))
    for mode in MODES:
        assert en.mode_energy(led, profile, mode) >= 0.0
    if led.window_length() > 0 and led.mode_seconds(OM.RX) > 0:
        assert 0.0 <= en.duty_cycle_time(led, OM.RX) <= 1.0


def test_time_shares_reach_one_when_tiling(simple_profile):
    led = ledger(
        window=(0.0, 100.0),
        intervals=[(OM.LPM, 0.0, 60.0), (OM.RX, 60.0, 30.0), (OM.TX, 90.0, 10.0)],
    )
    total = math.fsum(en.duty_cycle_time(led, m) for m in MODES)
    assert total == pytest.approx(1.0, rel=1e-12)
