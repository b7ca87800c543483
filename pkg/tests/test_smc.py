import pytest

from iesim import smc
from iesim.clock import DAY_S
from iesim.energy import DeviceProfile, EnergyLedger, ModeInterval
from iesim.modes import OperatingMode as OM
from iesim.rng import Rng


def profile():
    return DeviceProfile(
        "mote", {OM.LPM: 0.0001, OM.CPU: 0.002, OM.TX: 0.017, OM.RX: 0.02}, 3.0, 2.0
    )


def day_ledger(fractions):
    """One-day ledger repeating the given mode pattern each hour."""
    led = EnergyLedger("mote", (0.0, DAY_S))
    t = 0.0
    for _ in range(24):
        for mode, frac in fractions:
            led.intervals.append(ModeInterval(mode, t, 3600.0 * frac))
            t += 3600.0 * frac
    led.validate()
    return led


PHI2 = smc.Property("phi2", smc.KIND_SHARE_AT_LEAST, device="mote", mode=OM.LPM,
                    ratio=0.9, scope=smc.SCOPE_WORK)
PHI3 = smc.Property("phi3", smc.KIND_SHARE_AT_MOST, device="mote", mode=OM.RX,
                    ratio=0.2, scope=smc.SCOPE_WORK)


def test_always_lpm_satisfies_phi2():
    led = day_ledger([(OM.LPM, 1.0)])
    assert smc.evaluate(PHI2, {"mote": led}, {"mote": profile()})


def test_always_rx_fails_phi3():
    led = day_ledger([(OM.RX, 1.0)])
    assert not smc.evaluate(PHI3, {"mote": led}, {"mote": profile()})


def test_ninety_five_five_split_passes_both():
    led = day_ledger([(OM.LPM, 0.95), (OM.RX, 0.05)])
    profiles = {"mote": profile()}
    assert smc.evaluate(PHI2, {"mote": led}, profiles)
    assert smc.evaluate(PHI3, {"mote": led}, profiles)


def test_lifetime_property_uses_energy_model():
    led = day_ledger([(OM.LPM, 1.0)])
    # P_avg = 0.0001 A * 3 V = 0.3 mW; 2 Ah * 3 V / 0.0003 W = 20000 h
    prop = smc.Property("phi1", smc.KIND_LIFETIME, device="mote", hours=168.0)
    assert smc.evaluate(prop, {"mote": led}, {"mote": profile()})
    prop_hard = smc.Property("x", smc.KIND_LIFETIME, device="mote", hours=30000.0)
    assert not smc.evaluate(prop_hard, {"mote": led}, {"mote": profile()})


def test_evaluate_unknown_device():
    led = day_ledger([(OM.LPM, 1.0)])
    prop = smc.Property("p", smc.KIND_SHARE_AT_LEAST, device="ghost", mode=OM.LPM, ratio=0.5)
    with pytest.raises(smc.SmcError, match="ghost"):
        smc.evaluate(prop, {"mote": led}, {"mote": profile()})


def test_empty_scope_window_is_an_error():
    led = EnergyLedger("mote", (0.0, 3600.0))  # 00:00-01:00, no working hours
    led.intervals = [ModeInterval(OM.LPM, 0.0, 3600.0)]
    with pytest.raises(smc.SmcError, match="working"):
        smc.evaluate(PHI2, {"mote": led}, {"mote": profile()})


def test_threshold_monotonicity():
    led = day_ledger([(OM.LPM, 0.7), (OM.RX, 0.3)])
    profiles = {"mote": profile()}
    results = []
    for ratio in (0.1, 0.3, 0.5, 0.7, 0.9):
        prop = smc.Property("p", smc.KIND_SHARE_AT_LEAST, device="mote",
                            mode=OM.LPM, ratio=ratio, scope=smc.SCOPE_WORK)
        results.append(smc.evaluate(prop, {"mote": led}, profiles))
    # raising an at-least threshold never turns false into true
    assert results == sorted(results, reverse=True)


# ---------------------------------------------------------------------------
# decision procedures


def bernoulli_sampler(p, seed):
    rng = Rng(seed)
    return lambda i: rng.random() < p


def test_sprt_constant_true_accepts_h0_quickly():
    cfg = smc.SmcConfig(theta=0.5, p0=0.6, p1=0.4, alpha=0.01, beta=0.01)
    verdict = smc.sprt(lambda i: True, cfg)
    assert verdict.kind == smc.ACCEPT_H0
    assert verdict.samples_used < 30


def test_sprt_constant_false_accepts_h1():
    cfg = smc.SmcConfig(theta=0.5, p0=0.6, p1=0.4, alpha=0.01, beta=0.01)
    verdict = smc.sprt(lambda i: False, cfg)
    assert verdict.kind == smc.ACCEPT_H1


def test_sprt_bernoulli_09_almost_always_h0():
    cfg = smc.SmcConfig(theta=0.5, p0=0.55, p1=0.45, alpha=0.01, beta=0.01)
    accept = sum(
        smc.sprt(bernoulli_sampler(0.9, 1000 + k), cfg).kind == smc.ACCEPT_H0
        for k in range(200)
    )
    assert accept >= 198


def test_sprt_inconclusive_at_max_samples():
    cfg = smc.SmcConfig(theta=0.5, p0=0.51, p1=0.49, alpha=0.01, beta=0.01, max_samples=20)
    verdict = smc.sprt(bernoulli_sampler(0.5, 7), cfg)
    assert verdict.kind == smc.INCONCLUSIVE
    assert verdict.samples_used == 20


def test_hoeffding_sample_sizes_exact():
    assert smc.hoeffding_sample_size(0.05, 0.05) == 738
    assert smc.hoeffding_sample_size(0.01, 0.05) == 18445


def test_estimate_constant_true():
    verdict = smc.estimate(lambda i: True, delta=0.1, alpha=0.1)
    assert verdict.kind == smc.ESTIMATE
    assert verdict.p_hat == 1.0
    assert verdict.samples_used == smc.hoeffding_sample_size(0.1, 0.1)


def test_estimator_coverage():
    delta, alpha = 0.05, 0.05
    hits = 0
    for k in range(200):
        verdict = smc.estimate(bernoulli_sampler(0.3, 5000 + k), delta, alpha)
        hits += abs(verdict.p_hat - 0.3) < delta
    assert hits / 200 >= 1 - alpha - 0.02


def test_sprt_wrong_decision_rates():
    cfg = smc.SmcConfig(theta=0.5, p0=0.55, p1=0.45, alpha=0.05, beta=0.05)
    for p, correct in ((0.2, smc.ACCEPT_H1), (0.9, smc.ACCEPT_H0)):
        wrong = 0
        for k in range(200):
            verdict = smc.sprt(bernoulli_sampler(p, 31337 + 977 * k), cfg)
            wrong += verdict.kind not in (correct, smc.INCONCLUSIVE)
        assert wrong / 200 <= cfg.alpha + 0.02


def test_smc_config_validation():
    with pytest.raises(smc.SmcError):
        smc.SmcConfig(alpha=0.6)
    with pytest.raises(smc.SmcError):
        smc.SmcConfig(p0=0.4, p1=0.6, theta=0.5)
    with pytest.raises(smc.SmcError):
        smc.SmcConfig(delta=0.0)


def test_verdict_holds_logic():
    cfg = smc.SmcConfig(theta=0.7, p0=0.75, p1=0.65)
    assert smc.Verdict(smc.ACCEPT_H0, 10, 1.0, cfg).holds
    assert not smc.Verdict(smc.ACCEPT_H1, 10, 0.0, cfg).holds
    assert smc.Verdict(smc.ESTIMATE, 10, 0.75, cfg).holds
    assert not smc.Verdict(smc.ESTIMATE, 10, 0.65, cfg).holds


def test_requirements_parsing(requirements_path):
    reqset = smc.parse_requirements(requirements_path)
    assert {r.prop.id for r in reqset.requirements} == {"phi1", "phi2", "phi3"}
    phi2 = next(r for r in reqset.requirements if r.prop.id == "phi2")
    assert phi2.prop.mode is OM.LPM
    assert phi2.prop.ratio == 0.9
    assert phi2.prop.scope == smc.SCOPE_WORK
    assert reqset.delta == 0.05
    assert reqset.horizon_s == 604800.0


def test_requirements_parse_errors(tmp_path):
    bad = tmp_path / "bad.xml"
    bad.write_text("<requirements><requirement id='x' type='nonsense'/></requirements>")
    with pytest.raises(Exception, match="nonsense"):
        smc.parse_requirements(bad)


def test_verify_requirements_small(bms_scenario, bms_system):
    import xml.etree.ElementTree as ET

    doc = ET.fromstring(
        """
        <requirements alpha="0.2" beta="0.2" delta="0.25" horizon-s="43200">
          <requirement id="phi2" type="mode_timeshare_at_least" mode="LPM"
                       ratio="0.25" scope="working-hours" device="floor1.server" />
        </requirements>
        """
    )
    reqset = smc.parse_requirements(doc)
    profiles = {d.id: bms_scenario.profiles[d.device_type] for d in bms_scenario.topology.devices}
    report = smc.verify_requirements(bms_system, reqset, profiles, root_seed=3)
    assert len(report.results) == 1
    verdict = report.results[0].verdict
    assert verdict.samples_used == smc.hoeffding_sample_size(0.25, 0.2)
    assert verdict.p_hat == 1.0  # every occupancy level keeps LPM above 0.25
    assert report.all_hold
    rows = report.to_csv_rows()
    assert rows[0] == "requirement,verdict,p_hat,samples"
    assert rows[1].startswith("phi2,Estimate,1.000000,")
    assert "floor1.server" in report.device_tables


def test_energy_share_reading_switch():
    led = day_ledger([(OM.LPM, 0.5), (OM.RX, 0.5)])
    profiles = {"mote": profile()}
    # time share of LPM is 0.5; its energy share is tiny (0.1 mA vs 20 mA)
    time_prop = smc.Property("t", smc.KIND_SHARE_AT_LEAST, device="mote",
                             mode=OM.LPM, ratio=0.4)
    energy_prop = smc.Property("e", smc.KIND_SHARE_AT_LEAST, device="mote",
                               mode=OM.LPM, ratio=0.4, reading=smc.READING_ENERGY)
    assert smc.evaluate(time_prop, {"mote": led}, profiles)
    assert not smc.evaluate(energy_prop, {"mote": led}, profiles)


def test_energy_reading_requires_whole_horizon():
    with pytest.raises(smc.SmcError, match="whole-horizon"):
        smc.Property("e", smc.KIND_SHARE_AT_LEAST, device="mote", mode=OM.LPM,
                     ratio=0.4, reading=smc.READING_ENERGY, scope=smc.SCOPE_WORK)


def test_verify_requirements_reproducible(bms_scenario, bms_system):
    import xml.etree.ElementTree as ET

    doc = ET.fromstring(
        """<requirements alpha="0.2" beta="0.2" delta="0.3" horizon-s="43200">
             <requirement id="phi2" type="mode_timeshare_at_least" mode="LPM"
                          ratio="0.25" scope="working-hours" device="floor1.server"/>
           </requirements>"""
    )
    reqset = smc.parse_requirements(doc)
    profiles = {d.id: bms_scenario.profiles[d.device_type] for d in bms_scenario.topology.devices}
    a = smc.verify_requirements(bms_system, reqset, profiles, root_seed=12)
    b = smc.verify_requirements(bms_system, reqset, profiles, root_seed=12)
    assert [(r.verdict.kind, r.verdict.p_hat, r.verdict.samples_used) for r in a.results] == [
        (r.verdict.kind, r.verdict.p_hat, r.verdict.samples_used) for r in b.results
    ]
