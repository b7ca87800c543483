"""Mapping from energy parameters to mode-timing distributions.

The paper-level qualitative laws this realizes, per energy parameter:

* RDC protocol: nullRDC pins the radio in long listening holds; LPP sleeps
  deepest and longest; ContikiMAC pays more per wake-up and per send than
  X-MAC (full-packet wake signal vs a short pulse).
* RDC frequency: more channel checks per second, so more wake-up cost.
* Retransmissions: collisions trigger a bounded retransmission loop, so
  expected transmit time never decreases in the retry budget.
* Service protocol: heavier protocols spend more radio time per message
  (CoAP < MQTT < HTTP).
* Header size: bigger headers transmit longer but skip compression work,
  so CPU time falls as header size grows.
* Interference: collisions become likelier and channel activity stretches
  both channel checks and per-message radio time.

Quantitative coefficients live in the scenario's calibration table; the
shipped defaults were fitted by parameter search against the case-study
regression targets (see tools/calibrate_search.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from . import model as m
from . import stochastics as st
from .scenario import ConfigError, EnergyConfig

PROTO_KEY = {"ContikiMAC": "cmac", "XMAC": "xmac", "LPP": "lpp", "nullRDC": "null"}

DEFAULT_CALIBRATION: dict[str, float] = {
    # per-wakeup channel-check listen (s) and modeled wake-ups per cycle
    "xmac.check-s": 0.00045,
    "cmac.check-s": 0.0016,
    "lpp.check-s": 0.0003,
    "xmac.wake-batch": 128.0,
    "cmac.wake-batch": 128.0,
    "lpp.wake-batch": 256.0,
    # sender wake-signal overhead per transmission (s)
    "xmac.strobe-s": 0.10,
    "cmac.strobe-s": 0.22,
    "lpp.strobe-s": 0.02,
    "null.strobe-s": 0.005,
    # per-message response listen / receive (s, before scaling)
    "xmac.resp-s": 0.26,
    "cmac.resp-s": 0.88,
    "lpp.resp-s": 0.04,
    "null.resp-s": 0.03,
    "xmac.recv-s": 0.18,
    "cmac.recv-s": 0.45,
    "lpp.recv-s": 0.04,
    "null.recv-s": 0.03,
    # congestion scaling of listening time: 1 + lin*m + quad*m^2
    "xmac.cong-lin": 0.30,
    "cmac.cong-lin": 0.20,
    "lpp.cong-lin": 0.03,
    "null.cong-lin": 0.0,
    "xmac.cong-quad": 0.17,
    "cmac.cong-quad": 2.4,
    "lpp.cong-quad": 0.005,
    "null.cong-quad": 0.0,
    # nullRDC keeps the radio listening in long holds
    "null.sleep-s": 4.0,
    "null.hold-s": 10.0,
    # radio and processing scale
    "tx.per-byte-s": 0.0006,
    "payload-bytes": 64.0,
    "cpu.base-s": 0.06,
    "cpu.per-missing-header-byte-s": 0.002,
    # service protocol per-message radio multipliers
    "service.coap": 1.0,
    "service.mqtt": 1.35,
    "service.http": 1.6,
    # collisions: ambient floor plus interference slope (probability)
    "collision.base": 0.01,
    "collision.per-interference": 0.6,
    "collision.per-traffic": 0.0,
    # interference stretches checks and per-message radio time
    "interference.check-gain": 4000.0,
    "interference.radio-gain": 4.0,
    # boot settle window
    "activate-lo-s": 0.05,
    "activate-hi-s": 0.25,
    # relative sigma of normal duration models
    "sigma-frac": 0.08,
}


@dataclass(frozen=True)
class Calibration:
    """Named coefficients of the effect model; unknown names are rejected."""

    overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.overrides) - set(DEFAULT_CALIBRATION)
        if unknown:
            raise ConfigError(f"unknown calibration parameters: {sorted(unknown)}")

    def __getitem__(self, name: str) -> float:
        if name in self.overrides:
            return self.overrides[name]
        return DEFAULT_CALIBRATION[name]

    def as_dict(self) -> dict[str, float]:
        merged = dict(DEFAULT_CALIBRATION)
        merged.update(self.overrides)
        return merged


@dataclass(frozen=True)
class ModeTimingModel:
    """Duration rules for every transition of the device automaton, derived
    deterministically from (EnergyConfig, device type, calibration)."""

    device_type: str
    protocol: str
    rules: Mapping[str, m.DurationRule]
    wakes_per_second: float
    p_collision: float
    max_retries: int

    def __getitem__(self, label: str) -> m.DurationRule:
        return self.rules[label]

    def __contains__(self, label: str) -> bool:
        return label in self.rules

    def keys(self):
        return self.rules.keys()

    # analytic views used by the monotonicity laws and their tests

    def mean_lpm_sojourn(self) -> float:
        """Mean sleep stretch between radio activities."""
        return self.rules["initDutyCycle"].mean()

    def mean_rx_check_sojourn(self, env_m: float = 1.0) -> float:
        """Mean listening dwell per modeled wake-up cycle."""
        return self.rules["wakeup"].mean(env_m)

    def check_share(self, env_m: float = 1.0) -> float:
        """Idle fraction of time spent on channel checks."""
        check = self.mean_rx_check_sojourn(env_m)
        return check / (check + self.mean_lpm_sojourn())

    def expected_tx_per_send(self) -> float:
        """Mean transmit seconds per application send, retransmissions
        included: the collision loop retries while the draw keeps failing,
        up to the retry budget."""
        single = self.rules["sndPacket"].mean()
        p = self.p_collision
        expected_retries = sum(p ** k for k in range(1, self.max_retries + 1))
        return single * (1.0 + expected_retries)

    def cpu_per_send(self) -> float:
        return self.rules["process"].mean()

    def per_message_radio_s(self, env_m: float = 1.0) -> float:
        """Radio seconds a message costs end to end (send, response listen,
        receive at the consumer)."""
        return (
            self.expected_tx_per_send()
            + self.rules["respWait"].mean(env_m)
            + self.rules["recv"].mean(env_m)
        )


def effect_model(
    config: EnergyConfig, device_type: str, calib: Calibration | Mapping[str, float] | None = None
) -> ModeTimingModel:
    """Deterministic (config, device type, calibration) -> timing mapping.

    Transmit and processing dwell times follow quantized Poisson models,
    listening and sleeping dwell times follow normals, which mirrors how
    trace data of the four modes is characterized downstream.
    """
    if calib is None:
        calib = Calibration()
    elif not isinstance(calib, Calibration):
        calib = Calibration(dict(calib))
    p = PROTO_KEY[config.rdc_protocol]
    x = config.interference
    sigma = calib["sigma-frac"]

    def normal(mean_s: float) -> st.DistributionRef:
        return st.normal(mean_s, max(mean_s * sigma, 1e-6))

    def quantized(mean_s: float) -> st.DistributionRef:
        # Poisson draw in 1 ms quanta with the requested mean
        return st.poisson(max(mean_s, 1e-4) / 0.001, quantum=0.001)

    cong_lin = calib[f"{p}.cong-lin"]
    cong_quad = calib[f"{p}.cong-quad"]
    check_stretch = 1.0 + calib["interference.check-gain"] * x
    radio_stretch = (1.0 + calib["interference.radio-gain"] * x) * calib[
        f"service.{config.service_protocol.lower()}"
    ]

    if p == "null":
        sleep_s = calib["null.sleep-s"]
        check_s = calib["null.hold-s"] * check_stretch
        wakes_per_second = 1.0 / (sleep_s + check_s)
    else:
        batch = calib[f"{p}.wake-batch"]
        sleep_s = batch / config.rdc_frequency
        check_s = batch * calib[f"{p}.check-s"] * check_stretch
        wakes_per_second = float(config.rdc_frequency)

    bytes_total = config.header_size + calib["payload-bytes"]
    tx_single = (calib[f"{p}.strobe-s"] + bytes_total * calib["tx.per-byte-s"]) * radio_stretch
    cpu_s = (
        calib["cpu.base-s"]
        + (64 - config.header_size) * calib["cpu.per-missing-header-byte-s"]
    )
    p_coll = min(
        1.0, calib["collision.base"] + calib["collision.per-interference"] * x
    )

    rules: dict[str, m.DurationRule] = {
        "activate": m.DistDuration(st.uniform(calib["activate-lo-s"], calib["activate-hi-s"])),
        "process": m.DistDuration(quantized(cpu_s)),
        "sndPacket": m.DistDuration(quantized(tx_single)),
        "retx": m.DistDuration(quantized(tx_single)),
        "recv": m.TrafficScaledDuration(
            normal(calib[f"{p}.recv-s"] * radio_stretch), cong_lin, cong_quad
        ),
        "respWait": m.TrafficScaledDuration(
            normal(calib[f"{p}.resp-s"] * radio_stretch), cong_lin, cong_quad
        ),
        "initDutyCycle": m.DistDuration(normal(sleep_s)),
        "wakeup": m.TrafficScaledDuration(normal(check_s), cong_lin, cong_quad),
        "tick": m.DistDuration(st.dirac(0.0)),
    }
    return ModeTimingModel(
        device_type=device_type,
        protocol=config.rdc_protocol,
        rules=rules,
        wakes_per_second=wakes_per_second,
        p_collision=p_coll,
        max_retries=config.retransmissions,
    )
