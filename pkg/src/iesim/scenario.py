"""Scenario ingestion: energy parameter configuration, device profiles,
topology and calibration, all from one XML document.

The configuration block follows the energy-parameter taxonomy: MAC layer
(rdc-protocol, rdc-frequency, retransmissions), application layer
(service-protocol, header-size) and communication medium (interference).
See docs/scenario-schema.md for the full schema.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .energy import DeviceProfile
from .modes import MODES, OperatingMode


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Energy parameter configuration (the six tunables)

RDC_PROTOCOLS = ("ContikiMAC", "XMAC", "LPP", "nullRDC")
SERVICE_PROTOCOLS = ("CoAP", "MQTT", "HTTP")

_RDC_ALIASES = {
    "contikimac": "ContikiMAC",
    "contiki-mac": "ContikiMAC",
    "xmac": "XMAC",
    "x-mac": "XMAC",
    "lpp": "LPP",
    "nullrdc": "nullRDC",
    "none": "nullRDC",
}

DEFAULT_RDC = "XMAC"
DEFAULT_RDC_FREQUENCY = 8
DEFAULT_RETRANSMISSIONS = 4
DEFAULT_SERVICE = "CoAP"
DEFAULT_HEADER_SIZE = 48
DEFAULT_INTERFERENCE = 0.0


@dataclass(frozen=True)
class EnergyConfig:
    rdc_protocol: str = DEFAULT_RDC
    rdc_frequency: int = DEFAULT_RDC_FREQUENCY
    retransmissions: int = DEFAULT_RETRANSMISSIONS
    service_protocol: str = DEFAULT_SERVICE
    header_size: int = DEFAULT_HEADER_SIZE
    interference: float = DEFAULT_INTERFERENCE

    def __post_init__(self):
        if self.rdc_protocol not in RDC_PROTOCOLS:
            raise ConfigError(
                f"rdc-protocol: {self.rdc_protocol!r} not one of {list(RDC_PROTOCOLS)}"
            )
        f = self.rdc_frequency
        if not isinstance(f, int) or not 2 <= f <= 32 or f % 2:
            raise ConfigError(
                f"rdc-frequency: {f!r} must be an even integer in [2, 32] Hz"
            )
        r = self.retransmissions
        if not isinstance(r, int) or not 0 <= r <= 5:
            raise ConfigError(f"retransmissions: {r!r} must be an integer in [0, 5]")
        if self.service_protocol not in SERVICE_PROTOCOLS:
            raise ConfigError(
                f"service-protocol: {self.service_protocol!r} not one of {list(SERVICE_PROTOCOLS)}"
            )
        h = self.header_size
        if not isinstance(h, int) or not 32 <= h <= 64 or h % 2:
            raise ConfigError(
                f"header-size: {h!r} must be an even integer in [32, 64] bytes"
            )
        x = self.interference
        if not 0.0 <= x <= 1.0:
            raise ConfigError(f"interference: {x!r} must lie in [0, 1]")


_CONFIG_FIELDS = (
    "rdc-protocol",
    "rdc-frequency",
    "retransmissions",
    "service-protocol",
    "header-size",
    "interference",
)


def _as_element(document) -> ET.Element:
    if isinstance(document, ET.Element):
        return document
    if isinstance(document, (str, Path)) and "<" not in str(document):
        path = Path(document)
        if not path.exists():
            raise ConfigError(f"no such file: {path}")
        try:
            return ET.parse(path).getroot()
        except ET.ParseError as exc:
            raise ConfigError(f"{path}: malformed XML ({exc})") from None
    try:
        return ET.fromstring(str(document))
    except ET.ParseError as exc:
        raise ConfigError(f"malformed XML ({exc})") from None


def _int_field(name: str, text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{name}: {text!r} is not a number") from None
    if value != int(value):
        raise ConfigError(f"{name}: {text!r} must be an integer")
    return int(value)


def parse_config(document) -> EnergyConfig:
    """Validated EnergyConfig from an <energy-config> block (or a document
    containing one); absent fields take the defaults."""
    root = _as_element(document)
    block = root if root.tag == "energy-config" else root.find("energy-config")
    values = {}
    if block is not None:
        for child in block:
            if child.tag not in _CONFIG_FIELDS:
                raise ConfigError(f"unknown energy parameter element <{child.tag}>")
            values[child.tag] = (child.text or "").strip()

    kwargs = {}
    if "rdc-protocol" in values:
        raw = values["rdc-protocol"]
        proto = _RDC_ALIASES.get(raw.replace(" ", "").lower())
        if proto is None:
            raise ConfigError(f"rdc-protocol: {raw!r} not one of {list(RDC_PROTOCOLS)}")
        kwargs["rdc_protocol"] = proto
    if "rdc-frequency" in values:
        kwargs["rdc_frequency"] = _int_field("rdc-frequency", values["rdc-frequency"])
    if "retransmissions" in values:
        kwargs["retransmissions"] = _int_field("retransmissions", values["retransmissions"])
    if "service-protocol" in values:
        raw = values["service-protocol"]
        matches = [s for s in SERVICE_PROTOCOLS if s.lower() == raw.lower()]
        if not matches:
            raise ConfigError(
                f"service-protocol: {raw!r} not one of {list(SERVICE_PROTOCOLS)}"
            )
        kwargs["service_protocol"] = matches[0]
    if "header-size" in values:
        kwargs["header_size"] = _int_field("header-size", values["header-size"])
    if "interference" in values:
        try:
            kwargs["interference"] = float(values["interference"])
        except ValueError:
            raise ConfigError(f"interference: {values['interference']!r} is not a number") from None
    return EnergyConfig(**kwargs)


def render_config(config: EnergyConfig) -> ET.Element:
    el = ET.Element("energy-config")
    pairs = (
        ("rdc-protocol", config.rdc_protocol),
        ("rdc-frequency", config.rdc_frequency),
        ("retransmissions", config.retransmissions),
        ("service-protocol", config.service_protocol),
        ("header-size", config.header_size),
        ("interference", config.interference),
    )
    for tag, value in pairs:
        sub = ET.SubElement(el, tag)
        sub.text = str(value)
    return el


# --------------------------------------------------------------------------
# Topology

COMMON_RESOURCES = (
    "temperature",
    "humidity",
    "motion",
    "light-sensor",
    "alarm",
    "light-actuator",
    "thermostat",
)

# device types of the shipped four-floor building, bottom floor first
SHIPPED_FLOOR_TYPES = ("zolertia-z1", "sky", "openmote", "sensortag")


@dataclass(frozen=True)
class FloorSpec:
    level: int
    device_type: str
    resources: tuple[str, ...] = COMMON_RESOURCES


@dataclass(frozen=True)
class Device:
    id: str
    device_type: str
    role: str  # "controller" | "server" | "building-manager"
    floor: int | None = None
    resources: tuple[str, ...] = ()


@dataclass(frozen=True)
class Link:
    src: str  # reporting device
    dst: str  # consuming device


@dataclass(frozen=True)
class Topology:
    devices: tuple[Device, ...]
    links: tuple[Link, ...]

    def device(self, device_id: str) -> Device:
        for d in self.devices:
            if d.id == device_id:
                return d
        raise KeyError(device_id)

    def device_ids(self) -> list[str]:
        return [d.id for d in self.devices]


def build_bms_topology(
    floors: Sequence[FloorSpec],
    bm_device_type: str = "zolertia-z1",
    known_types: Sequence[str] | None = None,
) -> Topology:
    """Floor controller/server pairs chained down to the building manager.

    Every floor holds two devices; floor k forwards its state to floor k-1
    and floor 1 to the building-management device.
    """
    if not floors:
        raise ConfigError("a topology needs at least one floor")
    levels = sorted(f.level for f in floors)
    if levels != list(range(1, len(floors) + 1)):
        raise ConfigError(f"floor levels must be 1..{len(floors)}, got {levels}")
    if known_types is not None:
        for spec in list(floors) + [FloorSpec(0, bm_device_type)]:
            if spec.device_type not in known_types:
                raise ConfigError(
                    f"unknown device type {spec.device_type!r}; "
                    f"known profiles: {sorted(known_types)}"
                )

    devices: list[Device] = []
    links: list[Link] = []
    for spec in sorted(floors, key=lambda f: f.level):
        ctrl = f"floor{spec.level}.controller"
        srv = f"floor{spec.level}.server"
        devices.append(Device(ctrl, spec.device_type, "controller", spec.level))
        devices.append(Device(srv, spec.device_type, "server", spec.level, tuple(spec.resources)))
        links.append(Link(srv, ctrl))
        if spec.level > 1:
            links.append(Link(ctrl, f"floor{spec.level - 1}.controller"))
    devices.append(Device("bm", bm_device_type, "building-manager"))
    links.append(Link("floor1.controller", "bm"))
    return Topology(tuple(devices), tuple(links))


# --------------------------------------------------------------------------
# Workload

@dataclass(frozen=True)
class Workload:
    """Reporting schedule of the building.

    Floor servers report their resources on ``report_period_work`` seconds
    during working hours (``report_period_off`` otherwise); controllers
    forward aggregated floor state on the same schedule. The traffic regime
    is a discrete distribution of the per-replica occupancy level m, which
    divides the report periods. Actuation duty runs on a fixed,
    occupancy-independent schedule.
    """

    report_period_work: float = 30.0
    report_period_off: float = 300.0
    actuation_period_work: float = 60.0
    actuation_period_off: float = 600.0
    regime: tuple[tuple[float, float], ...] = (
        (0.7, 0.5),
        (1.0, 0.1),
        (1.5, 0.1),
        (2.5, 0.1),
        (5.0, 0.1),
        (8.0, 0.1),
    )

    def __post_init__(self):
        for period in (
            self.report_period_work,
            self.report_period_off,
            self.actuation_period_work,
            self.actuation_period_off,
        ):
            if period <= 0:
                raise ConfigError("workload periods must be positive")
        if abs(math.fsum(p for _, p in self.regime) - 1.0) > 1e-9:
            raise ConfigError("regime probabilities must sum to 1")
        if any(lv <= 0 or p < 0 for lv, p in self.regime):
            raise ConfigError("regime atoms must have positive levels")


# --------------------------------------------------------------------------
# Full scenario document

@dataclass(frozen=True)
class Scenario:
    name: str
    config: EnergyConfig
    topology: Topology
    workload: Workload
    profiles: Mapping[str, DeviceProfile]
    calibration: Mapping[str, float] = field(default_factory=dict)

    def profile_of(self, device_id: str) -> DeviceProfile:
        return self.profiles[self.topology.device(device_id).device_type]

    def with_config(self, **changes) -> "Scenario":
        return replace(self, config=replace(self.config, **changes))


def _parse_profile(el: ET.Element) -> DeviceProfile:
    name = el.get("name")
    if not name:
        raise ConfigError("<profile> needs a name attribute")
    currents: dict[OperatingMode, float] = {}
    voltages: dict[OperatingMode, float] = {}
    peripherals: dict[str, float] = {}
    vcc = None
    capacity = None
    mode_by_name = {str(m): m for m in MODES}
    for child in el:
        if child.tag == "current":
            mode = mode_by_name.get(child.get("mode", ""))
            if mode is None:
                raise ConfigError(f"profile {name}: bad current mode {child.get('mode')!r}")
            currents[mode] = float(child.text)
        elif child.tag == "voltage":
            mode = mode_by_name.get(child.get("mode", ""))
            if mode is None:
                raise ConfigError(f"profile {name}: bad voltage mode {child.get('mode')!r}")
            voltages[mode] = float(child.text)
        elif child.tag == "vcc":
            vcc = float(child.text)
        elif child.tag == "battery-capacity":
            capacity = float(child.text)
        elif child.tag == "peripheral":
            event = child.get("event")
            if not event:
                raise ConfigError(f"profile {name}: <peripheral> needs an event attribute")
            peripherals[event] = float(child.text)
        else:
            raise ConfigError(f"profile {name}: unknown element <{child.tag}>")
    if vcc is None or capacity is None:
        raise ConfigError(f"profile {name}: vcc and battery-capacity are required")
    return DeviceProfile(
        name=name,
        current_a=currents,
        vcc=vcc,
        battery_capacity_ah=capacity,
        voltage_v=voltages,
        peripheral_costs_j=peripherals,
    )


def _render_profile(profile: DeviceProfile) -> ET.Element:
    el = ET.Element("profile", name=profile.name)
    for mode in MODES:
        sub = ET.SubElement(el, "current", mode=str(mode))
        sub.text = repr(profile.current_a[mode])
    for mode, volts in profile.voltage_v.items():
        sub = ET.SubElement(el, "voltage", mode=str(mode))
        sub.text = repr(volts)
    ET.SubElement(el, "vcc").text = repr(profile.vcc)
    ET.SubElement(el, "battery-capacity").text = repr(profile.battery_capacity_ah)
    for event in sorted(profile.peripheral_costs_j):
        sub = ET.SubElement(el, "peripheral", event=event)
        sub.text = repr(profile.peripheral_costs_j[event])
    return el


def parse_scenario(document) -> Scenario:
    root = _as_element(document)
    if root.tag != "scenario":
        raise ConfigError(f"expected <scenario> root, found <{root.tag}>")
    config = parse_config(root)

    profiles: dict[str, DeviceProfile] = {}
    profiles_el = root.find("profiles")
    if profiles_el is None:
        raise ConfigError("scenario is missing <profiles>")
    for el in profiles_el.findall("profile"):
        profile = _parse_profile(el)
        profiles[profile.name] = profile

    topo_el = root.find("topology")
    if topo_el is None:
        raise ConfigError("scenario is missing <topology>")
    floors = []
    for fl in topo_el.findall("floor"):
        level = _int_field("floor level", fl.get("level", ""))
        dtype = fl.get("device-type")
        if not dtype:
            raise ConfigError(f"floor {level}: missing device-type")
        resources = tuple(r.text.strip() for r in fl.findall("resource")) or COMMON_RESOURCES
        floors.append(FloorSpec(level, dtype, resources))
    bm_el = topo_el.find("building-manager")
    bm_type = bm_el.get("device-type") if bm_el is not None else "zolertia-z1"
    topology = build_bms_topology(floors, bm_type, known_types=list(profiles))

    wl_el = root.find("workload")
    wl_kwargs = {}
    if wl_el is not None:
        scalars = {
            "report-period-working": "report_period_work",
            "report-period-offhours": "report_period_off",
            "actuation-period-working": "actuation_period_work",
            "actuation-period-offhours": "actuation_period_off",
        }
        for tag, attr in scalars.items():
            sub = wl_el.find(tag)
            if sub is not None:
                wl_kwargs[attr] = float(sub.text)
        atoms = [
            (float(r.get("level")), float(r.get("probability")))
            for r in wl_el.findall("regime")
        ]
        if atoms:
            wl_kwargs["regime"] = tuple(atoms)
    workload = Workload(**wl_kwargs)

    calibration: dict[str, float] = {}
    cal_el = root.find("calibration")
    if cal_el is not None:
        for par in cal_el.findall("param"):
            calibration[par.get("name")] = float(par.text)

    return Scenario(
        name=root.get("name", "scenario"),
        config=config,
        topology=topology,
        workload=workload,
        profiles=profiles,
        calibration=calibration,
    )


def render_scenario(scenario: Scenario) -> ET.Element:
    root = ET.Element("scenario", name=scenario.name)
    root.append(render_config(scenario.config))

    topo = ET.SubElement(root, "topology")
    floors = sorted(
        {d.floor for d in scenario.topology.devices if d.floor is not None}
    )
    for level in floors:
        server = scenario.topology.device(f"floor{level}.server")
        fl = ET.SubElement(topo, "floor", level=str(level))
        fl.set("device-type", server.device_type)
        for res in server.resources:
            ET.SubElement(fl, "resource").text = res
    bm = scenario.topology.device("bm")
    ET.SubElement(topo, "building-manager", {"device-type": bm.device_type})

    wl = ET.SubElement(root, "workload")
    w = scenario.workload
    ET.SubElement(wl, "report-period-working").text = repr(w.report_period_work)
    ET.SubElement(wl, "report-period-offhours").text = repr(w.report_period_off)
    ET.SubElement(wl, "actuation-period-working").text = repr(w.actuation_period_work)
    ET.SubElement(wl, "actuation-period-offhours").text = repr(w.actuation_period_off)
    for level, prob in w.regime:
        ET.SubElement(wl, "regime", level=repr(level), probability=repr(prob))

    profs = ET.SubElement(root, "profiles")
    for name in sorted(scenario.profiles):
        profs.append(_render_profile(scenario.profiles[name]))

    cal = ET.SubElement(root, "calibration")
    for name in sorted(scenario.calibration):
        ET.SubElement(cal, "param", name=name).text = repr(scenario.calibration[name])
    return root


def load_scenario(path) -> Scenario:
    return parse_scenario(path)


def save_scenario(scenario: Scenario, path) -> None:
    tree = ET.ElementTree(render_scenario(scenario))
    ET.indent(tree)
    tree.write(path, encoding="unicode")
