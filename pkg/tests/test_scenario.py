import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iesim import scenario as scn


def test_defaults_from_empty_parameter_block():
    cfg = scn.parse_config("<scenario><energy-config/></scenario>")
    assert cfg == scn.EnergyConfig(
        rdc_protocol="XMAC",
        rdc_frequency=8,
        retransmissions=4,
        service_protocol="CoAP",
        header_size=48,
        interference=0.0,
    )


def test_document_without_block_is_all_defaults():
    assert scn.parse_config("<scenario/>") == scn.EnergyConfig()


@pytest.mark.parametrize(
    "field,value,fragment",
    [
        ("rdc-frequency", "7", "even"),
        ("rdc-frequency", "34", "[2, 32]"),
        ("rdc-frequency", "0", "[2, 32]"),
        ("retransmissions", "7", "[0, 5]"),
        ("retransmissions", "-1", "[0, 5]"),
        ("interference", "1.5", "[0, 1]"),
        ("interference", "-0.1", "[0, 1]"),
        ("header-size", "33", "even"),
        ("header-size", "30", "[32, 64]"),
        ("rdc-protocol", "TDMA", "rdc-protocol"),
        ("service-protocol", "FTP", "service-protocol"),
    ],
)
def test_out_of_range_values_name_the_field(field, value, fragment):
    doc = f"<energy-config><{field}>{value}</{field}></energy-config>"
    with pytest.raises(scn.ConfigError) as exc:
        scn.parse_config(doc)
    assert field in str(exc.value)
    assert fragment in str(exc.value)


def test_protocol_spellings_accepted():
    for raw, want in [
        ("X-MAC", "XMAC"),
        ("xmac", "XMAC"),
        ("Contiki-MAC", "ContikiMAC"),
        ("contikimac", "ContikiMAC"),
        ("nullRDC", "nullRDC"),
        ("LPP", "LPP"),
    ]:
        doc = f"<energy-config><rdc-protocol>{raw}</rdc-protocol></energy-config>"
        assert scn.parse_config(doc).rdc_protocol == want


def test_malformed_document():
    with pytest.raises(scn.ConfigError, match="malformed"):
        scn.parse_config("<scenario><energy-config>")


valid_configs = st.builds(
    scn.EnergyConfig,
    rdc_protocol=st.sampled_from(scn.RDC_PROTOCOLS),
    rdc_frequency=st.integers(1, 16).map(lambda k: 2 * k),
    retransmissions=st.integers(0, 5),
    service_protocol=st.sampled_from(scn.SERVICE_PROTOCOLS),
    header_size=st.integers(16, 32).map(lambda k: 2 * k),
    interference=st.floats(0.0, 1.0, allow_nan=False),
)


@given(valid_configs)
@settings(max_examples=200)
def test_config_render_parse_round_trip(cfg):
    rendered = ET.tostring(scn.render_config(cfg), encoding="unicode")
    assert scn.parse_config(rendered) == cfg


def test_shipped_bms_topology(bms_scenario):
    topo = bms_scenario.topology
    assert len(topo.devices) == 9  # 4 floors x 2 + building manager
    assert len(topo.links) == 8
    roles = {d.id: d.role for d in topo.devices}
    assert roles["bm"] == "building-manager"
    assert roles["floor1.controller"] == "controller"
    assert topo.device("floor1.server").device_type == "zolertia-z1"
    assert topo.device("floor2.server").device_type == "sky"
    assert topo.device("floor3.server").device_type == "openmote"
    assert topo.device("floor4.server").device_type == "sensortag"
    # the forwarding chain is rooted at the building manager
    dst_of = {l.src: l.dst for l in topo.links if "controller" in l.src}
    assert dst_of["floor4.controller"] == "floor3.controller"
    assert dst_of["floor1.controller"] == "bm"


def test_single_floor_topology():
    topo = scn.build_bms_topology([scn.FloorSpec(1, "sky")], bm_device_type="sky")
    assert len(topo.devices) == 3
    chain = [l for l in topo.links if l.src == "floor1.controller"]
    assert chain == [scn.Link("floor1.controller", "bm")]


def test_unknown_device_type_lists_known_profiles():
    with pytest.raises(scn.ConfigError, match="ESP32") as exc:
        scn.build_bms_topology(
            [scn.FloorSpec(1, "ESP32")], known_types=["sky", "zolertia-z1"]
        )
    assert "sky" in str(exc.value)


def test_topology_requires_a_floor():
    with pytest.raises(scn.ConfigError):
        scn.build_bms_topology([])


def test_scenario_round_trip(tmp_path, bms_scenario):
    path = tmp_path / "roundtrip.xml"
    scn.save_scenario(bms_scenario, path)
    again = scn.load_scenario(path)
    assert again.config == bms_scenario.config
    assert again.topology == bms_scenario.topology
    assert again.workload == bms_scenario.workload
    assert again.profiles == bms_scenario.profiles
    assert dict(again.calibration) == dict(bms_scenario.calibration)


def test_workload_validation():
    with pytest.raises(scn.ConfigError):
        scn.Workload(report_period_work=0.0)
    with pytest.raises(scn.ConfigError):
        scn.Workload(regime=((1.0, 0.5), (2.0, 0.4)))


def test_missing_file():
    with pytest.raises(scn.ConfigError, match="no such file"):
        scn.load_scenario("/nonexistent/path.xml")
