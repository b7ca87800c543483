import pytest

from iesim import builder, scenario as scn
from iesim.cli import default_requirements_path, default_scenario_path
from iesim.energy import DeviceProfile
from iesim.modes import OperatingMode as OM


@pytest.fixture(scope="session")
def bms_scenario():
    return scn.load_scenario(default_scenario_path())


@pytest.fixture(scope="session")
def bms_system(bms_scenario):
    return builder.system_from_scenario(bms_scenario)


@pytest.fixture(scope="session")
def requirements_path():
    return default_requirements_path()


@pytest.fixture
def simple_profile():
    return DeviceProfile(
        name="test-mote",
        current_a={OM.LPM: 0.0001, OM.CPU: 0.0018, OM.TX: 0.0174, OM.RX: 0.0197},
        vcc=3.0,
        battery_capacity_ah=2.0,
        peripheral_costs_j={"read:temperature": 0.05, "actuate:thermostat": 1.0},
    )
