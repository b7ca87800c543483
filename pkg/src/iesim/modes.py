"""Operating modes of a radio duty-cycled device."""

from enum import Enum


class OperatingMode(Enum):
    """The four energy-relevant states a device can occupy.

    Every recorded time interval belongs to exactly one mode; a device is
    never in two modes at once.
    """

    LPM = "LPM"
    CPU = "CPU"
    TX = "Tx"
    RX = "Rx"

    def __str__(self) -> str:
        return self.value


MODES = (OperatingMode.LPM, OperatingMode.CPU, OperatingMode.TX, OperatingMode.RX)

# Stable indices shared with the lowered simulation program.
MODE_INDEX = {m: i for i, m in enumerate(MODES)}
