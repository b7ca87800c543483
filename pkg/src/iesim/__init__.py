"""Energy simulation and statistical model checking for networks of
battery-powered IoT devices."""

__version__ = "0.1.0"
