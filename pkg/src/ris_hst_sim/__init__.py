"""RIS-assisted high-speed-train MISO downlink simulator."""

__version__ = "0.1.0"
