"""Tag-based physical-layer authentication and LEO edge offloading simulator."""

__version__ = "0.1.0"
