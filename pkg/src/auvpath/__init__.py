"""Energy-optimal 3D path following for a four-thruster AUV under ocean currents."""

__version__ = "0.1.0"
