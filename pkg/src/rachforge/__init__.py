"""Learning-based random-access control for bursty massive IoT traffic."""
__version__ = "0.1.0"

from .rach import ActionSet, EnergyModel, FrameObservation, RachEnv, device_delay, device_energy
from .traffic import TrafficProfile

__all__ = ["ActionSet", "EnergyModel", "FrameObservation", "RachEnv", "TrafficProfile",
           "device_delay", "device_energy", "__version__"]
