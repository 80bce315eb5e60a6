from .device import (BUILTIN_PROFILES, DeviceProfile, FaultSpec, MockDevice, ProfileError,
                     builtin_corpus, load_profile)
from .server import MockServer, PortInUse, control_command, serve

__all__ = [
    "BUILTIN_PROFILES", "DeviceProfile", "FaultSpec", "MockDevice", "ProfileError",
    "builtin_corpus", "load_profile", "MockServer", "PortInUse", "control_command", "serve",
]
