"""Uplink channel estimation under pilot spoofing attacks.

Monte Carlo simulator for a multi-antenna base station with a uniform
linear array, legitimate users transmitting orthogonal pilots and
eavesdroppers replaying the same pilots.
"""

from spoofsim.errors import ConfigurationError, ModelError, NotIdentifiableError

__all__ = ["ConfigurationError", "ModelError", "NotIdentifiableError"]
__version__ = "0.1.0"
