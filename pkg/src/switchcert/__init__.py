"""Semi-device-independent certification of indefinite causal order in the quantum switch."""

__version__ = "0.1.0"
SPEC_VERSION = "1"
