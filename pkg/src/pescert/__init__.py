"""Device-independent randomness certification and self-testing for
partially entangled two-qubit states, with a simulated experiment pipeline."""

__version__ = "0.1.0"
