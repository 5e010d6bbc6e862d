"""bifikle: bifidelity KLE surrogates with active learning."""

__version__ = "0.1.0"
