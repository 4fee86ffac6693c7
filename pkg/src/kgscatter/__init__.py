"""High-momenta Klein-Gordon scattering toolkit."""

__version__ = "0.1.0"
