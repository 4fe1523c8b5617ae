"""Mean-field diffusively coupled doubling maps: finite sites and a continuum of sites."""

__version__ = "0.1.0"
