"""Monte Carlo laboratory for UAV TDOA localization under merged-peak PRS spoofing."""

__version__ = "0.1.0"
