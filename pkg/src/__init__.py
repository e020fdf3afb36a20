"""
Coverage probability and achievable rate of LEO satellite downlinks: uniform-sphere
analytics, a Monte Carlo simulator with Walker constellations, and effective-size fits.
"""
from .leo_coverage_cli import main
from .metrics import ScenarioConfig, RadioParams, SinrThreshold, coverage, rate
from .geometry import GeometryParams
from .visibility import NetworkParams
