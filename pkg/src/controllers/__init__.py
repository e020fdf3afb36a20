"""
Controllers package for LEO coverage runs.

- ScenarioController: scenario files, overrides, fingerprints and canonical emission
- SweepController: sweep rows and CSV output
- SimulationController: Monte Carlo target curves and N_eff fits
"""

from .scenario_controller import ScenarioController
from .simulation_controller import SimulationController
from .sweep_controller import SweepController

__all__ = ['ScenarioController', 'SimulationController', 'SweepController']
