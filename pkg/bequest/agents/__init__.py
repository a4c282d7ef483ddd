from .checker_agent import CheckerAgent
from .narrator_agent import NarratorAgent
from .simulation_agent import SimulationAgent
from .tabulator_agent import TabulatorAgent

__all__ = ["CheckerAgent", "NarratorAgent", "SimulationAgent", "TabulatorAgent"]
