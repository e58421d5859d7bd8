"""Discrete-event simulation of the three routing planes."""

from .config import InvalidConfig, ScenarioConfig, from_dict, load_toml
from .engine import RunResult, Simulator, TooManyMalicious, run

__all__ = ["InvalidConfig", "ScenarioConfig", "from_dict", "load_toml", "RunResult", "Simulator", "TooManyMalicious", "run"]
