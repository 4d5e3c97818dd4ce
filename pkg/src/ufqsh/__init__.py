"""Capital processes for the unbounded forecasting game with quadratic and
stronger hedges: hedges, the betting protocol, Skeptic's LIL strategies,
Forecaster/Reality players and path diagnostics."""

from .constants import ConstantBundle, demo_constants, select_constants, verify_bundle
from .engine import Trace, play
from .hedge import HedgeFunction, logsquare_hedge, power_hedge, validate_assumption1
from .kernels import BACKEND
from .numerics import SignedLogValue
from .protocol import (CollateralViolation, ForecasterMove, GameState, IncoherentForecast,
                       ProtocolError, ProtocolKind, TicketStakes, check_coherence, new_game, step)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CollateralViolation",
    "ConstantBundle",
    "ForecasterMove",
    "GameState",
    "HedgeFunction",
    "IncoherentForecast",
    "ProtocolError",
    "ProtocolKind",
    "SignedLogValue",
    "TicketStakes",
    "Trace",
    "check_coherence",
    "demo_constants",
    "logsquare_hedge",
    "new_game",
    "play",
    "power_hedge",
    "select_constants",
    "step",
    "validate_assumption1",
    "verify_bundle",
]
