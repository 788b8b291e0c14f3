"""edge-push: content push and unicast control for energy-harvesting small cells."""

from edgepush.config import build_model_params, load_config
from edgepush.core.kernel import TransitionKernel
from edgepush.core.model import ModelParams, StateSpace
from edgepush.core.types import Action, BlockingReport, Event, EventType, PolicyKind, Provenance, SystemState
from edgepush.engine.event_bus import EventBus
from edgepush.policies.base import StationaryPolicy

try:
    from importlib.metadata import version
    __version__ = version("edge-push")
except Exception:
    __version__ = "0.0.0-dev"

__all__ = [
    "Action", "BlockingReport", "Event", "EventBus", "EventType", "ModelParams",
    "PolicyKind", "Provenance", "StateSpace", "StationaryPolicy", "SystemState",
    "TransitionKernel", "build_model_params", "load_config",
]
