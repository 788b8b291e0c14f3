from edgepush.core.channel import ChannelParams, DistanceGrid, FadingModel, build_distance_grid
from edgepush.core.content import Catalog, zipf_popularity
from edgepush.core.kernel import TransitionKernel
from edgepush.core.model import ModelParams, StateSpace, feasible_actions, stage_cost
from edgepush.core.types import Action, BlockingReport, Event, EventType, PolicyKind, Provenance, SystemState

__all__ = [
    "Action", "BlockingReport", "Catalog", "ChannelParams", "DistanceGrid", "Event",
    "EventType", "FadingModel", "ModelParams", "PolicyKind", "Provenance", "StateSpace",
    "SystemState", "TransitionKernel", "build_distance_grid", "feasible_actions",
    "stage_cost", "zipf_popularity",
]
