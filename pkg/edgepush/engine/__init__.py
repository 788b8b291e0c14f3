from edgepush.engine.event_bus import EventBus
from edgepush.engine.simulator import SimConfig, SimReport, run

__all__ = ["EventBus", "SimConfig", "SimReport", "run"]
