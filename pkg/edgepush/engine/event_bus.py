"""Synchronous fan-out of solver iterations, sweep rows and anomalies."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from typing import Any, Callable

from edgepush.core.types import Event, EventType

logger = logging.getLogger(__name__)

EventCallback = Callable[[Event], None]


class EventBus:
    """Delivers each event to the subscribers of its type, then to wildcards.

    Delivery happens in the publisher's thread and in publish order. A
    subscriber that raises is logged and counted in ``failures``; the
    remaining subscribers and the publisher carry on.
    """

    def __init__(self) -> None:
        self._subscribers: dict[EventType | None, list[EventCallback]] = defaultdict(list)
        self.failures: Counter[EventType] = Counter()

    def subscribe(self, callback: EventCallback, event_type: EventType | None = None) -> Callable[[], None]:
        """Register ``callback`` (all types when ``event_type`` is None); returns its unsubscriber."""
        self._subscribers[event_type].append(callback)

        def unsubscribe() -> None:
            subs = self._subscribers.get(event_type, [])
            if callback in subs:
                subs.remove(callback)

        return unsubscribe

    def wants(self, event_type: EventType) -> bool:
        return bool(self._subscribers.get(event_type) or self._subscribers.get(None))

    def publish(self, event: Event) -> None:
        for cb in self._subscribers.get(event.event_type, []) + self._subscribers.get(None, []):
            try:
                cb(event)
            except Exception:
                self.failures[event.event_type] += 1
                logger.exception("Subscriber failed on %s from %s", event.event_type.name, event.source)

    def emit(self, event_type: EventType, source: str, payload: dict[str, Any]) -> Event | None:
        """Build and publish an event; nothing is built when nobody listens."""
        if not self.wants(event_type):
            return None
        event = Event(event_type, source, dict(payload))
        self.publish(event)
        return event

    def clear(self) -> None:
        self._subscribers.clear()
        self.failures.clear()
