"""
Decentralized plan selection under hard constraints.
Exposes the package-wide event publisher used for progress reporting.
"""
from .event_system import EventPublisher, SimulationEventType

event_publisher = EventPublisher()

__all__ = ["event_publisher", "EventPublisher", "SimulationEventType"]
