import threading
from enum import Enum, auto
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Callable, DefaultDict, Iterator, List, Mapping
import logging

event_system_logger = logging.getLogger(__name__)

Handler = Callable[..., Any]


class SimulationEventType(Enum):
    """Progress events published while datasets, experiments and sweeps run."""
    # Experiment lifecycle
    EXPERIMENT_STARTED = auto()      # total_repetitions
    REPETITION_COMPLETED = auto()    # repetition, state (final RunState)
    EXPERIMENT_COMPLETED = auto()    # report

    # Sweeps and validation
    SWEEP_POINT_COMPLETED = auto()   # label, value
    ORACLE_COMPLETED = auto()        # result

    # Dataset generation
    DATASET_WRITTEN = auto()         # path, agents


def _handler_name(handler: Handler) -> str:
    return getattr(handler, '__name__', repr(handler))


class EventPublisher:
    """
    Thread-safe publish-subscribe hub. Repetitions run on worker threads, so
    handlers may be called from any thread and must not block for long.
    """
    def __init__(self):
        self._subscribers: DefaultDict[SimulationEventType, List[Handler]] = defaultdict(list)
        self._lock = threading.Lock()

    def subscribe(self, event_type: SimulationEventType, handler: Handler):
        with self._lock:
            self._subscribers[event_type].append(handler)
        event_system_logger.debug(f"{_handler_name(handler)} subscribed to {event_type.name}")

    def unsubscribe(self, event_type: SimulationEventType, handler: Handler):
        with self._lock:
            handlers = self._subscribers[event_type]
            if handler not in handlers:
                event_system_logger.warning(f"{_handler_name(handler)} is not subscribed to {event_type.name}; nothing to remove.")
                return
            handlers.remove(handler)
        event_system_logger.debug(f"{_handler_name(handler)} unsubscribed from {event_type.name}")

    def subscriber_count(self, event_type: SimulationEventType) -> int:
        with self._lock:
            return len(self._subscribers.get(event_type, ()))

    def publish(self, event_type: SimulationEventType, *args: Any, **kwargs: Any):
        """Calls every handler of event_type. A failing handler is logged and skipped."""
        with self._lock:
            snapshot = tuple(self._subscribers.get(event_type, ()))

        # Payloads carry whole states and reports, so only their keys are logged.
        event_system_logger.debug(f"{event_type.name} -> {len(snapshot)} handler(s), payload keys {sorted(kwargs)}")
        for handler in snapshot:
            try:
                handler(*args, **kwargs)
            except Exception as e:
                event_system_logger.error(f"Handler {_handler_name(handler)} failed on {event_type.name}: {e}", exc_info=True)

    @contextmanager
    def subscriptions(self, handlers: Mapping[SimulationEventType, Handler]) -> Iterator[None]:
        """Subscribes every handler for the duration of a with-block."""
        for event_type, handler in handlers.items():
            self.subscribe(event_type, handler)
        try:
            yield
        finally:
            for event_type, handler in handlers.items():
                self.unsubscribe(event_type, handler)
