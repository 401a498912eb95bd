"""Calendars and the scripted propose/counter/accept meeting negotiation."""
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import List, Optional

from .errors import CalendarConflictError, InvalidArgumentError, NegotiationFailedError
from .utils import get_logger

logger = get_logger(__name__)

DEFAULT_DURATION = timedelta(minutes=60)
DEFAULT_STEP = timedelta(minutes=30)
DEFAULT_MAX_ROUNDS = 5


@dataclass(frozen=True)
class Event:
    title: str
    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise InvalidArgumentError(f"event '{self.title}' ends before it starts")

    def overlaps(self, start: datetime, end: datetime) -> bool:
        return self.start < end and start < self.end


@dataclass(frozen=True)
class TimeWindow:
    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise InvalidArgumentError("time window must have positive length")


@dataclass
class Calendar:
    owner: str
    events: List[Event] = field(default_factory=list)

    def is_free(self, start: datetime, end: datetime) -> bool:
        return not any(e.overlaps(start, end) for e in self.events)

    def add_event(self, event: Event) -> Event:
        if not self.is_free(event.start, event.end):
            raise CalendarConflictError(
                f"{self.owner} is busy between {event.start:%a %H:%M} and {event.end:%H:%M}"
            )
        self.events.append(event)
        self.events.sort(key=lambda e: e.start)
        return event

    def earliest_free_slot(
        self,
        window: TimeWindow,
        duration: timedelta = DEFAULT_DURATION,
        not_before: Optional[datetime] = None,
        step: timedelta = DEFAULT_STEP,
    ) -> Optional[datetime]:
        t = max(window.start, not_before) if not_before else window.start
        while t + duration <= window.end:
            if self.is_free(t, t + duration):
                return t
            t += step
        return None


@dataclass(frozen=True)
class NegotiationOutcome:
    start: datetime
    end: datetime
    messages: int
    rounds: int


def negotiate_schedule(
    requestor: Calendar,
    counterpart: Calendar,
    window: TimeWindow,
    duration: timedelta = DEFAULT_DURATION,
    title: str = "Meeting",
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> NegotiationOutcome:
    """
    The requestor proposes its earliest free slot. The other side accepts if
    it is free too, otherwise it answers with its own earliest free slot no
    earlier than the proposal, which becomes the next proposal. Each proposal
    and the final accept count as one message. On success both calendars
    gain the event.
    """
    if max_rounds < 1:
        raise InvalidArgumentError("max_rounds must be >= 1")
    proposal = requestor.earliest_free_slot(window, duration)
    if proposal is None:
        raise NegotiationFailedError(f"{requestor.owner} has no free slot in the window", 0)

    responder = counterpart
    messages = 0
    for rounds in range(1, max_rounds + 1):
        messages += 1
        end = proposal + duration
        if responder.is_free(proposal, end):
            messages += 1
            requestor.add_event(Event(title, proposal, end))
            counterpart.add_event(Event(title, proposal, end))
            return NegotiationOutcome(start=proposal, end=end, messages=messages, rounds=rounds)
        counter = responder.earliest_free_slot(window, duration, not_before=proposal)
        if counter is None:
            raise NegotiationFailedError(
                f"{responder.owner} has no free slot after {proposal:%a %H:%M}", messages
            )
        proposal = counter
        responder = requestor if responder is counterpart else counterpart
    raise NegotiationFailedError(
        f"{requestor.owner} and {counterpart.owner} found no common slot in {max_rounds} rounds", messages
    )
