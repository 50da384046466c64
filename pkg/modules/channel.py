"""
channel.py

Radio link between train transmitters and trackside sensors, modelled as a
fault process over whole frames: loss, duplication and a fixed delay.
Frames are never altered in flight.
"""
import heapq
import logging
from dataclasses import dataclass
from typing import Hashable, List, Tuple

import numpy as np

from .protocol import EncodedFrame
from .settings import InvalidConfig

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64 - 1


@dataclass(frozen=True)
class ChannelConfig:
    loss_prob: float = 0.0
    dup_prob: float = 0.0
    delay_s: float = 0.0
    seed: int = 0
    # copies a transmitter emits each time it passes a sensor
    repeats: int = 1

    def __post_init__(self):
        for name in ("loss_prob", "dup_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1], got {value}")
        if not self.delay_s >= 0.0:
            raise InvalidConfig(f"delay_s must be >= 0, got {self.delay_s}")
        if not 0 <= self.seed <= MAX_SEED:
            raise InvalidConfig(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.repeats < 1:
            raise InvalidConfig(f"repeats must be >= 1, got {self.repeats}")


@dataclass(frozen=True)
class Delivery:
    frame: EncodedFrame
    sensor_id: Hashable
    deliver_at: float


def new_rng_state(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def transmit(frame: EncodedFrame, sensor_id, send_time: float,
             config: ChannelConfig, rng_state: np.random.Generator) -> List[Delivery]:
    """Pass one frame through the link.

    Exactly two draws are taken from rng_state per call whatever the outcome,
    so the stream position after a call does not depend on the fault drawn.
    """
    if send_time < 0:
        raise ValueError(f"send_time must be >= 0, got {send_time}")
    lose_draw, dup_draw = rng_state.random(2)
    if lose_draw < config.loss_prob:
        return []
    copies = 2 if dup_draw < config.dup_prob else 1
    deliver_at = send_time + config.delay_s
    return [Delivery(bytes(frame), sensor_id, deliver_at) for _ in range(copies)]


class RadioChannel:
    """A channel instance owned by the simulation loop: config, seeded
    generator and the frames currently in flight."""

    def __init__(self, config: ChannelConfig):
        self.config = config
        self.rng = new_rng_state(config.seed)
        self._in_flight: List[Tuple[float, int, Delivery]] = []
        self._seq = 0

    def send(self, frame: EncodedFrame, sensor_id, send_time: float) -> List[Delivery]:
        deliveries = transmit(frame, sensor_id, send_time, self.config, self.rng)
        if not deliveries:
            logger.debug("frame %s to %s lost at t=%.3f", frame.hex(), sensor_id, send_time)
        for delivery in deliveries:
            heapq.heappush(self._in_flight, (delivery.deliver_at, self._seq, delivery))
            self._seq += 1
        return deliveries

    def due(self, now: float) -> List[Delivery]:
        ready = []
        while self._in_flight and self._in_flight[0][0] <= now:
            ready.append(heapq.heappop(self._in_flight)[2])
        return ready

    @property
    def in_flight(self) -> int:
        return len(self._in_flight)
