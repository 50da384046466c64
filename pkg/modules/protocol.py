"""
protocol.py

Train packet and its radio frame.

Frame layout (5 octets):
    0     preamble 0xA5
    1-2   train id, big-endian
    3     phase (0x00 head transmitter, 0x01 tail transmitter)
    4     checksum over octets 0-3
"""
import struct
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import NewType, Sequence

PREAMBLE = 0xA5
FRAME_LEN = 5
MAX_TRAIN_ID = 0xFFFF

TrainId = NewType("TrainId", int)
EncodedFrame = bytes

_HEADER = struct.Struct(">BHB")


class Phase(IntEnum):
    HEAD = 0
    TAIL = 1


class DecodeErrorKind(Enum):
    BAD_LENGTH = "BadLength"
    BAD_PREAMBLE = "BadPreamble"
    BAD_CHECKSUM = "BadChecksum"
    BAD_PHASE = "BadPhase"


class DecodeError(ValueError):
    def __init__(self, kind: DecodeErrorKind, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)


def train_id(value: int) -> TrainId:
    if not isinstance(value, int) or not 0 <= value <= MAX_TRAIN_ID:
        raise ValueError(f"train id out of range [0, {MAX_TRAIN_ID}]: {value!r}")
    return TrainId(value)


@dataclass(frozen=True)
class TrainPacket:
    train_id: TrainId
    phase: Phase

    def __post_init__(self):
        train_id(self.train_id)
        if not isinstance(self.phase, Phase):
            raise ValueError(f"phase must be a Phase, got {self.phase!r}")


def compute_checksum(payload: Sequence[int]) -> int:
    """Ones'-complement of the low 8 bits of the octet sum."""
    if len(payload) < 1:
        raise ValueError("checksum payload must hold at least one octet")
    return ~sum(payload) & 0xFF


def encode_packet(packet: TrainPacket) -> EncodedFrame:
    body = _HEADER.pack(PREAMBLE, packet.train_id, int(packet.phase))
    return body + bytes([compute_checksum(body)])


def decode_frame(frame: Sequence[int]) -> TrainPacket:
    """Decode a received frame, raising DecodeError for anything that is not
    exactly the encoding of some TrainPacket."""
    data = bytes(frame)
    if len(data) != FRAME_LEN:
        raise DecodeError(DecodeErrorKind.BAD_LENGTH, f"expected {FRAME_LEN} octets, got {len(data)}")
    if data[0] != PREAMBLE:
        raise DecodeError(DecodeErrorKind.BAD_PREAMBLE, f"0x{data[0]:02X}")
    expected = compute_checksum(data[:4])
    if data[4] != expected:
        raise DecodeError(DecodeErrorKind.BAD_CHECKSUM, f"received 0x{data[4]:02X}, computed 0x{expected:02X}")
    _, raw_id, raw_phase = _HEADER.unpack(data[:4])
    if raw_phase not in (Phase.HEAD, Phase.TAIL):
        raise DecodeError(DecodeErrorKind.BAD_PHASE, f"0x{raw_phase:02X}")
    return TrainPacket(TrainId(raw_id), Phase(raw_phase))


__all__ = [
    "PREAMBLE",
    "FRAME_LEN",
    "MAX_TRAIN_ID",
    "TrainId",
    "EncodedFrame",
    "Phase",
    "DecodeErrorKind",
    "DecodeError",
    "TrainPacket",
    "train_id",
    "compute_checksum",
    "encode_packet",
    "decode_frame",
]
