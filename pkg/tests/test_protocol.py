import itertools

import pytest

from modules.protocol import (
    DecodeError,
    DecodeErrorKind,
    Phase,
    TrainPacket,
    compute_checksum,
    decode_frame,
    encode_packet,
)


def test_checksum_examples():
    assert compute_checksum([0x00]) == 0xFF
    assert compute_checksum([0xA5, 0x00, 0x07, 0x01]) == 0x52
    assert compute_checksum([0x00, 0x00, 0x00, 0x00]) == 0xFF


def test_checksum_rejects_empty_payload():
    with pytest.raises(ValueError):
        compute_checksum([])


def test_encode_reference_frame():
    assert encode_packet(TrainPacket(7, Phase.TAIL)) == bytes([0xA5, 0x00, 0x07, 0x01, 0x52])
    assert encode_packet(TrainPacket(0x1234, Phase.HEAD))[:4] == bytes([0xA5, 0x12, 0x34, 0x00])


def test_every_packet_survives_encoding():
    for train, phase in itertools.product(range(0x10000), (Phase.HEAD, Phase.TAIL)):
        packet = TrainPacket(train, phase)
        assert decode_frame(encode_packet(packet)) == packet


def test_every_single_bit_flip_is_rejected():
    frame = encode_packet(TrainPacket(7, Phase.TAIL))
    for bit in range(len(frame) * 8):
        corrupted = bytearray(frame)
        corrupted[bit // 8] ^= 1 << (bit % 8)
        with pytest.raises(DecodeError):
            decode_frame(bytes(corrupted))


@pytest.mark.parametrize("frame, kind", [
    (b"", DecodeErrorKind.BAD_LENGTH),
    (bytes([0xA5, 0x00, 0x07, 0x01]), DecodeErrorKind.BAD_LENGTH),
    (bytes([0xA5, 0x00, 0x07, 0x01, 0x52, 0x00]), DecodeErrorKind.BAD_LENGTH),
    (bytes([0x5A, 0x00, 0x07, 0x01, 0x52]), DecodeErrorKind.BAD_PREAMBLE),
    (bytes([0xA5, 0x00, 0x07, 0x01, 0x53]), DecodeErrorKind.BAD_CHECKSUM),
    # valid checksum over an undefined phase octet
    (bytes([0xA5, 0x00, 0x07, 0x02, 0x51]), DecodeErrorKind.BAD_PHASE),
])
def test_decode_errors(frame, kind):
    with pytest.raises(DecodeError) as err:
        decode_frame(frame)
    assert err.value.kind is kind


def test_preamble_checked_before_checksum():
    with pytest.raises(DecodeError) as err:
        decode_frame(bytes([0x00, 0x00, 0x07, 0x01, 0x00]))
    assert err.value.kind is DecodeErrorKind.BAD_PREAMBLE


@pytest.mark.parametrize("bad_id", [-1, 0x10000])
def test_packet_rejects_out_of_range_id(bad_id):
    with pytest.raises(ValueError):
        TrainPacket(bad_id, Phase.HEAD)


def test_highest_id_head_frame():
    frame = encode_packet(TrainPacket(65535, Phase.HEAD))
    assert frame == bytes([0xA5, 0xFF, 0xFF, 0x00, 0x5C])
    assert decode_frame(frame) == TrainPacket(65535, Phase.HEAD)


@pytest.mark.parametrize("position", range(4))
def test_every_single_octet_change_is_rejected(position):
    frame = encode_packet(TrainPacket(7, Phase.TAIL))
    for value in range(256):
        if value == frame[position]:
            continue
        changed = bytearray(frame)
        changed[position] = value
        with pytest.raises(DecodeError):
            decode_frame(changed)
