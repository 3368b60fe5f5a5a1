"""TFRecord container framing.

Each record is ``uint64 length | uint32 masked_crc32c(length) | data |
uint32 masked_crc32c(data)``, all little-endian.
"""

import struct

import google_crc32c

_MASK_DELTA = 0xA282EAD8


class TFRecordError(IOError):
    pass


class CorruptRecordError(TFRecordError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class TruncatedRecordError(TFRecordError):
    def __init__(self, offset):
        super().__init__(f"truncated record at byte offset {offset}")
        self.offset = offset


def masked_crc32c(data):
    crc = google_crc32c.value(bytes(data))
    return ((((crc >> 15) | (crc << 17)) & 0xFFFFFFFF) + _MASK_DELTA) & 0xFFFFFFFF


def frame(payload):
    header = struct.pack("<Q", len(payload))
    return b"".join((header, struct.pack("<I", masked_crc32c(header)), payload,
                     struct.pack("<I", masked_crc32c(payload))))


def write_tfrecord(stream, records):
    n = 0
    for payload in records:
        stream.write(frame(payload))
        n += 1
    return n


def _read_exact(stream, n, offset):
    buf = stream.read(n)
    if len(buf) != n:
        raise TruncatedRecordError(offset)
    return buf


def read_tfrecord(stream, verify=True):
    """Yield raw payloads from a binary stream, checking both checksums."""
    offset = 0
    while True:
        header = stream.read(8)
        if not header:
            return
        if len(header) != 8:
            raise TruncatedRecordError(offset)
        (length_crc,) = struct.unpack("<I", _read_exact(stream, 4, offset))
        if verify and masked_crc32c(header) != length_crc:
            raise CorruptRecordError("length checksum mismatch", offset)
        (length,) = struct.unpack("<Q", header)
        payload = _read_exact(stream, length, offset)
        (data_crc,) = struct.unpack("<I", _read_exact(stream, 4, offset))
        if verify and masked_crc32c(payload) != data_crc:
            raise CorruptRecordError("data checksum mismatch", offset)
        yield payload
        offset += 16 + length


def read_tfrecord_file(path, verify=True):
    with open(path, "rb") as f:
        yield from read_tfrecord(f, verify)


def write_tfrecord_file(path, records):
    with open(path, "wb") as f:
        return write_tfrecord(f, records)
