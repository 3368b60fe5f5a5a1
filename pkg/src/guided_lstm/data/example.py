"""Minimal protobuf wire-format codec for ``tf.train.Example`` messages with
the video-level schema (id, labels, mean_rgb, mean_audio)."""

import struct
from dataclasses import dataclass, field

import numpy as np

RGB_DIM = 1024
AUDIO_DIM = 128

DEFAULT_ALIASES = {
    "id": ("id", "video_id"),
    "labels": ("labels",),
    "mean_rgb": ("mean_rgb",),
    "mean_audio": ("mean_audio",),
}


class WireFormatError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass
class VideoExample:
    id: bytes
    labels: frozenset
    mean_rgb: np.ndarray
    mean_audio: np.ndarray = field(repr=False)

    @property
    def feature(self):
        return np.concatenate([self.mean_rgb, self.mean_audio])


# -- decoding ----------------------------------------------------------------


def _varint(buf, pos):
    result = shift = 0
    while True:
        if pos >= len(buf):
            raise WireFormatError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift >= 70:
            raise WireFormatError("varint too long")


def _fields(buf):
    """Yield ``(field_number, wire_type, value)``; length-delimited values are
    memoryviews, fixed-width ones raw bytes."""
    buf = memoryview(buf)
    pos = 0
    while pos < len(buf):
        key, pos = _varint(buf, pos)
        num, wt = key >> 3, key & 7
        if wt == 0:
            val, pos = _varint(buf, pos)
        elif wt == 1:
            val, pos = bytes(buf[pos:pos + 8]), pos + 8
        elif wt == 2:
            n, pos = _varint(buf, pos)
            val, pos = buf[pos:pos + n], pos + n
        elif wt == 5:
            val, pos = bytes(buf[pos:pos + 4]), pos + 4
        else:
            raise WireFormatError(f"unsupported wire type {wt}")
        if pos > len(buf):
            raise WireFormatError("truncated field")
        yield num, wt, val


def _signed64(v):
    return v - (1 << 64) if v >= 1 << 63 else v


def _decode_feature(buf):
    """Feature oneof: 1 bytes_list, 2 float_list, 3 int64_list."""
    kind, values = None, []
    for num, wt, val in _fields(buf):
        if num not in (1, 2, 3) or wt != 2:
            continue
        kind, values = num, []
        for inner_num, inner_wt, v in _fields(val):
            if inner_num != 1:
                continue
            if num == 1:
                values.append(bytes(v))
            elif num == 2:
                if inner_wt == 2:
                    values.extend(np.frombuffer(v, dtype="<f4").tolist())
                elif inner_wt == 5:
                    values.append(struct.unpack("<f", v)[0])
            else:
                if inner_wt == 2:
                    p, raw = 0, v
                    while p < len(raw):
                        x, p = _varint(raw, p)
                        values.append(_signed64(x))
                elif inner_wt == 0:
                    values.append(_signed64(v))
    return kind, values


def decode_features(record):
    """Decode an Example into ``{name: (kind, values)}``."""
    out = {}
    for num, wt, val in _fields(record):
        if num != 1 or wt != 2:
            continue
        for fnum, fwt, entry in _fields(val):
            if fnum != 1 or fwt != 2:
                continue
            key, feat = None, b""
            for enum_, ewt, ev in _fields(entry):
                if enum_ == 1 and ewt == 2:
                    key = bytes(ev).decode("utf-8")
                elif enum_ == 2 and ewt == 2:
                    feat = ev
            if key is not None:
                out[key] = _decode_feature(feat)
    return out


def _lookup(feats, name, aliases):
    for key in aliases.get(name, (name,)):
        if key in feats:
            return feats[key]
    raise SchemaError(f"missing feature {name!r}")


def parse_example(record, rgb_dim=RGB_DIM, audio_dim=AUDIO_DIM, aliases=None):
    aliases = DEFAULT_ALIASES if aliases is None else aliases
    feats = decode_features(record)
    _, ids = _lookup(feats, "id", aliases)
    _, labels = _lookup(feats, "labels", aliases)
    _, rgb = _lookup(feats, "mean_rgb", aliases)
    _, audio = _lookup(feats, "mean_audio", aliases)
    if len(ids) != 1:
        raise SchemaError("id must hold exactly one bytes value")
    if len(rgb) != rgb_dim:
        raise SchemaError(f"mean_rgb has {len(rgb)} values, expected {rgb_dim}")
    if len(audio) != audio_dim:
        raise SchemaError(f"mean_audio has {len(audio)} values, expected {audio_dim}")
    return VideoExample(ids[0], frozenset(int(l) for l in labels),
                        np.asarray(rgb, dtype=np.float64), np.asarray(audio, dtype=np.float64))


# -- encoding ----------------------------------------------------------------


def _enc_varint(v):
    v &= (1 << 64) - 1
    out = bytearray()
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _ld(num, payload):
    return _enc_varint(num << 3 | 2) + _enc_varint(len(payload)) + payload


def _encode_feature(value):
    if isinstance(value, (bytes, str)):
        value = [value]
    value = list(value)
    if value and isinstance(value[0], (bytes, str)):
        body = b"".join(_ld(1, v.encode() if isinstance(v, str) else v) for v in value)
        return _ld(1, body)
    arr = np.asarray(value)
    if arr.dtype.kind in "iu":
        packed = b"".join(_enc_varint(int(v)) for v in arr)
        return _ld(3, _ld(1, packed) if len(arr) else b"")
    packed = np.asarray(arr, dtype="<f4").tobytes()
    return _ld(2, _ld(1, packed) if len(arr) else b"")


def encode_example(features):
    """Serialize ``{name: bytes | int list | float list}`` as an Example."""
    entries = b"".join(
        _ld(1, _ld(1, name.encode()) + _ld(2, _encode_feature(value)))
        for name, value in features.items()
    )
    return _ld(1, entries)


def serialize_video(ex):
    return encode_example({
        "id": ex.id,
        "labels": np.array(sorted(ex.labels), dtype=np.int64),
        "mean_rgb": np.asarray(ex.mean_rgb, dtype=np.float32),
        "mean_audio": np.asarray(ex.mean_audio, dtype=np.float32),
    })
