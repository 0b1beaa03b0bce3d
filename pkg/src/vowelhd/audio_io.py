"""Mono WAV input/output and amplitude measures (RMS dBFS, peak normalization)."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ChannelError, CorruptFileError, EmptyInputError, FormatError

DBFS_FLOOR = -120.0

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Immutable mono signal with its sampling rate.

    Samples are stored as a read-only float64 array.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).ravel()
        if x.size == 0:
            raise EmptyInputError("AudioClip needs at least one sample")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def duration_ms(self) -> float:
        return 1000.0 * self.samples.size / self.sample_rate_hz


def ms_to_samples(ms: float, sample_rate_hz: int) -> int:
    """Convert milliseconds to a sample count, rounding half up.

    At 44.1 kHz: 2 ms -> 88, 4 ms -> 176, 10 ms -> 441, 25 ms -> 1103.
    """
    # small guard so e.g. 0.205 s * 44100 (= 9040.4999...) rounds as written
    return int(math.floor(ms * sample_rate_hz / 1000.0 + 0.5 + 1e-9))


def seconds_to_index(t_s: float, sample_rate_hz: int) -> int:
    return int(math.floor(t_s * sample_rate_hz + 0.5 + 1e-9))


def _parse_fmt(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise CorruptFileError("fmt chunk shorter than 16 bytes")
    fmt_tag, channels, rate, _byte_rate, _align, bits = struct.unpack("<HHIIHH", body[:16])
    if fmt_tag == _EXTENSIBLE:
        if len(body) < 26:
            raise CorruptFileError("truncated WAVE_FORMAT_EXTENSIBLE header")
        # first two bytes of the SubFormat GUID carry the real format tag
        (fmt_tag,) = struct.unpack("<H", body[24:26])
    return fmt_tag, channels, rate, bits


def load_wav(path: str | Path) -> AudioClip:
    """Read a mono RIFF/WAVE file.

    Supports 16- and 24-bit integer PCM and 32-bit IEEE float. Integer samples
    are divided by the full-scale magnitude of their type (32768 or 8388608).

    Raises
    ------
    ChannelError
        If the file has more than one channel.
    FormatError
        If the file is not RIFF/WAVE or uses an unsupported encoding.
    CorruptFileError
        If a chunk (in particular the data chunk) is truncated.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4:pos + 8])
        start = pos + 8
        end = start + size
        if end > len(raw):
            raise CorruptFileError(
                f"{path}: chunk {cid!r} declares {size} bytes, only {len(raw) - start} present")
        if cid == b"fmt ":
            fmt = _parse_fmt(raw[start:end])
        elif cid == b"data":
            data = raw[start:end]
        pos = end + (size & 1)
    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise CorruptFileError(f"{path}: missing data chunk")

    fmt_tag, channels, rate, bits = fmt
    if channels != 1:
        raise ChannelError(f"{path}: expected 1 channel, found {channels}")
    if rate <= 0:
        raise FormatError(f"{path}: invalid sample rate {rate}")

    if fmt_tag == _PCM and bits == 16:
        if len(data) % 2:
            raise CorruptFileError(f"{path}: partial 16-bit frame")
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif fmt_tag == _PCM and bits == 24:
        if len(data) % 3:
            raise CorruptFileError(f"{path}: partial 24-bit frame")
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v & 0x800000, v - 0x1000000, v)
        x = v.astype(np.float64) / 8388608.0
    elif fmt_tag == _IEEE_FLOAT and bits == 32:
        if len(data) % 4:
            raise CorruptFileError(f"{path}: partial float frame")
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported encoding (format tag {fmt_tag}, {bits} bits)")

    if x.size == 0:
        raise CorruptFileError(f"{path}: empty data chunk")
    return AudioClip(x, rate)


def write_wav(path: str | Path, clip: AudioClip, encoding: str = "pcm16") -> None:
    """Write a mono WAV file. ``encoding`` is one of pcm16, pcm24, float32.

    Integer encodings clip to full scale and round to the nearest code.
    """
    x = clip.samples
    if encoding == "pcm16":
        q = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2")
        payload, tag, bits = q.tobytes(), _PCM, 16
    elif encoding == "pcm24":
        q = np.clip(np.rint(x * 8388608.0), -8388608, 8388607).astype(np.int32)
        u = (q & 0xFFFFFF).astype("<u4").view(np.uint8).reshape(-1, 4)[:, :3]
        payload, tag, bits = u.tobytes(), _PCM, 24
    elif encoding == "float32":
        payload, tag, bits = x.astype("<f4").tobytes(), _IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    align = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, clip.sample_rate_hz,
                      clip.sample_rate_hz * align, align, bits)
    pad = b"\x00" if len(payload) & 1 else b""
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload + pad
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def rms(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptyInputError("RMS of an empty sequence")
    return float(np.sqrt(np.mean(x * x)))


def dbfs(samples) -> float:
    """RMS level in dB relative to full scale, floored at -120 dB."""
    r = rms(samples)
    if r <= 0.0:
        return DBFS_FLOOR
    return max(20.0 * math.log10(r), DBFS_FLOOR)


def normalize_peak(clip: AudioClip) -> AudioClip:
    """Scale so that max |sample| == 1; an all-zero clip is returned unchanged."""
    peak = float(np.max(np.abs(clip.samples)))
    if peak == 0.0:
        return clip
    return AudioClip(clip.samples / peak, clip.sample_rate_hz)
