"""CSI capture data model, bit-exact binary serialization, and stream extraction.

A capture holds the complex channel estimate for every received packet: one
(n_tx * n_rx) x n_sub matrix per packet (transmit-receive stream x OFDM
subcarrier), sampled at a fixed packet rate.  The default geometry is a
2 x 3 antenna setup with 30 subcarriers, i.e. 6 streams of 30 complex
values per packet.

Values are held as complex64 because the on-disk format stores 32-bit
float pairs; keeping the same precision in memory makes write -> read
round trips bit-exact.

File format (all little-endian)::

    magic    4 bytes  b"CSIC"
    version  u16      currently 1
    n_tx     u16
    n_rx     u16
    n_sub    u16
    rate_hz  f32
    n_pkts   u64
    lab_len  u8       followed by lab_len bytes of UTF-8 label
    ---- per packet ----
    ts       f64      seconds since capture start
    csi      n_tx*n_rx*n_sub pairs of (re: f32, im: f32), row-major
                      over (stream, subcarrier)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CAPTURE_MAGIC = b"CSIC"
CAPTURE_VERSION = 1

_HEADER = struct.Struct("<4sHHHHfQB")


class CaptureError(ValueError):
    """Base error for malformed captures or capture files."""


class BadMagicError(CaptureError):
    """File does not start with the capture magic."""


class UnsupportedVersionError(CaptureError):
    """File declares a format version this reader does not understand."""


class TruncatedFileError(CaptureError):
    """File ends before the declared number of packets."""


class NonFiniteValueError(CaptureError):
    """Capture payload contains NaN or infinite values."""


@dataclass(frozen=True)
class CsiFrame:
    """One packet's CSI: a (n_streams, n_sub) complex matrix plus its timestamp."""

    values: np.ndarray
    timestamp: float


@dataclass(frozen=True)
class CsiCapture:
    """An immutable, time-ordered sequence of CSI frames.

    Fields
    ------
    values      (n_frames, n_streams, n_sub) complex64
    timestamps  (n_frames,) float64, strictly increasing, seconds from start
    rate_hz     nominal packet rate
    label       free-form annotation (UTF-8, at most 255 bytes)
    """

    values: np.ndarray
    timestamps: np.ndarray
    rate_hz: float = 1500.0
    n_tx: int = 2
    n_rx: int = 3
    n_sub: int = 30
    label: str = ""

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.complex64)
        timestamps = np.ascontiguousarray(self.timestamps, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)
        self._validate()
        values.setflags(write=False)
        timestamps.setflags(write=False)

    def _validate(self) -> None:
        if min(self.n_tx, self.n_rx, self.n_sub) < 1:
            raise CaptureError("antenna and subcarrier counts must be >= 1")
        if not self.rate_hz > 0:
            raise CaptureError(f"rate_hz must be positive, got {self.rate_hz}")
        if len(self.label.encode("utf-8")) > 255:
            raise CaptureError("label exceeds 255 UTF-8 bytes")
        if self.values.ndim != 3 or self.values.shape[1:] != (self.n_streams, self.n_sub):
            raise CaptureError(
                f"values must have shape (n_frames, {self.n_streams}, {self.n_sub}), "
                f"got {self.values.shape}"
            )
        if self.timestamps.shape != (self.values.shape[0],):
            raise CaptureError("timestamps length does not match frame count")
        if not np.isfinite(self.values.view(np.float32)).all():
            raise NonFiniteValueError("capture contains non-finite CSI values")
        if not np.isfinite(self.timestamps).all():
            raise NonFiniteValueError("capture contains non-finite timestamps")
        if self.n_frames > 1 and not (np.diff(self.timestamps) > 0).all():
            raise CaptureError("timestamps must be strictly increasing")

    @property
    def n_streams(self) -> int:
        return self.n_tx * self.n_rx

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> list[CsiFrame]:
        return [
            CsiFrame(self.values[i], float(self.timestamps[i]))
            for i in range(self.n_frames)
        ]

    @classmethod
    def from_frames(cls, frames, rate_hz=1500.0, n_tx=2, n_rx=3, n_sub=30, label=""):
        """Build a capture from an iterable of CsiFrame."""
        frames = list(frames)
        if frames:
            values = np.stack([f.values for f in frames])
            timestamps = np.array([f.timestamp for f in frames], dtype=np.float64)
        else:
            values = np.zeros((0, n_tx * n_rx, n_sub), dtype=np.complex64)
            timestamps = np.zeros(0, dtype=np.float64)
        return cls(values, timestamps, rate_hz, n_tx, n_rx, n_sub, label)


@dataclass(frozen=True)
class StreamTensor:
    """A real-valued view of a capture: (n_frames, n_streams * n_sub).

    Column order is stream-major: column s * n_sub + j holds stream s,
    subcarrier j.  `kind` records whether the tensor carries amplitudes
    (non-negative) or raw phases (radians in [-pi, pi]).
    """

    data: np.ndarray
    kind: str
    n_streams: int = 6
    n_sub: int = 30

    def __post_init__(self):
        if self.kind not in ("amplitude", "phase"):
            raise ValueError(f"kind must be 'amplitude' or 'phase', got {self.kind!r}")
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != self.n_streams * self.n_sub:
            raise ValueError(
                f"data must be (n_frames, {self.n_streams * self.n_sub}), got {data.shape}"
            )
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


def split_streams(capture: CsiCapture) -> tuple[StreamTensor, StreamTensor]:
    """Split a capture into amplitude and phase tensors.

    Amplitudes are |H|, phases are angle(H) in [-pi, pi].  Both are float64
    matrices of shape (n_frames, n_streams * n_sub) in stream-major column
    order.
    """
    if capture.n_frames == 0:
        raise CaptureError("cannot split an empty capture")
    v = capture.values.astype(np.complex128)
    flat = (capture.n_frames, capture.n_streams * capture.n_sub)
    amp = np.abs(v).reshape(flat)
    phase = np.angle(v).reshape(flat)
    kw = dict(n_streams=capture.n_streams, n_sub=capture.n_sub)
    return StreamTensor(amp, "amplitude", **kw), StreamTensor(phase, "phase", **kw)


def window(tensor, length: int, stride: int) -> list[np.ndarray]:
    """Slice a tensor into fixed-length windows along the time axis.

    Accepts a StreamTensor or a 2-D array.  Returns copies; the number of
    windows is (n_frames - length) // stride + 1.  Raises ValueError when
    not even one full window fits.
    """
    data = tensor.data if isinstance(tensor, StreamTensor) else np.asarray(tensor)
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be >= 1")
    n = data.shape[0]
    if n < length:
        raise ValueError(f"need at least {length} frames for one window, have {n}")
    count = (n - length) // stride + 1
    return [data[i * stride : i * stride + length].copy() for i in range(count)]


def concat_captures(captures, label: str = "") -> CsiCapture:
    """Concatenate captures in time, re-basing timestamps to stay increasing."""
    captures = list(captures)
    if not captures:
        raise CaptureError("nothing to concatenate")
    first = captures[0]
    for c in captures[1:]:
        same = (
            c.rate_hz == first.rate_hz
            and (c.n_tx, c.n_rx, c.n_sub) == (first.n_tx, first.n_rx, first.n_sub)
        )
        if not same:
            raise CaptureError("captures disagree on geometry or rate")
    parts, ts_parts = [], []
    offset = 0.0
    for c in captures:
        if c.n_frames == 0:
            continue
        ts = c.timestamps - c.timestamps[0] + offset
        offset = ts[-1] + 1.0 / c.rate_hz
        parts.append(c.values)
        ts_parts.append(ts)
    values = np.concatenate(parts) if parts else first.values[:0]
    timestamps = np.concatenate(ts_parts) if ts_parts else first.timestamps[:0]
    return CsiCapture(
        values, timestamps, first.rate_hz, first.n_tx, first.n_rx, first.n_sub, label
    )


def _packet_dtype(n_streams: int, n_sub: int) -> np.dtype:
    return np.dtype([("ts", "<f8"), ("csi", "<f4", (n_streams, n_sub, 2))])


def write_capture(capture: CsiCapture, path) -> None:
    """Serialize a capture to the binary format described in the module docstring.

    The capture is validated first; invalid captures are rejected before any
    bytes are written.
    """
    capture._validate()
    label_bytes = capture.label.encode("utf-8")
    header = _HEADER.pack(
        CAPTURE_MAGIC,
        CAPTURE_VERSION,
        capture.n_tx,
        capture.n_rx,
        capture.n_sub,
        capture.rate_hz,
        capture.n_frames,
        len(label_bytes),
    )
    rec = np.empty(capture.n_frames, dtype=_packet_dtype(capture.n_streams, capture.n_sub))
    rec["ts"] = capture.timestamps
    pairs = capture.values.view(np.float32).reshape(
        capture.n_frames, capture.n_streams, capture.n_sub, 2
    )
    rec["csi"] = pairs
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(label_bytes)
        fh.write(rec.tobytes())


def read_capture(path) -> CsiCapture:
    """Read a capture file, verifying magic, version, and payload integrity."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(
            f"file holds {len(raw)} bytes, shorter than the {_HEADER.size}-byte header"
        )
    magic, version, n_tx, n_rx, n_sub, rate_hz, n_packets, label_len = _HEADER.unpack(
        raw[: _HEADER.size]
    )
    if magic != CAPTURE_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {CAPTURE_MAGIC!r}")
    if version != CAPTURE_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    offset = _HEADER.size + label_len
    if len(raw) < offset:
        raise TruncatedFileError("file ends inside the label field")
    label = raw[_HEADER.size : offset].decode("utf-8")
    payload = raw[offset:]
    dtype = _packet_dtype(n_tx * n_rx, n_sub)
    expected = n_packets * dtype.itemsize
    if len(payload) < expected:
        frame = len(payload) // dtype.itemsize
        raise TruncatedFileError(
            f"file truncated in frame {frame}: expected {n_packets} frames "
            f"({expected} payload bytes), found {len(payload)}"
        )
    if len(payload) > expected:
        raise CaptureError(f"{len(payload) - expected} trailing bytes after last frame")
    rec = np.frombuffer(payload, dtype=dtype)
    timestamps = rec["ts"].astype(np.float64)
    csi = np.ascontiguousarray(rec["csi"])
    if not np.isfinite(csi).all():
        raise NonFiniteValueError("capture payload contains non-finite values")
    values = csi.view(np.complex64).reshape(n_packets, n_tx * n_rx, n_sub)
    return CsiCapture(values, timestamps, float(rate_hz), n_tx, n_rx, n_sub, label)
