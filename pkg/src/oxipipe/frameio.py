"""Bit-exact file formats: the RVF frame container and the color-signal CSV.

RVF layout (little-endian throughout):

    bytes 0..3    magic "RVF1" (0x52 0x56 0x46 0x31)
    bytes 4..7    u32 width
    bytes 8..11   u32 height
    bytes 12..15  u32 frame_count
    bytes 16..19  f32 fps
    then frame_count frames of width*height*3 bytes, interleaved R,G,B,
    row-major, no padding, no trailing bytes.

Color-signal CSV: optional ``# key=value`` comment lines (keys: ``fps``,
``cycle_boundaries``), then the header ``time_s,r,g,b`` or
``time_s,r,g,b,spo2``, then one row per sample. ``.`` decimal separator,
LF line endings, floats written with full (shortest round-trip) precision.
"""

import io
import struct

import numpy as np

from .errors import (
    BadMagic,
    IoFailure,
    TrailingBytes,
    TruncatedPayload,
    UnknownColumns,
    ZeroGeometry,
)

RVF_MAGIC = b"RVF1"
_HEADER = struct.Struct("<4sIIIf")


class FrameSequence:
    """Raw RGB video frames with geometry and frame rate.

    ``frames`` is a uint8 array of shape (n_frames, height, width, 3).
    ``fps`` is normalized to its nearest f32 value on construction so that
    RVF write/read is the identity at both byte and value level.
    """

    def __init__(self, frames, fps):
        frames = np.asarray(frames, dtype=np.uint8)
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise ValueError(f"frames must have shape (n, h, w, 3), got {frames.shape}")
        n, h, w, _ = frames.shape
        if n < 1 or h < 1 or w < 1:
            raise ValueError(f"degenerate geometry {frames.shape}")
        fps = float(np.float32(fps))
        if not np.isfinite(fps) or fps <= 0:
            raise ValueError(f"fps must be positive and finite, got {fps}")
        self.frames = frames
        self.fps = fps

    @property
    def width(self):
        return self.frames.shape[2]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def frame_count(self):
        return self.frames.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FrameSequence):
            return NotImplemented
        return self.fps == other.fps and np.array_equal(self.frames, other.frames)


class ColorSignal:
    """Spatially averaged per-frame R/G/B means, optionally with ground truth.

    ``samples``: float array (n, 3) with values in [0, 255].
    ``spo2``: optional aligned SpO2 trace in percent.
    ``cycle_boundaries``: optional strictly increasing sample indices covering
    [0, n], breathing-cycle edges included.
    """

    def __init__(self, fps, samples, spo2=None, cycle_boundaries=None):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise ValueError(f"samples must have shape (n, 3), got {samples.shape}")
        if samples.shape[0] < 1:
            raise ValueError("signal must contain at least one sample")
        if not np.isfinite(samples).all():
            raise ValueError("samples must be finite")
        if samples.min() < 0.0 or samples.max() > 255.0:
            raise ValueError("sample values must lie in [0, 255]")
        fps = float(fps)
        if not np.isfinite(fps) or fps <= 0:
            raise ValueError(f"fps must be positive, got {fps}")
        if spo2 is not None:
            spo2 = np.asarray(spo2, dtype=np.float64)
            if spo2.shape != (samples.shape[0],):
                raise ValueError("spo2 trace must align with samples")
        if cycle_boundaries is not None:
            cycle_boundaries = np.asarray(cycle_boundaries, dtype=np.int64)
            if cycle_boundaries.ndim != 1 or len(cycle_boundaries) < 2:
                raise ValueError("cycle_boundaries needs at least two entries")
            if np.any(np.diff(cycle_boundaries) <= 0):
                raise ValueError("cycle_boundaries must be strictly increasing")
            if cycle_boundaries[0] < 0 or cycle_boundaries[-1] > samples.shape[0]:
                raise ValueError("cycle_boundaries out of range")
        self.fps = fps
        self.samples = samples
        self.spo2 = spo2
        self.cycle_boundaries = cycle_boundaries

    def __len__(self):
        return self.samples.shape[0]


# --- RVF ----------------------------------------------------------------------

def read_rvf(data):
    """Parse RVF bytes into a FrameSequence. Strict: no trailing bytes."""
    if len(data) < 4 or data[:4] != RVF_MAGIC:
        raise BadMagic("not an RVF file (bad or missing magic)")
    if len(data) < _HEADER.size:
        raise TruncatedPayload(
            f"header requires {_HEADER.size} bytes, got {len(data)}"
        )
    _, width, height, frame_count, fps = _HEADER.unpack_from(data, 0)
    fps = float(fps)
    if width == 0 or height == 0 or frame_count == 0:
        raise ZeroGeometry(
            f"zero geometry: width={width} height={height} frames={frame_count}"
        )
    if not np.isfinite(fps) or fps <= 0:
        raise ZeroGeometry(f"fps must be positive and finite, got {fps}")
    expected = width * height * 3 * frame_count
    payload = data[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedPayload(
            f"declared {frame_count} frames need {expected} payload bytes, "
            f"got {len(payload)}"
        )
    if len(payload) > expected:
        raise TrailingBytes(f"{len(payload) - expected} trailing bytes after payload")
    frames = np.frombuffer(payload, dtype=np.uint8).reshape(
        frame_count, height, width, 3
    )
    return FrameSequence(frames.copy(), fps)


def write_rvf(seq):
    """Serialize a FrameSequence to RVF bytes; exact inverse of read_rvf."""
    header = _HEADER.pack(
        RVF_MAGIC, seq.width, seq.height, seq.frame_count, np.float32(seq.fps)
    )
    return header + seq.frames.tobytes()


def read_rvf_file(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return read_rvf(data)


def write_rvf_file(seq, path):
    try:
        with open(path, "wb") as fh:
            fh.write(write_rvf(seq))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --- color-signal CSV -----------------------------------------------------------

def write_signal_csv(signal):
    """Render a ColorSignal as CSV text (LF endings, full float precision)."""
    out = io.StringIO()
    out.write(f"# fps={signal.fps!r}\n")
    if signal.cycle_boundaries is not None:
        joined = ",".join(str(int(b)) for b in signal.cycle_boundaries)
        out.write(f"# cycle_boundaries={joined}\n")
    has_spo2 = signal.spo2 is not None
    out.write("time_s,r,g,b,spo2\n" if has_spo2 else "time_s,r,g,b\n")
    for i in range(len(signal)):
        t = i / signal.fps
        r, g, b = (float(v) for v in signal.samples[i])
        row = f"{t!r},{r!r},{g!r},{b!r}"
        if has_spo2:
            row += f",{float(signal.spo2[i])!r}"
        out.write(row + "\n")
    return out.getvalue()


def read_signal_csv(text):
    """Parse color-signal CSV text back into a ColorSignal."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    meta = {}
    header_idx = None
    for i, line in enumerate(lines):
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        header_idx = i
        break
    if header_idx is None:
        raise UnknownColumns("CSV contains no header line")
    header = lines[header_idx]
    if header == "time_s,r,g,b,spo2":
        has_spo2 = True
    elif header == "time_s,r,g,b":
        has_spo2 = False
    else:
        raise UnknownColumns(f"unexpected CSV header {header!r}")
    rows = lines[header_idx + 1:]
    if not rows:
        raise UnknownColumns("CSV contains no data rows")
    n_fields = 5 if has_spo2 else 4
    values = np.empty((len(rows), n_fields), dtype=np.float64)
    for i, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != n_fields:
            raise UnknownColumns(
                f"row {i + 1}: expected {n_fields} fields, got {len(parts)}"
            )
        try:
            values[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise UnknownColumns(f"row {i + 1}: non-numeric field ({exc})") from exc
    if "fps" in meta:
        try:
            fps = float(meta["fps"])
        except ValueError as exc:
            raise UnknownColumns(f"bad fps comment: {meta['fps']!r}") from exc
    elif len(rows) >= 2:
        fps = 1.0 / (values[1, 0] - values[0, 0])
    else:
        raise UnknownColumns("cannot infer fps: no fps comment and a single row")
    boundaries = None
    if "cycle_boundaries" in meta:
        try:
            boundaries = [int(v) for v in meta["cycle_boundaries"].split(",")]
        except ValueError as exc:
            raise UnknownColumns(
                f"bad cycle_boundaries comment: {meta['cycle_boundaries']!r}"
            ) from exc
    try:
        return ColorSignal(
            fps=fps,
            samples=values[:, 1:4],
            spo2=values[:, 4] if has_spo2 else None,
            cycle_boundaries=boundaries,
        )
    except ValueError as exc:
        raise IoFailure(f"CSV data violates signal invariants: {exc}") from exc


def read_signal_csv_file(path):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return read_signal_csv(text)


def write_signal_csv_file(signal, path):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(write_signal_csv(signal))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
