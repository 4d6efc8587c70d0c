"""Windowing and per-channel stream construction (raw, bandpassed AC, DC bias).

Filtering is zero-phase: a 2nd-order Butterworth design expressed as cascaded
biquad sections, applied forward and backward (scipy sosfiltfilt), so window
labels stay aligned with their samples.

Each 10-second window carries 9 streams ordered R,G,B x (raw, ac, dc). Windows
are standardized per window: raw and ac rows get their own means subtracted
and are divided by a std shared across the three color channels of the same
stream kind (floored at 1e-6); dc rows are scaled by 1/255. Sharing the scale
within a stream kind keeps the cross-channel amplitude ratios - the actual
SpO2 carrier - intact, while per-channel scaling would erase them. The
(mean, scale) pairs are recorded so the original streams can be recovered.
"""

import json
import pathlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .errors import (BadBand, EmptyInput, IoFailure, SchemaVersionMismatch,
                     ShapeMismatch, TooShort)

AC_BAND = (0.7, 4.0)   # pulse band, 42-240 bpm
DC_CUTOFF = 0.3        # bias low-pass cutoff, Hz

STREAMS = (
    "r_raw", "r_ac", "r_dc",
    "g_raw", "g_ac", "g_dc",
    "b_raw", "b_ac", "b_dc",
)
_RAW_ROWS = (0, 3, 6)
_AC_ROWS = (1, 4, 7)
_DC_ROWS = (2, 5, 8)

_STD_FLOOR = 1e-6
_WINDOWS_SCHEMA = 1


def _padlen(sos):
    # mirrors scipy.signal.sosfiltfilt's default pad length
    return 3 * (2 * len(sos) + 1 - min((sos[:, 2] == 0).sum(),
                                       (sos[:, 5] == 0).sum()))


def _apply_zero_phase(series, sos):
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("series must be 1-D")
    settle = _padlen(sos)
    if len(series) < 3 * settle:
        raise TooShort(
            f"series of {len(series)} samples is shorter than 3x the filter "
            f"settle length ({3 * settle})"
        )
    return sps.sosfiltfilt(sos, series)


def bandpass(series, fps, low_hz=AC_BAND[0], high_hz=AC_BAND[1]):
    """Zero-phase 2nd-order Butterworth bandpass; output length == input."""
    if not 0.0 < low_hz < high_hz < fps / 2.0:
        raise BadBand(
            f"need 0 < low < high < fps/2, got low={low_hz} high={high_hz} fps={fps}"
        )
    sos = sps.butter(2, [low_hz, high_hz], btype="bandpass", fs=fps, output="sos")
    return _apply_zero_phase(series, sos)


def bias(series, fps, cutoff_hz=DC_CUTOFF):
    """Zero-phase 2nd-order Butterworth low-pass (the quasi-stationary bias)."""
    if not 0.0 < cutoff_hz < fps / 2.0:
        raise BadBand(f"need 0 < cutoff < fps/2, got cutoff={cutoff_hz} fps={fps}")
    sos = sps.butter(2, cutoff_hz, btype="lowpass", fs=fps, output="sos")
    return _apply_zero_phase(series, sos)


class StreamStack:
    """9 aligned per-channel series: raw, bandpassed ac, low-passed dc."""

    def __init__(self, fps, streams):
        streams = np.asarray(streams, dtype=np.float64)
        if streams.shape[0] != 9 or streams.ndim != 2:
            raise ValueError(f"streams must be (9, n), got {streams.shape}")
        for row in _AC_ROWS:
            ac = streams[row]
            std = ac.std()
            if abs(ac.mean()) > _STD_FLOOR * max(std, _STD_FLOOR):
                raise ValueError(f"ac stream {STREAMS[row]} is not zero-mean")
        self.fps = float(fps)
        self.streams = streams

    def __len__(self):
        return self.streams.shape[1]


def build_streams(signal, band=AC_BAND, dc_cutoff=DC_CUTOFF):
    """Decompose a ColorSignal into its 9-stream stack."""
    rows = np.empty((9, len(signal)), dtype=np.float64)
    for c in range(3):
        raw = signal.samples[:, c]
        ac = bandpass(raw, signal.fps, band[0], band[1])
        ac = ac - ac.mean()  # exact zero mean; the filter already removes DC
        rows[3 * c] = raw
        rows[3 * c + 1] = ac
        rows[3 * c + 2] = bias(raw, signal.fps, dc_cutoff)
    return StreamStack(fps=signal.fps, streams=rows)


class WindowedDataset:
    """Standardized sliding windows with labels and provenance.

    windows: (count, 9, window_len), already standardized.
    norm_mean/norm_scale: (count, 9) such that
        original = windows * norm_scale[..., None] + norm_mean[..., None].
    spans: (count, 2) source sample indices, end exclusive.
    labels: (count,) mean SpO2 per window, or None in inference mode.
    """

    def __init__(self, fps, window_len, stride, windows, labels, spans,
                 norm_mean, norm_scale, cycle_boundaries=None):
        windows = np.asarray(windows, dtype=np.float64)
        spans = np.asarray(spans, dtype=np.int64)
        if windows.ndim != 3 or windows.shape[1] != 9:
            raise ValueError(f"windows must be (n, 9, len), got {windows.shape}")
        if windows.shape[2] != window_len:
            raise ValueError("window_len does not match windows array")
        if spans.shape != (windows.shape[0], 2):
            raise ValueError("spans must be (n, 2)")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.float64)
            if labels.shape != (windows.shape[0],):
                raise ValueError("labels must align with windows")
            if labels.size and (labels.min() < 70.0 or labels.max() > 100.0):
                raise ValueError("labels must lie in [70, 100]")
        self.fps = float(fps)
        self.window_len = int(window_len)
        self.stride = int(stride)
        self.windows = windows
        self.labels = labels
        self.spans = spans
        self.norm_mean = np.asarray(norm_mean, dtype=np.float64)
        self.norm_scale = np.asarray(norm_scale, dtype=np.float64)
        self.cycle_boundaries = (
            None if cycle_boundaries is None
            else np.asarray(cycle_boundaries, dtype=np.int64)
        )

    def __len__(self):
        return self.windows.shape[0]

    @property
    def labeled(self):
        return self.labels is not None

    def denormalized(self, index=None):
        """Original un-standardized stream values for one or all windows."""
        if index is None:
            return (self.windows * self.norm_scale[:, :, None]
                    + self.norm_mean[:, :, None])
        return (self.windows[index] * self.norm_scale[index][:, None]
                + self.norm_mean[index][:, None])

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return WindowedDataset(
            fps=self.fps,
            window_len=self.window_len,
            stride=self.stride,
            windows=self.windows[indices],
            labels=None if self.labels is None else self.labels[indices],
            spans=self.spans[indices],
            norm_mean=self.norm_mean[indices],
            norm_scale=self.norm_scale[indices],
            cycle_boundaries=self.cycle_boundaries,
        )


def concat_windows(datasets):
    """Merge window datasets from several recordings of one protocol.

    All parts must share fps, window geometry, and labeledness. Spans keep
    their per-recording indices; cycle boundaries are dropped because they
    no longer refer to a single source.
    """
    datasets = list(datasets)
    if not datasets:
        raise EmptyInput("no datasets to concatenate")
    first = datasets[0]
    for ds in datasets[1:]:
        if (ds.fps != first.fps or ds.window_len != first.window_len
                or ds.stride != first.stride):
            raise ShapeMismatch("datasets disagree on fps or window geometry")
        if ds.labeled != first.labeled:
            raise ShapeMismatch("cannot mix labeled and unlabeled datasets")
    return WindowedDataset(
        fps=first.fps,
        window_len=first.window_len,
        stride=first.stride,
        windows=np.concatenate([ds.windows for ds in datasets]),
        labels=(None if first.labels is None
                else np.concatenate([ds.labels for ds in datasets])),
        spans=np.concatenate([ds.spans for ds in datasets]),
        norm_mean=np.concatenate([ds.norm_mean for ds in datasets]),
        norm_scale=np.concatenate([ds.norm_scale for ds in datasets]),
        cycle_boundaries=None,
    )


def make_windows(signal, window_s=10.0, stride_s=0.2,
                 band=AC_BAND, dc_cutoff=DC_CUTOFF):
    """Slice a ColorSignal into standardized 9-stream training windows.

    window_len = round(window_s * fps), stride = round(stride_s * fps);
    windows start at 0, stride, 2*stride, ... while fully inside the signal.
    Labels are the mean ground-truth SpO2 over each window when the signal
    carries a trace, otherwise omitted (inference mode).
    """
    window_len = int(round(window_s * signal.fps))
    stride = int(round(stride_s * signal.fps))
    if window_len < 1 or stride < 1:
        raise BadBand(
            f"window/stride round to {window_len}/{stride} samples at fps {signal.fps}"
        )
    n = len(signal)
    if n < window_len:
        raise TooShort(f"signal of {n} samples cannot fit a {window_len}-sample window")
    stack = build_streams(signal, band=band, dc_cutoff=dc_cutoff)
    # (9, count, window_len) view over window starts 0, stride, ...
    view = sliding_window_view(stack.streams, window_len, axis=1)[:, ::stride, :]
    blocks = np.ascontiguousarray(view.transpose(1, 0, 2))
    count = blocks.shape[0]
    starts = np.arange(count, dtype=np.int64) * stride
    spans = np.stack([starts, starts + window_len], axis=1)

    norm_mean = np.zeros((count, 9), dtype=np.float64)
    norm_scale = np.empty((count, 9), dtype=np.float64)
    for rows in (_RAW_ROWS, _AC_ROWS):
        group = blocks[:, rows, :]
        means = group.mean(axis=2)
        centered = group - means[:, :, None]
        shared = np.sqrt((centered ** 2).mean(axis=(1, 2)))
        shared = np.maximum(shared, _STD_FLOOR)
        norm_mean[:, rows] = means
        norm_scale[:, rows] = shared[:, None]
    norm_scale[:, _DC_ROWS] = 255.0

    windows = (blocks - norm_mean[:, :, None]) / norm_scale[:, :, None]

    labels = None
    if signal.spo2 is not None:
        label_view = sliding_window_view(signal.spo2, window_len)[::stride]
        labels = label_view.mean(axis=1)

    return WindowedDataset(
        fps=signal.fps,
        window_len=window_len,
        stride=stride,
        windows=windows,
        labels=labels,
        spans=spans,
        norm_mean=norm_mean,
        norm_scale=norm_scale,
        cycle_boundaries=signal.cycle_boundaries,
    )


def save_windows(dataset, manifest_path):
    """Write a dataset as JSON manifest + flat little-endian f64 blob."""
    manifest_path = pathlib.Path(manifest_path)
    blob_name = manifest_path.stem + ".f64"
    manifest = {
        "schema_version": _WINDOWS_SCHEMA,
        "fps": dataset.fps,
        "window_len": dataset.window_len,
        "stride": dataset.stride,
        "count": len(dataset),
        "streams": list(STREAMS),
        "labels": None if dataset.labels is None else dataset.labels.tolist(),
        "spans": dataset.spans.tolist(),
        "norm_mean": dataset.norm_mean.tolist(),
        "norm_scale": dataset.norm_scale.tolist(),
        "cycle_boundaries": (
            None if dataset.cycle_boundaries is None
            else dataset.cycle_boundaries.tolist()
        ),
        "blob": blob_name,
        "blob_dtype": "<f8",
        "blob_order": "C",
    }
    try:
        with open(manifest_path.parent / blob_name, "wb") as fh:
            fh.write(np.ascontiguousarray(dataset.windows, dtype="<f8").tobytes())
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write dataset: {exc}") from exc


def load_windows(manifest_path):
    manifest_path = pathlib.Path(manifest_path)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        with open(manifest_path.parent / manifest["blob"], "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read dataset: {exc}") from exc
    if manifest.get("schema_version") != _WINDOWS_SCHEMA:
        raise SchemaVersionMismatch(
            f"dataset schema {manifest.get('schema_version')} != {_WINDOWS_SCHEMA}"
        )
    count = manifest["count"]
    window_len = manifest["window_len"]
    windows = np.frombuffer(raw, dtype="<f8").reshape(count, 9, window_len)
    return WindowedDataset(
        fps=manifest["fps"],
        window_len=window_len,
        stride=manifest["stride"],
        windows=windows.astype(np.float64),
        labels=manifest["labels"],
        spans=manifest["spans"],
        norm_mean=manifest["norm_mean"],
        norm_scale=manifest["norm_scale"],
        cycle_boundaries=manifest["cycle_boundaries"],
    )
