"""Classical ratio-of-ratios SpO2 baseline and its linear calibration fit.

The AC magnitude of a window is summarized as the RMS of the un-standardized
ac stream and the DC level as the mean of the un-standardized dc stream. The
default wavelength pair is red/blue (the RGB analogue of red/infrared);
red/green is available via the `pair` argument.
"""

from dataclasses import dataclass
import json

import numpy as np

from .errors import DegenerateDC, EmptyInput, IoFailure, LengthMismatch, RankDeficient
from .synth import CalibrationModel

_EPS = 1e-6
_CHANNEL_INDEX = {"r": 0, "g": 1, "b": 2}
_AC_ROW = {"r": 1, "g": 4, "b": 7}
_DC_ROW = {"r": 2, "g": 5, "b": 8}


@dataclass
class RatioFeatures:
    """Per-window AC/DC summary and the resulting ratio-of-ratios."""

    ac_rms: np.ndarray    # (3,) per color channel
    dc_mean: np.ndarray   # (3,)
    ratio: float
    pair: tuple = ("r", "b")


def ratio_of_ratios(block, pair=("r", "b")):
    """Features for one un-standardized 9-stream window block (9, len).

    Use WindowedDataset.denormalized(i) to obtain the block; standardized
    windows would have their amplitude information rescaled away.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] != 9:
        raise ValueError(f"expected a (9, len) window block, got {block.shape}")
    ac_rms = np.empty(3)
    dc_mean = np.empty(3)
    for name, c in _CHANNEL_INDEX.items():
        ac_rms[c] = np.sqrt(np.mean(block[_AC_ROW[name]] ** 2))
        dc_mean[c] = np.mean(block[_DC_ROW[name]])
    if np.any(dc_mean <= _EPS):
        raise DegenerateDC(f"dc mean {dc_mean} at or below {_EPS}")
    num, den = _CHANNEL_INDEX[pair[0]], _CHANNEL_INDEX[pair[1]]
    if ac_rms[den] <= 0.0:
        raise DegenerateDC(f"reference channel {pair[1]!r} has zero AC amplitude")
    ratio = (ac_rms[num] / dc_mean[num]) / (ac_rms[den] / dc_mean[den])
    return RatioFeatures(ac_rms=ac_rms, dc_mean=dc_mean, ratio=float(ratio),
                         pair=tuple(pair))


def dataset_features(dataset, pair=("r", "b")):
    """RatioFeatures for every window of a WindowedDataset."""
    return [ratio_of_ratios(dataset.denormalized(i), pair=pair)
            for i in range(len(dataset))]


def _as_ratios(features):
    return np.asarray([f.ratio if isinstance(f, RatioFeatures) else float(f)
                       for f in features], dtype=np.float64)


def fit_calibration(features, labels):
    """Ordinary least squares for spo2 = a - b * ratio.

    `features` may hold RatioFeatures or plain ratio numbers.
    """
    ratios = _as_ratios(features)
    labels = np.asarray(labels, dtype=np.float64)
    if len(ratios) != len(labels):
        raise LengthMismatch(f"{len(ratios)} features vs {len(labels)} labels")
    if len(ratios) < 2:
        raise EmptyInput("need at least two points to fit a calibration")
    x_mean = ratios.mean()
    var = np.mean((ratios - x_mean) ** 2)
    if var <= (1e-9 * max(abs(x_mean), 1e-12)) ** 2:
        raise RankDeficient("ratio values (nearly) identical; slope is "
                            "undetermined")
    cov = np.mean((ratios - x_mean) * (labels - labels.mean()))
    b = -cov / var
    a = labels.mean() + b * x_mean
    fitted = a - b * ratios
    rmse = float(np.sqrt(np.mean((fitted - labels) ** 2)))
    return CalibrationModel(a=float(a), b=float(b), fit_rmse=rmse,
                            n_points=len(ratios))


def predict_ror(cal, features):
    """SpO2 prediction clamped to the physiologic [70, 100] range.

    Accepts one RatioFeatures or a sequence; returns float or array to match.
    """
    single = isinstance(features, RatioFeatures) or np.isscalar(features)
    feats = [features] if single else list(features)
    ratios = _as_ratios(feats)
    preds = np.clip(cal.a - cal.b * ratios, 70.0, 100.0)
    return float(preds[0]) if single else preds


def save_calibration(cal, path):
    doc = {"a": cal.a, "b": cal.b, "fit_rmse": cal.fit_rmse, "n": cal.n_points}
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write calibration: {exc}") from exc


def load_calibration(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read calibration: {exc}") from exc
    return CalibrationModel(a=doc["a"], b=doc["b"],
                            fit_rmse=doc.get("fit_rmse"),
                            n_points=doc.get("n"))
