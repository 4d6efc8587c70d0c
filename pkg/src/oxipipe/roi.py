"""Skin segmentation via Otsu's method and spatial averaging to R/G/B series.

Otsu runs on the luma plane (0.299 r + 0.587 g + 0.114 b, rounded) and the
brighter class is taken as skin, since hand recordings here have dark
backgrounds. The argmax of the between-class variance is computed in exact
integer arithmetic so the tie-break (smallest maximizing threshold) is
bit-for-bit reproducible against exhaustive search.
"""

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, NoSeparation
from .frameio import ColorSignal

# 4-connectivity structuring element for component labelling.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def otsu_threshold(histogram):
    """Level t in [0, 255] maximizing between-class variance of [0,t] vs (t,255].

    Between-class variance w0*w1*(mu0 - mu1)^2 is compared as the exact
    rational (m0*c1 - m1*c0)^2 / (c0*c1*N^2) using integer cross
    multiplication, so ties are exact and broken toward the smallest t.
    """
    hist = [int(v) for v in histogram]
    if len(hist) != 256:
        raise ValueError(f"histogram must have 256 bins, got {len(hist)}")
    if any(v < 0 for v in hist):
        raise ValueError("histogram counts must be non-negative")
    total = sum(hist)
    occupied = sum(1 for v in hist if v > 0)
    if total < 2 or occupied < 2:
        raise NoSeparation("histogram mass concentrated in a single bin")
    moment = sum(i * v for i, v in enumerate(hist))

    best_t = None
    best_num = -1  # (m0*c1 - m1*c0)^2
    best_den = 1   # c0*c1
    c0 = 0
    m0 = 0
    for t in range(256):
        c0 += hist[t]
        m0 += t * hist[t]
        c1 = total - c0
        if c0 == 0 or c1 == 0:
            continue
        m1 = moment - m0
        num = (m0 * c1 - m1 * c0) ** 2
        den = c0 * c1
        # strict improvement only: equal variance keeps the smaller t
        if num * best_den > best_num * den:
            best_num, best_den, best_t = num, den, t
    return best_t


def luma(frame):
    """Integer luma plane of an RGB frame (rounded to nearest)."""
    frame = np.asarray(frame, dtype=np.float64)
    y = 0.299 * frame[..., 0] + 0.587 * frame[..., 1] + 0.114 * frame[..., 2]
    return np.rint(y).astype(np.int64)


class SkinMask:
    """Boolean skin membership grid plus the 8-bit level that produced it."""

    def __init__(self, membership, threshold):
        membership = np.asarray(membership, dtype=bool)
        if membership.ndim != 2:
            raise ValueError("membership must be a 2-D grid")
        if not membership.any():
            raise ValueError("mask must contain at least one skin pixel")
        self.membership = membership
        self.threshold = int(threshold)

    @property
    def width(self):
        return self.membership.shape[1]

    @property
    def height(self):
        return self.membership.shape[0]

    @property
    def size(self):
        return int(self.membership.sum())


def extract_mask(frame):
    """Segment one frame: luma Otsu, keep the brighter class, then the
    largest 4-connected component."""
    y = luma(frame)
    hist = np.bincount(y.ravel(), minlength=256)
    t = otsu_threshold(hist)
    bright = y > t
    if not bright.any():
        raise EmptyMask("brighter class is empty")
    labels, count = ndimage.label(bright, structure=_CROSS)
    if count == 0:
        raise EmptyMask("no connected component above threshold")
    sizes = ndimage.sum_labels(bright, labels, index=np.arange(1, count + 1))
    keep = int(np.argmax(sizes)) + 1
    return SkinMask(labels == keep, t)


def extract_color_signal(seq):
    """Per-frame spatial means over each frame's skin mask.

    Mask errors are re-raised with the offending frame index attached.
    """
    n = seq.frame_count
    samples = np.empty((n, 3), dtype=np.float64)
    for i in range(n):
        frame = seq.frames[i]
        try:
            mask = extract_mask(frame)
        except (NoSeparation, EmptyMask) as exc:
            raise type(exc)(f"frame {i}: {exc}", frame_index=i) from exc
        pixels = frame[mask.membership].astype(np.float64)
        samples[i] = pixels.mean(axis=0)
    return ColorSignal(fps=seq.fps, samples=samples)
