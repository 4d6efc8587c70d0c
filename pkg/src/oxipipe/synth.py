"""Forward optophysiological model producing ground-truthed synthetic recordings.

Per channel c the emitted signal is

    s_c(t) = DC_c * (1 - melanin * k_c) - AC_c(t) * pulse(t) + n(t)

with AC amplitudes sized so that the red/blue ratio-of-ratios equals
(a - spo2(t)) / b under the active calibration. The green channel carries the
pulse but no SpO2 dependence: its envelope is a slow seeded wobble that is
independent of the spo2 trace, which makes it a decoy rather than a clean
amplitude reference. A slow seeded vasomotion factor multiplies every
channel's pulsatile amplitude, mimicking vasomotor (Mayer-wave) drift in
perfusion strength; because it is common to all channels it cancels exactly
in the red/blue ratio-of-ratios, so only methods that normalize one channel
against another stay immune to it. All randomness flows from one integer
seed.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConfigInvalid,
    GeometryTooSmall,
    NyquistViolation,
    RangeOverflow,
)
from .frameio import ColorSignal, FrameSequence

# Channel attenuation weights for the melanin factor (red least, blue most)
# and the AC attenuation applied to palm recordings relative to back-of-hand.
MELANIN_WEIGHTS = (0.3, 0.5, 0.7)
SIDE_AC_FACTORS = {"back": 1.0, "palm": 0.6}

# Green decoy envelope: base level plus two slow incommensurate wobbles with
# seeded phases. Stays within [0.45, 0.95] of the perfusion scale.
_GREEN_BASE = 0.7
_GREEN_WOBBLE = ((0.15, 0.073), (0.10, 0.127))  # (amplitude, frequency Hz)

# Vasomotion: slow multiplicative drift of the pulsatile amplitude, common to
# all channels. Two incommensurate sub-band tones with seeded phases keep the
# factor within [0.8, 1.2]; periods are chosen longer than the 10 s analysis
# window (so the factor is near-constant within any one window) but shorter
# than a breathing cycle, and away from the green decoy tones.
_VASO_WOBBLE = ((0.12, 0.053), (0.08, 0.029))  # (amplitude, frequency Hz)


@dataclass
class CalibrationModel:
    """Linear ratio-of-ratios calibration: spo2 = a - b * ratio."""

    a: float
    b: float
    fit_rmse: Optional[float] = None
    n_points: Optional[int] = None

    def __post_init__(self):
        if not np.isfinite(self.a) or not np.isfinite(self.b):
            raise ValueError("calibration coefficients must be finite")
        if self.b <= 0:
            raise ValueError(f"calibration slope b must be positive, got {self.b}")

    def ratio_for(self, spo2):
        return (self.a - np.asarray(spo2, dtype=np.float64)) / self.b

    def spo2_for(self, ratio):
        return self.a - self.b * np.asarray(ratio, dtype=np.float64)


DEFAULT_CALIBRATION = CalibrationModel(a=110.0, b=25.0)


@dataclass
class SubjectProfile:
    """Synthetic subject: skin tone, hand side, baseline reflectance, SNR knobs."""

    skin_tone: float = 0.3
    hand_side: str = "back"
    base_dc: tuple = (180.0, 150.0, 120.0)
    perfusion: float = 0.05
    noise_sigma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.skin_tone <= 1.0:
            raise ValueError(f"skin_tone must be in [0, 1], got {self.skin_tone}")
        if self.hand_side not in SIDE_AC_FACTORS:
            raise ValueError(f"hand_side must be 'palm' or 'back', got {self.hand_side!r}")
        if len(self.base_dc) != 3:
            raise ValueError("base_dc must be an (r, g, b) triple")
        # perfusion 0 is the documented degenerate flat-signal case
        if not 0.0 <= self.perfusion <= 0.1:
            raise ValueError(f"perfusion must be in [0, 0.1], got {self.perfusion}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        dc_eff = self.effective_dc()
        if np.any(dc_eff <= 0.0) or np.any(dc_eff >= 255.0):
            raise ValueError(
                f"effective DC {dc_eff} leaves (0, 255) after melanin attenuation"
            )

    def effective_dc(self):
        """Per-channel DC after melanin attenuation."""
        base = np.asarray(self.base_dc, dtype=np.float64)
        weights = np.asarray(MELANIN_WEIGHTS)
        return base * (1.0 - self.skin_tone * weights)

    def side_factor(self):
        return SIDE_AC_FACTORS[self.hand_side]


@dataclass
class PhysioTrace:
    """Heart rate, breathing-cycle layout, and the ground-truth SpO2 trace.

    The default trace runs `breathing_cycles` identical cycles, each starting
    at `spo2_baseline` percent with a smooth raised-cosine dip to `spo2_dip`
    at mid-cycle. A custom `spo2_fn(t_seconds) -> percent` may replace it.
    """

    duration_s: float = 90.0
    heart_rate_hz: float = 1.2
    breathing_cycles: int = 3
    spo2_baseline: float = 98.0
    spo2_dip: float = 85.0
    spo2_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if not 0.7 <= self.heart_rate_hz <= 4.0:
            raise ValueError(
                f"heart_rate_hz must be in [0.7, 4.0], got {self.heart_rate_hz}"
            )
        if self.breathing_cycles < 1:
            raise ValueError("breathing_cycles must be >= 1")
        if not 70.0 <= self.spo2_dip <= self.spo2_baseline <= 100.0:
            raise ValueError(
                f"need 70 <= spo2_dip <= spo2_baseline <= 100, got "
                f"dip={self.spo2_dip} baseline={self.spo2_baseline}"
            )

    def cycle_boundaries_s(self):
        """Cycle edges in seconds, endpoints included."""
        return np.linspace(0.0, self.duration_s, self.breathing_cycles + 1)

    def sample_boundaries(self, fps):
        """Cycle edges as sample indices for a recording at `fps`."""
        n = int(round(self.duration_s * fps))
        edges = np.rint(self.cycle_boundaries_s() * fps).astype(np.int64)
        edges[-1] = n
        return edges

    def spo2_at(self, t):
        """Ground-truth SpO2 percent at time(s) `t` seconds."""
        t = np.asarray(t, dtype=np.float64)
        if self.spo2_fn is not None:
            values = np.asarray(self.spo2_fn(t), dtype=np.float64)
        else:
            cycle_len = self.duration_s / self.breathing_cycles
            u = np.mod(t, cycle_len) / cycle_len
            depth = self.spo2_baseline - self.spo2_dip
            values = self.spo2_baseline - depth * np.sin(np.pi * u) ** 2
        if np.any(values < 70.0) or np.any(values > 100.0):
            raise ValueError("spo2 trace leaves [70, 100]")
        return values


def pulse_waveform(phase):
    """Unit-amplitude pulse at fractional phase in [0, 1).

    Systolic raised-cosine lobe on [0, 0.4] peaking at 1.0, dicrotic bump on
    [0.45, 0.8] peaking at 0.5, flat zero elsewhere; range is exactly [0, 1].
    """
    u = np.mod(np.asarray(phase, dtype=np.float64), 1.0)
    main = np.where(u < 0.4, np.sin(np.pi * u / 0.4) ** 2, 0.0)
    in_bump = (u >= 0.45) & (u < 0.8)
    bump = np.where(in_bump, 0.5 * np.sin(np.pi * (u - 0.45) / 0.35) ** 2, 0.0)
    return main + bump


@dataclass
class SynthEnvelopes:
    """Analytic (noise-free) components backing a synthetic color signal."""

    dc: np.ndarray          # (3,) effective DC per channel
    ac: np.ndarray          # (n, 3) per-sample AC amplitude envelopes
    pulse: np.ndarray       # (n,) pulse waveform samples
    ratio: np.ndarray       # (n,) red/blue ratio-of-ratios = (a - spo2) / b
    spo2: np.ndarray        # (n,) ground truth
    vaso: np.ndarray        # (n,) common vasomotion amplitude factor


def _green_envelope(rng, t):
    env = np.full_like(t, _GREEN_BASE)
    for amplitude, freq in _GREEN_WOBBLE:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        env += amplitude * np.sin(2.0 * np.pi * freq * t + phase)
    return env


def _vaso_envelope(rng, t):
    env = np.ones_like(t)
    for amplitude, freq in _VASO_WOBBLE:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        env += amplitude * np.sin(2.0 * np.pi * freq * t + phase)
    return env


def _envelopes(profile, physio, fps, rng, calibration):
    n = int(round(physio.duration_s * fps))
    if n < 1:
        raise ConfigInvalid("recording shorter than one sample")
    t = np.arange(n, dtype=np.float64) / fps
    spo2 = physio.spo2_at(t)
    ratio = calibration.ratio_for(spo2)
    if np.any(ratio <= 0.0):
        raise ConfigInvalid(
            "calibration yields non-positive ratio-of-ratios for this spo2 trace; "
            "intercept a must exceed the maximum spo2"
        )
    dc = profile.effective_dc()
    scale = profile.perfusion * profile.side_factor()
    ac = np.empty((n, 3), dtype=np.float64)
    ac[:, 0] = scale * dc[0] * ratio
    ac[:, 1] = scale * dc[1] * _green_envelope(rng, t)
    ac[:, 2] = scale * dc[2]
    vaso = _vaso_envelope(rng, t)
    pulse = pulse_waveform(t * physio.heart_rate_hz)
    return SynthEnvelopes(dc=dc, ac=ac, pulse=pulse, ratio=ratio, spo2=spo2,
                          vaso=vaso)


def analytic_envelopes(profile, physio, fps, seed, calibration=DEFAULT_CALIBRATION):
    """Noise-free components for the identical (profile, physio, fps, seed)."""
    rng = np.random.default_rng(seed)
    return _envelopes(profile, physio, fps, rng, calibration)


def generate_color_signal(profile, physio, fps, seed,
                          calibration=DEFAULT_CALIBRATION):
    """Generate a ground-truthed synthetic ColorSignal.

    Deterministic: identical (profile, physio, fps, seed) produce bit-identical
    output. Raises NyquistViolation when fps < 2 * heart rate and RangeOverflow
    when any pre-quantization sample leaves [0, 255].
    """
    if fps < 2.0 * physio.heart_rate_hz:
        raise NyquistViolation(
            f"fps {fps} below Nyquist for heart rate {physio.heart_rate_hz} Hz"
        )
    rng = np.random.default_rng(seed)
    env = _envelopes(profile, physio, fps, rng, calibration)
    samples = env.dc[None, :] - env.ac * (env.vaso * env.pulse)[:, None]
    if profile.noise_sigma > 0:
        samples = samples + rng.normal(0.0, profile.noise_sigma, samples.shape)
    lo, hi = samples.min(), samples.max()
    if lo < 0.0 or hi > 255.0:
        raise RangeOverflow(
            f"samples span [{lo:.3f}, {hi:.3f}] outside [0, 255]: "
            "amplitudes or noise are mis-sized for the DC levels"
        )
    return ColorSignal(
        fps=fps,
        samples=samples,
        spo2=env.spo2,
        cycle_boundaries=physio.sample_boundaries(fps),
    )


def _hand_mask(width, height):
    """Stylized contiguous hand silhouette (palm, four fingers, thumb)."""
    y, x = np.mgrid[0:height, 0:width]
    xn = (x + 0.5) / width
    yn = (y + 0.5) / height

    def ellipse(cx, cy, rx, ry):
        return ((xn - cx) / rx) ** 2 + ((yn - cy) / ry) ** 2 <= 1.0

    mask = ellipse(0.50, 0.62, 0.22, 0.20)          # palm
    for i in range(4):                               # fingers
        cx = 0.5 + (i - 1.5) * 0.11
        mask |= ellipse(cx, 0.32, 0.045, 0.16)
    mask |= ellipse(0.24, 0.58, 0.055, 0.10)         # thumb
    return mask


@dataclass
class FrameRender:
    """generate_frames output: frames plus the true mask for oracle use."""

    frames: FrameSequence
    mask: np.ndarray
    signal: ColorSignal


def generate_frames(profile, physio, fps, geometry, seed,
                    texture_sigma=2.0, background_level=20.0,
                    calibration=DEFAULT_CALIBRATION):
    """Render a synthetic recording as RGB frames over a dark background.

    `geometry` is (width, height), at least 32x32. The skin region's color per
    frame equals generate_color_signal's sample for that frame plus per-pixel
    i.i.d. Gaussian texture noise; quantization to 8 bits happens here only.
    """
    width, height = geometry
    if width < 32 or height < 32:
        raise GeometryTooSmall(
            f"geometry {width}x{height} cannot contain the hand mask (min 32x32)"
        )
    mask = _hand_mask(width, height)
    if not mask.any():
        raise GeometryTooSmall("foreground mask is empty at this geometry")
    signal = generate_color_signal(profile, physio, fps, seed, calibration)
    tex_rng = np.random.default_rng([seed, 0xFACE])
    n = len(signal)
    frames = np.empty((n, height, width, 3), dtype=np.uint8)
    base = np.full((height, width, 3), background_level, dtype=np.float64)
    for i in range(n):
        canvas = base.copy()
        canvas[mask] = signal.samples[i]
        canvas += tex_rng.normal(0.0, texture_sigma, canvas.shape)
        frames[i] = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return FrameRender(
        frames=FrameSequence(frames, fps), mask=mask, signal=signal
    )
