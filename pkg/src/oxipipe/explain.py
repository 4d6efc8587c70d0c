"""Layer-wise relevance propagation for the 1-D CNN (epsilon rule).

Relevance starts at the scalar prediction and flows backward. For conv and
dense layers each input receives a_i * sum_j w_ij * s_j with
s_j = R_j / (z_j + eps * sign(z_j)); relu passes relevance only through
positive inputs, maxpool routes it to the argmax, dropout and flatten are
identity. The share absorbed by bias and stabilizer terms is tracked per
layer so that sum(input relevance) + bias_absorbed equals the prediction up
to float rounding.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, NumericalBlowup, WrongFirstLayer
from . import cnn as _cnn
from .dsp import STREAMS

_BLOWUP = 1e12


@dataclass
class RelevanceMap:
    """Input-resolution relevance with conservation bookkeeping."""

    relevance: np.ndarray      # (streams, window_len)
    prediction: float
    bias_absorbed: float       # relevance retained by biases and stabilizers
    bias_bound: float          # sum of |s_j| * (|b_j| + eps) over all layers
    epsilon: float

    @property
    def stream_totals(self):
        return self.relevance.sum(axis=1)

    @property
    def channel_totals(self):
        totals = self.stream_totals
        return np.array([totals[0:3].sum(), totals[3:6].sum(), totals[6:9].sum()])

    @property
    def input_total(self):
        return float(self.relevance.sum())


def _sign(z):
    s = np.sign(z)
    s[s == 0.0] = 1.0
    return s


def lrp(model, window, epsilon=1e-9):
    """Relevance of every input sample for one window's prediction."""
    prediction, cache = _cnn.forward(model, window)
    relevance = np.array([prediction])
    absorbed = 0.0
    bound = 0.0
    for i in range(len(model.specs) - 1, -1, -1):
        spec = model.specs[i]
        a = cache["inputs"][i]
        if spec.kind == "dense":
            p = model.params[i]
            z = a @ p["w"].T + p["b"]
            stab = epsilon * _sign(z)
            s = relevance / (z + stab)
            absorbed += float(np.sum(s * (p["b"] + stab)))
            bound += float(np.sum(np.abs(s) * (np.abs(p["b"]) + epsilon)))
            relevance = a * (s @ p["w"])
        elif spec.kind == "conv1d":
            p = model.params[i]
            wins = _cnn._conv_windows(a[None], spec.filter_length, spec.stride)[0]
            z = np.einsum("oik,ilk->ol", p["w"], wins) + p["b"][:, None]
            stab = epsilon * _sign(z)
            s = relevance / (z + stab)
            absorbed += float(np.sum(s * (p["b"][:, None] + stab)))
            bound += float(np.sum(np.abs(s) * (np.abs(p["b"])[:, None] + epsilon)))
            contrib = np.einsum("ol,oik->ilk", s, p["w"])
            coeff = np.zeros_like(a)
            out_len = s.shape[1]
            for k in range(spec.filter_length):
                coeff[:, k:k + spec.stride * out_len:spec.stride] += contrib[:, :, k]
            relevance = a * coeff
        elif spec.kind == "relu":
            relevance = np.where(a > 0.0, relevance, 0.0)
        elif spec.kind == "maxpool1d":
            idx = cache["argmaxes"][i]
            p_len = spec.pool_len
            out_len = a.shape[1] // p_len
            routed = np.zeros((a.shape[0], out_len, p_len))
            np.put_along_axis(routed, idx[..., None], relevance[..., None], axis=2)
            new = np.zeros_like(a)
            new[:, :out_len * p_len] = routed.reshape(a.shape[0], -1)
            relevance = new
        elif spec.kind == "flatten":
            relevance = relevance.reshape(a.shape)
        if not np.all(np.isfinite(relevance)) or np.max(np.abs(relevance)) > _BLOWUP:
            raise NumericalBlowup(
                f"relevance magnitude exceeded {_BLOWUP:g} at layer {i} "
                f"({spec.kind}); increase epsilon")
    return RelevanceMap(relevance=relevance, prediction=prediction,
                        bias_absorbed=absorbed, bias_bound=bound, epsilon=epsilon)


def channel_weight_profile(model):
    """Color-channel shares of first-layer |weight| mass, summing to 1."""
    if not model.specs or model.specs[0].kind != "conv1d":
        kind = model.specs[0].kind if model.specs else "none"
        raise WrongFirstLayer(f"first layer is {kind}, expected conv1d")
    if model.specs[0].in_channels != len(STREAMS):
        raise WrongFirstLayer(
            f"first conv1d has {model.specs[0].in_channels} input channels, "
            f"expected {len(STREAMS)}")
    w = np.abs(model.params[0]["w"])
    scores = np.array([w[:, 0:3, :].sum(), w[:, 3:6, :].sum(), w[:, 6:9, :].sum()])
    total = scores.sum()
    if total == 0.0:
        raise WrongFirstLayer("first-layer weights are identically zero")
    shares = scores / total
    return {"r": float(shares[0]), "g": float(shares[1]), "b": float(shares[2])}


@dataclass
class ChannelRelevanceReport:
    """Mean absolute relevance shares over a dataset of windows."""

    channel_shares: dict         # {"r":, "g":, "b":}; values sum to 1
    stream_shares: dict          # one entry per stream; values sum to 1
    n_windows: int
    mean_bias_absorbed: float
    epsilon: float


def channel_relevance_report(model, dataset, epsilon=1e-9):
    """Average per-window normalized |relevance| shares across a dataset.

    Shares are normalized within each window first so every window
    contributes equally regardless of its prediction magnitude.
    """
    if len(dataset) == 0:
        raise EmptyInput("relevance report needs at least one window")
    channel_acc = np.zeros(3)
    stream_acc = np.zeros(len(STREAMS))
    bias_acc = 0.0
    for i in range(len(dataset)):
        try:
            rel = lrp(model, dataset.windows[i], epsilon=epsilon)
        except NumericalBlowup as exc:
            raise type(exc)(f"window {i}: {exc}") from exc
        mass = np.abs(rel.relevance)
        total = mass.sum()
        if total == 0.0:
            continue
        stream_mass = mass.sum(axis=1) / total
        stream_acc += stream_mass
        channel_acc += np.array([stream_mass[0:3].sum(), stream_mass[3:6].sum(),
                                 stream_mass[6:9].sum()])
        bias_acc += rel.bias_absorbed
    n = len(dataset)
    channel_shares = channel_acc / channel_acc.sum()
    stream_shares = stream_acc / stream_acc.sum()
    return ChannelRelevanceReport(
        channel_shares={"r": float(channel_shares[0]),
                        "g": float(channel_shares[1]),
                        "b": float(channel_shares[2])},
        stream_shares={name: float(v) for name, v in zip(STREAMS, stream_shares)},
        n_windows=n, mean_bias_absorbed=bias_acc / n, epsilon=epsilon)


def relevance_csv_lines(rel):
    """Delimited dump of one RelevanceMap: stream rows plus bias rows."""
    lines = ["stream,index,relevance"]
    n_rows = rel.relevance.shape[0]
    names = STREAMS if n_rows == len(STREAMS) else [
        f"ch{i}" for i in range(n_rows)]
    for row, name in enumerate(names):
        for col in range(rel.relevance.shape[1]):
            lines.append(f"{name},{col},{float(rel.relevance[row, col])!r}")
    lines.append(f"bias_absorbed,,{float(rel.bias_absorbed)!r}")
    lines.append(f"bias_bound,,{float(rel.bias_bound)!r}")
    lines.append(f"prediction,,{float(rel.prediction)!r}")
    return lines
