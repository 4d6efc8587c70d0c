"""From-scratch 1-D convolutional regression network on numpy float64.

Layer kinds: conv1d (cross-correlation, valid padding), relu, maxpool1d
(non-overlapping, remainder dropped, ties to the lowest index), dropout
(inverted scaling, identity at inference), flatten, dense. Gradients are
exact analytic backprop of the mean squared error; no autograd framework
is involved anywhere.
"""

from dataclasses import dataclass, field, replace
import json
import math

import numpy as np

from .errors import (DivergenceDetected, EmptyInput, IoFailure, LengthMismatch,
                     SchemaVersionMismatch, ShapeMismatch)

_MODEL_SCHEMA = 1
_KINDS = ("conv1d", "relu", "maxpool1d", "dropout", "flatten", "dense")


@dataclass
class LayerSpec:
    """Declarative description of one layer; shapes are validated at build."""

    kind: str
    in_channels: int = None
    out_filters: int = None
    filter_length: int = None
    stride: int = 1
    pool_len: int = None
    rate: float = None
    in_dim: int = None
    out_dim: int = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ShapeMismatch(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d":
            for name in ("in_channels", "out_filters", "filter_length"):
                if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                    raise ShapeMismatch(f"conv1d requires positive int {name}")
            if not isinstance(self.stride, int) or self.stride < 1:
                raise ShapeMismatch("conv1d stride must be a positive int")
        elif self.kind == "maxpool1d":
            if not isinstance(self.pool_len, int) or self.pool_len < 1:
                raise ShapeMismatch("maxpool1d requires positive int pool_len")
        elif self.kind == "dropout":
            if self.rate is None or not 0.0 <= self.rate < 1.0:
                raise ShapeMismatch("dropout rate must lie in [0, 1)")
        elif self.kind == "dense":
            for name in ("in_dim", "out_dim"):
                if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                    raise ShapeMismatch(f"dense requires positive int {name}")

    def to_json(self):
        doc = {"kind": self.kind}
        for name in ("in_channels", "out_filters", "filter_length", "pool_len",
                     "rate", "in_dim", "out_dim"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        if self.kind == "conv1d":
            doc["stride"] = self.stride
        return doc

    @classmethod
    def from_json(cls, doc):
        kwargs = {k: v for k, v in doc.items()}
        return cls(**kwargs)


@dataclass
class CnnModel:
    """Layer specs plus parameter arrays (None for parameter-free layers)."""

    specs: list
    params: list
    input_geometry: tuple
    rng_seed: int

    def copy(self):
        params = [None if p is None else {"w": p["w"].copy(), "b": p["b"].copy()}
                  for p in self.params]
        return CnnModel(specs=list(self.specs), params=params,
                        input_geometry=tuple(self.input_geometry),
                        rng_seed=self.rng_seed)


def shape_chain(specs, input_geometry):
    """Activation shape after each layer; raises ShapeMismatch on conflicts."""
    shape = tuple(input_geometry)
    shapes = [shape]
    for i, spec in enumerate(specs):
        where = f"layer {i} ({spec.kind})"
        if spec.kind == "conv1d":
            if len(shape) != 2:
                raise ShapeMismatch(f"{where}: needs (channels, len), got {shape}")
            channels, length = shape
            if channels != spec.in_channels:
                raise ShapeMismatch(
                    f"{where}: in_channels {spec.in_channels} != input {channels}")
            out_len = (length - spec.filter_length) // spec.stride + 1
            if spec.filter_length > length or out_len < 1:
                raise ShapeMismatch(
                    f"{where}: filter_length {spec.filter_length} exceeds input "
                    f"length {length}")
            shape = (spec.out_filters, out_len)
        elif spec.kind == "maxpool1d":
            if len(shape) != 2:
                raise ShapeMismatch(f"{where}: needs (channels, len), got {shape}")
            out_len = shape[1] // spec.pool_len
            if out_len < 1:
                raise ShapeMismatch(
                    f"{where}: pool_len {spec.pool_len} exceeds input length "
                    f"{shape[1]}")
            shape = (shape[0], out_len)
        elif spec.kind == "flatten":
            if len(shape) != 2:
                raise ShapeMismatch(f"{where}: needs (channels, len), got {shape}")
            shape = (shape[0] * shape[1],)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ShapeMismatch(f"{where}: needs a flat input, got {shape}")
            if shape[0] != spec.in_dim:
                raise ShapeMismatch(
                    f"{where}: in_dim {spec.in_dim} != input {shape[0]}")
            shape = (spec.out_dim,)
        shapes.append(shape)
    return shapes


def build_model(specs, input_geometry, seed):
    """Validate the layer chain and He-uniform initialize all parameters."""
    shapes = shape_chain(specs, input_geometry)
    if shapes[-1] != (1,):
        raise ShapeMismatch(f"network must end in a single output, got {shapes[-1]}")
    rng = np.random.default_rng(seed)
    params = []
    for spec in specs:
        if spec.kind == "conv1d":
            fan_in = spec.in_channels * spec.filter_length
            limit = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit,
                            size=(spec.out_filters, spec.in_channels,
                                  spec.filter_length))
            params.append({"w": w, "b": np.zeros(spec.out_filters)})
        elif spec.kind == "dense":
            limit = math.sqrt(6.0 / spec.in_dim)
            w = rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim))
            params.append({"w": w, "b": np.zeros(spec.out_dim)})
        else:
            params.append(None)
    return CnnModel(specs=list(specs), params=params,
                    input_geometry=tuple(input_geometry), rng_seed=int(seed))


def make_cnn_specs(window_len, n_channels=9, conv_layers=2, filters=16,
                   filter_length=15, pool_len=4, dropout_rate=0.25,
                   dense_width=32):
    """Standard conv/pool stack ending in a single regression unit."""
    specs = []
    shape = (n_channels, window_len)
    for _ in range(conv_layers):
        specs.append(LayerSpec("conv1d", in_channels=shape[0], out_filters=filters,
                               filter_length=filter_length))
        shape = (filters, shape[1] - filter_length + 1)
        specs.append(LayerSpec("relu"))
        specs.append(LayerSpec("maxpool1d", pool_len=pool_len))
        shape = (shape[0], shape[1] // pool_len)
        if shape[1] < 1:
            raise ShapeMismatch("window too short for the requested conv stack")
    if dropout_rate > 0.0:
        specs.append(LayerSpec("dropout", rate=dropout_rate))
    specs.append(LayerSpec("flatten"))
    flat = shape[0] * shape[1]
    specs.append(LayerSpec("dense", in_dim=flat, out_dim=dense_width))
    specs.append(LayerSpec("relu"))
    specs.append(LayerSpec("dense", in_dim=dense_width, out_dim=1))
    return specs


def _conv_windows(x, filter_length, stride):
    wins = np.lib.stride_tricks.sliding_window_view(x, filter_length, axis=2)
    return wins[:, :, ::stride, :]


def forward_batch(model, x, train_mode=False, rng=None):
    """Run a (n, channels, len) batch; returns (outputs (n,), cache).

    The cache holds every layer input plus dropout masks and pool argmax
    indices, enough for exact backprop and for relevance propagation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != tuple(model.input_geometry):
        raise ShapeMismatch(
            f"batch shape {x.shape} does not match input geometry "
            f"{model.input_geometry}")
    inputs = []
    masks = {}
    argmaxes = {}
    for i, spec in enumerate(model.specs):
        inputs.append(x)
        if spec.kind == "conv1d":
            wins = _conv_windows(x, spec.filter_length, spec.stride)
            p = model.params[i]
            # tensordot routes through BLAS; out[n,o,l] = sum_ik w[o,i,k] win[n,i,l,k]
            x = np.tensordot(wins, p["w"], axes=([1, 3], [1, 2]))
            x = np.ascontiguousarray(x.transpose(0, 2, 1)) + p["b"][None, :, None]
        elif spec.kind == "relu":
            x = np.maximum(x, 0.0)
        elif spec.kind == "maxpool1d":
            p_len = spec.pool_len
            out_len = x.shape[2] // p_len
            trimmed = x[:, :, :out_len * p_len].reshape(
                x.shape[0], x.shape[1], out_len, p_len)
            idx = trimmed.argmax(axis=3)
            argmaxes[i] = idx
            x = np.take_along_axis(trimmed, idx[..., None], axis=3)[..., 0]
        elif spec.kind == "dropout":
            if train_mode:
                keep = rng.random(x.shape) >= spec.rate
                masks[i] = keep
                x = x * keep / (1.0 - spec.rate)
        elif spec.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == "dense":
            p = model.params[i]
            x = x @ p["w"].T + p["b"]
    cache = {"inputs": inputs, "output": x, "masks": masks, "argmaxes": argmaxes}
    return x[:, 0], cache


def backward_batch(model, cache, d_out):
    """Gradients of a scalar loss given d(loss)/d(output) of shape (n,)."""
    g = np.asarray(d_out, dtype=np.float64)[:, None]
    grads = [None] * len(model.specs)
    for i in range(len(model.specs) - 1, -1, -1):
        spec = model.specs[i]
        x = cache["inputs"][i]
        if spec.kind == "conv1d":
            p = model.params[i]
            wins = _conv_windows(x, spec.filter_length, spec.stride)
            dw = np.tensordot(g, wins, axes=([0, 2], [0, 2]))
            grads[i] = {"w": dw, "b": g.sum(axis=(0, 2))}
            contrib = np.tensordot(g, p["w"], axes=([1], [0]))
            contrib = contrib.transpose(0, 2, 1, 3)   # (n, c_in, l_out, k)
            dx = np.zeros_like(x)
            out_len = g.shape[2]
            for k in range(spec.filter_length):
                dx[:, :, k:k + spec.stride * out_len:spec.stride] += contrib[:, :, :, k]
            g = dx
        elif spec.kind == "relu":
            g = g * (x > 0.0)
        elif spec.kind == "maxpool1d":
            idx = cache["argmaxes"][i]
            p_len = spec.pool_len
            out_len = x.shape[2] // p_len
            dxr = np.zeros((x.shape[0], x.shape[1], out_len, p_len))
            np.put_along_axis(dxr, idx[..., None], g[..., None], axis=3)
            dx = np.zeros_like(x)
            dx[:, :, :out_len * p_len] = dxr.reshape(x.shape[0], x.shape[1], -1)
            g = dx
        elif spec.kind == "dropout":
            if i in cache["masks"]:
                g = g * cache["masks"][i] / (1.0 - spec.rate)
        elif spec.kind == "flatten":
            g = g.reshape(x.shape)
        elif spec.kind == "dense":
            p = model.params[i]
            grads[i] = {"w": g.T @ x, "b": g.sum(axis=0)}
            g = g @ p["w"]
    return grads


def forward(model, window):
    """Inference on a single (channels, len) window; returns (pred, cache).

    Cache arrays are squeezed to single-sample shapes for the explainer.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.shape != tuple(model.input_geometry):
        raise ShapeMismatch(
            f"window shape {window.shape} does not match input geometry "
            f"{model.input_geometry}")
    out, cache = forward_batch(model, window[None], train_mode=False)
    squeezed = {
        "inputs": [a[0] for a in cache["inputs"]],
        "output": cache["output"][0],
        "masks": {},
        "argmaxes": {k: v[0] for k, v in cache["argmaxes"].items()},
    }
    return float(out[0]), squeezed


def backward(model, window, label):
    """Parameter gradients of (pred - label)^2 for one window."""
    window = np.asarray(window, dtype=np.float64)
    out, cache = forward_batch(model, window[None], train_mode=False)
    d_out = 2.0 * (out - float(label))
    return backward_batch(model, cache, d_out)


def predict(model, windows, batch_size=256):
    """Inference predictions for (n, channels, len) windows or a dataset."""
    if hasattr(windows, "windows"):
        windows = windows.windows
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim == 2:
        windows = windows[None]
    preds = np.empty(len(windows))
    for start in range(0, len(windows), batch_size):
        out, _ = forward_batch(model, windows[start:start + batch_size])
        preds[start:start + len(out)] = out
    return preds


def rmse(predictions, labels):
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise LengthMismatch(f"{predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise EmptyInput("no predictions to score")
    # a diverging model may score inf; that is the honest answer, not a warning
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.mean((predictions - labels) ** 2)))


def mae(predictions, labels):
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise LengthMismatch(f"{predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise EmptyInput("no predictions to score")
    return float(np.mean(np.abs(predictions - labels)))


def oversample(dataset, seed):
    """Balance 1-point SpO2 label bins by resampling with replacement.

    Every original window is retained; each bin is topped up to the size of
    the largest bin with draws from within that bin.
    """
    if dataset.labels is None:
        raise EmptyInput("oversampling requires a labeled dataset")
    rng = np.random.default_rng(seed)
    bins = np.floor(dataset.labels).astype(np.int64)
    order = []
    counts = {int(b): int(np.sum(bins == b)) for b in np.unique(bins)}
    target = max(counts.values())
    order.extend(range(len(dataset)))
    for b in sorted(counts):
        members = np.flatnonzero(bins == b)
        deficit = target - len(members)
        if deficit > 0:
            order.extend(rng.choice(members, size=deficit, replace=True))
    return dataset.subset(np.asarray(order, dtype=np.int64))


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    oversample: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size, learning_rate must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_rmse: float
    val_rmse: float = None


@dataclass
class TrainResult:
    model: CnnModel
    history: list = field(default_factory=list)


class _Optimizer:
    def __init__(self, config, params):
        self.config = config
        self.step_count = 0
        if config.optimizer == "adam":
            self.m = [None if p is None else
                      {"w": np.zeros_like(p["w"]), "b": np.zeros_like(p["b"])}
                      for p in params]
            self.v = [None if p is None else
                      {"w": np.zeros_like(p["w"]), "b": np.zeros_like(p["b"])}
                      for p in params]

    def step(self, params, grads):
        cfg = self.config
        self.step_count += 1
        if cfg.optimizer == "sgd":
            for p, g in zip(params, grads):
                if p is None:
                    continue
                p["w"] -= cfg.learning_rate * g["w"]
                p["b"] -= cfg.learning_rate * g["b"]
            return
        t = self.step_count
        correct1 = 1.0 - cfg.beta1 ** t
        correct2 = 1.0 - cfg.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p is None:
                continue
            for key in ("w", "b"):
                m[key] = cfg.beta1 * m[key] + (1.0 - cfg.beta1) * g[key]
                v[key] = cfg.beta2 * v[key] + (1.0 - cfg.beta2) * g[key] ** 2
                m_hat = m[key] / correct1
                v_hat = v[key] / correct2
                p[key] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def train(model, dataset, config, val_dataset=None):
    """Mini-batch MSE training; returns a new model plus per-epoch history.

    Non-finite losses or parameters raise DivergenceDetected. Train RMSE is
    measured on the training-mode forward passes of the epoch; validation
    RMSE uses inference mode.
    """
    if dataset.labels is None:
        raise EmptyInput("training requires a labeled dataset")
    if len(dataset) == 0:
        raise EmptyInput("training dataset is empty")
    work = dataset
    if config.oversample:
        work = oversample(dataset, seed=config.seed)
    model = model.copy()
    # Warm-start a freshly built head: when the output bias still sits at its
    # zero initialization, move it to the label mean so the optimizer fits
    # residuals instead of spending epochs climbing to the label offset.
    last = model.params[-1]
    if (model.specs[-1].kind == "dense" and last["b"].shape == (1,)
            and np.all(last["b"] == 0.0)):
        last["b"][0] = float(np.mean(work.labels))
    rng = np.random.default_rng(config.seed)
    optimizer = _Optimizer(config, model.params)
    x_all = work.windows
    y_all = work.labels
    history = []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(work))
        sq_sum = 0.0
        for start in range(0, len(perm), config.batch_size):
            take = perm[start:start + config.batch_size]
            xb = x_all[take]
            yb = y_all[take]
            # overflow in a diverging run is detected explicitly below, so
            # numpy's intermediate warnings are suppressed
            with np.errstate(over="ignore", invalid="ignore"):
                out, cache = forward_batch(model, xb, train_mode=True, rng=rng)
                err = out - yb
                batch_sq = float(np.sum(err ** 2))
                if not np.isfinite(batch_sq):
                    raise DivergenceDetected(
                        f"non-finite loss at epoch {epoch}")
                sq_sum += batch_sq
                grads = backward_batch(model, cache, 2.0 * err / len(take))
                optimizer.step(model.params, grads)
        for p in model.params:
            if p is not None and not (np.all(np.isfinite(p["w"]))
                                      and np.all(np.isfinite(p["b"]))):
                raise DivergenceDetected(f"non-finite weights at epoch {epoch}")
        record = EpochRecord(epoch=epoch,
                             train_rmse=float(np.sqrt(sq_sum / len(perm))))
        if val_dataset is not None and len(val_dataset) > 0:
            record.val_rmse = rmse(predict(model, val_dataset), val_dataset.labels)
        history.append(record)
    return TrainResult(model=model, history=history)


def model_to_json(model):
    """Deterministic JSON document (floats via repr round-trip)."""
    return {
        "schema_version": _MODEL_SCHEMA,
        "kind": "oxipipe-cnn",
        "input_geometry": list(model.input_geometry),
        "rng_seed": model.rng_seed,
        "layers": [spec.to_json() for spec in model.specs],
        "params": [None if p is None else {"w": p["w"].tolist(),
                                           "b": p["b"].tolist()}
                   for p in model.params],
    }


def model_from_json(doc):
    if doc.get("schema_version") != _MODEL_SCHEMA:
        raise SchemaVersionMismatch(
            f"model schema {doc.get('schema_version')!r}, expected {_MODEL_SCHEMA}")
    if doc.get("kind") != "oxipipe-cnn":
        raise SchemaVersionMismatch(f"unexpected document kind {doc.get('kind')!r}")
    specs = [LayerSpec.from_json(layer) for layer in doc["layers"]]
    geometry = tuple(doc["input_geometry"])
    shapes = shape_chain(specs, geometry)
    if shapes[-1] != (1,):
        raise ShapeMismatch(f"network must end in a single output, got {shapes[-1]}")
    params = []
    for spec, blob in zip(specs, doc["params"], strict=True):
        if spec.kind in ("conv1d", "dense"):
            if blob is None:
                raise ShapeMismatch(f"{spec.kind} layer is missing parameters")
            w = np.asarray(blob["w"], dtype=np.float64)
            b = np.asarray(blob["b"], dtype=np.float64)
            if spec.kind == "conv1d":
                want_w = (spec.out_filters, spec.in_channels, spec.filter_length)
                want_b = (spec.out_filters,)
            else:
                want_w = (spec.out_dim, spec.in_dim)
                want_b = (spec.out_dim,)
            if w.shape != want_w or b.shape != want_b:
                raise ShapeMismatch(
                    f"{spec.kind} params {w.shape}/{b.shape}, expected "
                    f"{want_w}/{want_b}")
            params.append({"w": w, "b": b})
        else:
            if blob is not None:
                raise ShapeMismatch(f"{spec.kind} layer must not carry parameters")
            params.append(None)
    return CnnModel(specs=specs, params=params, input_geometry=geometry,
                    rng_seed=int(doc.get("rng_seed", 0)))


def save_model(model, path):
    text = json.dumps(model_to_json(model), indent=2, sort_keys=True) + "\n"
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write model: {exc}") from exc


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read model: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"model file is not valid JSON: {exc}") from exc
    return model_from_json(doc)


def clone_config(config, **overrides):
    return replace(config, **overrides)
