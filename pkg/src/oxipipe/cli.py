"""Command-line entry point: synth, pipeline, and plot subcommands.

Every run writes its artifacts atomically (temp file + rename) and finishes
with a run manifest listing them; the manifest is written last, so its
presence implies a completed run. Errors exit with the code of their error
family and name the pipeline stage that raised them.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import (ConfigInvalid, IoFailure, LengthMismatch, OxipipeError,
                     UnknownColumns)
from .frameio import (ColorSignal, read_rvf_file, read_signal_csv_file,
                      write_rvf_file, write_signal_csv)
from .roi import extract_color_signal
from .dsp import make_windows
from .synth import PhysioTrace, SubjectProfile, generate_color_signal, generate_frames
from .cnn import (EpochRecord, TrainConfig, build_model, load_model,
                  make_cnn_specs, model_to_json, predict, mae, rmse, train)
from .ror import dataset_features, fit_calibration, predict_ror
from .explain import (channel_relevance_report, channel_weight_profile, lrp,
                      relevance_csv_lines)
from .harness import (GridSpec, compare_conditions, grid_search, split_by_cycles,
                      to_jsonable)
from . import plots

_MODES = ("train", "eval", "explain", "gridsearch", "compare")


def _threads():
    raw = os.environ.get("OXIPIPE_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigInvalid(f"OXIPIPE_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigInvalid(f"OXIPIPE_THREADS must be >= 1, got {value}")
    return value


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(
            f"config is not valid JSON at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigInvalid("config root must be a JSON object")
    return doc


def _take(config, key, default=None):
    return config[key] if key in config else default


def _check_keys(doc, allowed, where):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigInvalid(f"unknown {where} keys: {', '.join(unknown)}")


def _build_profile(doc):
    _check_keys(doc, ("skin_tone", "hand_side", "base_dc", "perfusion",
                      "noise_sigma"), "profile")
    try:
        kwargs = dict(doc)
        if "base_dc" in kwargs:
            kwargs["base_dc"] = tuple(kwargs["base_dc"])
        return SubjectProfile(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad profile: {exc}") from exc


def _build_physio(doc):
    _check_keys(doc, ("duration_s", "heart_rate_hz", "breathing_cycles",
                      "spo2_baseline", "spo2_dip"), "physio")
    try:
        return PhysioTrace(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad physio: {exc}") from exc


def _build_train_config(doc, seed):
    _check_keys(doc, ("epochs", "batch_size", "learning_rate", "optimizer",
                      "oversample"), "train")
    try:
        return TrainConfig(seed=seed, **doc)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad train config: {exc}") from exc


_ARCH_KEYS = ("conv_layers", "filters", "filter_length", "pool_len",
              "dropout_rate", "dense_width")


def _arch_params(doc):
    _check_keys(doc, _ARCH_KEYS, "arch")
    return dict(doc)


class _Emitter:
    """Atomic artifact writer that records every emitted file."""

    def __init__(self, outdir):
        self.outdir = outdir
        self.written = []
        os.makedirs(outdir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.outdir, name)

    def _finish(self, tmp, name):
        os.replace(tmp, self.path(name))
        self.written.append(name)

    def text(self, name, text):
        tmp = self.path(name) + ".tmp"
        try:
            with open(tmp, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoFailure(f"cannot write {name}: {exc}") from exc
        self._finish(tmp, name)

    def json(self, name, doc):
        self.text(name, json.dumps(to_jsonable(doc), indent=2, sort_keys=True)
                  + "\n")

    def bytes(self, name, payload):
        tmp = self.path(name) + ".tmp"
        try:
            with open(tmp, "wb") as fh:
                fh.write(payload)
        except OSError as exc:
            raise IoFailure(f"cannot write {name}: {exc}") from exc
        self._finish(tmp, name)

    def figure(self, name, render, *args, **kwargs):
        tmp = self.path(name) + ".tmp"
        render(*args, **kwargs, path=tmp)
        self._finish(tmp, name)

    def manifest(self, subcommand, config, inputs, seed, started):
        doc = {
            "subcommand": subcommand,
            "config": to_jsonable(config),
            "inputs": list(inputs),
            "outputs": sorted(self.written),
            "master_seed": seed,
            "tool_version": __version__,
            "duration_s": time.monotonic() - started,
        }
        self.json("manifest.json", doc)


def _stage(name, fn, *args, **kwargs):
    """Run one pipeline stage, prefixing any pipeline error with its name."""
    try:
        return fn(*args, **kwargs)
    except OxipipeError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def _load_recording(path, reference=None):
    """Input RVF or CSV -> ColorSignal, with optional reference labels."""
    if not os.path.exists(path):
        raise IoFailure(f"input not found: {path}")
    if path.lower().endswith(".rvf"):
        seq = _stage("frameio", read_rvf_file, path)
        signal = _stage("roi", extract_color_signal, seq)
    else:
        signal = _stage("frameio", read_signal_csv_file, path)
    if reference is not None:
        ref = _stage("frameio", read_signal_csv_file, reference)
        if len(ref) != len(signal):
            raise LengthMismatch(
                f"reference has {len(ref)} samples, input has {len(signal)}")
        if abs(ref.fps - signal.fps) > 1e-6:
            raise ConfigInvalid(
                f"reference fps {ref.fps} differs from input fps {signal.fps}")
        signal = ColorSignal(fps=signal.fps, samples=signal.samples,
                             spo2=ref.spo2,
                             cycle_boundaries=ref.cycle_boundaries)
    return signal


def _windows(signal, config):
    return _stage("dsp", make_windows, signal,
                  window_s=_take(config, "window_s", 10.0),
                  stride_s=_take(config, "stride_s", 0.2))


_LOSS_HEADER = "epoch,train_rmse,val_rmse"


def _loss_csv(history):
    lines = [_LOSS_HEADER]
    for rec in history:
        val = "" if rec.val_rmse is None else repr(rec.val_rmse)
        lines.append(f"{rec.epoch},{rec.train_rmse!r},{val}")
    return "\n".join(lines) + "\n"


def cmd_synth(args):
    started = time.monotonic()
    config = _load_config(args.config)
    _check_keys(config, ("profile", "physio", "fps", "width", "height",
                         "emit_frames"), "synth config")
    seed = args.seed if args.seed is not None else 0
    profile = _build_profile(_take(config, "profile", {}))
    physio_doc = dict(_take(config, "physio", {}))
    physio_doc.setdefault("duration_s", 10.0)
    physio = _build_physio(physio_doc)
    fps = float(_take(config, "fps", 30.0))
    emitter = _Emitter(args.out)
    if _take(config, "emit_frames", True):
        geometry = (int(_take(config, "width", 64)),
                    int(_take(config, "height", 64)))
        render = _stage("synth", generate_frames, profile, physio, fps,
                        geometry, seed)
        tmp = emitter.path("recording.rvf") + ".tmp"
        _stage("frameio", write_rvf_file, render.frames, tmp)
        emitter._finish(tmp, "recording.rvf")
        signal = render.signal
    else:
        signal = _stage("synth", generate_color_signal, profile, physio, fps,
                        seed)
    emitter.text("signal.csv", write_signal_csv(signal))
    emitter.manifest("synth", config, [], seed, started)
    return 0


def _mode_train(args, config, emitter, seed, threads):
    signal = _load_recording(args.input, reference=_take(config, "reference"))
    if signal.spo2 is None:
        raise ConfigInvalid(
            "train mode needs SpO2 labels; provide a labeled CSV input or a "
            "'reference' config entry")
    windows = _windows(signal, config)
    plan = _stage("harness", split_by_cycles, windows)
    train_ds = windows.subset(plan.train_idx)
    val_ds = windows.subset(plan.val_idx)
    arch = _arch_params(_take(config, "arch", {}))
    specs = make_cnn_specs(window_len=windows.window_len, **arch)
    model = _stage("cnn", build_model, specs,
                   (windows.windows.shape[1], windows.window_len), seed)
    train_cfg = _build_train_config(_take(config, "train", {}), seed)
    result = _stage("cnn", train, model, train_ds, train_cfg, val_dataset=val_ds)
    emitter.text("model.json",
                 json.dumps(model_to_json(result.model), indent=2,
                            sort_keys=True) + "\n")
    emitter.text("loss.csv", _loss_csv(result.history))
    emitter.figure("training_curves.svg", plots.plot_training_curves,
                   result.history)
    return [args.input]


def _mode_eval(args, config, emitter, seed, threads):
    if args.model is None:
        raise ConfigInvalid("eval mode requires --model")
    model = _stage("cnn", load_model, args.model)
    signal = _load_recording(args.input, reference=_take(config, "reference"))
    windows = _windows(signal, config)
    preds = _stage("cnn", predict, model, windows)
    lines = ["window,start,end,prediction,label"]
    for i in range(len(windows)):
        label = "" if windows.labels is None else repr(float(windows.labels[i]))
        lines.append(f"{i},{windows.spans[i, 0]},{windows.spans[i, 1]},"
                     f"{float(preds[i])!r},{label}")
    emitter.text("predictions.csv", "\n".join(lines) + "\n")
    metrics = {"n_windows": len(windows)}
    if windows.labels is not None:
        metrics["rmse"] = rmse(preds, windows.labels)
        metrics["mae"] = mae(preds, windows.labels)
        pair = tuple(_take(config, "pair", ("r", "b")))
        feats = _stage("ror", dataset_features, windows, pair=pair)
        cal = _stage("ror", fit_calibration, feats, windows.labels)
        ror_preds = predict_ror(cal, feats)
        metrics["ror_rmse"] = rmse(ror_preds, windows.labels)
        metrics["ror_mae"] = mae(ror_preds, windows.labels)
    emitter.json("metrics.json", metrics)
    return [args.input, args.model]


def _mode_explain(args, config, emitter, seed, threads):
    if args.model is None:
        raise ConfigInvalid("explain mode requires --model")
    model = _stage("cnn", load_model, args.model)
    signal = _load_recording(args.input, reference=_take(config, "reference"))
    windows = _windows(signal, config)
    epsilon = float(_take(config, "epsilon", 1e-9))
    report = _stage("explain", channel_relevance_report, model, windows,
                    epsilon=epsilon)
    weight_shares = _stage("explain", channel_weight_profile, model)
    lines = ["window,prediction,input_relevance,bias_absorbed,relevance_total,"
             "bias_bound"]
    for i in range(len(windows)):
        rel = _stage("explain", lrp, model, windows.windows[i], epsilon=epsilon)
        total = rel.input_total + rel.bias_absorbed
        lines.append(f"{i},{rel.prediction!r},{rel.input_total!r},"
                     f"{rel.bias_absorbed!r},{total!r},{rel.bias_bound!r}")
    emitter.text("relevance_summary.csv", "\n".join(lines) + "\n")
    first = _stage("explain", lrp, model, windows.windows[0], epsilon=epsilon)
    emitter.text("relevance_window0.csv",
                 "\n".join(relevance_csv_lines(first)) + "\n")
    profile_doc = {
        "weight_shares": weight_shares,
        "relevance_shares": report.channel_shares,
        "stream_shares": report.stream_shares,
        "n_windows": report.n_windows,
        "epsilon": report.epsilon,
    }
    emitter.json("channel_profile.json", profile_doc)
    emitter.figure("channel_shares.svg", plots.plot_channel_shares,
                   report.channel_shares)
    emitter.figure("relevance_heatmap.svg", plots.plot_relevance_heatmap, first)
    return [args.input, args.model]


def _grid_spec(doc):
    _check_keys(doc, ("conv_layers", "window_s", "filters", "filter_length"),
                "grid")
    kwargs = {k: tuple(v) for k, v in doc.items()}
    return GridSpec(**kwargs)


def _mode_gridsearch(args, config, emitter, seed, threads):
    test_path = _take(config, "test_input")
    if test_path is None:
        raise ConfigInvalid("gridsearch mode requires a 'test_input' config "
                            "entry naming the held-out recording")
    train_signal = _load_recording(args.input, reference=_take(config,
                                                               "reference"))
    test_signal = _load_recording(test_path,
                                  reference=_take(config, "test_reference"))
    if train_signal.spo2 is None or test_signal.spo2 is None:
        raise ConfigInvalid("gridsearch needs SpO2 labels on both recordings")
    grid = _grid_spec(_take(config, "grid", {}))
    train_cfg = _build_train_config(_take(config, "train", {}), seed)
    result = _stage("harness", grid_search, grid, train_signal, test_signal,
                    train_config=train_cfg, master_seed=seed,
                    n_instances=int(_take(config, "n_instances", 3)),
                    select_max_val=args.select_max_val,
                    threads=threads,
                    pair=tuple(_take(config, "pair", ("r", "b"))))
    emitter.json("report.json", result.report)
    lines = ["conv_layers,window_s,filters,filter_length,status,val_rmse,error"]
    for rec in result.report.points:
        cfg = rec.config
        val = "" if rec.val_rmse is None else repr(rec.val_rmse)
        err = "" if rec.error is None else rec.error.replace(",", ";")
        lines.append(f"{cfg['conv_layers']},{cfg['window_s']!r},"
                     f"{cfg['filters']},{cfg['filter_length']},{rec.status},"
                     f"{val},{err}")
    emitter.text("grid_points.csv", "\n".join(lines) + "\n")
    emitter.text("model.json",
                 json.dumps(model_to_json(result.model), indent=2,
                            sort_keys=True) + "\n")
    emitter.figure("grid_points.svg", plots.plot_grid_points, result.report)
    return [args.input, test_path]


def _mode_compare(args, config, emitter, seed, threads):
    doc = _take(config, "compare")
    if not doc:
        raise ConfigInvalid("compare mode requires a 'compare' config entry")
    _check_keys(doc, ("profiles", "physio", "fps", "master_seeds", "window_s",
                      "arch", "train"), "compare")
    profiles = [_build_profile(p) for p in _take(doc, "profiles", [])]
    physio = _build_physio(_take(doc, "physio", {}))
    master_seeds = _take(doc, "master_seeds")
    if master_seeds is None:
        master_seeds = [seed + i for i in range(5)]
    report = _stage(
        "harness", compare_conditions, profiles, physio,
        float(_take(doc, "fps", 30.0)), master_seeds,
        window_s=float(_take(doc, "window_s", 10.0)),
        arch_params=_arch_params(_take(doc, "arch", {})),
        train_config=_build_train_config(_take(doc, "train", {}), seed),
        threads=threads)
    emitter.json("comparison.json", report)
    lines = ["arm,master_seed,val_rmse,test_rmse,test_mae"]
    for row in report.rows:
        lines.append(f"{row.arm},{row.master_seed},{row.val_rmse!r},"
                     f"{row.test_rmse!r},{row.test_mae!r}")
    emitter.text("comparison.csv", "\n".join(lines) + "\n")
    return []


def cmd_pipeline(args):
    started = time.monotonic()
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else 0
    threads = _threads()
    emitter = _Emitter(args.out)
    handlers = {"train": _mode_train, "eval": _mode_eval,
                "explain": _mode_explain, "gridsearch": _mode_gridsearch,
                "compare": _mode_compare}
    inputs = handlers[args.mode](args, config, emitter, seed, threads)
    emitter.manifest(f"pipeline:{args.mode}", config, inputs, seed, started)
    return 0


def _parse_loss_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _LOSS_HEADER:
        head = lines[0] if lines else "<empty>"
        raise UnknownColumns(f"expected header {_LOSS_HEADER!r}, got {head!r}")
    history = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise UnknownColumns(f"bad loss row: {ln!r}")
        val = None if parts[2] == "" else float(parts[2])
        history.append(EpochRecord(epoch=int(parts[0]),
                                   train_rmse=float(parts[1]), val_rmse=val))
    if not history:
        raise UnknownColumns("loss CSV has no data rows")
    return history


class _ParsedRelevance:
    def __init__(self, relevance, prediction, bias_absorbed):
        self.relevance = relevance
        self.prediction = prediction
        self.bias_absorbed = bias_absorbed


def _parse_relevance_csv(text):
    from .dsp import STREAMS
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "stream,index,relevance":
        head = lines[0] if lines else "<empty>"
        raise UnknownColumns(
            f"expected header 'stream,index,relevance', got {head!r}")
    cells = {}
    scalars = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise UnknownColumns(f"bad relevance row: {ln!r}")
        name, idx, value = parts
        if idx == "":
            scalars[name] = float(value)
        elif name in STREAMS:
            cells[(STREAMS.index(name), int(idx))] = float(value)
        else:
            raise UnknownColumns(f"unknown stream {name!r}")
    if not cells:
        raise UnknownColumns("relevance CSV has no stream rows")
    length = max(idx for _, idx in cells) + 1
    grid = np.zeros((len(STREAMS), length))
    for (row, col), value in cells.items():
        grid[row, col] = value
    return _ParsedRelevance(grid, scalars.get("prediction", 0.0),
                            scalars.get("bias_absorbed", 0.0))


def cmd_plot(args):
    started = time.monotonic()
    if not os.path.exists(args.input):
        raise IoFailure(f"input not found: {args.input}")
    emitter = _Emitter(args.out)
    if args.input.lower().endswith(".json"):
        try:
            with open(args.input, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise IoFailure(f"cannot read input: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UnknownColumns(f"input is not valid JSON: {exc.msg}") from exc
        shares = doc.get("relevance_shares", doc.get("weight_shares"))
        if not isinstance(doc, dict) or shares is None or len(shares) != 3:
            raise UnknownColumns(
                "JSON input lacks 'relevance_shares'/'weight_shares'")
        emitter.figure("channel_shares.svg", plots.plot_channel_shares, shares)
    else:
        try:
            with open(args.input, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise IoFailure(f"cannot read input: {exc}") from exc
        header = text.splitlines()[0] if text.splitlines() else ""
        if header == _LOSS_HEADER:
            emitter.figure("training_curves.svg", plots.plot_training_curves,
                           _parse_loss_csv(text))
        elif header == "stream,index,relevance":
            emitter.figure("relevance_heatmap.svg",
                           plots.plot_relevance_heatmap,
                           _parse_relevance_csv(text))
        else:
            raise UnknownColumns(
                f"unrecognized input header {header!r}; expected a loss CSV, "
                f"relevance CSV, or channel profile JSON")
    emitter.manifest("plot", {}, [args.input], 0, started)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="oxipipe",
        description="Contactless SpO2 pipeline on synthetic recordings")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic recording")
    p_synth.add_argument("--config", default=None)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_pipe = sub.add_parser("pipeline", help="run the processing pipeline")
    p_pipe.add_argument("--input", required=False, default=None)
    p_pipe.add_argument("--mode", choices=_MODES, required=True)
    p_pipe.add_argument("--config", default=None)
    p_pipe.add_argument("--seed", type=int, default=None)
    p_pipe.add_argument("--out", required=True)
    p_pipe.add_argument("--model", default=None)
    p_pipe.add_argument("--select-max-val", action="store_true")
    p_pipe.set_defaults(func=cmd_pipeline)

    p_plot = sub.add_parser("plot", help="render a report artifact to SVG")
    p_plot.add_argument("--input", required=True)
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand == "pipeline" and args.mode != "compare" \
            and args.input is None:
        print("error[ConfigInvalid]: --input is required for this mode",
              file=sys.stderr)
        return ConfigInvalid("").exit_code
    try:
        return args.func(args)
    except OxipipeError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
