"""Experiment protocol: cycle splits, instance fan-out, grid search, arms.

Randomness is seeded explicitly everywhere. Instance seeds derive from a
master seed as master_seed + instance_index; condition arms reuse the same
data seeds so that identical arms produce identical rows (a null experiment
yields a zero delta exactly). Jobs are independent, and results are always
assembled in submission order, so any worker count yields the same report.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields
import itertools

import numpy as np

from .errors import (ConfoundedFactors, DivergenceDetected, EmptyInput,
                     EmptyPartition, GridTooLarge, OxipipeError, TooFewCycles)
from .cnn import (TrainConfig, build_model, clone_config, mae, make_cnn_specs,
                  predict, rmse, train)
from .dsp import make_windows
from .ror import dataset_features, fit_calibration, predict_ror
from .synth import generate_color_signal

MAX_GRID_POINTS = 36
_DATA_SEED_STEP = 1_000_003


def _map_jobs(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class SplitPlan:
    """Index partition of one recording's windows by breathing cycle."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    boundaries: tuple
    gap_samples: int   # width of the dropped crossing zone (one window)

    def audit(self, spans):
        """True when no train window overlaps any val window in samples."""
        spans = np.asarray(spans)
        if len(self.train_idx) == 0 or len(self.val_idx) == 0:
            return True
        train_end = spans[self.train_idx, 1].max()
        val_start = spans[self.val_idx, 0].min()
        return bool(train_end <= val_start)


def split_by_cycles(dataset, boundaries=None):
    """Assign windows inside the leading cycles to train, the last to val.

    Windows crossing the train/val boundary are dropped, which leaves the
    two partitions disjoint in sample span. Held-out testing uses a
    separate recording.
    """
    if boundaries is None:
        boundaries = dataset.cycle_boundaries
    if boundaries is None or len(boundaries) < 4:
        n = 0 if boundaries is None else max(len(boundaries) - 1, 0)
        raise TooFewCycles(f"need at least 3 breathing cycles, got {n}")
    edges = [int(b) for b in boundaries]
    if any(b >= e for b, e in zip(edges, edges[1:])):
        raise TooFewCycles(f"cycle boundaries must increase, got {edges}")
    start, cut, val_end = edges[0], edges[-2], edges[-1]
    spans = dataset.spans
    train_idx = np.flatnonzero((spans[:, 0] >= start) & (spans[:, 1] <= cut))
    val_idx = np.flatnonzero((spans[:, 0] >= cut) & (spans[:, 1] <= val_end))
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise EmptyPartition(
            f"split produced {len(train_idx)} train / {len(val_idx)} val windows")
    return SplitPlan(train_idx=train_idx, val_idx=val_idx,
                     test_idx=np.empty(0, dtype=np.int64),
                     boundaries=tuple(edges), gap_samples=dataset.window_len)


@dataclass
class InstanceRecord:
    seed: int
    status: str
    val_rmse: float = None
    error: str = None


@dataclass
class InstanceRunResult:
    records: list
    best_index: int
    best_model: object

    @property
    def best(self):
        return self.records[self.best_index]


def run_instances(layer_specs, input_geometry, train_ds, val_ds, train_config,
                  n_instances, master_seed, select_max_val=False,
                  threads=1):
    """Train n instances with seeds master_seed + i and pick one by val RMSE.

    Default selection takes the lowest validation RMSE; the select_max_val
    flag flips that to the highest, for replicating historical runs that
    selected instances by maximum validation RMSE. Instances that diverge
    are recorded as failed and skipped.
    """
    if n_instances < 1:
        raise EmptyInput("need at least one instance")
    if len(val_ds) == 0 or val_ds.labels is None:
        raise EmptyPartition("instance selection requires a labeled val set")

    def job(i):
        seed = master_seed + i
        try:
            model = build_model(layer_specs, input_geometry, seed)
            cfg = clone_config(train_config, seed=seed)
            result = train(model, train_ds, cfg, val_dataset=val_ds)
            val = rmse(predict(result.model, val_ds), val_ds.labels)
            return InstanceRecord(seed=seed, status="ok", val_rmse=val), result.model
        except OxipipeError as exc:
            return (InstanceRecord(seed=seed, status="failed",
                                   error=f"{type(exc).__name__}: {exc}"), None)

    outcomes = _map_jobs(job, range(n_instances), threads)
    records = [rec for rec, _ in outcomes]
    ok = [i for i, rec in enumerate(records) if rec.status == "ok"]
    if not ok:
        raise DivergenceDetected(
            f"all {n_instances} instances failed; first: {records[0].error}")
    if select_max_val:
        best_index = max(ok, key=lambda i: records[i].val_rmse)
    else:
        best_index = min(ok, key=lambda i: records[i].val_rmse)
    return InstanceRunResult(records=records, best_index=best_index,
                             best_model=outcomes[best_index][1])


@dataclass
class GridSpec:
    """Axes of the architecture/window grid, capped at MAX_GRID_POINTS."""

    conv_layers: tuple = (1, 2)
    window_s: tuple = (5.0, 10.0)
    filters: tuple = (8, 16)
    filter_length: tuple = (9, 15)

    def points(self):
        axes = [sorted(set(self.conv_layers)), sorted(set(self.window_s)),
                sorted(set(self.filters)), sorted(set(self.filter_length))]
        total = 1
        for axis in axes:
            if not axis:
                raise EmptyInput("grid axis has no values")
            total *= len(axis)
        if total > MAX_GRID_POINTS:
            raise GridTooLarge(f"{total} grid points exceeds {MAX_GRID_POINTS}")
        return [{"conv_layers": c, "window_s": w, "filters": f,
                 "filter_length": k}
                for c, w, f, k in itertools.product(*axes)]


@dataclass
class GridPointRecord:
    config: dict
    status: str
    val_rmse: float = None
    error: str = None
    instances: list = field(default_factory=list)


@dataclass
class ExperimentReport:
    master_seed: int
    n_instances: int
    select_max_val: bool
    points: list
    selected: dict
    cnn_test_rmse: float
    cnn_test_mae: float
    ror_test_rmse: float
    ror_test_mae: float
    calibration: dict
    n_test_windows: int


@dataclass
class GridSearchResult:
    report: ExperimentReport
    model: object


def _point_datasets(signal, window_s):
    windows = make_windows(signal, window_s=window_s)
    plan = split_by_cycles(windows)
    return windows.subset(plan.train_idx), windows.subset(plan.val_idx)


def grid_search(grid, train_signal, test_signal, train_config=None,
                master_seed=0, n_instances=3, select_max_val=False,
                threads=1, pair=("r", "b")):
    """Exhaustive grid evaluation, winner selection, and held-out scoring.

    Points are visited in lexicographic config order and ties on validation
    RMSE keep the earliest point, so evaluation order never changes the
    winner. The winning CNN and a ratio-of-ratios baseline calibrated on
    the winner's training windows are both scored on the test recording.
    """
    if train_config is None:
        train_config = TrainConfig()
    points = grid.points()
    records = []
    best = None
    for cfg in points:
        try:
            train_ds, val_ds = _point_datasets(train_signal, cfg["window_s"])
            layer_specs = make_cnn_specs(window_len=train_ds.window_len,
                                         conv_layers=cfg["conv_layers"],
                                         filters=cfg["filters"],
                                         filter_length=cfg["filter_length"])
            run = run_instances(layer_specs, (train_ds.windows.shape[1],
                                              train_ds.window_len),
                                train_ds, val_ds, train_config, n_instances,
                                master_seed,
                                select_max_val=select_max_val,
                                threads=threads)
        except OxipipeError as exc:
            records.append(GridPointRecord(config=cfg, status="failed",
                                           error=f"{type(exc).__name__}: {exc}"))
            continue
        records.append(GridPointRecord(config=cfg, status="ok",
                                       val_rmse=run.best.val_rmse,
                                       instances=run.records))
        if best is None or run.best.val_rmse < best[0]:
            best = (run.best.val_rmse, cfg, run.best_model, train_ds)
    if best is None:
        raise DivergenceDetected("every grid point failed")
    _, selected, model, train_ds = best
    test_ds = make_windows(test_signal, window_s=selected["window_s"])
    if test_ds.labels is None:
        raise EmptyInput("test recording carries no reference labels")
    cnn_preds = predict(model, test_ds)
    cal = fit_calibration(dataset_features(train_ds, pair=pair), train_ds.labels)
    ror_preds = predict_ror(cal, dataset_features(test_ds, pair=pair))
    report = ExperimentReport(
        master_seed=master_seed, n_instances=n_instances,
        select_max_val=select_max_val, points=records,
        selected=dict(selected),
        cnn_test_rmse=rmse(cnn_preds, test_ds.labels),
        cnn_test_mae=mae(cnn_preds, test_ds.labels),
        ror_test_rmse=rmse(ror_preds, test_ds.labels),
        ror_test_mae=mae(ror_preds, test_ds.labels),
        calibration={"a": cal.a, "b": cal.b, "fit_rmse": cal.fit_rmse,
                     "n": cal.n_points},
        n_test_windows=len(test_ds))
    return GridSearchResult(report=report, model=model)


def train_data_seed(master_seed):
    return master_seed * _DATA_SEED_STEP + 1


def heldout_data_seed(master_seed):
    return master_seed * _DATA_SEED_STEP + 2


@dataclass
class ConditionRow:
    arm: str
    master_seed: int
    val_rmse: float
    test_rmse: float
    test_mae: float


@dataclass
class ConditionReport:
    factor: str
    rows: list
    summary: dict   # arm label -> {"mean_rmse": .., "mean_mae": ..}


def _differing_fields(profiles):
    names = []
    for f in dc_fields(profiles[0]):
        values = {getattr(p, f.name) for p in profiles}
        if len(values) > 1:
            names.append(f.name)
    return names


def compare_conditions(profiles, physio, fps, master_seeds, window_s=10.0,
                       arch_params=None, train_config=None, threads=1):
    """Paired single-factor comparison of subject profiles.

    Exactly one profile field may vary across arms (ConfoundedFactors
    otherwise). Each master seed yields one paired row per arm: the data
    seeds and the model/training seed depend only on the master seed, never
    on the arm, so identical arms produce identical scores. The report makes
    no statistical claim beyond the per-seed table and per-arm means.
    """
    profiles = list(profiles)
    if len(profiles) < 2:
        raise EmptyInput("need at least two arms to compare")
    if not master_seeds:
        raise EmptyInput("need at least one master seed")
    differing = _differing_fields(profiles)
    if len(differing) > 1:
        raise ConfoundedFactors(
            f"profiles differ in {differing}; vary exactly one factor")
    factor = differing[0] if differing else "none"
    if factor == "none":
        labels = [f"arm{i}" for i in range(len(profiles))]
    else:
        labels = [f"{factor}={getattr(p, factor)}" for p in profiles]
    if arch_params is None:
        arch_params = {}
    if train_config is None:
        train_config = TrainConfig()

    def job(task):
        arm, profile, seed = task
        train_sig = generate_color_signal(profile, physio, fps,
                                          seed=train_data_seed(seed))
        test_sig = generate_color_signal(profile, physio, fps,
                                         seed=heldout_data_seed(seed))
        windows = make_windows(train_sig, window_s=window_s)
        plan = split_by_cycles(windows)
        train_ds = windows.subset(plan.train_idx)
        val_ds = windows.subset(plan.val_idx)
        layer_specs = make_cnn_specs(window_len=windows.window_len,
                                     **arch_params)
        model = build_model(layer_specs,
                            (windows.windows.shape[1], windows.window_len), seed)
        result = train(model, train_ds, clone_config(train_config, seed=seed),
                       val_dataset=val_ds)
        val = rmse(predict(result.model, val_ds), val_ds.labels)
        test_ds = make_windows(test_sig, window_s=window_s)
        preds = predict(result.model, test_ds)
        return ConditionRow(arm=arm, master_seed=seed, val_rmse=val,
                            test_rmse=rmse(preds, test_ds.labels),
                            test_mae=mae(preds, test_ds.labels))

    tasks = [(labels[a], profiles[a], seed)
             for a in range(len(profiles)) for seed in master_seeds]
    rows = _map_jobs(job, tasks, threads)
    summary = {}
    for label in labels:
        arm_rows = [r for r in rows if r.arm == label]
        summary[label] = {
            "mean_rmse": float(np.mean([r.test_rmse for r in arm_rows])),
            "mean_mae": float(np.mean([r.test_mae for r in arm_rows])),
        }
    return ConditionReport(factor=factor, rows=rows, summary=summary)


def to_jsonable(obj):
    """Recursively convert dataclasses and numpy types for json.dump."""
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: to_jsonable(getattr(obj, f.name))
                for f in dc_fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj
