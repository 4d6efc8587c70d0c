"""Acceptance criteria for the full pipeline, one test per criterion.

Each test prints a single `criterion N: PASS/FAIL` line (bypassing pytest's
capture so the lines always appear in the run log) and then asserts. The
tolerances and budgets in here are contractual; do not loosen them to make a
red test green.
"""

import hashlib
import json
import sys
import time

import numpy as np
import pytest

import oxipipe as ox
from oxipipe.cli import main
from oxipipe.cnn import forward_batch, backward_batch


def _report(criterion, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    tail = f" — {detail}" if detail else ""
    print(f"criterion {criterion}: {status}{tail}", file=sys.__stdout__,
          flush=True)


def sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# --------------------------------------------------------------------------
# criterion 1: Otsu threshold equals exhaustive maximization, exact tie-break
# --------------------------------------------------------------------------

def otsu_oracle(hist):
    """Exhaustive exact-arithmetic between-class-variance maximization.

    Walks every candidate threshold, scoring the exact rational
    sigma_b^2(t) = (m0*c1 - m1*c0)^2 / (c0*c1*total^2) with integer cross
    multiplication, collecting every argmax and returning the smallest.
    """
    hist = [int(v) for v in hist]
    pre_c = [0]
    pre_m = [0]
    for level, count in enumerate(hist):
        pre_c.append(pre_c[-1] + count)
        pre_m.append(pre_m[-1] + level * count)
    total_c, total_m = pre_c[-1], pre_m[-1]
    argmax, best_num, best_den = [], None, None
    for t in range(len(hist) - 1):
        c0 = pre_c[t + 1]
        c1 = total_c - c0
        if c0 == 0 or c1 == 0:
            continue
        m0 = pre_m[t + 1]
        m1 = total_m - m0
        num = (m0 * c1 - m1 * c0) ** 2
        den = c0 * c1
        if best_num is None or num * best_den > best_num * den:
            argmax, best_num, best_den = [t], num, den
        elif num * best_den == best_num * den:
            argmax.append(t)
    return min(argmax)


class TestCriterion1:
    def test_otsu_exact_oracle_agreement(self):
        rng = np.random.default_rng(1001)
        start = time.monotonic()
        mismatches = 0
        for i in range(1000):
            style = i % 3
            if style == 0:
                hist = rng.integers(0, 50, size=256)
            elif style == 1:
                # bimodal with random separation
                hist = rng.integers(0, 5, size=256)
                lo = int(rng.integers(0, 128))
                hi = int(rng.integers(128, 256))
                hist[lo] += int(rng.integers(10, 200))
                hist[hi] += int(rng.integers(10, 200))
            else:
                # sparse: many empty bins, plenty of tie opportunities
                hist = (rng.integers(0, 4, size=256) == 0).astype(int)
            if np.count_nonzero(hist) < 2:
                hist[0] += 1
                hist[-1] += 1
            got = ox.otsu_threshold(hist)
            want = otsu_oracle(hist)
            if got != want:
                mismatches += 1
        elapsed = time.monotonic() - start
        ok = mismatches == 0 and elapsed < 5.0
        _report(1, ok, f"0 mismatches required, got {mismatches}; "
                       f"{elapsed:.2f}s (budget 5s)")
        assert mismatches == 0
        assert elapsed < 5.0


# --------------------------------------------------------------------------
# criterion 2: analytic gradients match central finite differences
# --------------------------------------------------------------------------

def _numeric_grads(model, window, label, step=1e-6):
    grads = []
    for p in model.params:
        if p is None:
            grads.append(None)
            continue
        entry = {}
        for key in ("w", "b"):
            flat = p[key].ravel()
            out = np.empty_like(flat)
            for j in range(flat.size):
                keep = flat[j]
                flat[j] = keep + step
                up, _ = ox.forward(model, window)
                flat[j] = keep - step
                down, _ = ox.forward(model, window)
                flat[j] = keep
                out[j] = ((up - label) ** 2 - (down - label) ** 2) / (2 * step)
            entry[key] = out.reshape(p[key].shape)
        grads.append(entry)
    return grads


def _random_small_model(rng):
    n_ch = int(rng.integers(1, 4))
    length = int(rng.integers(10, 20))
    filters = int(rng.integers(1, 4))
    klen = int(rng.integers(2, 5))
    stride = int(rng.integers(1, 3))
    conv_out = (length - klen) // stride + 1
    pool = 2 if conv_out >= 2 else 1
    pooled = conv_out // pool
    specs = [
        ox.LayerSpec("conv1d", in_channels=n_ch, out_filters=filters,
                     filter_length=klen, stride=stride),
        ox.LayerSpec("relu"),
        ox.LayerSpec("maxpool1d", pool_len=pool),
        ox.LayerSpec("dropout", rate=0.0),
        ox.LayerSpec("flatten"),
        ox.LayerSpec("dense", in_dim=filters * pooled, out_dim=3),
        ox.LayerSpec("relu"),
        ox.LayerSpec("dense", in_dim=3, out_dim=1),
    ]
    model = ox.build_model(specs, (n_ch, length), int(rng.integers(1 << 31)))
    window = rng.normal(size=(n_ch, length))
    label = float(rng.uniform(70, 100))
    return model, window, label


class TestCriterion2:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2002)
        start = time.monotonic()
        worst = 0.0
        kinds_seen = set()
        for _ in range(50):
            model, window, label = _random_small_model(rng)
            kinds_seen.update(s.kind for s in model.specs)
            analytic = ox.backward(model, window, label)
            numeric = _numeric_grads(model, window, label)
            for a, n in zip(analytic, numeric):
                if a is None:
                    continue
                for key in ("w", "b"):
                    scale = np.maximum(np.abs(n[key]), 1.0)
                    worst = max(worst,
                                float(np.max(np.abs(a[key] - n[key]) / scale)))
        # active-mask dropout gradient, checked against re-seeded masks
        specs = [ox.LayerSpec("dropout", rate=0.4),
                 ox.LayerSpec("flatten"),
                 ox.LayerSpec("dense", in_dim=12, out_dim=1)]
        model = ox.build_model(specs, (3, 4), seed=7)
        window = np.random.default_rng(8).normal(size=(1, 3, 4))
        label = 80.0

        def loss_with_mask(params_touch=None):
            out, _ = forward_batch(model, window, train_mode=True,
                                   rng=np.random.default_rng(99))
            return (out[0] - label) ** 2

        out, cache = forward_batch(model, window, train_mode=True,
                                   rng=np.random.default_rng(99))
        grads = backward_batch(model, cache,
                               np.array([2.0 * (out[0] - label)]))
        step = 1e-6
        p = model.params[2]
        flat = p["w"].ravel()
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            up = loss_with_mask()
            flat[j] = keep - step
            down = loss_with_mask()
            flat[j] = keep
            num = (up - down) / (2 * step)
            scale = max(abs(num), 1.0)
            worst = max(worst, abs(grads[2]["w"].ravel()[j] - num) / scale)
        elapsed = time.monotonic() - start
        expected_kinds = {"conv1d", "relu", "maxpool1d", "dropout", "flatten",
                          "dense"}
        ok = worst <= 1e-4 and elapsed < 60.0 and kinds_seen == expected_kinds
        _report(2, ok, f"max rel err {worst:.2e} (tol 1e-4) over 50 models; "
                       f"{elapsed:.1f}s (budget 60s)")
        assert kinds_seen == expected_kinds
        assert worst <= 1e-4
        assert elapsed < 60.0


# --------------------------------------------------------------------------
# criterion 3: relevance conservation with bias absorption accounted
# --------------------------------------------------------------------------

class TestCriterion3:
    def test_lrp_conservation(self):
        rng = np.random.default_rng(3003)
        start = time.monotonic()
        worst_rel = 0.0
        worst_bound_violation = 0.0
        absorbed_all = []
        for _ in range(100):
            model, window, _ = _random_small_model(rng)
            rel = ox.lrp(model, window, epsilon=1e-9)
            pred, _ = ox.forward(model, window)
            denom = max(abs(pred), 1e-12)
            deviation = abs(rel.input_total + rel.bias_absorbed - pred)
            worst_rel = max(worst_rel, deviation / denom)
            violation = abs(rel.bias_absorbed) - rel.bias_bound
            worst_bound_violation = max(worst_bound_violation, violation)
            absorbed_all.append(abs(rel.bias_absorbed))
        elapsed = time.monotonic() - start
        ok = (worst_rel <= 1e-6 and worst_bound_violation <= 1e-12
              and elapsed < 60.0)
        _report(3, ok,
                f"max |Σrel+bias−pred|/|pred| {worst_rel:.2e} (tol 1e-6); "
                f"bias absorption mean {np.mean(absorbed_all):.3g} "
                f"max {np.max(absorbed_all):.3g}, all within bound; "
                f"{elapsed:.1f}s (budget 60s)")
        assert worst_rel <= 1e-6
        assert worst_bound_violation <= 1e-12
        assert elapsed < 60.0


# --------------------------------------------------------------------------
# criterion 4: band-pass behavior at the contractual probe frequencies
# --------------------------------------------------------------------------

def _tone_amplitude(x, fps, freq):
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), d=1.0 / fps)
    idx = int(np.argmin(np.abs(freqs - freq)))
    return 2.0 * np.abs(spectrum[idx]) / len(x)


class TestCriterion4:
    def test_filter_specs(self):
        fps = 30.0
        n = 9000  # 300 s for sharp FFT lines
        t = np.arange(n) / fps
        details = []
        passband = ox.bandpass(np.sin(2 * np.pi * 1.5 * t), fps)
        amp_pass = _tone_amplitude(passband, fps, 1.5)
        ok_pass = abs(amp_pass - 1.0) <= 0.10
        details.append(f"1.5 Hz amplitude {amp_pass:.4f} (within 10%)")
        stopband = ox.bandpass(np.sin(2 * np.pi * 0.05 * t), fps)
        amp_stop = _tone_amplitude(stopband, fps, 0.05)
        atten_db = -20.0 * np.log10(max(amp_stop, 1e-300))
        ok_stop = atten_db >= 20.0
        details.append(f"0.05 Hz attenuation {atten_db:.1f} dB (≥20)")
        dc = ox.bandpass(np.full(n, 5.0), fps)
        dc_leak = float(np.max(np.abs(dc)))
        ok_dc = dc_leak <= 1e-9
        details.append(f"DC leak {dc_leak:.2e} (≤1e-9)")
        ok = ok_pass and ok_stop and ok_dc
        _report(4, ok, "; ".join(details))
        assert ok_pass and ok_stop and ok_dc


# --------------------------------------------------------------------------
# criterion 5: windowing arithmetic and split disjointness
# --------------------------------------------------------------------------

class TestCriterion5:
    def test_window_counts_and_split_audit(self):
        fps = 30.0
        n = 600
        rng = np.random.default_rng(5005)
        samples = rng.uniform(50, 200, size=(n, 3))
        signal = ox.ColorSignal(fps=fps, samples=samples,
                                spo2=np.full(n, 95.0))
        ds = ox.make_windows(signal, window_s=10.0, stride_s=0.2)
        count_ok = len(ds) == 51 and ds.window_len == 300
        audits_ok = True
        for _ in range(100):
            n_cycles = int(rng.integers(3, 7))
            edges = np.concatenate(
                [[0], np.cumsum(rng.integers(400, 1200, size=n_cycles))])
            window_len = int(rng.integers(60, 301))
            stride = int(rng.integers(6, 61))
            starts = np.arange(0, edges[-1] - window_len + 1, stride)
            spans = np.stack([starts, starts + window_len], axis=1)

            class Layout:
                pass

            fake = Layout()
            fake.spans = spans
            fake.cycle_boundaries = edges.tolist()
            fake.window_len = window_len
            plan = ox.split_by_cycles(fake)
            if not plan.audit(spans):
                audits_ok = False
            if set(plan.train_idx) & set(plan.val_idx):
                audits_ok = False
        ok = count_ok and audits_ok
        _report(5, ok, f"600 samples @10s/0.2s -> {len(ds)} windows of "
                       f"{ds.window_len} (expect 51 of 300); "
                       f"100/100 split audits disjoint: {audits_ok}")
        assert count_ok
        assert audits_ok


# --------------------------------------------------------------------------
# criteria 6-8 share one experiment protocol built on package defaults
# --------------------------------------------------------------------------

N_MASTER_SEEDS = 5            # criterion 6
N_ORDERING_SEEDS = 10         # criteria 7 and 8
PROTOCOL_EPOCHS = 40
PROTOCOL_DROPOUT = None       # None -> make_cnn_specs default


def _protocol_specs(window_len):
    kwargs = {}
    if PROTOCOL_DROPOUT is not None:
        kwargs["dropout_rate"] = PROTOCOL_DROPOUT
    return ox.make_cnn_specs(window_len=window_len, **kwargs)


def _train_and_eval(master_seed, profile=None):
    """One protocol run: train on recording A cycles 1-2, select on cycle 3,
    evaluate CNN and calibrated ror baseline on held-out recording B."""
    profile = profile or ox.SubjectProfile()
    physio = ox.PhysioTrace()
    train_sig = ox.generate_color_signal(
        profile, physio, 30.0, seed=ox.train_data_seed(master_seed))
    test_sig = ox.generate_color_signal(
        profile, physio, 30.0, seed=ox.heldout_data_seed(master_seed))
    ds = ox.make_windows(train_sig)
    plan = ox.split_by_cycles(ds)
    train_ds = ds.subset(plan.train_idx)
    val_ds = ds.subset(plan.val_idx)
    test_ds = ox.make_windows(test_sig)
    specs = _protocol_specs(ds.window_len)
    model = ox.build_model(specs, (9, ds.window_len), seed=master_seed)
    cfg = ox.TrainConfig(epochs=PROTOCOL_EPOCHS, seed=master_seed)
    result = ox.train(model, train_ds, cfg, val_dataset=val_ds)
    preds = ox.predict(result.model, test_ds)
    cal = ox.fit_calibration(ox.dataset_features(train_ds), train_ds.labels)
    ror_preds = ox.predict_ror(cal, ox.dataset_features(test_ds))
    return {
        "model": result.model,
        "test_ds": test_ds,
        "cnn_rmse": ox.rmse(preds, test_ds.labels),
        "cnn_mae": ox.mae(preds, test_ds.labels),
        "ror_rmse": ox.rmse(ror_preds, test_ds.labels),
    }


class TestCriterion6:
    def test_end_to_end_recovery(self):
        start = time.monotonic()
        # part 1: noiseless ror recovery
        quiet = ox.SubjectProfile(noise_sigma=0.0)
        physio = ox.PhysioTrace()
        sig_a = ox.generate_color_signal(quiet, physio, 30.0, seed=61)
        sig_b = ox.generate_color_signal(quiet, physio, 30.0, seed=62)
        ds_a = ox.make_windows(sig_a)
        cal = ox.fit_calibration(ox.dataset_features(ds_a), ds_a.labels)
        ds_b = ox.make_windows(sig_b)
        ror_quiet = ox.rmse(ox.predict_ror(cal, ox.dataset_features(ds_b)),
                            ds_b.labels)
        # part 2: noisy CNN vs ror over master seeds
        rows = []
        for seed in range(N_MASTER_SEEDS):
            rows.append(_train_and_eval(seed))
        elapsed = time.monotonic() - start
        wins = sum(1 for r in rows if r["cnn_rmse"] < r["ror_rmse"])
        worst_mae = max(r["cnn_mae"] for r in rows)
        worst_rmse = max(r["cnn_rmse"] for r in rows)
        ok = (ror_quiet <= 0.5 and worst_mae <= 2.0 and worst_rmse <= 2.5
              and wins >= 4 and elapsed <= 600.0)
        pairs = ", ".join(f"{r['cnn_rmse']:.2f}v{r['ror_rmse']:.2f}"
                          for r in rows)
        _report(6, ok,
                f"noiseless ror RMSE {ror_quiet:.3f} (≤0.5); CNN wins "
                f"{wins}/{N_MASTER_SEEDS} (≥4) [cnn v ror: {pairs}]; worst "
                f"MAE {worst_mae:.2f} (≤2.0) worst RMSE {worst_rmse:.2f} "
                f"(≤2.5); {elapsed:.0f}s (budget 600s)")
        assert ror_quiet <= 0.5
        assert worst_mae <= 2.0
        assert worst_rmse <= 2.5
        assert wins >= 4
        assert elapsed <= 600.0


class TestCriterion7:
    def test_green_channel_least_relevant(self):
        lrp_wins = 0
        weight_wins = 0
        for seed in range(N_ORDERING_SEEDS):
            run = _train_and_eval(seed)
            model = run["model"]
            sample = run["test_ds"].subset(
                np.arange(0, len(run["test_ds"]), 10))
            report = ox.channel_relevance_report(model, sample)
            shares = report.channel_shares
            if shares["g"] < shares["r"] and shares["g"] < shares["b"]:
                lrp_wins += 1
            wprof = ox.channel_weight_profile(model)
            if wprof["g"] < wprof["r"] and wprof["g"] < wprof["b"]:
                weight_wins += 1
        ok = lrp_wins >= 8 and weight_wins >= 8
        _report(7, ok, f"green smallest LRP share in {lrp_wins}/10 seeds "
                       f"(≥8); smallest weight share in {weight_wins}/10 "
                       f"(≥8)")
        assert lrp_wins >= 8
        assert weight_wins >= 8


class TestCriterion8:
    def test_hand_side_ordering_and_null(self):
        back = ox.SubjectProfile(hand_side="back")
        palm = ox.SubjectProfile(hand_side="palm")
        back_wins = 0
        for seed in range(N_ORDERING_SEEDS):
            r_back = _train_and_eval(seed, profile=back)
            r_palm = _train_and_eval(seed, profile=palm)
            if r_back["cnn_rmse"] <= r_palm["cnn_rmse"]:
                back_wins += 1
        # null experiment through the comparison harness: identical profiles
        report = ox.compare_conditions(
            [ox.SubjectProfile(), ox.SubjectProfile()],
            ox.PhysioTrace(), 30.0,
            master_seeds=list(range(10)),
            arch_params={"conv_layers": 1, "filters": 4, "dense_width": 8},
            train_config=ox.TrainConfig(epochs=2, seed=0))
        arms = sorted(report.summary)
        delta = abs(report.summary[arms[0]]["mean_rmse"]
                    - report.summary[arms[1]]["mean_rmse"])
        ok = back_wins >= 8 and delta <= 0.5
        _report(8, ok, f"back ≤ palm RMSE in {back_wins}/10 seeds (≥8); "
                       f"null |ΔRMSE| {delta:.3g} (≤0.5)")
        assert back_wins >= 8
        assert delta <= 0.5


# --------------------------------------------------------------------------
# criterion 9: bit-identical reruns and thread-count invariance
# --------------------------------------------------------------------------

class TestCriterion9:
    def test_determinism(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OXIPIPE_THREADS", "1")
        synth_cfg = tmp_path / "synth.json"
        synth_cfg.write_text(json.dumps({
            "physio": {"duration_s": 90.0}, "emit_frames": False}))
        assert main(["synth", "--config", str(synth_cfg), "--seed", "11",
                     "--out", str(tmp_path / "rec_a")]) == 0
        assert main(["synth", "--config", str(synth_cfg), "--seed", "12",
                     "--out", str(tmp_path / "rec_b")]) == 0
        train_cfg = tmp_path / "train.json"
        train_cfg.write_text(json.dumps({
            "arch": {"conv_layers": 1, "filters": 4, "dense_width": 8},
            "train": {"epochs": 2}, "stride_s": 1.0}))
        explain_cfg = tmp_path / "explain.json"
        explain_cfg.write_text(json.dumps({"stride_s": 1.0}))
        hashes = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            assert main(["pipeline", "--mode", "train",
                         "--input", str(tmp_path / "rec_a" / "signal.csv"),
                         "--config", str(train_cfg), "--seed", "3",
                         "--out", str(out)]) == 0
            assert main(["pipeline", "--mode", "explain",
                         "--input", str(tmp_path / "rec_b" / "signal.csv"),
                         "--model", str(out / "model.json"),
                         "--config", str(explain_cfg), "--seed", "3",
                         "--out", str(out / "explain")]) == 0
            hashes.append(tuple(
                sha(p) for p in (
                    out / "model.json", out / "loss.csv",
                    out / "training_curves.svg",
                    out / "explain" / "relevance_summary.csv",
                    out / "explain" / "channel_profile.json",
                    out / "explain" / "channel_shares.svg",
                    out / "explain" / "relevance_heatmap.svg")))
        identical = hashes[0] == hashes[1]
        grid_cfg = tmp_path / "grid.json"
        grid_cfg.write_text(json.dumps({
            "test_input": str(tmp_path / "rec_b" / "signal.csv"),
            "grid": {"conv_layers": [1], "window_s": [5.0, 10.0],
                     "filters": [4], "filter_length": [9]},
            "train": {"epochs": 1}, "n_instances": 1}))
        selections = []
        for threads, name in (("1", "g1"), ("4", "g4")):
            monkeypatch.setenv("OXIPIPE_THREADS", threads)
            out = tmp_path / name
            assert main(["pipeline", "--mode", "gridsearch",
                         "--input", str(tmp_path / "rec_a" / "signal.csv"),
                         "--config", str(grid_cfg), "--seed", "0",
                         "--out", str(out)]) == 0
            report = json.loads((out / "report.json").read_text())
            selections.append((report["selected"], sha(out / "model.json")))
        invariant = selections[0] == selections[1]
        ok = identical and invariant
        _report(9, ok, f"rerun hashes identical: {identical}; grid winner "
                       f"invariant to 1 vs 4 workers: {invariant}")
        assert identical
        assert invariant


# --------------------------------------------------------------------------
# criterion 10: container round-trips and strict corruption rejection
# --------------------------------------------------------------------------

class TestCriterion10:
    def test_round_trips_and_rejections(self, tmp_path):
        rng = np.random.default_rng(1010)
        rvf_ok = True
        for i in range(10):
            n, h, w = (int(rng.integers(1, 6)), int(rng.integers(2, 12)),
                       int(rng.integers(2, 12)))
            frames = rng.integers(0, 256, size=(n, h, w, 3)).astype(np.uint8)
            seq = ox.FrameSequence(fps=float(rng.uniform(1, 120)),
                                   frames=frames)
            path = tmp_path / f"r{i}.rvf"
            ox.write_rvf_file(seq, str(path))
            back = ox.read_rvf_file(str(path))
            if not (np.array_equal(back.frames, seq.frames)
                    and back.fps == np.float32(seq.fps)):
                rvf_ok = False
        model_ok = True
        for i in range(10):
            specs = [ox.LayerSpec("conv1d", in_channels=2, out_filters=3,
                                  filter_length=3),
                     ox.LayerSpec("relu"),
                     ox.LayerSpec("maxpool1d", pool_len=2),
                     ox.LayerSpec("flatten"),
                     ox.LayerSpec("dense", in_dim=12, out_dim=1)]
            model = ox.build_model(specs, (2, 11),
                                   seed=int(rng.integers(1 << 31)))
            path = tmp_path / f"m{i}.json"
            ox.save_model(model, str(path))
            again = ox.load_model(str(path))
            for p1, p2 in zip(model.params, again.params):
                if p1 is None:
                    continue
                if not (np.array_equal(p1["w"], p2["w"])
                        and np.array_equal(p1["b"], p2["b"])):
                    model_ok = False
        # constructed corruptions must all raise their strict parse errors
        seq = ox.FrameSequence(
            fps=30.0, frames=rng.integers(0, 256, (2, 4, 4, 3)).astype(np.uint8))
        good = ox.write_rvf(seq)
        rejections = []

        def expect(exc_type, blob):
            try:
                ox.read_rvf(blob)
            except exc_type:
                rejections.append(True)
            except Exception:
                rejections.append(False)
            else:
                rejections.append(False)

        expect(ox.BadMagic, b"XXXX" + good[4:])
        expect(ox.TruncatedPayload, good[:10])
        expect(ox.TruncatedPayload, good[:-5])
        expect(ox.TrailingBytes, good + b"\x00")
        bad_geom = bytearray(good)
        bad_geom[8:12] = (0).to_bytes(4, "little")
        expect(ox.ZeroGeometry, bytes(bad_geom))

        model = ox.build_model(
            [ox.LayerSpec("dense", in_dim=2, out_dim=1)], (2,), seed=0)
        doc = ox.model_to_json(model)
        tampered_schema = dict(doc, schema_version=99)
        try:
            ox.model_from_json(tampered_schema)
            rejections.append(False)
        except ox.SchemaVersionMismatch:
            rejections.append(True)
        tampered_shape = json.loads(json.dumps(doc))
        tampered_shape["params"][0]["w"] = [[1.0, 2.0, 3.0]]
        try:
            ox.model_from_json(tampered_shape)
            rejections.append(False)
        except ox.ShapeMismatch:
            rejections.append(True)
        reject_ok = all(rejections)
        ok = rvf_ok and model_ok and reject_ok
        _report(10, ok, f"RVF round-trips exact: {rvf_ok}; model JSON "
                        f"round-trips exact: {model_ok}; corruptions "
                        f"rejected: {sum(rejections)}/{len(rejections)}")
        assert rvf_ok
        assert model_ok
        assert reject_ok
