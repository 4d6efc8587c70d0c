"""RVF container and color-signal CSV round-trips plus strict parsing."""

import numpy as np
import pytest

import oxipipe as ox
from oxipipe.frameio import _HEADER, RVF_MAGIC


def random_sequence(rng, frames=4, height=6, width=5):
    data = rng.integers(0, 256, size=(frames, height, width, 3), dtype=np.uint8)
    fps = float(np.float32(rng.uniform(1.0, 120.0)))
    return ox.FrameSequence(data, fps)


class TestRvfRoundTrip:
    def test_identity_on_randomized_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            seq = random_sequence(rng,
                                  frames=int(rng.integers(1, 6)),
                                  height=int(rng.integers(1, 9)),
                                  width=int(rng.integers(1, 9)))
            again = ox.read_rvf(ox.write_rvf(seq))
            assert again == seq

    def test_fps_stored_as_float32(self):
        data = np.zeros((1, 2, 2, 3), dtype=np.uint8)
        seq = ox.FrameSequence(data, 29.97)
        assert seq.fps == float(np.float32(29.97))
        assert ox.read_rvf(ox.write_rvf(seq)).fps == seq.fps

    def test_file_round_trip(self, tmp_path):
        seq = random_sequence(np.random.default_rng(1))
        path = tmp_path / "clip.rvf"
        ox.write_rvf_file(seq, path)
        assert ox.read_rvf_file(path) == seq

    def test_header_layout(self):
        data = np.arange(2 * 3 * 4 * 3, dtype=np.uint8).reshape(2, 3, 4, 3)
        blob = ox.write_rvf(ox.FrameSequence(data, 30.0))
        magic, width, height, count, fps = _HEADER.unpack_from(blob, 0)
        assert magic == RVF_MAGIC == b"RVF1"
        assert (width, height, count) == (4, 3, 2)
        assert fps == 30.0
        assert len(blob) == _HEADER.size + 2 * 3 * 4 * 3


class TestRvfStrictParsing:
    def good(self):
        data = np.full((2, 4, 5, 3), 9, dtype=np.uint8)
        return ox.write_rvf(ox.FrameSequence(data, 24.0))

    def test_bad_magic(self):
        blob = b"XVF1" + self.good()[4:]
        with pytest.raises(ox.BadMagic):
            ox.read_rvf(blob)
        assert ox.BadMagic("x").exit_code == 10

    def test_truncated_header(self):
        with pytest.raises(ox.TruncatedPayload):
            ox.read_rvf(self.good()[:10])

    def test_truncated_payload(self):
        with pytest.raises(ox.TruncatedPayload):
            ox.read_rvf(self.good()[:-1])

    def test_trailing_bytes(self):
        with pytest.raises(ox.TrailingBytes):
            ox.read_rvf(self.good() + b"\x00")

    def test_zero_geometry(self):
        blob = bytearray(self.good())
        blob[4:8] = (0).to_bytes(4, "little")
        with pytest.raises(ox.ZeroGeometry):
            ox.read_rvf(bytes(blob[:_HEADER.size]))

    def test_zero_frame_count(self):
        blob = bytearray(self.good())
        blob[12:16] = (0).to_bytes(4, "little")
        with pytest.raises(ox.ZeroGeometry):
            ox.read_rvf(bytes(blob[:_HEADER.size]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ox.IoFailure):
            ox.read_rvf_file(tmp_path / "absent.rvf")


class TestSignalCsv:
    def make_signal(self, with_truth=True):
        rng = np.random.default_rng(3)
        samples = rng.uniform(0.0, 255.0, size=(40, 3))
        spo2 = rng.uniform(70.0, 100.0, size=40) if with_truth else None
        cycles = np.array([0, 13, 26, 40]) if with_truth else None
        return ox.ColorSignal(30.0, samples, spo2=spo2, cycle_boundaries=cycles)

    def test_round_trip_bit_exact(self):
        sig = self.make_signal()
        again = ox.read_signal_csv(ox.write_signal_csv(sig))
        assert again.fps == sig.fps
        assert np.array_equal(again.samples, sig.samples)
        assert np.array_equal(again.spo2, sig.spo2)
        assert np.array_equal(again.cycle_boundaries, sig.cycle_boundaries)

    def test_round_trip_without_truth(self):
        sig = self.make_signal(with_truth=False)
        again = ox.read_signal_csv(ox.write_signal_csv(sig))
        assert again.spo2 is None and again.cycle_boundaries is None
        assert np.array_equal(again.samples, sig.samples)

    def test_header_and_comments(self):
        text = ox.write_signal_csv(self.make_signal())
        lines = text.splitlines()
        assert lines[0].startswith("# fps=")
        assert lines[1].startswith("# cycle_boundaries=")
        assert lines[2] == "time_s,r,g,b,spo2"
        assert "\r" not in text

    def test_unknown_header_rejected(self):
        with pytest.raises(ox.UnknownColumns):
            ox.read_signal_csv("# fps=30\nt,red,green,blue\n0,1,2,3\n")

    def test_short_row_rejected(self):
        with pytest.raises(ox.UnknownColumns):
            ox.read_signal_csv("# fps=30\ntime_s,r,g,b\n0.0,1.0,2.0\n")

    def test_file_round_trip(self, tmp_path):
        sig = self.make_signal()
        path = tmp_path / "sig.csv"
        ox.write_signal_csv_file(sig, path)
        again = ox.read_signal_csv_file(path)
        assert np.array_equal(again.samples, sig.samples)


class TestColorSignalInvariants:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ox.ColorSignal(30.0, np.full((4, 3), 300.0))

    def test_rejects_bad_boundaries(self):
        samples = np.full((10, 3), 5.0)
        with pytest.raises(ValueError):
            ox.ColorSignal(30.0, samples, cycle_boundaries=[0, 5, 5])
        with pytest.raises(ValueError):
            ox.ColorSignal(30.0, samples, cycle_boundaries=[0, 50])

    def test_rejects_misaligned_spo2(self):
        with pytest.raises(ValueError):
            ox.ColorSignal(30.0, np.full((4, 3), 5.0), spo2=[95.0, 96.0])
