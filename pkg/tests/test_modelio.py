import numpy as np
import pytest

from thermodet.graph import build_yolov5n, count_params
from thermodet.modelio import ModelFormatError, load_model, save_model
from thermodet.tensor import Tensor


@pytest.fixture(scope="module")
def saved(tmp_path_factory):
    g = build_yolov5n(6, 640, seed=11)
    path = tmp_path_factory.mktemp("models") / "m.tym"
    save_model(g, path)
    return g, path


class TestRoundtrip:
    def test_bit_exact(self, saved):
        g, path = saved
        g2 = load_model(path)
        arrays1 = dict(g.param_arrays())
        arrays2 = dict(g2.param_arrays())
        assert arrays1.keys() == arrays2.keys()
        for k in arrays1:
            np.testing.assert_array_equal(arrays1[k], arrays2[k])
        assert g2.num_classes == g.num_classes
        assert g2.input_size == g.input_size
        assert g2.class_names == g.class_names
        np.testing.assert_array_equal(g2.anchors.anchors, g.anchors.anchors)

    def test_save_load_save_identical_bytes(self, saved, tmp_path):
        g, path = saved
        path2 = tmp_path / "m2.tym"
        save_model(load_model(path), path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_param_count_invariant(self, saved):
        g, path = saved
        assert count_params(load_model(path)) == count_params(g)

    def test_forward_equal_after_roundtrip(self, saved, rng):
        g, path = saved
        g2 = load_model(path)
        x = Tensor(rng.random((1, 3, 640, 640), dtype=np.float32))
        for a, b in zip(g.forward(x), g2.forward(x)):
            np.testing.assert_array_equal(a.data, b.data)

    def test_file_size_is_params_plus_header(self, saved):
        g, path = saved
        size = path.stat().st_size
        payload = 4 * count_params(g)
        header = size - payload - 4  # trailing crc
        assert header > 12
        assert size == pytest.approx(payload, rel=0.02)  # header is small next to 7 MB


class TestCorruption:
    def test_bad_magic(self, saved, tmp_path):
        _, path = saved
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        bad = tmp_path / "bad.tym"
        bad.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match="bad magic"):
            load_model(bad)

    def test_truncated(self, saved, tmp_path):
        _, path = saved
        data = path.read_bytes()
        bad = tmp_path / "trunc.tym"
        bad.write_bytes(data[: len(data) // 2])
        with pytest.raises(ModelFormatError):
            load_model(bad)

    def test_checksum_mismatch(self, saved, tmp_path):
        _, path = saved
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF  # flip a payload byte
        bad = tmp_path / "crc.tym"
        bad.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match="checksum mismatch"):
            load_model(bad)

    def test_empty_file(self, tmp_path):
        bad = tmp_path / "empty.tym"
        bad.write_bytes(b"")
        with pytest.raises(ModelFormatError, match="bad magic"):
            load_model(bad)
