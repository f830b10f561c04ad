import numpy as np
import pytest

from softhand.segnet import (
    NetShape,
    SegNetError,
    SegNetWeights,
    TrainConfig,
    dequantize,
    forward,
    load_weights,
    quantize,
    save_weights,
    train,
)
from softhand.segnet.quantize import MAGIC
from test_segnet_training import blob_dataset


class TestQuantize:
    def test_payload_is_7416_bytes(self):
        weights = SegNetWeights.initialize(seed=0)
        assert quantize(weights).payload_bytes() == 7416

    def test_all_zero_weights_round_trip_exactly(self):
        shape = NetShape()
        zero = SegNetWeights(
            kernels={k: np.zeros(s, np.float32) for k, s in shape.kernel_shapes().items()},
            biases={k: np.zeros(s[3], np.float32) for k, s in shape.kernel_shapes().items()},
        )
        q = quantize(zero)
        assert all(np.all(v == 0) for v in q.kernels.values())
        deq = dequantize(q)
        assert all(np.all(v == 0) for v in deq.kernels.values())

    def test_round_trip_within_one_quantization_step(self):
        weights = SegNetWeights.initialize(seed=3)
        q = quantize(weights)
        deq = dequantize(q)
        for name in weights.kernels:
            step = q.scales[name]
            err = np.max(np.abs(deq.kernels[name] - weights.kernels[name]))
            assert err <= step / 2 + 1e-7

    def test_biases_not_quantized(self):
        weights = SegNetWeights.initialize(seed=4)
        for b in weights.biases.values():
            b += 0.125
        q = quantize(weights)
        for name in weights.biases:
            np.testing.assert_allclose(q.biases[name], weights.biases[name], atol=1e-7)

    def test_non_finite_weights_rejected(self):
        weights = SegNetWeights.initialize(seed=5)
        weights.kernels["conv3"][0, 0, 0, 0] = np.inf
        with pytest.raises(SegNetError):
            quantize(weights)


class TestWeightsFile:
    def test_save_load_round_trip(self, tmp_path):
        weights = SegNetWeights.initialize(seed=6)
        q = quantize(weights)
        path = tmp_path / "weights.bin"
        save_weights(path, q)
        loaded = load_weights(path)
        assert loaded.payload_bytes() == 7416
        for name in q.kernels:
            np.testing.assert_array_equal(loaded.kernels[name], q.kernels[name])
            assert loaded.scales[name] == pytest.approx(q.scales[name], rel=1e-6)
            np.testing.assert_array_equal(loaded.biases[name], q.biases[name])

    def test_file_layout_starts_with_magic(self, tmp_path):
        path = tmp_path / "weights.bin"
        save_weights(path, quantize(SegNetWeights.initialize(seed=0)))
        data = path.read_bytes()
        assert data[:4] == MAGIC
        assert data[4] == 1  # version
        assert data[5] == 5  # layer count

    def test_save_is_byte_deterministic(self, tmp_path):
        q = quantize(SegNetWeights.initialize(seed=7))
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_weights(a, q)
        save_weights(b, q)
        assert a.read_bytes() == b.read_bytes()

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "weights.bin"
        save_weights(path, quantize(SegNetWeights.initialize(seed=8)))
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(SegNetError):
            load_weights(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "weights.bin"
        save_weights(path, quantize(SegNetWeights.initialize(seed=9)))
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(SegNetError):
            load_weights(path)


class TestQuantizedInference:
    def test_mask_agreement_at_least_95_percent(self):
        # trained full-precision network vs its quantized round trip
        data = blob_dataset(n=12, seed=11)
        result = train(data, TrainConfig(epochs=3, learning_rate=2e-3, seed=2))
        deq = dequantize(quantize(result.weights))
        agreements = []
        for img, _ in data:
            full = forward(img, result.weights).mask
            quant = forward(img, deq).mask
            agreements.append(float(np.mean(full == quant)))
        assert float(np.mean(agreements)) >= 0.95
