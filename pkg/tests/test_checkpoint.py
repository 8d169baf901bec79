"""
Tests for checkpoint files.
"""
import json
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.features.featuremaps import LocalFeatureMap
from src.network import mps
from src.training.checkpoint import (
    FORMAT_VERSION, MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
)
from src.utils.errors import ConfigurationError, ParseError


class TestCheckpoint(unittest.TestCase):
    """Tests for saving and loading models."""

    def setUp(self):
        self.feature_map = LocalFeatureMap(kind="binomial-sinusoidal", d=4)
        self.model = mps.init(K=4, M=1, C=1, d=4, bond_dim=3, seed=7, feature_map=self.feature_map)
        self.features = np.random.default_rng(0).uniform(size=(5, 16, 4))
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_forward_identical_after_reload(self):
        path = self.tmp / "nested" / "model.stn"
        save_checkpoint(path, self.model, metadata={"note": "x"})
        loaded, metadata = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.forward(self.features), self.model.forward(self.features))
        self.assertEqual(metadata, {"note": "x"})
        self.assertEqual(loaded.hyperparameters(), self.model.hyperparameters())
        self.assertEqual(loaded.feature_map, self.feature_map)

    def test_encoding_is_deterministic(self):
        first = encode_checkpoint(self.model, {"b": 1, "a": [1, 2]})
        second = encode_checkpoint(self.model.copy(), {"a": [1, 2], "b": 1})
        self.assertEqual(first, second)
        self.assertEqual(first[:4], MAGIC)

    def test_float32_storage(self):
        raw64 = encode_checkpoint(self.model)
        raw32 = encode_checkpoint(self.model, dtype="float32")
        self.assertLess(len(raw32), len(raw64))
        loaded, _ = decode_checkpoint(raw32)
        for original, restored in zip(self.model.parameters(), loaded.parameters()):
            np.testing.assert_allclose(restored, original, rtol=1e-6, atol=1e-7)

    def test_unknown_dtype(self):
        with self.assertRaises(ConfigurationError):
            encode_checkpoint(self.model, dtype="float16")

    def test_bad_magic(self):
        raw = b"XXXX" + encode_checkpoint(self.model)[4:]
        with self.assertRaises(ParseError) as ctx:
            decode_checkpoint(raw)
        self.assertEqual(ctx.exception.offset, 0)

    def test_unsupported_version(self):
        raw = bytearray(encode_checkpoint(self.model))
        raw[4:8] = (FORMAT_VERSION + 1).to_bytes(4, "little")
        with self.assertRaises(ParseError):
            decode_checkpoint(bytes(raw))

    def test_truncated(self):
        raw = encode_checkpoint(self.model)
        for cut in (3, 20, len(raw) - 8):
            with self.assertRaises(ParseError):
                decode_checkpoint(raw[:cut])

    def test_trailing_bytes(self):
        with self.assertRaises(ParseError):
            decode_checkpoint(encode_checkpoint(self.model) + b"\x00" * 8)

    def test_model_without_feature_map(self):
        model = mps.init(K=2, M=2, C=2, d=2, bond_dim=2, seed=1)
        loaded, _ = decode_checkpoint(encode_checkpoint(model))
        self.assertIsNone(loaded.feature_map)
        self.assertEqual(loaded.M, 2)
        self.assertEqual(loaded.C, 2)

    def rewrite_header(self, edit):
        raw = encode_checkpoint(self.model)
        length = struct.unpack_from("<I", raw, 8)[0]
        header = json.loads(raw[12:12 + length])
        edit(header)
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        return raw[:8] + struct.pack("<I", len(blob)) + blob + raw[12 + length:]

    def test_hyperparameters_disagreeing_with_shapes(self):
        for key, value in (("bond_dim", 5), ("K", 3), ("dims", 4), ("K", None)):
            with self.subTest(key=key, value=value):
                raw = self.rewrite_header(lambda header: header["model"].__setitem__(key, value))
                with self.assertRaises(ParseError) as ctx:
                    decode_checkpoint(raw)
                self.assertEqual(ctx.exception.offset, 12)

    def test_missing_hyperparameter(self):
        raw = self.rewrite_header(lambda header: header["model"].pop("M"))
        with self.assertRaises(ParseError):
            decode_checkpoint(raw)


if __name__ == '__main__':
    unittest.main()
