"""
Tests for image I/O, synthetic data and dataset handling.
"""
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.data.dataset import augment, check_samples, load_dataset, split, write_dataset
from src.data.images import (
    Image, Sample, load_image, load_mask, load_pnm, load_volume, normalize_image, parse_pnm,
    save_mask, save_pnm, save_soft, save_volume,
)
from src.data.synthetic import gen_synthetic
from src.utils.errors import ConfigurationError, DataError, DimensionError, ParseError


class TempDirTestCase(unittest.TestCase):
    """Test case with a scratch directory."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()


class TestPnm(TempDirTestCase):
    """Tests for PGM/PPM reading and writing."""

    def test_load_8bit_pgm(self):
        path = self.tmp / "a.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        image = load_pnm(path)
        self.assertEqual(image.data.shape, (2, 2, 1))
        np.testing.assert_allclose(image.data[..., 0], [[0.0, 1.0], [128 / 255, 64 / 255]])
        self.assertAlmostEqual(image.data[1, 0, 0], 0.50196, places=5)
        self.assertEqual(image.bit_depth, 8)

    def test_header_comments(self):
        samples, maxval = parse_pnm(b"P5 # comment\n# another\n1 1\n255\n\x07")
        self.assertEqual(maxval, 255)
        self.assertEqual(samples[0, 0, 0], 7)

    def test_ppm_has_three_channels(self):
        path = self.tmp / "c.ppm"
        path.write_bytes(b"P6\n1 2\n255\n" + bytes(range(6)))
        self.assertEqual(load_pnm(path).channels, 3)

    def test_16bit_big_endian(self):
        samples, maxval = parse_pnm(b"P5\n1 1\n65535\n\x01\x00")
        self.assertEqual(maxval, 65535)
        self.assertEqual(samples[0, 0, 0], 256)

    def test_truncated_payload(self):
        with self.assertRaises(ParseError) as ctx:
            parse_pnm(b"P5\n2 2\n255\n\x00\x01")
        self.assertIsNotNone(ctx.exception.offset)

    def test_bad_magic(self):
        with self.assertRaises(ParseError):
            parse_pnm(b"P2\n1 1\n255\n0")

    def test_bad_header_value(self):
        with self.assertRaises(ParseError):
            parse_pnm(b"P5\nx 1\n255\n\x00")

    def test_round_trip_8bit(self):
        rng = np.random.default_rng(0)
        samples = rng.integers(0, 256, size=(5, 7, 3)).astype(np.uint16)
        path = self.tmp / "r.ppm"
        save_pnm(path, samples)
        read, _ = parse_pnm(path.read_bytes())
        np.testing.assert_array_equal(read, samples)

    def test_mask_files(self):
        mask = np.array([[0, 1], [1, 0]], dtype=np.uint8)
        path = self.tmp / "m.pgm"
        save_mask(path, mask)
        raw, _ = parse_pnm(path.read_bytes())
        np.testing.assert_array_equal(np.unique(raw), [0, 255])
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_soft_map_is_16bit(self):
        path = self.tmp / "s.pgm"
        save_soft(path, np.array([[0.0, 0.5], [1.0, 0.25]]))
        raw, maxval = parse_pnm(path.read_bytes())
        self.assertEqual(maxval, 65535)
        np.testing.assert_array_equal(raw[..., 0], [[0, 32768], [65535, 16384]])

    def test_out_of_range_samples(self):
        with self.assertRaises(DataError):
            save_pnm(self.tmp / "x.pgm", np.array([[300]]), maxval=255)

    def test_unsupported_extension(self):
        with self.assertRaises(DataError):
            load_image(self.tmp / "x.png")


class TestVolumes(TempDirTestCase):
    """Tests for STV1 volumes."""

    def test_round_trip(self):
        data = np.random.default_rng(1).uniform(size=(3, 4, 5, 2)).astype(np.float32)
        path = self.tmp / "v.stv"
        save_volume(path, data)
        volume = load_volume(path)
        np.testing.assert_array_equal(volume.data, data.astype(np.float64))
        self.assertEqual(volume.dims, 3)

    def test_all_zero(self):
        path = self.tmp / "z.stv"
        save_volume(path, np.zeros((2, 2, 2)))
        np.testing.assert_array_equal(load_volume(path).data, 0.0)

    def test_payload_mismatch(self):
        path = self.tmp / "bad.stv"
        save_volume(path, np.zeros((2, 2, 2)))
        path.write_bytes(path.read_bytes()[:-4])
        with self.assertRaises(ParseError):
            load_volume(path)

    def test_bad_magic(self):
        path = self.tmp / "bad.stv"
        path.write_bytes(b"XXXX" + bytes(16))
        with self.assertRaises(ParseError):
            load_volume(path)


class TestImages(unittest.TestCase):
    """Tests for Image/Sample containers and normalization."""

    def test_normalize(self):
        image = normalize_image(Image(data=np.array([[[2.0], [4.0]], [[3.0], [6.0]]])))
        self.assertEqual(image.data.min(), 0.0)
        self.assertEqual(image.data.max(), 1.0)
        self.assertEqual(image.data[0, 1, 0], 0.5)

    def test_normalize_constant(self):
        image = normalize_image(Image(data=np.full((3, 3, 1), 0.7)))
        np.testing.assert_array_equal(image.data, 0.0)

    def test_mask_shape_must_match(self):
        with self.assertRaises(DimensionError):
            Sample(image=Image(data=np.zeros((4, 4, 1))), mask=np.zeros((4, 5)), id="x")

    def test_mask_must_be_binary(self):
        with self.assertRaises(DataError):
            Sample(image=Image(data=np.zeros((2, 2, 1))), mask=np.full((2, 2), 2), id="x")


class TestSynthetic(unittest.TestCase):
    """Tests for the blob generator."""

    def test_deterministic(self):
        a = gen_synthetic(5, 32, seed=3)
        b = gen_synthetic(5, 32, seed=3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.image.data, y.image.data)
            np.testing.assert_array_equal(x.mask, y.mask)
            self.assertEqual(x.id, y.id)

    def test_masks_nonempty_and_not_full(self):
        for sample in gen_synthetic(30, 32, seed=0):
            self.assertTrue(sample.mask.any())
            self.assertFalse(sample.mask.all())
            self.assertTrue(0.0 <= sample.image.data.min() and sample.image.data.max() <= 1.0)

    def test_foreground_fraction(self):
        samples = gen_synthetic(200, 64, seed=42)
        fraction = np.mean([s.mask.mean() for s in samples])
        self.assertTrue(0.05 <= fraction <= 0.5, msg=f"fraction {fraction}")

    def test_volumes(self):
        samples = gen_synthetic(2, 16, seed=1, dims=3)
        self.assertEqual(samples[0].image.data.shape, (16, 16, 16, 1))
        self.assertEqual(samples[0].mask.shape, (16, 16, 16))

    def test_invalid_arguments(self):
        with self.assertRaises(ConfigurationError):
            gen_synthetic(0, 32, seed=0)
        with self.assertRaises(ConfigurationError):
            gen_synthetic(1, 8, seed=0)


class TestDataset(TempDirTestCase):
    """Tests for dataset layout, splitting and augmentation."""

    def test_write_and_load(self):
        samples = gen_synthetic(3, 16, seed=2)
        write_dataset(samples, self.tmp)
        loaded = load_dataset(self.tmp)
        self.assertEqual([s.id for s in loaded], [s.id for s in samples])
        for original, read in zip(samples, loaded):
            np.testing.assert_array_equal(read.mask, original.mask)
            np.testing.assert_allclose(read.image.data, original.image.data, atol=0.5 / 255 + 1e-12)

    def test_write_and_load_volumes(self):
        samples = gen_synthetic(2, 16, seed=2, dims=3)
        write_dataset(samples, self.tmp)
        loaded = load_dataset(self.tmp)
        self.assertEqual(loaded[0].image.dims, 3)
        np.testing.assert_array_equal(loaded[1].mask, samples[1].mask)

    def test_empty_directory(self):
        with self.assertRaises(ConfigurationError):
            load_dataset(self.tmp)

    def test_missing_mask(self):
        write_dataset(gen_synthetic(2, 16, seed=0), self.tmp)
        os.remove(self.tmp / "masks" / "synth_0001.pgm")
        with self.assertRaises(DataError):
            load_dataset(self.tmp)

    def test_split_counts(self):
        train, val, test = split(list(range(704)), (0.5, 0.25, 0.25), seed=0)
        self.assertEqual((len(train), len(val), len(test)), (352, 176, 176))
        self.assertEqual(sorted(train + val + test), list(range(704)))

    def test_split_deterministic(self):
        self.assertEqual(split(list(range(50)), (0.6, 0.2, 0.2), 9), split(list(range(50)), (0.6, 0.2, 0.2), 9))

    def test_split_errors(self):
        with self.assertRaises(ConfigurationError):
            split(list(range(10)), (0.5, 0.5, 0.5), 0)
        with self.assertRaises(ConfigurationError):
            split(list(range(2)), (0.6, 0.2, 0.2), 0)

    def test_check_samples(self):
        samples = gen_synthetic(1, 16, seed=0)
        check_samples(samples, 2, 1)
        with self.assertRaises(ConfigurationError):
            check_samples(samples, 3)
        with self.assertRaises(ConfigurationError):
            check_samples(samples, 2, 3)

    def test_augment_keeps_pairs_aligned(self):
        rng = np.random.default_rng(0)
        data = rng.uniform(size=(8, 8, 1))
        mask = (data[..., 0] > 0.5).astype(np.uint8)
        for _ in range(10):
            new_data, new_mask = augment(data, mask, rng)
            np.testing.assert_array_equal(new_mask, (new_data[..., 0] > 0.5).astype(np.uint8))


if __name__ == '__main__':
    unittest.main()
