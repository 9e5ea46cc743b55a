import numpy as np
import pytest

from skdistill.data import (
    CorpusSpec,
    batch_indices,
    batch_iter,
    degrade,
    denormalize,
    make_clean_corpus,
    make_clean_image,
    make_samples,
    normalize,
    read_image,
    write_image,
)
from skdistill.errors import ConfigError, RangeError, ShapeError
from skdistill.metrics import psnr


class TestCleanCorpus:
    def test_deterministic(self):
        spec = CorpusSpec(count=4, patch_size=16, base_seed=7)
        a = make_clean_corpus(spec)
        b = make_clean_corpus(spec)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))

    def test_single_small_image_range(self):
        spec = CorpusSpec(count=1, patch_size=8)
        (img,) = make_clean_corpus(spec)
        assert img.shape == (1, 8, 8)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_parallel_generation_matches_serial(self):
        spec = CorpusSpec(count=6, patch_size=16, base_seed=3)
        serial = make_clean_corpus(spec)
        parallel = make_clean_corpus(spec, threads=4)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(serial, parallel))

    def test_mean_calibration_over_thousand_images(self):
        spec = CorpusSpec(count=1000, patch_size=16, base_seed=11)
        means = [img.mean() for img in make_clean_corpus(spec)]
        assert min(means) > 0.2
        assert max(means) < 0.8

    def test_first_index_offsets_are_fresh_images(self):
        spec = CorpusSpec(count=2, patch_size=8, base_seed=0)
        base = make_clean_corpus(spec)
        held = make_clean_corpus(spec, first_index=2, count=2)
        assert base[0].tobytes() != held[0].tobytes()


class TestDegrade:
    def test_noise_zero_sigma_is_identity(self):
        spec = CorpusSpec(count=1, patch_size=8, noise_sigma=0.0)
        clean = make_clean_image(spec, 0)
        assert np.array_equal(degrade(clean, "denoise", spec, 5), clean)

    def test_blur_delta_kernel_is_identity(self):
        spec = CorpusSpec(count=1, patch_size=8, blur_sigma=0.0)
        clean = make_clean_image(spec, 0)
        assert np.array_equal(degrade(clean, "deblur", spec, 5), clean)

    def test_rain_zero_density_is_identity(self):
        spec = CorpusSpec(count=1, patch_size=8, rain_density=0.0)
        clean = make_clean_image(spec, 0)
        assert np.array_equal(degrade(clean, "derain", spec, 5), clean)

    def test_unknown_task(self):
        spec = CorpusSpec(count=1, patch_size=8)
        with pytest.raises(ConfigError):
            degrade(make_clean_image(spec, 0), "sharpen", spec, 0)

    def test_deterministic_per_seed(self):
        spec = CorpusSpec(count=1, patch_size=16)
        clean = make_clean_image(spec, 0)
        a = degrade(clean, "denoise", spec, 9)
        b = degrade(clean, "denoise", spec, 9)
        c = degrade(clean, "denoise", spec, 10)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    @pytest.mark.parametrize("task,param,grid", [
        ("denoise", "noise_sigma", [0.02, 0.05, 0.1, 0.2]),
        ("deblur", "blur_sigma", [0.4, 0.8, 1.6, 3.2]),
        ("derain", "rain_density", [0.02, 0.08, 0.3, 0.9]),
    ])
    def test_psnr_decreases_with_strength(self, task, param, grid):
        values = []
        for strength in grid:
            spec = CorpusSpec(count=1, patch_size=32, base_seed=2, **{param: strength})
            clean = make_clean_image(spec, 0)
            out = degrade(clean, task, spec, seed=123)
            values.append(psnr(clean, out, 1.0))
        assert all(np.isfinite(values))
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_degraded_stays_in_unit_range(self):
        for task in ("denoise", "deblur", "derain"):
            spec = CorpusSpec(count=1, patch_size=16, task=task,
                              noise_sigma=0.5, rain_density=0.5)
            out = degrade(make_clean_image(spec, 0), task, spec, 3)
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestNormalize:
    def test_endpoints_and_midpoint(self):
        assert normalize(np.array(0.0)) == -1.0
        assert normalize(np.array(1.0)) == 1.0
        assert normalize(np.array(0.5)) == 0.0

    def test_roundtrip_bitwise_on_8bit_grid(self):
        grid = np.arange(256, dtype=np.float64) / 256.0
        back = denormalize(normalize(grid))
        assert back.tobytes() == grid.tobytes()

    def test_pipeline_outputs_within_bounds(self):
        spec = CorpusSpec(count=3, patch_size=16, noise_sigma=0.4)
        for sample in make_samples(spec):
            z = normalize(sample.degraded)
            assert z.min() >= -1.0 and z.max() <= 1.0

    def test_out_of_range_rejected(self):
        with pytest.raises(RangeError):
            normalize(np.array([1.5]))


class TestBatching:
    def test_sixteen_over_eight_gives_two(self):
        corpus = list(range(16))
        batches = list(batch_iter(corpus, 8, seed=0, epochs=1))
        assert len(batches) == 2
        assert sorted(x for b in batches for x in b) == corpus

    def test_partial_batch_dropped(self):
        batches = list(batch_iter(list(range(17)), 8, seed=0, epochs=1))
        assert len(batches) == 2
        assert sum(len(b) for b in batches) == 16

    def test_same_seed_same_sequence(self):
        a = list(batch_iter(list(range(20)), 4, seed=3, epochs=2))
        b = list(batch_iter(list(range(20)), 4, seed=3, epochs=2))
        assert a == b
        c = list(batch_iter(list(range(20)), 4, seed=4, epochs=2))
        assert a != c

    def test_epochs_reshuffle(self):
        e0 = batch_indices(32, 8, seed=0, epoch=0)
        e1 = batch_indices(32, 8, seed=0, epoch=1)
        assert e0 != e1

    def test_empty_corpus(self):
        with pytest.raises(ConfigError):
            next(batch_iter([], 4, seed=0))


class TestImageIo:
    def test_pgm_roundtrip(self, tmp_path):
        img = np.arange(64, dtype=np.float64).reshape(1, 8, 8) / 255.0
        path = tmp_path / "x.pgm"
        write_image(path, img)
        back = read_image(path)
        assert back.tobytes() == img.tobytes()

    def test_ppm_roundtrip(self, tmp_path):
        g = np.random.default_rng(0)
        img = g.integers(0, 256, size=(3, 6, 5)).astype(np.float64) / 255.0
        path = tmp_path / "x.ppm"
        write_image(path, img)
        back = read_image(path)
        assert back.shape == (3, 6, 5)
        assert back.tobytes() == img.tobytes()

    def test_wrong_shape_rejected(self, tmp_path):
        with pytest.raises(ShapeError):
            write_image(tmp_path / "x.pgm", np.zeros((2, 4, 4)))

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(ConfigError):
            read_image(path)


def test_samples_are_deterministic_and_tagged():
    spec = CorpusSpec(count=3, patch_size=8, task="deblur")
    a, b = make_samples(spec), make_samples(spec)
    for sa, sb in zip(a, b):
        assert sa.task == "deblur"
        assert sa.clean.tobytes() == sb.clean.tobytes()
        assert sa.degraded.tobytes() == sb.degraded.tobytes()
        assert sa.seed == sb.seed
