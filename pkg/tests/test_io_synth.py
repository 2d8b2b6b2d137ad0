import math

import numpy as np
import pytest
from scipy import ndimage

from bifs.exceptions import DimensionError, DomainError, FormatError, ParameterError
from bifs.io import (
    load_image,
    load_image_stack,
    read_raw,
    read_sample_set,
    rescale,
    save_image,
    write_raw,
    write_sample_set,
)
from bifs.metrics import high_frequency_fraction, metrics, power_by_radius, region_means, rmse
from bifs.synth import (
    PHANTOM_LEVELS,
    PHANTOM_NAMES,
    BumpConfig,
    GaussianNoise,
    StudentTNoise,
    add_noise,
    demo_scene,
    make_phantom,
    noise_sd_for_range,
    simulate_bump_database,
    simulate_bumps,
)


class TestFiles:
    def test_raw_bit_identical(self, tmp_path):
        img = np.random.default_rng(0).normal(size=(12, 20)).astype(np.float32).astype(np.float64)
        save_image(img, tmp_path / "a.raw")
        back = load_image(tmp_path / "a.raw")
        assert back.shape == (12, 20) and back.tobytes() == img.tobytes()

    def test_raw_metadata_and_stack(self, tmp_path):
        stack = np.arange(24, dtype=float).reshape(2, 3, 4)
        write_raw(tmp_path / "s.f32", stack, kappa="1.5", note="x")
        got, meta = read_raw(tmp_path / "s.f32")
        np.testing.assert_array_equal(got, stack)
        assert meta == {"kappa": "1.5", "note": "x"}
        with pytest.raises(FormatError):
            load_image(tmp_path / "s.f32")
        with pytest.raises(FormatError):
            write_raw(tmp_path / "bad.raw", stack, note="two words")

    def test_sample_set(self, tmp_path):
        stack = np.random.default_rng(1).normal(size=(5, 8, 8)).astype(np.float32)
        write_sample_set(tmp_path / "s.raw", stack)
        np.testing.assert_array_equal(read_sample_set(tmp_path / "s.raw"), stack)

    def test_truncated_raw(self, tmp_path):
        path = tmp_path / "t.raw"
        write_raw(path, np.zeros((4, 4)))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            read_raw(path)
        (tmp_path / "n.raw").write_bytes(b"hello\n")
        with pytest.raises(FormatError):
            read_raw(tmp_path / "n.raw")

    def test_constant_rescale(self, tmp_path):
        np.testing.assert_array_equal(rescale(np.full((3, 3), 7.0), 0, 10), 5.0)
        save_image(np.full((4, 4), -3.0), tmp_path / "c.pgm")
        assert np.all(load_image(tmp_path / "c.pgm") == 128)

    def test_rescale_full_range(self, tmp_path):
        img = np.linspace(-5, 5, 64).reshape(8, 8)
        save_image(img, tmp_path / "r.png")
        back = load_image(tmp_path / "r.png")
        assert back.min() == 0 and back.max() == 255

    def test_clip_without_rescale(self, tmp_path):
        img = np.array([[-10.0, 3.4], [100.0, 300.0]])
        save_image(img, tmp_path / "k.pgm", rescale_range=False)
        np.testing.assert_array_equal(load_image(tmp_path / "k.pgm"), [[0, 3], [100, 255]])

    def test_png16_ramp(self, tmp_path):
        ramp = np.tile(np.linspace(0, 1, 256), (16, 1))
        save_image(ramp, tmp_path / "ramp.png", bits=16)
        back = load_image(tmp_path / "ramp.png") / 65535
        assert np.max(np.abs(back - ramp)) <= 1 / 65535

    @pytest.mark.parametrize("ascii_pgm", [True, False])
    @pytest.mark.parametrize("bits", [8, 16])
    def test_pgm_round_trip(self, tmp_path, ascii_pgm, bits):
        q = np.random.default_rng(2).integers(0, 2**bits, size=(7, 9)).astype(float)
        q[0, 0], q[0, 1] = 0, 2**bits - 1
        save_image(q, tmp_path / "p.pgm", rescale_range=False, bits=bits, ascii_pgm=ascii_pgm)
        np.testing.assert_array_equal(load_image(tmp_path / "p.pgm"), q)
        magic = (tmp_path / "p.pgm").read_bytes()[:2]
        assert magic == (b"P2" if ascii_pgm else b"P5")

    def test_pgm_comments(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P2\n# made by hand\n3 2\n# max\n9\n1 2 3\n4 5 9\n")
        np.testing.assert_array_equal(load_image(tmp_path / "c.pgm"), [[1, 2, 3], [4, 5, 9]])

    def test_unknown_format(self, tmp_path):
        with pytest.raises(FormatError):
            save_image(np.zeros((4, 4)), tmp_path / "x.jpg")
        with pytest.raises(DimensionError):
            save_image(np.zeros(4), tmp_path / "x.pgm")

    def test_stack_from_directory(self, tmp_path):
        rng = np.random.default_rng(3)
        imgs = [rng.normal(size=(8, 8)).astype(np.float32) for _ in range(3)]
        for i, im in enumerate(imgs):
            save_image(im, tmp_path / f"img{i}.raw")
        (tmp_path / "notes.txt").write_text("ignored")
        np.testing.assert_array_equal(load_image_stack(tmp_path), np.stack(imgs))
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(FormatError):
            load_image_stack(empty)


class TestNoise:
    def test_gaussian_sd(self):
        clean = np.zeros((128, 128))
        assert np.std(add_noise(clean, GaussianNoise(2.0), seed=1) - clean) == pytest.approx(2.0, rel=0.03)

    def test_student_t_sd(self):
        clean = np.zeros((128, 128))
        assert np.std(add_noise(clean, StudentTNoise(3, 2.0), seed=1)) == pytest.approx(2.0, rel=0.1)

    def test_deterministic(self):
        a = add_noise(np.zeros((8, 8)), GaussianNoise(1.0), seed=5)
        assert a.tobytes() == add_noise(np.zeros((8, 8)), GaussianNoise(1.0), seed=5).tobytes()

    def test_domain(self):
        with pytest.raises(DomainError):
            StudentTNoise(2, 1.0)
        with pytest.raises(DomainError):
            GaussianNoise(0.0)

    def test_range_fraction(self):
        img = np.array([[2.0, 5.0], [11.0, 8.0]])
        assert noise_sd_for_range(img) == pytest.approx(3.0)


class TestPhantom:
    def test_region_means_exact(self):
        img, lab = make_phantom(128)
        means = region_means(img, lab, PHANTOM_NAMES)
        assert means == {"GM": 20.0, "WM": 10.0, "CSF": 0.0}
        assert PHANTOM_LEVELS == means

    def test_ribbon_width(self):
        img, lab = make_phantom(128)
        depth = ndimage.distance_transform_edt(lab > 0)
        assert 2.5 <= depth[lab == 2].max() <= 3.5
        assert depth[lab == 1].min() > 3.0

    def test_partition(self):
        _, lab = make_phantom(96, 128)
        assert lab.shape == (96, 128)
        assert set(np.unique(lab)) == {0, 1, 2}
        assert sum(np.sum(lab == v) for v in (0, 1, 2)) == lab.size

    def test_ribbon_scales_with_size(self):
        _, small = make_phantom(128)
        _, big = make_phantom(256)
        # ribbon width doubles with the grid, so the GM share stays roughly fixed
        assert np.mean(big == 2) == pytest.approx(np.mean(small == 2), rel=0.15)

    def test_checks(self):
        with pytest.raises(DimensionError):
            make_phantom(32)
        with pytest.raises(ParameterError):
            make_phantom(64, ribbon_width=0)


class TestBumps:
    def test_rate_near_zero(self):
        assert np.all(simulate_bumps(BumpConfig(rate=1e-9), seed=3) == 0)

    def test_mean_count(self):
        # with unit height and sd 2 each bump carries mass 2 pi 4 sqrt(1 - c^2), and E[sqrt(1 - c^2)] = pi/4
        cfg = BumpConfig(rate=4.0, n_y=64, n_x=64, intensity=(1.0, 1.0), sd=(2.0, 2.0))
        unit = 2 * math.pi * 4 * math.pi / 4
        est = np.array([simulate_bumps(cfg, seed=s).sum() for s in range(200)]) / unit
        se = est.std(ddof=1) / math.sqrt(est.size)
        assert abs(est.mean() - cfg.rate) < 3 * se

    def test_anisotropic(self):
        fields = simulate_bump_database(500, BumpConfig(rate=10.0, n_y=32, n_x=32), seed=4)
        f = fields - fields.mean(axis=(1, 2), keepdims=True)
        diag = np.mean(f * np.roll(f, (1, 1), axis=(1, 2)), axis=(1, 2))
        anti = np.mean(f * np.roll(f, (1, -1), axis=(1, 2)), axis=(1, 2))
        d = diag - anti
        assert abs(d.mean()) > 3 * d.std(ddof=1) / math.sqrt(d.size)

    def test_database_deterministic(self):
        cfg = BumpConfig(rate=3.0, n_y=16, n_x=16)
        a = simulate_bump_database(4, cfg, seed=7)
        b = simulate_bump_database(4, cfg, seed=7)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a[0], a[1])

    def test_config_checks(self):
        with pytest.raises(ParameterError):
            BumpConfig(rate=0.0)
        with pytest.raises(ParameterError):
            BumpConfig(sd=(3.0, 1.0))


class TestMetrics:
    def test_identity_and_offset(self):
        x = demo_scene(32)
        assert rmse(x, x) == 0.0
        assert rmse(x + 2.5, x) == pytest.approx(2.5)
        assert rmse(x - 1.5, x) == pytest.approx(1.5)

    def test_noisy_phantom(self):
        img, lab = make_phantom(128)
        noisy = add_noise(img, GaussianNoise(2.5), seed=11)
        out = metrics(noisy, img, lab, PHANTOM_NAMES)
        assert out["rmse"] == pytest.approx(2.5, rel=0.03)
        assert set(out["region_means"]) == {"GM", "WM", "CSF"}
        assert out["residual_power"].shape == out["residual_power_radius"].shape

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            rmse(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_power_by_radius_white(self):
        x = np.random.default_rng(5).normal(0, 1, (64, 64))
        r, p = power_by_radius(x)
        assert r[0] == 0 and np.all(np.diff(r) > 0)
        assert np.mean(p[5:30]) == pytest.approx(1.0, rel=0.1)

    def test_high_frequency_fraction(self):
        assert high_frequency_fraction(np.ones((16, 16))) == 0.0
        yy, xx = np.mgrid[0:16, 0:16]
        assert high_frequency_fraction(np.cos(np.pi * (xx + yy))) == 1.0
