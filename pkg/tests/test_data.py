import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radiomamba.data import (
    DIHEDRAL,
    Batcher,
    DataError,
    EnvironmentSample,
    augment,
    dihedral,
    iter_samples,
    load_dataset,
    pathloss_oracle,
    read_f32grid,
    read_manifest,
    save_map,
    stack,
    synth_generate,
    write_f32grid,
    write_manifest,
    write_png,
)


def bresenham(p0, p1):
    """Textbook integer line rasterisation, endpoints included."""
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx, sy = (1 if x0 < x1 else -1), (1 if y0 < y1 else -1)
    err = dx + dy
    points = []
    while True:
        points.append((x0, y0))
        if (x0, y0) == (x1, y1):
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def oracle_pixel(obst, tx, px, kappa=0.5, scale=8.0):
    if obst[px]:
        return 0.0
    between = bresenham(tx, px)[1:-1]
    n_block = sum(int(obst[q]) for q in between)
    d = math.dist(tx, px)
    return math.exp(-kappa * n_block) / (1 + d / scale)


class TestOracle:
    @pytest.mark.parametrize("seed", range(3))
    def test_matches_python_oracle(self, seed):
        rng = np.random.default_rng(seed)
        obst = (rng.random((20, 20)) < 0.2).astype(np.uint8)
        tx = (int(rng.integers(20)), int(rng.integers(20)))
        obst[tx] = 0
        p = pathloss_oracle(obst, tx)
        for i in range(20):
            for j in range(20):
                assert p[i, j] == pytest.approx(oracle_pixel(obst, tx, (i, j)), abs=1e-15)

    def test_source_pixel(self):
        assert pathloss_oracle(np.zeros((32, 32)), (5, 7))[5, 7] == 1.0

    def test_distance_eight_clear(self):
        p = pathloss_oracle(np.zeros((32, 32)), (10, 10))
        assert p[10, 18] == pytest.approx(0.5, abs=1e-15)
        assert p[2, 10] == pytest.approx(0.5, abs=1e-15)

    def test_inside_obstacle_zero(self):
        obst = np.zeros((32, 32), np.uint8)
        obst[20:25, 20:25] = 1
        assert pathloss_oracle(obst, (0, 0))[22, 22] == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 31), st.integers(0, 31), st.integers(0, 31), st.integers(0, 31))
    def test_shadow_strictly_decreases(self, ti, tj, i, j):
        between = bresenham((ti, tj), (i, j))[1:-1]
        if not between:
            return
        obst = np.zeros((32, 32), np.uint8)
        before = pathloss_oracle(obst, (ti, tj))[i, j]
        obst[between[len(between) // 2]] = 1
        assert pathloss_oracle(obst, (ti, tj))[i, j] < before

    @pytest.mark.parametrize("direction", [(0, 1), (1, 0), (1, 1), (-1, 2), (3, -1)])
    def test_monotone_along_clear_ray(self, direction):
        p = pathloss_oracle(np.zeros((64, 64)), (32, 32))
        vals = []
        for t in range(1, 11):
            i, j = 32 + t * direction[0], 32 + t * direction[1]
            if 0 <= i < 64 and 0 <= j < 64:
                vals.append(p[i, j])
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestSynth:
    @pytest.mark.parametrize("mode", ["SRM", "DRM"])
    def test_deterministic(self, mode):
        a, b = synth_generate(7, 64, mode), synth_generate(7, 64, mode)
        for key in ("h_s", "h_d", "r", "p"):
            assert getattr(a, key).tobytes() == getattr(b, key).tobytes()

    @pytest.mark.parametrize("seed", range(20))
    def test_invariants(self, seed):
        s = synth_generate(seed, 32, "DRM" if seed % 2 else "SRM")
        s.validate()
        obst = (s.h_s | s.h_d).astype(bool)
        assert np.all(s.p[obst] == 0)
        assert s.p[s.transmitter] == 1.0
        assert 0 <= s.h_d.sum() <= 16

    def test_srm_has_no_vehicles(self):
        assert synth_generate(3, 64, "SRM").h_d.sum() == 0

    def test_drm_vehicles_are_obstacles(self):
        for seed in range(10):
            s = synth_generate(seed, 64, "DRM")
            if s.h_d.sum():
                assert np.all(s.p[s.h_d == 1] == 0)
                assert not np.any(s.h_s & s.h_d)
                return
        pytest.fail("no DRM sample with vehicles in ten seeds")

    def test_small_grid_rejected(self):
        with pytest.raises(DataError):
            synth_generate(0, 16)

    def test_bad_mode(self):
        with pytest.raises(DataError):
            synth_generate(0, 32, "XYZ")


def write_dataset(root, samples, mode="SRM", lossless=True, split="train"):
    for k, s in enumerate(samples):
        save_map(root / split / f"map_{k:05d}", s, mode, lossless=lossless)
    write_manifest(root, mode, samples[0].grid, {split: len(samples)})


class TestIo:
    def test_f32grid_round_trip(self, tmp_path):
        x = np.random.default_rng(0).random((5, 7)).astype(np.float32)
        write_f32grid(tmp_path / "a.f32grid", x)
        np.testing.assert_array_equal(read_f32grid(tmp_path / "a.f32grid"), x)
        raw = (tmp_path / "a.f32grid").read_bytes()
        assert raw[:4] == b"F32G" and int.from_bytes(raw[4:8], "little") == 5

    def test_f32grid_bad_magic(self, tmp_path):
        (tmp_path / "b.f32grid").write_bytes(b"XXXX" + bytes(8))
        with pytest.raises(DataError, match="magic"):
            read_f32grid(tmp_path / "b.f32grid")

    @pytest.mark.parametrize("mode", ["SRM", "DRM"])
    def test_png_round_trip_within_quantisation(self, tmp_path, mode):
        samples = [synth_generate(i, 32, mode) for i in range(3)]
        write_dataset(tmp_path, samples, mode, lossless=False)
        loaded = load_dataset(tmp_path, "train")
        for a, b in zip(samples, loaded):
            assert np.abs(a.p - b.p).max() <= 1 / 255
            for key in ("h_s", "h_d", "r"):
                np.testing.assert_array_equal(getattr(a, key), getattr(b, key))

    def test_lossless_preferred(self, tmp_path):
        s = synth_generate(0, 32)
        write_dataset(tmp_path, [s])
        np.testing.assert_array_equal(load_dataset(tmp_path, "train")[0].p, s.p.astype(np.float32))

    def test_full_gain_image(self, tmp_path):
        s = synth_generate(0, 32)
        write_dataset(tmp_path, [s], lossless=False)
        write_png(tmp_path / "train" / "map_00000" / "gain_0.png", np.full((32, 32), 255))
        assert np.all(load_dataset(tmp_path, "train")[0].p == 1.0)

    def test_two_hot_transmitter_rejected(self, tmp_path):
        s = synth_generate(0, 32)
        write_dataset(tmp_path, [s])
        r = s.r.copy() * 255
        r[0, 0] = r[31, 31] = 255
        write_png(tmp_path / "train" / "map_00000" / "tx_0.png", r)
        with pytest.raises(DataError, match="tx_0.png"):
            load_dataset(tmp_path, "train")

    def test_wrong_dimensions_named(self, tmp_path):
        write_dataset(tmp_path, [synth_generate(0, 32)])
        write_png(tmp_path / "train" / "map_00000" / "buildings.png", np.zeros((16, 16)))
        with pytest.raises(DataError, match="buildings.png"):
            load_dataset(tmp_path, "train")

    def test_missing_file_named(self, tmp_path):
        write_dataset(tmp_path, [synth_generate(0, 32)], mode="DRM")
        (tmp_path / "train" / "map_00000" / "vehicles.png").unlink()
        with pytest.raises(DataError, match="vehicles.png"):
            load_dataset(tmp_path, "train")

    def test_rgb_rejected(self, tmp_path):
        from PIL import Image
        write_dataset(tmp_path, [synth_generate(0, 32)])
        Image.new("RGB", (32, 32)).save(tmp_path / "train" / "map_00000" / "buildings.png")
        with pytest.raises(DataError, match="single-channel"):
            load_dataset(tmp_path, "train")

    def test_manifest_count_checked(self, tmp_path):
        write_dataset(tmp_path, [synth_generate(0, 32)])
        write_manifest(tmp_path, "SRM", 32, {"train": 2})
        with pytest.raises(DataError, match="declares 2"):
            load_dataset(tmp_path, "train")

    def test_manifest_round_trip(self, tmp_path):
        write_manifest(tmp_path, "drm", 64, {"train": 3, "val": 1}, {"seed": 5})
        m = read_manifest(tmp_path)
        assert (m["mode"], m["grid"], m["train"], m["val"], m["test"]) == ("DRM", 64, 3, 1, 0)
        assert m["extra"] == {"seed": "5"}

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError, match="manifest"):
            list(iter_samples(tmp_path, "train"))


class TestBatcher:
    def samples(self, n=10, grid=32, mode="SRM"):
        return [synth_generate(i, grid, mode) for i in range(n)]

    def test_srm_shapes(self):
        x, y = stack(self.samples(2, 64), "SRM")
        assert x.shape == (2, 2, 64, 64) and y.shape == (2, 1, 64, 64)
        assert x.dtype == np.float32

    def test_drm_adds_one_channel(self):
        s = self.samples(2, 32, "DRM")
        x, _ = stack(s, "DRM")
        assert x.shape[1] == 3
        np.testing.assert_array_equal(x[:, 1], np.stack([t.h_d for t in s]))
        np.testing.assert_array_equal(x[:, 2], np.stack([t.r for t in s]))

    def test_mixed_grids(self):
        with pytest.raises(DataError):
            stack([synth_generate(0, 32), synth_generate(1, 64)], "SRM")

    def test_reproducible_and_seed_dependent(self):
        s = self.samples()
        a, b, c = Batcher(s, 3, 5, "SRM"), Batcher(s, 3, 5, "SRM"), Batcher(s, 3, 6, "SRM")
        steps = range(12)
        assert [a.indices(k).tolist() for k in steps] == [b.indices(k).tolist() for k in steps]
        assert [a.indices(k).tolist() for k in steps] != [c.indices(k).tolist() for k in steps]

    def test_epoch_covers_each_sample_once(self):
        bt = Batcher(self.samples(), 3, 0, "SRM")
        seen = np.concatenate([bt.indices(k) for k in range(bt.per_epoch)])
        assert len(set(seen.tolist())) == len(seen) == 9

    def test_random_access_matches_sequential(self):
        bt = Batcher(self.samples(), 4, 1, "SRM")
        seq = [bt.indices(k).tolist() for k in range(7)]
        fresh = Batcher(self.samples(), 4, 1, "SRM")
        assert fresh.indices(6).tolist() == seq[6]

    def test_invalid_sample_rejected(self):
        s = synth_generate(0, 32)
        bad = EnvironmentSample(s.h_s, s.h_d, np.zeros_like(s.r), s.p)
        with pytest.raises(DataError, match="exactly one"):
            bad.validate()


class TestAugment:
    def test_eight_distinct_symmetries(self):
        a = np.arange(16.0).reshape(4, 4)
        images = {dihedral(a, k).tobytes() for k in range(DIHEDRAL)}
        assert len(images) == DIHEDRAL

    def test_group_closed(self):
        a = np.arange(9.0).reshape(3, 3)
        images = {dihedral(a, k).tobytes() for k in range(DIHEDRAL)}
        for k in range(DIHEDRAL):
            for j in range(DIHEDRAL):
                assert dihedral(dihedral(a, k), j).tobytes() in images

    def test_bad_index(self):
        with pytest.raises(DataError):
            dihedral(np.zeros((2, 2)), 8)

    @pytest.mark.parametrize("k", range(DIHEDRAL))
    def test_oracle_equivariant(self, k):
        """Transforming a map's geometry and recomputing the oracle equals transforming its target."""
        for seed in range(5):
            s = synth_generate(seed, 32)
            obst = dihedral(s.h_s | s.h_d, k)
            tx = tuple(np.argwhere(dihedral(s.r, k) == 1)[0])
            np.testing.assert_array_equal(pathloss_oracle(obst, tx), dihedral(s.p, k))

    def test_pairs_move_together_and_reproducibly(self):
        x, y = stack([synth_generate(i, 32) for i in range(6)], "SRM")
        xa, ya = augment(x, y, np.random.default_rng(3))
        xb, yb = augment(x, y, np.random.default_rng(3))
        np.testing.assert_array_equal(xa, xb)
        for i in range(6):
            k = next(k for k in range(DIHEDRAL) if np.array_equal(dihedral(x[i], k), xa[i]))
            np.testing.assert_array_equal(dihedral(y[i], k), ya[i])
