"""Tests for transforms, sampling, compositing, and file containers."""

import math

import numpy as np
import pytest

from geocert.fileio import digest, read_f32, read_json, read_png, write_f32, write_json, write_png
from geocert.scene import (
    SceneConfig,
    SceneEntity,
    Sprite,
    TransformSpec,
    render,
    sample_pixel,
    spatial_inverse,
    warp_entity,
)


def checker_sprite(h=16, w=16, seed=0):
    rng = np.random.default_rng(seed)
    canvas = rng.uniform(0.0, 1.0, (h, w, 3))
    alpha = np.zeros((h, w))
    alpha[4:12, 4:12] = 1.0
    return Sprite(canvas, alpha, anchor=(h / 2.0, w / 2.0))


class TestSpatialInverse:
    def test_rotation_zero_is_identity(self):
        t = TransformSpec("rotation", center=(8.0, 8.0))
        for p in [(0.0, 0.0), (3.5, 12.25), (8.0, 8.0)]:
            xi = spatial_inverse(t, [0.0], p)
            assert xi == pytest.approx(p, abs=1e-12)

    def test_quarter_turn_about_center(self):
        c = (5.0, 7.0)
        t = TransformSpec("rotation", center=c)
        xi = spatial_inverse(t, [math.pi / 2], (c[0] + 0.0, c[1] + 1.0))
        assert xi[0] == pytest.approx(c[0] + 1.0, abs=1e-12)
        assert xi[1] == pytest.approx(c[1] + 0.0, abs=1e-12)

    def test_translation_offsets(self):
        t = TransformSpec("translation")
        assert spatial_inverse(t, [2.0, 3.0], (10.0, 10.0)) == pytest.approx((8.0, 7.0))

    def test_rotation_then_translation_composes(self):
        c = (4.0, 4.0)
        t = TransformSpec("rotation_then_translation", center=c)
        # zero rotation: pure translation about the shifted frame
        xi = spatial_inverse(t, [1.0, -2.0, 0.0], (6.0, 6.0))
        assert xi == pytest.approx((5.0, 8.0))
        # rotation with zero shift matches the plain rotation transform
        rot = TransformSpec("rotation", center=c)
        a = spatial_inverse(t, [0.0, 0.0, 0.7], (9.0, 2.0))
        b = spatial_inverse(rot, [0.7], (9.0, 2.0))
        assert a == pytest.approx(b, abs=1e-12)

    def test_param_count_enforced(self):
        t = TransformSpec("rotation", center=(0.0, 0.0))
        with pytest.raises(ValueError):
            spatial_inverse(t, [0.0, 1.0], (0.0, 0.0))

    def test_rotation_requires_center(self):
        with pytest.raises(ValueError):
            TransformSpec("rotation")


class TestSamplePixel:
    def test_identity_integer_coords_exact(self):
        s = checker_sprite()
        t = TransformSpec("rotation", center=(8.0, 8.0))
        for (l, k) in [(0, 0), (5, 9), (15, 15)]:
            for ch in range(3):
                v = sample_pixel(s, t, [0.0], (l, k, ch))
                assert v == pytest.approx(s.canvas[l, k, ch], abs=1e-12)
            va = sample_pixel(s, t, [0.0], (l, k, "alpha"))
            assert va == pytest.approx(s.alpha[l, k], abs=1e-12)

    def test_midway_average(self):
        canvas = np.zeros((4, 4, 1))
        canvas[2, 1, 0] = 0.0
        canvas[2, 2, 0] = 1.0
        s = Sprite(canvas, np.zeros((4, 4)), anchor=(2.0, 2.0))
        t = TransformSpec("translation")
        # shift so the sample lands exactly between the two pixels
        v = sample_pixel(s, t, [0.0, -1.5], (2, 0, 0))
        assert v == pytest.approx(0.5, abs=1e-12)

    def test_outside_canvas_is_zero(self):
        s = checker_sprite()
        t = TransformSpec("translation")
        assert sample_pixel(s, t, [100.0, 0.0], (3, 3, 0)) == 0.0
        assert sample_pixel(s, t, [0.0, -40.0], (3, 3, "alpha")) == 0.0

    def test_intensity_applies_to_colors_only(self):
        s = checker_sprite(seed=3)
        t = TransformSpec("rotation", center=(8.0, 8.0), intensity=(2.0, 0.1))
        raw = s.canvas[6, 6, 1]
        v = sample_pixel(s, t, [0.0], (6, 6, 1))
        assert v == pytest.approx(min(1.0, 2.0 * raw + 0.1), abs=1e-12)
        va = sample_pixel(s, t, [0.0], (6, 6, "alpha"))
        assert va == pytest.approx(s.alpha[6, 6], abs=1e-12)

    def test_continuity_in_mu(self):
        s = checker_sprite(seed=5)
        t = TransformSpec("rotation", center=(8.0, 8.0))
        rng = np.random.default_rng(6)
        lip = 2.0 * (16 + 16)  # coord motion <= image diagonal per radian
        for _ in range(200):
            mu = rng.uniform(-math.pi, math.pi)
            d = rng.uniform(1e-6, 1e-4)
            l, k = rng.integers(0, 16, 2)
            v0 = sample_pixel(s, t, [mu], (l, k, 0))
            v1 = sample_pixel(s, t, [mu + d], (l, k, 0))
            assert abs(v1 - v0) <= lip * d + 1e-12


class TestRender:
    def scene_with(self, entities, h=16, w=16, seed=1):
        rng = np.random.default_rng(seed)
        bg = rng.uniform(0.0, 1.0, (h, w, 3))
        return SceneConfig(bg, tuple(entities), (h, w))

    def test_zero_entities_returns_background(self):
        sc = self.scene_with([])
        np.testing.assert_array_equal(render(sc, []), sc.background)

    def test_opaque_entity_replaces_support(self):
        s = checker_sprite(seed=2)
        e = SceneEntity(s, TransformSpec("translation"))
        sc = self.scene_with([e])
        img = render(sc, [[0.0, 0.0]])
        mask = s.alpha == 1.0
        np.testing.assert_allclose(img[mask], s.canvas[mask], atol=1e-12)
        np.testing.assert_allclose(img[~mask], sc.background[~mask], atol=1e-12)

    def test_two_entity_hand_expansion(self):
        rng = np.random.default_rng(7)
        h = w = 12
        sprites = []
        for seed in (10, 11):
            canvas = np.random.default_rng(seed).uniform(0, 1, (h, w, 3))
            alpha = np.random.default_rng(seed + 50).uniform(0, 1, (h, w))
            sprites.append(Sprite(canvas, alpha, anchor=(6.0, 6.0)))
        entities = [SceneEntity(s, TransformSpec("translation")) for s in sprites]
        bg = rng.uniform(0, 1, (h, w, 3))
        sc = SceneConfig(bg, tuple(entities), (h, w))
        mus = [[0.0, 0.0], [0.0, 0.0]]
        img = render(sc, mus)
        a1 = sprites[0].alpha[:, :, None]
        a2 = sprites[1].alpha[:, :, None]
        y1 = sprites[0].canvas
        y2 = sprites[1].canvas
        expect = bg * (1 - a1) * (1 - a2) + a1 * y1 * (1 - a2) + a2 * y2
        np.testing.assert_allclose(img, expect, atol=1e-12)

    def test_top_entity_wins_on_overlap(self):
        h = w = 10
        mk = lambda v: Sprite(np.full((h, w, 3), v), np.ones((h, w)), anchor=(5.0, 5.0))
        entities = [
            SceneEntity(mk(0.25), TransformSpec("translation")),
            SceneEntity(mk(0.75), TransformSpec("translation")),
        ]
        sc = SceneConfig(np.zeros((h, w, 3)), tuple(entities), (h, w))
        img = render(sc, [[0.0, 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(img, 0.75, atol=1e-12)

    def test_output_stays_in_unit_range(self):
        rng = np.random.default_rng(9)
        for trial in range(10):
            h = w = 12
            ents = []
            for j in range(2):
                canvas = rng.uniform(0, 1, (h, w, 3))
                alpha = rng.uniform(0, 1, (h, w))
                ents.append(
                    SceneEntity(
                        Sprite(canvas, alpha, anchor=(6.0, 6.0)),
                        TransformSpec("rotation", center=(6.0, 6.0)),
                    )
                )
            sc = SceneConfig(rng.uniform(0, 1, (h, w, 3)), tuple(ents), (h, w))
            img = render(sc, [rng.uniform(-3, 3, 1), rng.uniform(-3, 3, 1)])
            assert img.min() >= -1e-12 and img.max() <= 1.0 + 1e-12

    def test_compositing_associativity(self):
        rng = np.random.default_rng(13)
        h = w = 12
        mk = lambda seed: Sprite(
            np.random.default_rng(seed).uniform(0, 1, (h, w, 3)),
            np.random.default_rng(seed + 1).uniform(0, 1, (h, w)),
            anchor=(6.0, 6.0),
        )
        e1 = SceneEntity(mk(20), TransformSpec("rotation", center=(6.0, 6.0)))
        e2 = SceneEntity(mk(30), TransformSpec("rotation", center=(6.0, 6.0)))
        bg = rng.uniform(0, 1, (h, w, 3))
        both = render(SceneConfig(bg, (e1, e2), (h, w)), [[0.4], [-0.9]])
        partial = render(SceneConfig(bg, (e1,), (h, w)), [[0.4]])
        colors2, alpha2 = warp_entity(e2, [-0.9])
        manual = partial * (1 - alpha2)[:, :, None] + alpha2[:, :, None] * colors2
        np.testing.assert_allclose(both, manual, atol=1e-12)

    def test_sprite_size_must_match_scene(self):
        s = checker_sprite(h=8, w=8)
        e = SceneEntity(s, TransformSpec("translation"))
        with pytest.raises(ValueError):
            SceneConfig(np.zeros((16, 16, 3)), (e,), (16, 16))


class TestFileIO:
    def test_f32_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        a = rng.uniform(-2, 2, (5, 7, 3)).astype("<f4").astype(float)
        p = tmp_path / "t.bin"
        write_f32(p, a)
        b = read_f32(p, (5, 7, 3))
        np.testing.assert_array_equal(a, b)

    def test_f32_size_mismatch(self, tmp_path):
        p = tmp_path / "t.bin"
        write_f32(p, np.zeros(4))
        with pytest.raises(ValueError):
            read_f32(p, (5,))

    def test_json_round_trip(self, tmp_path):
        data = {"a": [1, 2.5, "x"], "b": {"c": None}}
        p = tmp_path / "t.json"
        write_json(p, data)
        assert read_json(p) == data

    def test_png_round_trip_quantized(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 1, (9, 11, 3))
        p = tmp_path / "t.png"
        write_png(p, img)
        back = read_png(p)
        assert back.shape == (9, 11, 3)
        assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-9

    def test_digest_stability_and_sensitivity(self):
        a = np.arange(6, dtype=float)
        assert digest("x", a, {"k": 1}) == digest("x", a.copy(), {"k": 1})
        assert digest("x", a, {"k": 1}) != digest("x", a + 1e-12, {"k": 1})
        assert digest(a) != digest(a.reshape(2, 3))
