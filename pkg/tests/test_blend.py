"""Tests for composited-observation bounds.

The oracle is the exact renderer: for dense joint-parameter sweeps, every
rendered pixel must lie between the lower and upper planes evaluated at the
same parameters.
"""

import numpy as np
import pytest

from geocert.blend import ObservationBounds, blend_bounds, export_bound_images, _product_bounds
from geocert.bounds import Box, LinearBounds, LinearMap
from geocert.fileio import read_png
from geocert.geobounds import GeoBoundSettings, pixel_bounds
from geocert.scene import SceneConfig, SceneEntity, Sprite, TransformSpec, render


def bar_sprite(n, r0, r1, c0, c1, color, alpha=1.0):
    canvas = np.zeros((n, n, 3))
    mask = np.zeros((n, n))
    canvas[r0:r1, c0:c1] = color
    mask[r0:r1, c0:c1] = alpha
    return Sprite(canvas, mask, (n / 2.0, n / 2.0))


def gray_bg(n, level=0.08):
    return np.full((n, n, 3), level)


def two_entity_scene(n=16):
    arm1 = bar_sprite(n, n // 2, n - 2, n // 2 - 1, n // 2 + 2, [0.9, 0.3, 0.1])
    arm2 = bar_sprite(n, n // 2, n - 4, n // 2 - 1, n // 2 + 1, [0.1, 0.5, 0.9], alpha=0.8)
    cen = (n / 2.0, n / 2.0)
    e1 = SceneEntity(arm1, TransformSpec("rotation", center=cen))
    e2 = SceneEntity(arm2, TransformSpec("rotation_then_translation", center=cen))
    scene = SceneConfig(gray_bg(n), (e1, e2), (n, n))
    K1 = Box([0.3], [0.7])
    K2 = Box([-1.5, -1.0, -0.3], [0.0, 0.5, 0.2])
    return scene, [K1, K2]


def sweep_check(scene, boxes, ob, kappas):
    viol = 0
    lows = ob.bounds.lower(kappas)
    ups = ob.bounds.upper(kappas)
    dims = np.cumsum([0] + [b.dim for b in boxes])
    for i, kap in enumerate(kappas):
        mus = [kap[dims[j] : dims[j + 1]] for j in range(len(boxes))]
        img = render(scene, mus).ravel()
        viol += int(np.sum(lows[i] > img)) + int(np.sum(img > ups[i]))
    return viol


class TestProductBounds:
    def test_random_factor_soundness(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            d = int(rng.integers(1, 4))
            lo = rng.uniform(-1.0, 0.5, d)
            dom = Box(lo, lo + rng.uniform(0.2, 1.5, d))
            n = int(rng.integers(1, 5))

            def sound_factor():
                w = rng.normal(size=(n, d))
                b = rng.normal(size=n)
                slack_lo = rng.uniform(0.0, 0.3, n)
                slack_hi = rng.uniform(0.0, 0.3, n)
                exact = LinearMap(w, b)
                return exact, LinearBounds(
                    LinearMap(w, b - slack_lo), LinearMap(w, b + slack_hi), dom
                )

            fx, xb = sound_factor()
            fy, yb = sound_factor()
            pb = _product_bounds(xb, yb)
            pts = dom.sample(rng, 100)
            true = fx(pts) * fy(pts)
            assert np.all(pb.lower(pts) <= true + 1e-9)
            assert np.all(true <= pb.upper(pts) + 1e-9)

    def test_degenerate_factors_exact(self):
        dom = Box([0.2, -0.5], [0.9, 0.4])
        x = LinearBounds.constant([0.3, -0.7], [0.3, -0.7], dom)
        y = LinearBounds.constant([0.5, 0.2], [0.5, 0.2], dom)
        pb = _product_bounds(x, y)
        exact = [0.3 * 0.5, -0.7 * 0.2]
        np.testing.assert_array_equal(pb.lower.bias, exact)
        np.testing.assert_array_equal(pb.upper.bias, exact)
        assert not pb.lower.weights.any() and not pb.upper.weights.any()


class TestBlendBounds:
    def test_zero_entities_gives_background_constants(self):
        n = 6
        scene = SceneConfig(gray_bg(n, 0.3), (), (n, n))
        ob = blend_bounds(scene, [])
        assert ob.domain.dim == 0
        np.testing.assert_array_equal(ob.bounds.lower.bias, np.full(n * n * 3, 0.3))
        np.testing.assert_array_equal(ob.bounds.upper.bias, np.full(n * n * 3, 0.3))

    def test_degenerate_box_matches_render_exactly(self):
        scene, _ = two_entity_scene(12)
        mu1, mu2 = np.array([0.55]), np.array([-0.75, 0.25, -0.1])
        pb1 = pixel_bounds(scene.entities[0].sprite, scene.entities[0].transform, Box(mu1, mu1))
        pb2 = pixel_bounds(scene.entities[1].sprite, scene.entities[1].transform, Box(mu2, mu2))
        ob = blend_bounds(scene, [pb1, pb2])
        img = render(scene, [mu1, mu2]).ravel()
        kap = np.concatenate([mu1, mu2])
        np.testing.assert_array_equal(ob.bounds.lower(kap), img)
        np.testing.assert_array_equal(ob.bounds.upper(kap), img)
        gap = ob.bounds.upper(kap) - ob.bounds.lower(kap)
        assert np.all(gap <= 1e-6)

    def test_opaque_degenerate_entity_replaces_background(self):
        n = 10
        sp = bar_sprite(n, 2, 8, 3, 7, [0.6, 0.2, 0.8])
        e = SceneEntity(sp, TransformSpec("translation"))
        scene = SceneConfig(gray_bg(n), (e,), (n, n))
        mu = np.array([1.0, -1.0])
        pbs = pixel_bounds(sp, e.transform, Box(mu, mu))
        ob = blend_bounds(scene, [pbs])
        img = render(scene, [mu]).ravel()
        np.testing.assert_array_equal(ob.bounds.lower(mu), img)
        np.testing.assert_array_equal(ob.bounds.upper(mu), img)

    def test_two_entity_joint_sweep_zero_violations(self):
        scene, boxes = two_entity_scene(16)
        ents = scene.entities
        pb1 = pixel_bounds(ents[0].sprite, ents[0].transform, boxes[0])
        pb2 = pixel_bounds(
            ents[1].sprite, ents[1].transform, boxes[1], GeoBoundSettings(cells_per_dim=4)
        )
        ob = blend_bounds(scene, [pb1, pb2])
        kappa = boxes[0].concat(boxes[1])
        assert ob.domain == kappa
        rng = np.random.default_rng(23)
        kappas = np.vstack([kappa.sample(rng, 500), kappa.grid(2)])
        assert sweep_check(scene, boxes, ob, kappas) == 0

    def test_prelifted_bounds_accepted(self):
        scene, boxes = two_entity_scene(12)
        ents = scene.entities
        settings = GeoBoundSettings(cells_per_dim=3)
        pb1 = pixel_bounds(ents[0].sprite, ents[0].transform, boxes[0], settings)
        pb2 = pixel_bounds(ents[1].sprite, ents[1].transform, boxes[1], settings)
        direct = blend_bounds(scene, [pb1, pb2])
        kappa = boxes[0].concat(boxes[1])

        def lifted(pbs, off):
            return type(pbs)(
                pbs.value_bounds.lift_into(kappa, off),
                pbs.alpha_bounds.lift_into(kappa, off),
                pbs.image_shape,
            )

        pre = blend_bounds(scene, [lifted(pb1, 0), lifted(pb2, 1)])
        np.testing.assert_array_equal(direct.bounds.lower.weights, pre.bounds.lower.weights)
        np.testing.assert_array_equal(direct.bounds.upper.bias, pre.bounds.upper.bias)

    def test_entity_count_mismatch_rejected(self):
        scene, boxes = two_entity_scene(12)
        e = scene.entities[0]
        pb1 = pixel_bounds(e.sprite, e.transform, boxes[0], GeoBoundSettings(cells_per_dim=2))
        with pytest.raises(ValueError, match="entities"):
            blend_bounds(scene, [pb1])

    def test_mismatched_domain_dims_rejected(self):
        scene, boxes = two_entity_scene(12)
        ents = scene.entities
        settings = GeoBoundSettings(cells_per_dim=2)
        pb1 = pixel_bounds(ents[0].sprite, ents[0].transform, boxes[0], settings)
        with pytest.raises(ValueError, match="domains"):
            blend_bounds(scene, [pb1, pb1])


class TestOrdering:
    def disjoint_scene(self, n=12):
        left = bar_sprite(n, 2, 5, 1, 4, [0.9, 0.1, 0.1])
        right = bar_sprite(n, 7, 10, 8, 11, [0.1, 0.9, 0.1])
        t = TransformSpec("translation")
        K = Box([-0.5, -0.5], [0.5, 0.5])
        return left, right, t, K, n

    def test_disjoint_entities_commute(self):
        left, right, t, K, n = self.disjoint_scene()
        settings = GeoBoundSettings(cells_per_dim=3)
        pbl = pixel_bounds(left, t, K, settings)
        pbr = pixel_bounds(right, t, K, settings)
        bg = gray_bg(n)
        s_lr = SceneConfig(bg, (SceneEntity(left, t), SceneEntity(right, t)), (n, n))
        s_rl = SceneConfig(bg, (SceneEntity(right, t), SceneEntity(left, t)), (n, n))
        ob_lr = blend_bounds(s_lr, [pbl, pbr])
        ob_rl = blend_bounds(s_rl, [pbr, pbl])
        rng = np.random.default_rng(3)
        mus = K.sample(rng, 50)
        for mu in mus:
            k_lr = np.concatenate([mu, mu])
            np.testing.assert_allclose(
                ob_lr.bounds.lower(k_lr), ob_rl.bounds.lower(k_lr), atol=1e-12
            )
            np.testing.assert_allclose(
                ob_lr.bounds.upper(k_lr), ob_rl.bounds.upper(k_lr), atol=1e-12
            )

    def test_overlapping_entities_do_not_commute(self):
        n = 12
        a = bar_sprite(n, 3, 9, 3, 9, [0.9, 0.1, 0.1], alpha=0.6)
        b = bar_sprite(n, 4, 10, 4, 10, [0.1, 0.9, 0.1], alpha=0.6)
        t = TransformSpec("translation")
        K = Box([-0.5, -0.5], [0.5, 0.5])
        settings = GeoBoundSettings(cells_per_dim=3)
        pba, pbb = pixel_bounds(a, t, K, settings), pixel_bounds(b, t, K, settings)
        bg = gray_bg(n)
        s_ab = SceneConfig(bg, (SceneEntity(a, t), SceneEntity(b, t)), (n, n))
        s_ba = SceneConfig(bg, (SceneEntity(b, t), SceneEntity(a, t)), (n, n))
        ob_ab = blend_bounds(s_ab, [pba, pbb])
        ob_ba = blend_bounds(s_ba, [pbb, pba])
        kap = np.zeros(4)
        assert not np.allclose(ob_ab.bounds.lower(kap), ob_ba.bounds.lower(kap), atol=1e-9)


class TestExport:
    def test_bound_images_written(self, tmp_path):
        scene, boxes = two_entity_scene(12)
        ents = scene.entities
        settings = GeoBoundSettings(cells_per_dim=3)
        pb1 = pixel_bounds(ents[0].sprite, ents[0].transform, boxes[0], settings)
        pb2 = pixel_bounds(ents[1].sprite, ents[1].transform, boxes[1], settings)
        ob = blend_bounds(scene, [pb1, pb2])
        p_lo, p_hi = export_bound_images(ob, tmp_path, stem="dbg")
        lo = read_png(p_lo)
        hi = read_png(p_hi)
        assert lo.shape == hi.shape == (12, 12, 3)
        assert np.all(hi >= lo - 2.0 / 255.0)

    def test_shape_mismatch_rejected(self):
        dom = Box([0.0], [1.0])
        with pytest.raises(ValueError, match="image shape"):
            ObservationBounds(LinearBounds.constant(np.zeros(5), np.ones(5), dom), (2, 2, 3))
