import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hortisplat.classes import SemanticClass
from hortisplat.geometry import CameraModel, ConfigError, invert_pose, look_at
from hortisplat.perception import NoiseConfig, SemanticObservation, corrupt_labels
from hortisplat.plyio import read_ply
from hortisplat.scene import SceneConfig, generate_scene, render_ground_truth
from hortisplat.splat.checkpoint import export_ply, load_checkpoint, save_checkpoint
from hortisplat.splat.densify import DensifyConfig, densify, densify_candidates, prune
from hortisplat.splat.gaussians import Gaussian3D, GaussianMap, eval_gaussian, project_gaussian
from hortisplat.splat.loss import LossWeights, mapping_loss
from hortisplat.splat.optim import OptimConfig, optimize
from hortisplat.splat.render import render
from hortisplat.splat.ssim import ssim_map

from oracles import TINY_CAM, central_difference, random_fixture

CAM = CameraModel(8, 8, 8.0, 8.0, 3.0, 3.0, 0.05, 5.0)  # principal point on pixel (3, 3)


def two_splats(front_color, back_color):
    # both centered on pixel (3, 3): alpha = opacity exactly
    g = GaussianMap()
    g.append(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]), np.array([0.05, 0.1]),
             np.array([front_color, back_color], dtype=float), np.array([0.5, 0.5]),
             np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    return g


def test_two_splat_hand_case():
    f = render(two_splats([1, 1, 1], [0, 0, 0]), CAM, np.eye(4))
    assert f.color[3, 3, 0] == pytest.approx(0.5, abs=1e-12)
    assert f.silhouette[3, 3] == pytest.approx(0.75, abs=1e-12)
    assert f.depth[3, 3] == pytest.approx(0.5 * 1.0 + 0.25 * 2.0, abs=1e-12)
    # one-hot inputs are stored as logits of a 1e-9-floored distribution
    assert f.semantic[3, 3].tolist() == pytest.approx([0.5, 0.25, 0.0], abs=1e-8)
    f = render(two_splats([0, 0, 0], [1, 1, 1]), CAM, np.eye(4))
    assert f.color[3, 3, 0] == pytest.approx(0.25, abs=1e-12)


def test_gaussian_evaluation_and_projection():
    g = Gaussian3D((0.0, 0.0, 1.0), 0.1, (1, 0, 0), 0.8, (1, 0, 0))
    assert eval_gaussian(g, (0, 0, 1)) == pytest.approx(0.8)
    assert eval_gaussian(g, (0.1, 0, 1)) == pytest.approx(0.8 * math.exp(-0.5))
    s = project_gaussian(g, CAM, np.eye(4))
    assert tuple(s.center) == pytest.approx((3.0, 3.0)) and s.sigma == pytest.approx(0.8)
    behind = Gaussian3D((0.0, 0.0, -1.0), 0.1, (1, 0, 0), 0.8, (1, 0, 0))
    assert project_gaussian(behind, CAM, np.eye(4)) is None


def test_invalid_gaussian():
    with pytest.raises(ValueError):
        Gaussian3D((0, 0, 1), -0.1, (1, 0, 0), 0.5, (1, 0, 0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_render_permutation_invariance_and_weight_bound(seed):
    rng = np.random.default_rng(seed)
    g, _ = random_fixture(rng)
    base = render(g, TINY_CAM, np.eye(4), cutoff_sigma=None)
    perm = rng.permutation(len(g))
    shuffled = GaussianMap(g.means[perm], g.log_radius[perm], g.colors[perm], g.opacity_logit[perm],
                           g.sem_logits[perm], g.ids[perm], g.next_id)
    other = render(shuffled, TINY_CAM, np.eye(4), cutoff_sigma=None)
    for a, b in ((base.color, other.color), (base.depth, other.depth), (base.semantic, other.semantic),
                 (base.silhouette, other.silhouette)):
        assert np.max(np.abs(a - b)) <= 1e-12
    assert np.all(base.silhouette <= 1.0 + 1e-12)
    assert np.allclose(base.semantic.sum(axis=2), base.silhouette, atol=1e-12)


def test_depth_ties_break_by_id():
    g = GaussianMap()
    g.append(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]), np.array([0.1, 0.1]),
             np.array([[1.0, 0, 0], [0, 0, 1.0]]), np.array([0.5, 0.5]), np.full((2, 3), 1 / 3))
    f = render(g, CAM, np.eye(4))
    # id 0 (red) composites first
    assert f.color[3, 3, 0] > f.color[3, 3, 2]


def test_empty_map_renders_blank():
    f = render(GaussianMap(), CAM, np.eye(4))
    assert not f.silhouette.any() and not f.color.any()


@pytest.mark.parametrize("seed", range(6))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(1000 + seed)
    g, obs = random_fixture(rng)

    def loss():
        return mapping_loss(render(g, TINY_CAM, np.eye(4), cutoff_sigma=None), obs).value

    res = mapping_loss(render(g, TINY_CAM, np.eye(4), cutoff_sigma=None), obs)
    for name in ("means", "log_radius", "colors", "opacity_logit", "sem_logits"):
        arr = getattr(g, name)
        for idx in np.ndindex(arr.shape):
            fd = central_difference(loss, arr, idx)
            an = res.grads[name][idx]
            assert abs(fd - an) <= max(1e-6, 1e-3 * max(abs(fd), abs(an)))


def test_ssim_identity_and_gradient():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (12, 12, 3))
    S, _ = ssim_map(x, x)
    assert np.allclose(S, 1.0)
    y = rng.uniform(0, 1, (12, 12, 3))
    g = rng.normal(size=S.shape)
    S, bwd = ssim_map(x, y, with_grad=True)
    an = bwd(g)
    for idx in [(0, 0, 0), (5, 6, 1), (11, 3, 2)]:
        def f():
            return float(np.sum(g * ssim_map(x, y)[0]))
        assert central_difference(f, x, idx, 1e-6) == pytest.approx(an[idx], rel=1e-5, abs=1e-8)


def test_loss_terms_and_weights():
    rng = np.random.default_rng(1)
    g, obs = random_fixture(rng)
    fr = render(g, TINY_CAM, np.eye(4), cutoff_sigma=None)
    res = mapping_loss(fr, obs, LossWeights(1.0, 0.0, 0.0))
    assert res.value == pytest.approx(np.abs(fr.depth - obs.depth).sum())
    res = mapping_loss(fr, obs, LossWeights(0.0, 0.0, 1.0))
    expect = np.sum(obs.confidence[..., None] ** 2 * np.abs(fr.semantic - np.eye(3)[obs.labels]))
    assert res.value == pytest.approx(expect)
    res = mapping_loss(fr, obs, LossWeights(0.0, 0.0, 1.0), use_confidence=False)
    assert res.value == pytest.approx(np.sum(np.abs(fr.semantic - np.eye(3)[obs.labels])))


def test_loss_shape_mismatch():
    rng = np.random.default_rng(1)
    g, obs = random_fixture(rng)
    fr = render(g, CameraModel(4, 4, 4.0, 4.0, 1.5, 1.5, 0.05, 5.0), np.eye(4))
    with pytest.raises(ValueError):
        mapping_loss(fr, obs)


def test_loss_weight_validation():
    with pytest.raises(ConfigError):
        LossWeights(alpha=1.5)
    with pytest.raises(ConfigError):
        DensifyConfig(nontarget_keep_fraction=2.0)


@pytest.fixture(scope="module")
def plant_obs():
    scene = generate_scene(SceneConfig(rng_seed=2))
    c2w = look_at([1.25, -0.45, 0.38], [1.25, 0.0, 0.38])
    return corrupt_labels(render_ground_truth(scene, invert_pose(c2w), CameraModel()), NoiseConfig())


def test_densify_keeps_all_targets(plant_obs):
    obs = plant_obs
    g, n = densify(GaussianMap(), obs, DensifyConfig(nontarget_keep_fraction=0.0), np.random.default_rng(0))
    near = (obs.depth <= 1.0) & (obs.depth < obs.camera.far)
    assert n == np.sum(near & (obs.labels == SemanticClass.FRUIT))
    assert np.all(g.labels == SemanticClass.FRUIT)
    # centers back-project onto the observed surface
    pc = g.means @ obs.w2c[:3, :3].T + obs.w2c[:3, 3]
    assert np.allclose(np.sort(pc[:, 2]), np.sort(obs.depth[near & (obs.labels == 0)]))


def test_densify_downsampling_fraction(plant_obs):
    obs = plant_obs
    near = (obs.depth <= 1.0) & (obs.depth < obs.camera.far)
    n_other = np.sum(near & (obs.labels != SemanticClass.FRUIT))
    n_fruit = np.sum(near & (obs.labels == SemanticClass.FRUIT))
    _, n_all = densify(GaussianMap(), obs, DensifyConfig(nontarget_keep_fraction=1.0))
    _, n_ds = densify(GaussianMap(), obs, DensifyConfig(nontarget_keep_fraction=0.1), np.random.default_rng(1))
    assert n_all == n_fruit + n_other
    assert abs((n_ds - n_fruit) / n_other - 0.1) < 0.02


def test_densify_skips_explained_pixels(plant_obs):
    obs = plant_obs
    g, _ = densify(GaussianMap(), obs, DensifyConfig(nontarget_keep_fraction=1.0))
    g.opacity_logit[:] = 20.0
    g.log_radius[:] += math.log(2.0)
    fr = render(g, obs.camera, obs.w2c)
    cand = densify_candidates(fr, obs, DensifyConfig())
    assert cand.mean() < 0.2


def test_optimize_reduces_loss(plant_obs):
    g, _ = densify(GaussianMap(), plant_obs, DensifyConfig(), np.random.default_rng(0))
    out, hist = optimize(g, plant_obs, cfg=OptimConfig(iters=10, max_depth=1.0))
    assert hist[-1] < hist[0]
    assert len(out) == len(g) and out is not g
    assert np.all((out.colors >= 0) & (out.colors <= 1))


def test_prune():
    g = GaussianMap()
    g.append(np.zeros((3, 3)), np.array([0.01, 0.5, 0.01]), np.zeros((3, 3)), np.array([0.5, 0.5, 0.001]),
             np.full((3, 3), 1 / 3))
    p = prune(g, min_opacity=0.005, max_radius=0.1)
    assert p.ids.tolist() == [0]


def test_checkpoint_roundtrip(plant_obs, tmp_path):
    g, _ = densify(GaussianMap(), plant_obs, DensifyConfig(), np.random.default_rng(0))
    size = save_checkpoint(g, tmp_path / "g.bin")
    assert size == (tmp_path / "g.bin").stat().st_size
    back = load_checkpoint(tmp_path / "g.bin")
    assert len(back) == len(g)
    assert np.allclose(back.means, g.means, atol=1e-6)
    assert np.allclose(back.opacity, g.opacity, atol=1e-6)
    assert np.array_equal(back.labels, g.labels)
    export_ply(g, tmp_path / "g.ply")
    pts, attrs = read_ply(tmp_path / "g.ply")
    assert np.array_equal(pts, g.means)
    assert np.array_equal(attrs["class_id"], g.labels)


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"nope" + bytes(32))
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.bin")


def test_snapshot_is_immutable():
    g = two_splats([1, 1, 1], [0, 0, 0])
    snap = g.snapshot()
    with pytest.raises(ValueError):
        snap.means[0, 0] = 1.0
