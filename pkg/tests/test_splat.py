import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occu_forge.geometry import AffineCamera, CameraModel, RigidTransform
from occu_forge.grid import SemanticOccupancyGrid
from occu_forge.splat import (GaussianPrimitive, GaussianSet, GaussianSplatRenderer, RenderOptions, UtParams,
                              occupancy_to_gaussians, project_ewa, project_ut, rasterize, render_views,
                              sigma_points, ut_weights)
from occu_forge.synth import wall_scene
from oracles import composite_all


def _axis_camera(w=64, h=64, f=100.0, **dist):
    return CameraModel(f, f, w / 2, h / 2, w, h, **dist)


def _random_scene(rng, n, w=64, h=64):
    """Gaussians in front of an identity-pose camera, sized to cover a few pixels."""
    z = rng.uniform(2, 12, n)
    uv = rng.uniform(-5, w + 5, (n, 2))
    f = 60.0
    means = np.column_stack([(uv[:, 0] - w / 2) * z / f, (uv[:, 1] - h / 2) * z / f, z])
    A = rng.normal(size=(n, 3, 3)) * (z[:, None, None] * rng.uniform(0.01, 0.05, (n, 1, 1)))
    covs = A @ np.swapaxes(A, 1, 2) + np.eye(3) * 1e-5
    return (GaussianSet(means, covs, rng.uniform(0.05, 1.0, n), rng.integers(1, 6, n)),
            CameraModel(f, f, w / 2, h / 2, w, h))


# -- Gaussians ----------------------------------------------------------------

def test_one_gaussian_per_occupied_voxel():
    classes = np.zeros((4, 4, 4), dtype=np.uint8)
    classes[0, 0, 0], classes[1, 2, 3], classes[3, 3, 0] = 2, 5, 9
    grid = SemanticOccupancyGrid(classes, 0.25, (1.0, -2.0, 0.0))
    gs = occupancy_to_gaussians(grid, 0.01)
    assert len(gs) == 3
    np.testing.assert_allclose(gs.covs, np.broadcast_to(1e-4 * np.eye(3), (3, 3, 3)), rtol=1e-12)
    np.testing.assert_allclose(gs.means, grid.voxel_to_world_center(grid.occupied_indices()))
    assert sorted(gs.labels.tolist()) == [2, 5, 9]
    assert np.all(gs.opacities == 0.99)


def test_gaussian_conversion_rejects_bad_parameters():
    grid = SemanticOccupancyGrid.empty((2, 2, 2))
    assert len(occupancy_to_gaussians(grid)) == 0
    with pytest.raises(ValueError):
        occupancy_to_gaussians(grid, 0.0)
    with pytest.raises(ValueError):
        occupancy_to_gaussians(grid, 0.01, 1.5)


def test_primitive_validation():
    with pytest.raises(ValueError):
        GaussianPrimitive(np.zeros(3), np.diag([1.0, 1.0, -1.0]), 0.5, 1)
    with pytest.raises(ValueError):
        GaussianPrimitive(np.zeros(3), [[1, 0.1, 0], [0, 1, 0], [0, 0, 1]], 0.5, 1)
    with pytest.raises(ValueError):
        GaussianPrimitive(np.zeros(3), np.eye(3), 0.0, 1)


# -- projection ---------------------------------------------------------------

def test_ewa_on_axis_covariance():
    # J = diag(fx/z, fy/z) on the axis, so cov2d = (fx * 0.01 / z)^2 I = 0.2^2 I
    g = GaussianPrimitive((0.0, 0.0, 5.0), 1e-4 * np.eye(3), 0.99, 1)
    p = project_ewa(g, _axis_camera())
    assert p.valid[0]
    np.testing.assert_allclose(p.mean2d[0], [32.0, 32.0])
    np.testing.assert_allclose(p.cov2d[0], 0.04 * np.eye(2), rtol=1e-12)
    assert p.depth[0] == 5.0


def test_behind_camera_is_culled():
    g = GaussianPrimitive((0.0, 0.0, -5.0), 1e-4 * np.eye(3), 0.99, 1)
    assert not project_ewa(g, _axis_camera()).valid[0]
    assert not project_ut(g, _axis_camera()).valid[0]


def test_ut_culls_when_a_sigma_point_crosses_the_near_plane():
    g = GaussianPrimitive((0.0, 0.0, 0.05), 0.01 * np.eye(3), 0.99, 1)   # sigma spread 0.17 m
    assert not project_ut(g, _axis_camera(), cull_offscreen=False).valid[0]


def test_default_ut_weights():
    ut = UtParams()
    assert ut.lam == 0.0
    w_mu, w_cov = ut_weights(ut)
    np.testing.assert_allclose(w_mu, [0.0] + [1 / 6] * 6, atol=1e-15)
    np.testing.assert_allclose(w_cov, [2.0] + [1 / 6] * 6, atol=1e-15)
    assert w_mu.sum() == pytest.approx(1.0)


@given(st.floats(0.2, 2.0), st.floats(0.0, 3.0), st.floats(-1.0, 3.0))
def test_ut_weights_follow_definition(alpha, beta, kappa):
    lam = alpha ** 2 * (3 + kappa) - 3
    if 3 + lam <= 1e-6:
        with pytest.raises(ValueError):
            UtParams(alpha, beta, kappa)
        return
    ut = UtParams(alpha, beta, kappa)
    w_mu, w_cov = ut_weights(ut)
    assert w_mu[0] == pytest.approx(lam / (3 + lam))
    assert w_cov[0] == pytest.approx(lam / (3 + lam) + 1 - alpha ** 2 + beta)
    np.testing.assert_allclose(w_mu[1:], 1 / (2 * (3 + lam)))
    assert w_mu.sum() == pytest.approx(1.0)


def test_sigma_points_need_positive_definite_covariance():
    with pytest.raises(ValueError):
        sigma_points(np.zeros((1, 3)), np.diag([1.0, 0.0, -1.0])[None], UtParams())


def test_sigma_points_reproduce_moments(rng):
    A = rng.normal(size=(3, 3))
    cov = A @ A.T + 0.1 * np.eye(3)
    mu = rng.normal(size=3)
    ut = UtParams()
    pts = sigma_points(mu[None], cov[None], ut)[0]
    w_mu, _ = ut_weights(ut)
    np.testing.assert_allclose(w_mu @ pts, mu, atol=1e-12)
    d = pts[1:] - mu
    np.testing.assert_allclose(d.T @ d / 6, cov, atol=1e-12)   # lambda = 0: equal side weights


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.3, 2.0), st.floats(0.0, 3.0), st.floats(0.0, 2.0))
def test_ut_is_exact_for_affine_maps(seed, alpha, beta, kappa):
    rng = np.random.default_rng(seed)
    n = 20
    B = rng.normal(size=(n, 3, 3))
    covs = B @ np.swapaxes(B, 1, 2) + 1e-3 * np.eye(3)
    means = rng.normal(scale=5, size=(n, 3))
    cam = AffineCamera(rng.normal(scale=50, size=(2, 3)), rng.normal(scale=100, size=2), width=10 ** 6, height=10 ** 6)
    ut = UtParams(alpha, beta, kappa)
    gs = GaussianSet(means, covs, 0.9, 1)
    p = project_ut(gs, cam, ut, cull_offscreen=False)
    A = np.asarray(cam.A)
    expect_cov = A @ covs @ A.T
    assert p.valid.all()
    np.testing.assert_allclose(p.mean2d, means @ A.T + cam.b, rtol=0, atol=1e-9 * (1 + np.abs(p.mean2d).max()))
    # the centre sigma point sits on the mean, so beta never affects an affine result
    np.testing.assert_allclose(p.cov2d, expect_cov, rtol=1e-9, atol=1e-9)


def test_ut_and_ewa_agree_without_distortion_for_tiny_gaussians():
    g = GaussianPrimitive((0.3, -0.2, 6.0), 1e-8 * np.eye(3), 0.99, 1)
    cam = _axis_camera()
    a, b = project_ut(g, cam), project_ewa(g, cam)
    np.testing.assert_allclose(a.mean2d, b.mean2d, atol=1e-6)
    np.testing.assert_allclose(a.cov2d, b.cov2d, rtol=1e-4)


@given(st.integers(0, 10_000))
def test_projected_covariance_is_symmetric_psd(seed):
    gs, _ = _random_scene(np.random.default_rng(seed), 30)
    cam = _axis_camera(k1=-0.3, k2=0.05)
    for p in (project_ewa(gs, cam, cull_offscreen=False), project_ut(gs, cam, cull_offscreen=False)):
        c = p.cov2d[p.valid]
        np.testing.assert_allclose(c, np.swapaxes(c, 1, 2), atol=1e-9)
        assert np.all(np.linalg.eigvalsh(c) >= -1e-9)


# -- rasterizer ---------------------------------------------------------------

def test_single_opaque_gaussian_on_axis():
    gs = GaussianSet([[0.0, 0.0, 5.0]], 1e-4 * np.eye(3)[None], 1.0, 7)
    maps = rasterize(gs, _axis_camera())
    assert maps.depth[32, 32] == pytest.approx(5.0)
    assert maps.semantic[32, 32] == 7
    assert maps.coverage[32, 32] == pytest.approx(1.0)


def test_two_gaussians_hand_composited():
    # front: alpha' = 0.7 at the shared pixel; back: alpha' = 1.0
    gs = GaussianSet([[0.0, 0.0, 4.0], [0.0, 0.0, 8.0]], 1e-4 * np.eye(3)[None].repeat(2, 0), [0.7, 1.0], [3, 2])
    maps = rasterize(gs, _axis_camera())
    # class weights 3: 0.7, 2: 0.3 * 1.0 -> class 3 wins; coverage 1.0
    assert maps.semantic[32, 32] == 3
    assert maps.coverage[32, 32] == pytest.approx(1.0)
    assert maps.depth[32, 32] == pytest.approx(0.7 * 4.0 + 0.3 * 8.0)


def test_class_tie_goes_to_smaller_id():
    # front alpha' 0.5 gives 0.5, back alpha' 1.0 gives 0.5 as well
    gs = GaussianSet([[0.0, 0.0, 4.0], [0.0, 0.0, 8.0]], 1e-4 * np.eye(3)[None].repeat(2, 0), [0.5, 1.0], [6, 4])
    assert rasterize(gs, _axis_camera()).semantic[32, 32] == 4


def test_unnormalized_depth_is_attenuated():
    gs = GaussianSet([[0.0, 0.0, 5.0]], 1e-4 * np.eye(3)[None], 0.5, 1)
    maps = rasterize(gs, _axis_camera(), normalize_depth=False)
    assert maps.depth[32, 32] == pytest.approx(2.5)


def _oracle_check(gs, cam, backend="ut"):
    proj = project_ut(gs, cam) if backend == "ut" else project_ewa(gs, cam)
    maps = rasterize(gs, cam, backend, projected=proj)
    v = proj.valid
    D, S, C, Wc = composite_all(proj.mean2d[v], proj.cov2d[v], gs.opacities[v], proj.depth[v], gs.labels[v],
                                cam.width, cam.height)
    covered = C > 0
    np.testing.assert_array_equal(maps.coverage > 0, covered)
    rel = np.abs(maps.depth[covered] - D[covered]) / D[covered]
    assert rel.max(initial=0) < 1e-5
    top = np.sort(Wc, axis=0)
    clear = covered & (top[-1] - top[-2] > 1e-6)
    np.testing.assert_array_equal(maps.semantic[clear], S[clear])


def test_rasterizer_matches_brute_force_oracle(rng):
    for _ in range(10):
        gs, cam = _random_scene(rng, int(rng.integers(1, 300)))
        _oracle_check(gs, cam, "ut")
    gs, cam = _random_scene(rng, 200)
    _oracle_check(gs, cam, "ewa")


@pytest.mark.parametrize("tile", [1, 7, 16, 64])
def test_tile_size_is_only_an_optimization(rng, tile):
    gs, cam = _random_scene(rng, 150)
    a = rasterize(gs, cam, tile=tile)
    b = rasterize(gs, cam, tile=16)
    np.testing.assert_allclose(a.depth, b.depth, rtol=1e-9)
    np.testing.assert_array_equal(a.semantic, b.semantic)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.data())
def test_input_order_does_not_matter(seed, data):
    gs, cam = _random_scene(np.random.default_rng(seed), 60)
    # duplicate depths force the tie-breaking path
    gs.means[1::2, 2] = gs.means[0:-1:2, 2][: len(gs.means[1::2])]
    perm = np.asarray(data.draw(st.permutations(range(len(gs)))))
    a = rasterize(gs, cam)
    b = rasterize(gs.subset(perm), cam)
    np.testing.assert_array_equal(a.depth, b.depth)
    np.testing.assert_array_equal(a.semantic, b.semantic)
    np.testing.assert_array_equal(a.coverage, b.coverage)


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_output_invariants(seed):
    gs, cam = _random_scene(np.random.default_rng(seed), 120)
    maps = rasterize(gs, cam)
    assert np.all(maps.coverage >= 0) and np.all(maps.coverage <= 1 + 1e-12)
    np.testing.assert_array_equal(maps.semantic == 0, maps.coverage == 0)
    assert np.all(maps.depth[maps.coverage > 0] > 0)


def test_coverage_grows_with_scale():
    scene = wall_scene()
    grid = scene.ground_truth()
    cam = scene.cameras[0]
    previous = None
    for scale in (0.005, 0.01, 0.03, 0.1):
        cov = render_views(grid, [cam], RenderOptions(scale=scale))[0].coverage
        if previous is not None:
            assert np.all(cov >= previous - 1e-6)
        previous = cov


def test_ill_conditioned_splats_are_skipped_and_counted():
    gs = GaussianSet([[0.0, 0.0, 5.0], [0.0, 0.0, 6.0]], np.stack([1e-4 * np.eye(3), np.diag([1e-2, 1e-2, 1e-2])]),
                     0.9, [1, 2])
    p = project_ewa(gs, _axis_camera())
    p.cov2d[0] = np.diag([1.0, 1e-14])
    maps = rasterize(gs, _axis_camera(), "ewa", projected=p)
    assert maps.diagnostics["ill_conditioned"] == 1
    assert maps.semantic[32, 32] == 2


def test_rasterize_rejects_bad_options():
    gs = GaussianSet.empty()
    with pytest.raises(ValueError):
        rasterize(gs, _axis_camera(), tile=0)
    with pytest.raises(ValueError):
        rasterize(gs, _axis_camera(), alpha_min=1.0)
    with pytest.raises(ValueError):
        rasterize(GaussianSet([[0, 0, 5.0]], np.eye(3)[None], 0.9, 1), _axis_camera(), backend="pinhole")


# -- multi-view rendering -----------------------------------------------------

def test_empty_grid_renders_nothing():
    maps = render_views(SemanticOccupancyGrid.empty((4, 4, 4)), [_axis_camera()])[0]
    assert not maps.coverage.any() and not maps.semantic.any() and not maps.depth.any()


def test_render_needs_a_camera():
    with pytest.raises(ValueError):
        render_views(SemanticOccupancyGrid.empty((4, 4, 4)), [])


def test_wall_depth_and_sparsity():
    scene = wall_scene(distance=20.0)
    maps = render_views(scene.ground_truth(), scene.cameras)[0]
    covered = maps.coverage > 0
    assert covered.any()
    assert abs(np.median(maps.depth[covered]) - 20.0) <= scene.voxel_size
    assert covered.mean() < 1.0


def test_ut_and_ewa_differ_under_distortion():
    scene = wall_scene(distance=6.0)
    cam = scene.cameras[0]
    distorted = CameraModel(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, k1=-0.3, pose=cam.pose)
    grid = scene.ground_truth()
    ut = render_views(grid, [distorted], RenderOptions(scale=0.05, backend="ut"))[0]
    ewa = render_views(grid, [distorted], RenderOptions(scale=0.05, backend="ewa"))[0]
    assert not np.array_equal(ut.coverage, ewa.coverage)


def test_render_is_deterministic_and_estimator_matches():
    scene = wall_scene(distance=8.0)
    grid = scene.ground_truth()
    a = render_views(grid, scene.cameras)[0]
    b = GaussianSplatRenderer().fit(grid).transform(scene.cameras)[0]
    assert a.depth.tobytes() == b.depth.tobytes()
    assert a.semantic.tobytes() == b.semantic.tobytes()


def test_camera_pose_moves_the_image():
    g = GaussianSet([[0.0, 0.0, 5.0]], 1e-3 * np.eye(3)[None], 0.99, 1)
    cam = CameraModel(100, 100, 32, 32, 64, 64, pose=RigidTransform(np.eye(3), (0.5, 0.0, 0.0)))
    maps = rasterize(g, cam)
    assert maps.semantic[32, 42] == 1 and maps.semantic[32, 32] == 0
