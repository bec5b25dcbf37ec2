import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occu_forge.geometry import RigidTransform
from occu_forge.metrics import BevBinning, BevHistogram, bev_histogram, chamfer, digest, jsd, metric_report, mmd
from oracles import brute_chamfer

LN2 = float(np.log(2.0))


def _h(values):
    v = np.asarray(values, dtype=np.float64).reshape(1, -1)
    return BevHistogram(v, 1, 0)


# -- BEV histograms -----------------------------------------------------------

def test_empty_cloud_gives_zero_histogram():
    h = bev_histogram(np.zeros((0, 3)))
    assert h.empty and not h.values.any()


def test_single_cell_is_onehot():
    h = bev_histogram(np.tile([[0.35, -0.25, 1.0]], (50, 1)), BevBinning((10, 10), (-1, 1), (-1, 1)))
    assert h.values.sum() == 1.0 and np.count_nonzero(h.values) == 1
    assert h.values[6, 3] == 1.0


def test_out_of_range_points_dropped_and_counted():
    pts = np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [0.0, -60.0, 0.0]])
    h = bev_histogram(pts)
    assert h.n_points == 3 and h.n_dropped == 2 and h.values.sum() == pytest.approx(1.0)


def test_uniform_cloud_is_flat(rng):
    pts = rng.uniform([-50, -50, 0], [50, 50, 1], (10_000, 3))
    h = bev_histogram(pts, BevBinning((5, 5)))
    assert h.values.max() / h.values.min() < 2


def test_binning_validation():
    with pytest.raises(ValueError):
        BevBinning((0, 4))
    with pytest.raises(ValueError):
        BevBinning(x_range=(1.0, 1.0))


# -- JSD ----------------------------------------------------------------------

def test_jsd_hand_value():
    expect = 0.5 * np.log(1 / 0.75) + 0.5 * (0.5 * np.log(0.5 / 0.75) + 0.5 * np.log(0.5 / 0.25))
    assert jsd(_h([1, 0]), _h([0.5, 0.5])) == pytest.approx(expect, abs=1e-12)
    # the divergence of B from the mixture alone is 0.1438; the symmetric average is 0.2158
    assert jsd(_h([1, 0]), _h([0.5, 0.5])) == pytest.approx(0.2158, abs=5e-5)


def test_jsd_extremes():
    assert jsd(_h([0.2, 0.3, 0.5]), _h([0.2, 0.3, 0.5])) == 0.0
    assert jsd(_h([0.5, 0.5, 0, 0]), _h([0, 0, 0.25, 0.75])) == pytest.approx(LN2, abs=1e-15)


def test_jsd_rejects_unnormalized_or_mismatched():
    with pytest.raises(ValueError):
        jsd(_h([0.5, 0.6]), _h([0.5, 0.5]))
    with pytest.raises(ValueError):
        jsd(_h([-0.5, 1.5]), _h([0.5, 0.5]))
    with pytest.raises(ValueError):
        jsd(_h([1.0]), _h([0.5, 0.5]))


@settings(max_examples=200)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 30))
def test_jsd_symmetric_bounded_and_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    p, q = rng.random(n) * (rng.random(n) < 0.7), rng.random(n)
    p[0] += 1e-3
    p, q = p / p.sum(), q / q.sum()
    a = jsd(_h(p), _h(q))
    assert a == pytest.approx(jsd(_h(q), _h(p)), abs=1e-15)
    assert 0.0 <= a <= LN2
    perm = rng.permutation(n)
    assert a == pytest.approx(jsd(_h(p[perm]), _h(q[perm])), abs=1e-12)


# -- MMD ----------------------------------------------------------------------

def _set(rng, n, shift=0.0):
    out = []
    for _ in range(n):
        pts = rng.normal([shift, 0, 0], [10, 10, 1], (500, 3))
        out.append(bev_histogram(pts, BevBinning((8, 8))))
    return out


def test_mmd_of_identical_sets_is_zero(rng):
    A = _set(rng, 5)
    assert abs(mmd(A, A)) < 1e-9


def test_mmd_symmetric(rng):
    A, B = _set(rng, 4), _set(rng, 6, shift=15.0)
    assert mmd(A, B) == pytest.approx(mmd(B, A), abs=1e-15)
    assert mmd(A, B) > 0


def test_mmd_two_by_two_closed_form():
    e1, e2 = _h([1, 0]), _h([0, 1])
    A, B = [e1, e1], [e2, e2]
    # within-set kernels are 1; across sets ||e1 - e2||^2 = 2
    assert mmd(A, B, sigma=1.0) == pytest.approx(2 - 2 * np.exp(-1.0), abs=1e-15)
    # median of the six pooled distances {0, 0, sqrt2 x4} is sqrt2
    assert mmd(A, B) == pytest.approx(2 - 2 * np.exp(-0.5), abs=1e-15)


def test_mmd_permutation_invariant(rng):
    A, B = _set(rng, 4), _set(rng, 5, shift=5.0)
    assert mmd(A[::-1], B[::-1]) == pytest.approx(mmd(A, B), abs=1e-15)


def test_mmd_errors(rng):
    A = _set(rng, 3)
    with pytest.raises(ValueError):
        mmd(A[:1], A)
    with pytest.raises(ValueError):
        mmd(A, [_h([1, 0]), _h([0, 1])])
    with pytest.raises(ValueError):
        mmd(A, A, sigma=0.0)


# -- chamfer ------------------------------------------------------------------

def test_chamfer_trivial_cases():
    a = np.array([[0.0, 0.0, 0.0]])
    assert chamfer(a, a + [3.0, 0.0, 0.0]) == 3.0
    assert chamfer(a, a) == 0.0
    with pytest.raises(ValueError):
        chamfer(a, np.zeros((0, 3)))


@pytest.mark.parametrize("n", [1, 7, 100, 1000])
def test_chamfer_equals_brute_force(rng, n):
    a, b = rng.normal(size=(n, 3)), rng.normal(size=(n + 3, 3)) * 2
    assert chamfer(a, b) == brute_chamfer(a, b)


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_chamfer_rigid_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-20, 20, (60, 3)), rng.uniform(-20, 20, (40, 3))
    T = RigidTransform.from_rotvec(rng.uniform(-2, 2, 3), rng.uniform(-100, 100, 3))
    c = chamfer(a, b)
    assert abs(chamfer(T.apply(a), T.apply(b)) - c) < 1e-9
    assert chamfer(b, a) == pytest.approx(c, abs=1e-12)
    assert chamfer(a[rng.permutation(60)], b) == pytest.approx(c, abs=1e-12)


# -- reports ------------------------------------------------------------------

def test_metric_report_schema(tmp_path, rng):
    arr = rng.random(5)
    f = tmp_path / "x.bin"
    f.write_bytes(b"abc")
    rep = metric_report("jsd", 0.25, {"bins": [8, 8]}, {"a": arr, "b": f})
    assert set(rep) == {"metric", "value", "parameters", "inputs"}
    assert rep["inputs"]["b"] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert rep["inputs"]["a"] == digest(arr.copy()) != digest(arr.astype(np.float32))
    assert json.loads(json.dumps(rep)) == rep
