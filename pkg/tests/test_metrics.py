import itertools

import numpy as np
import pytest

from partgen.errors import ContractError
from partgen.metrics import PointCloud, chamfer, emd, gen_metrics, sample_points
from partgen.numcore import make_rng
from partgen.shapegen import Mesh


def cloud(arr):
    return PointCloud(np.asarray(arr, dtype=float))


def brute_chamfer(a, b):
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    return d2.min(axis=1).mean() + d2.min(axis=0).mean()


def brute_emd(a, b):
    n = len(a)
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    best = min(sum(d[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
    return best / n


# --- sampling ------------------------------------------------------------------

def unit_square_mesh():
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(verts, faces)


def test_sample_points_default_count():
    pc = sample_points(unit_square_mesh(), seed=1)
    assert pc.n == 2048


def test_sample_points_uniform_on_square():
    pc = sample_points(unit_square_mesh(), n=10_000, seed=3)
    np.testing.assert_allclose(pc.points.mean(axis=0), [0.5, 0.5, 0.0], atol=0.02)
    assert pc.points[:, 0].min() >= 0 and pc.points[:, 0].max() <= 1


def test_sample_points_seeded():
    a = sample_points(unit_square_mesh(), n=64, seed=9)
    b = sample_points(unit_square_mesh(), n=64, seed=9)
    np.testing.assert_array_equal(a.points, b.points)


def test_sample_points_empty_mesh():
    with pytest.raises(ContractError):
        sample_points(Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)), n=8)


# --- chamfer ---------------------------------------------------------------------

def test_chamfer_identical_zero():
    pts = make_rng(1).normal(size=(30, 3))
    assert chamfer(cloud(pts), cloud(pts)) == 0.0


def test_chamfer_two_singletons():
    assert chamfer(cloud([[0, 0, 0]]), cloud([[1, 0, 0]])) == pytest.approx(2.0)


def test_chamfer_matches_brute_force():
    rng = make_rng(5)
    for _ in range(100):
        a = rng.normal(size=(50, 3))
        b = rng.normal(size=(50, 3))
        assert chamfer(cloud(a), cloud(b)) == pytest.approx(brute_chamfer(a, b), abs=1e-12)


def test_chamfer_point_permutation_invariant():
    rng = make_rng(6)
    a, b = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    ap = a[rng.permutation(20)]
    assert chamfer(cloud(a), cloud(b)) == pytest.approx(chamfer(cloud(ap), cloud(b)))


# --- emd -------------------------------------------------------------------------

def test_emd_identical_zero():
    pts = make_rng(2).normal(size=(12, 3))
    assert emd(cloud(pts), cloud(pts)) == pytest.approx(0.0, abs=1e-12)


def test_emd_two_point_oracle():
    a = cloud([[0, 0, 0], [2, 0, 0]])
    b = cloud([[1, 0, 0], [3, 0, 0]])
    assert emd(a, b) == pytest.approx(1.0)


def test_emd_matches_factorial_brute_force():
    rng = make_rng(7)
    for _ in range(20):
        a = rng.normal(size=(6, 3))
        b = rng.normal(size=(6, 3))
        assert emd(cloud(a), cloud(b)) == pytest.approx(brute_emd(a, b), abs=1e-12)


def test_emd_size_contract():
    with pytest.raises(ContractError):
        emd(cloud(np.zeros((3, 3))), cloud(np.zeros((4, 3))))


def test_emd_symmetric_triangle():
    rng = make_rng(8)
    a, b, c = (cloud(rng.normal(size=(8, 3))) for _ in range(3))
    assert emd(a, b) == pytest.approx(emd(b, a), abs=1e-12)
    assert emd(a, c) <= emd(a, b) + emd(b, c) + 1e-9


# --- set metrics --------------------------------------------------------------------

def make_clouds(seed, n_sets, n_pts=32, shift=0.0):
    rng = make_rng(seed)
    return [cloud(rng.normal(size=(n_pts, 3)) + shift) for _ in range(n_sets)]


def test_gen_metrics_same_list():
    sets = make_clouds(1, 8)
    out = gen_metrics(sets, sets, dist="CD")
    assert out.cov == 1.0
    assert out.mmd == 0.0


def test_gen_metrics_cov_bounds_and_mmd_monotone():
    gen = make_clouds(2, 6)
    ref = make_clouds(3, 6)
    base = gen_metrics(gen, ref, dist="CD")
    assert 1 / len(ref) <= base.cov <= 1.0
    richer = gen_metrics(gen + ref[:2], ref, dist="CD")
    assert richer.mmd <= base.mmd + 1e-12


def test_gen_metrics_nna_identically_distributed():
    accs = []
    for seed in range(10):
        gen = make_clouds(100 + seed, 50)
        ref = make_clouds(200 + seed, 50)
        accs.append(gen_metrics(gen, ref, dist="CD").nna)
    mean_acc = np.mean(accs)
    assert 0.40 <= mean_acc <= 0.60


def test_gen_metrics_emd_variant_runs():
    gen = make_clouds(4, 3, n_pts=16)
    ref = make_clouds(5, 3, n_pts=16)
    out = gen_metrics(gen, ref, dist="EMD")
    assert out.mmd > 0
