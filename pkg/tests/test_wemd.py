import numpy as np
import pytest
from scipy import stats

from volalign import oracle, so3, volume, wemd
from volalign.exceptions import DimensionError
from volalign.volume import GaussianBlob, SynthSpec, Volume, synth_volume


# --- filter bank ----------------------------------------------------------


def test_sym3_is_orthonormal_six_taps():
    f = wemd.sym3()
    assert len(f) == 6
    assert abs(np.sum(f.lowpass**2) - 1.0) < 1e-10
    # two vanishing moments visible directly: highpass kills constants and ramps
    assert abs(np.sum(f.highpass)) < 1e-10
    assert abs(np.sum(f.highpass * np.arange(6))) < 1e-8


def test_filter_validation():
    with pytest.raises(ValueError):
        wemd.WaveletFilter("bad", np.array([0.5, 0.5]), np.array([0.5, -0.5]))
    lo = wemd.sym3().lowpass
    with pytest.raises(ValueError):
        wemd.WaveletFilter("bad", lo, lo)


def test_level_helpers():
    assert wemd.max_levels(32) == 4
    assert wemd.max_levels(64) == 5
    assert wemd.default_levels(32) == 4
    assert wemd.default_levels(256) == 6


# --- dwt3 -----------------------------------------------------------------


def test_dwt3_constant_volume_has_zero_details():
    v = Volume(np.full((16, 16, 16), 3.7))
    tree = wemd.dwt3(v, levels=2)
    for level in tree.details:
        for band in level.values():
            assert np.max(np.abs(band)) < 1e-8


def test_dwt3_matches_1d_composition_oracle(rng):
    f = wemd.sym3()
    data = rng.standard_normal((8, 8, 8))
    mine = wemd.dwt3(Volume(data), levels=2)
    ref_details, ref_approx = oracle.reference_dwt3(data, 2, f.lowpass, f.highpass)
    for level, ref_level in zip(mine.details, ref_details):
        for key in wemd.DETAIL_KEYS:
            assert np.max(np.abs(level[key] - ref_level[key])) < 1e-10
    assert np.max(np.abs(mine.approx - ref_approx)) < 1e-10


def test_dwt3_matches_oracle_larger(rng):
    f = wemd.sym3()
    data = rng.standard_normal((16, 16, 16))
    mine = wemd.dwt3(Volume(data), levels=3)
    ref_details, ref_approx = oracle.reference_dwt3(data, 3, f.lowpass, f.highpass)
    for level, ref_level in zip(mine.details, ref_details):
        for key in wemd.DETAIL_KEYS:
            assert np.max(np.abs(level[key] - ref_level[key])) < 1e-10
    assert np.max(np.abs(mine.approx - ref_approx)) < 1e-10


def test_dwt3_parseval_interior_support(rng):
    # symmetric extension is only energy-preserving while each level's
    # support stays clear of the boundary; a centered 8-wide box inside a
    # 64 grid at 2 levels satisfies that
    data = np.zeros((64, 64, 64))
    data[28:36, 28:36, 28:36] = rng.standard_normal((8, 8, 8))
    tree = wemd.dwt3(Volume(data), levels=2)
    total = np.sum(tree.approx**2)
    for level in tree.details:
        for band in level.values():
            total += np.sum(band**2)
    energy = np.sum(data**2)
    assert abs(total - energy) / energy < 1e-6


def test_dwt3_clamps_excess_levels():
    v = Volume(np.zeros((16, 16, 16)) + 1.0)
    tree = wemd.dwt3(v, levels=10)
    assert tree.clamped
    assert tree.levels == wemd.max_levels(16)
    with pytest.raises(ValueError):
        wemd.dwt3(v, levels=0)


# --- embedding ------------------------------------------------------------


def test_embed_zero_volume():
    emb = wemd.wemd_embed(Volume(np.zeros((16, 16, 16))))
    assert np.all(emb.coeffs == 0.0)


def test_embed_linearity(rng):
    data = rng.standard_normal((16, 16, 16))
    a = wemd.wemd_embed(Volume(data))
    b = wemd.wemd_embed(Volume(3.0 * data))
    assert np.max(np.abs(b.coeffs - 3.0 * a.coeffs)) < 1e-10


def test_embed_scale_weights(rng):
    data = rng.standard_normal((16, 16, 16))
    tree = wemd.dwt3(Volume(data), levels=2)
    emb = wemd.wemd_embed(Volume(data), levels=2)
    first = tree.details[0][wemd.DETAIL_KEYS[0]].ravel()
    assert np.allclose(emb.coeffs[: first.size], 2.0**-2.5 * first, atol=1e-12)
    assert np.allclose(
        emb.coeffs[-tree.approx.size:], 2.0**-5.0 * tree.approx.ravel(), atol=1e-12
    )


def test_embed_length_matches_oracle(rng):
    f = wemd.sym3()
    data = rng.standard_normal((32, 32, 32))
    emb = wemd.wemd_embed(Volume(data), levels=4)
    details, approx = oracle.reference_dwt3(data, 4, f.lowpass, f.highpass)
    count = approx.size + sum(b.size for level in details for b in level.values())
    assert emb.coeffs.size == count
    assert emb.offsets[-1] == count


# --- distance -------------------------------------------------------------


def test_distance_metric_axioms(rng):
    vols = [Volume(rng.standard_normal((8, 8, 8))) for _ in range(3)]
    a, b, _ = vols
    assert wemd.wemd_distance(a, a) == 0.0
    assert wemd.wemd_distance(a, b) == wemd.wemd_distance(b, a)
    assert wemd.wemd_distance(a, b) > 0.0


def test_distance_triangle_inequality(rng):
    for _ in range(100):
        a, b, c = (Volume(rng.standard_normal((8, 8, 8))) for _ in range(3))
        ab = wemd.wemd_distance(a, b)
        bc = wemd.wemd_distance(b, c)
        ac = wemd.wemd_distance(a, c)
        assert ac <= ab + bc + 1e-12


def test_distance_homogeneity(rng):
    a = Volume(rng.standard_normal((8, 8, 8)))
    b = Volume(rng.standard_normal((8, 8, 8)))
    d = wemd.wemd_distance(a, b)
    d3 = wemd.wemd_distance(Volume(3.0 * a.data), Volume(3.0 * b.data))
    assert abs(d3 - 3.0 * d) < 1e-10 * max(1.0, d3)


def test_distance_size_mismatch(rng):
    a = Volume(rng.standard_normal((8, 8, 8)))
    b = Volume(rng.standard_normal((16, 16, 16)))
    with pytest.raises(DimensionError):
        wemd.wemd_distance(a, b)


def test_embedding_distance_shape_mismatch(rng):
    a = wemd.wemd_embed(Volume(rng.standard_normal((8, 8, 8))), levels=1)
    b = wemd.wemd_embed(Volume(rng.standard_normal((8, 8, 8))), levels=2)
    with pytest.raises(DimensionError):
        wemd.embedding_distance(a, b)


def test_translation_monotonicity():
    # blob wide enough that the finest-scale coefficients stay in the linear
    # (non-saturated) response regime over the whole shift range
    blob = GaussianBlob(np.zeros(3), np.eye(3) * 36.0)
    v = synth_volume(SynthSpec(side_length=64, blobs=[blob]))
    shifts = np.arange(1, 7, dtype=float)
    dists = [
        wemd.wemd_distance(v, volume.shift(v, (d, 0.0, 0.0))) for d in shifts
    ]
    assert all(b > a for a, b in zip(dists, dists[1:]))
    assert stats.pearsonr(shifts, dists).statistic > 0.99


def test_rotation_monotonicity(ref_vol32):
    angles = np.arange(2.0, 21.0, 2.0)
    dists = [
        wemd.wemd_distance(volume.rotate(ref_vol32, so3.rotz(a)), ref_vol32)
        for a in angles
    ]
    assert all(b > a for a, b in zip(dists, dists[1:]))
