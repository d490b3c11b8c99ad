import numpy as np
import pytest

from b1predictor import synth
from b1predictor.errors import EmptyInputError
from b1predictor.patches import normalized_localizer, sample_patches


@pytest.fixture(scope="module")
def subject():
    return synth.synthesize_cohort(2, 48, seed=9)[0]


def test_requested_count(subject):
    loc, b1, mask = sample_patches(subject, 1000, seed=0)
    assert loc.shape == (1000, 1, 32, 32, 32)
    assert b1.shape == loc.shape and mask.shape == loc.shape


def test_same_seed_identical(subject):
    a = sample_patches(subject, 50, seed=4)
    b = sample_patches(subject, 50, seed=4)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_patches_inside_bounds(subject):
    _, _, _, corners = sample_patches(subject, 200, seed=1, return_corners=True)
    dims = np.asarray(subject.mask.shape)
    assert np.all(corners >= 0)
    assert np.all(corners + 32 <= dims)


def test_centers_masked(subject):
    _, _, _, corners = sample_patches(subject, 200, seed=2, return_corners=True)
    centers = corners + 16
    assert all(subject.mask[tuple(c)] for c in centers)


def test_alignment_voxel_exact(subject):
    # localizer and b1 patches come from identical index boxes
    loc, b1, mask, corners = sample_patches(subject, 20, seed=3,
                                            return_corners=True)
    loc_full = normalized_localizer(subject)
    for i, (x, y, z) in enumerate(corners):
        sl = (slice(x, x + 32), slice(y, y + 32), slice(z, z + 32))
        assert np.array_equal(loc[i, 0], loc_full[sl])
        assert np.array_equal(b1[i, 0], subject.b1[sl])
        assert np.array_equal(mask[i, 0], subject.mask[sl].astype(np.float32))


def test_empty_mask_rejected(subject):
    bare = synth.SyntheticSubject(
        localizer=subject.localizer, b1=subject.b1,
        mask=np.zeros_like(subject.mask), affine=subject.affine,
    )
    with pytest.raises(EmptyInputError):
        sample_patches(bare, 10, seed=0)


def test_all_zero_localizer_normalization_guard(subject):
    bare = synth.SyntheticSubject(
        localizer=np.zeros_like(subject.localizer), b1=subject.b1,
        mask=subject.mask, affine=subject.affine,
    )
    out = normalized_localizer(bare)
    assert np.all(np.isfinite(out))
