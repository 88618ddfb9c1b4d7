"""SampleBank caching and label plumbing."""

import numpy as np
import pytest

from l2a.compositing import composite_pair
from l2a.databank import SampleBank
from l2a.features import selector_input
from l2a.synthworld import WorldSpec, generate_world
from l2a.tensorstore import CompositingFlags


@pytest.fixture(scope="module")
def bank(tmp_path_factory):
    spec = WorldSpec(n_classes=4, samples_per_class=4, seed=2)
    man = generate_world(spec, tmp_path_factory.mktemp("bankworld"))
    return SampleBank(man)


class TestLabels:
    def test_one_hot_layout(self, bank):
        assert bank.n_classes == 4
        assert bank.one_hot(2).tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_label_of_uses_class(self, bank):
        sid = bank.manifest.samples_of_class(1)[0].sample_id
        assert bank.label_of(sid).tolist() == [0.0, 1.0, 0.0, 0.0]

    def test_override_wins(self, bank):
        sid = bank.manifest.samples[0].sample_id
        soft = np.array([0.1, 0.2, 0.3, 0.4])
        twin = bank.with_overrides({sid: soft})
        assert np.array_equal(twin.label_of(sid), soft)
        assert twin.label_of(bank.manifest.samples[1].sample_id)[0] in (0.0, 1.0)
        # original untouched
        assert bank.label_of(sid).sum() == 1.0 and bank.label_of(sid).max() == 1.0


class TestCaching:
    def test_feature_cached_object(self, bank):
        sid = bank.manifest.samples[0].sample_id
        assert bank.feature(sid) is bank.feature(sid)

    def test_video_cached_object(self, bank):
        sid = bank.manifest.samples[0].sample_id
        assert bank.video(sid) is bank.video(sid)

    def test_twin_shares_tensor_caches(self, bank):
        sid = bank.manifest.samples[2].sample_id
        twin = bank.with_overrides({})
        assert twin.video(sid) is bank.video(sid)
        assert twin.feature(sid) is bank.feature(sid)


class TestComposites:
    def test_matches_direct_call(self, bank):
        a = bank.manifest.samples[0].sample_id
        b = bank.manifest.samples[5].sample_id
        got = bank.composite(a, b)
        want = composite_pair(
            bank.video(a),
            bank.mask(a),
            bank.label_of(a),
            bank.video(b),
            bank.mask(b),
            bank.label_of(b),
            actor_mask=bank.actor_mask(a),
        )
        assert np.array_equal(got.video, want.video)
        assert np.allclose(got.label, want.label)
        assert got.weight == want.weight

    def test_inpaint_flag_respected(self, bank):
        off = SampleBank(bank.manifest, bank.feature_spec, CompositingFlags(inpaint=False))
        b = bank.manifest.samples[5].sample_id
        assert np.array_equal(off.scene(b), off.video(b))
        assert not np.array_equal(bank.scene(b), bank.video(b))

    def test_composite_feature_cached(self, bank):
        a = bank.manifest.samples[1].sample_id
        b = bank.manifest.samples[7].sample_id
        f1, l1, w1 = bank.composite_feature_label(a, b)
        f2, l2, w2 = bank.composite_feature_label(a, b)
        assert f1 is f2
        assert np.allclose(l1, l2) and w1 == w2
        assert f1.shape == (bank.feature_spec.dim(1),)


class TestMatricesAndSelectorVec:
    def test_split_matrices_shapes_and_order(self, bank):
        x, y, ids = bank.split_matrices("train-labeled")
        assert x.shape == (len(ids), bank.feature_spec.dim(1))
        assert y.shape == (len(ids), 4)
        assert ids == sorted(ids)
        assert np.allclose(y.sum(axis=1), 1.0)

    def test_empty_split(self, bank):
        x, y, ids = bank.split_matrices("train-unlabeled")
        assert x.shape[0] == 0 and y.shape[0] == 0 and ids == []

    def test_selector_vec_layout(self, bank):
        a = bank.manifest.samples[0].sample_id
        b = bank.manifest.samples[9].sample_id
        vec = bank.selector_vec(a, b)
        want = selector_input(
            bank.feature(a), bank.label_of(a), bank.feature(b), bank.label_of(b)
        )
        assert np.array_equal(vec, want)
        assert vec.shape == (2 * bank.feature_spec.dim(1) + 2 * 4,)
