import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snls.errors import NumericGuardError
from snls.numerics import Tensor, grad_check
from snls.objectives import (
    AugmentationSpec,
    EmbeddingBatch,
    SimilarityMatrix,
    TemperatureParam,
    apply_transform,
    augment,
    clip_loss,
    nt_xent,
    similarity_matrix,
    slip_loss,
    unicl_loss,
    unicl_target_matrix,
)


def t64(arr, rg=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=rg)


def batch_for(s, t, labels=None):
    labels = labels or [f"c{i}" for i in range(np.asarray(s).shape[0])]
    return EmbeddingBatch(S=t64(s), T=t64(t), labels=labels)


def scalar_clip_reference(c):
    """Plain-python symmetric cross entropy for a square logits matrix."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    total = 0.0
    for mat in (c, c.T):
        for i in range(n):
            row = mat[i] - mat[i].max()
            total += -(row[i] - math.log(np.exp(row).sum()))
    return total / (2 * n)


class TestSimilarityMatrix:
    def test_orthonormal_rows_give_identity(self):
        s = np.eye(3, 4)
        temp = TemperatureParam(initial=1.0)
        sim = similarity_matrix(batch_for(s, s), temp)
        np.testing.assert_allclose(sim.C.data, np.eye(3), atol=1e-6)

    def test_initial_applied_scale(self):
        temp = TemperatureParam()
        assert abs(temp.applied_scale - 1 / 0.07) < 1e-6

    def test_hand_vectors_match_scalar_reference(self):
        s = np.array([[1.0, 2.0], [-0.5, 0.25]])
        t = np.array([[0.3, -1.0], [2.0, 2.0]])
        temp = TemperatureParam(initial=5.0)
        sim = similarity_matrix(batch_for(s, t), temp)
        for i in range(2):
            for j in range(2):
                si, tj = s[i] / np.linalg.norm(s[i]), t[j] / np.linalg.norm(t[j])
                assert abs(sim.C.data[i, j] - 5.0 * float(si @ tj)) < 1e-6

    def test_zero_norm_row_guard(self):
        s = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(NumericGuardError, match="row at index 1"):
            similarity_matrix(batch_for(s, np.ones((2, 2))), TemperatureParam())

    def test_row_rescaling_invariance(self):
        rng = np.random.default_rng(0)
        s = rng.normal(size=(4, 6))
        t = rng.normal(size=(4, 6))
        temp = TemperatureParam()
        base = similarity_matrix(batch_for(s, t), temp).C.data
        scaled = s.copy()
        scaled[2] *= 37.5
        again = similarity_matrix(batch_for(scaled, t), temp).C.data
        np.testing.assert_allclose(base, again, atol=1e-6)

    def test_clamp_never_exceeds_ceiling(self):
        temp = TemperatureParam()
        temp.log_scale.data = np.float64(50.0)  # absurdly large log-scale
        assert temp.applied_scale <= 100.0
        sim = similarity_matrix(batch_for(np.eye(2), np.eye(2)), temp)
        assert sim.tau <= 100.0

    def test_batch_shape_validation(self):
        with pytest.raises(ValueError):
            EmbeddingBatch(S=t64(np.ones((2, 3))), T=t64(np.ones((3, 3))), labels=["a", "b"])


class TestClipLoss:
    @pytest.mark.parametrize("n", [2, 8, 64])
    def test_constant_matrix_gives_log_n(self, n):
        sim = SimilarityMatrix(C=t64(np.full((n, n), 0.2), rg=False), tau=1.0)
        assert abs(clip_loss(sim).item() - math.log(n)) < 1e-6

    def test_saturated_diagonal(self):
        sim = SimilarityMatrix(C=t64(1000.0 * np.eye(4), rg=False), tau=1.0)
        assert abs(clip_loss(sim).item()) < 1e-6

    def test_random_matrix_matches_scalar_reference(self):
        rng = np.random.default_rng(1)
        c = rng.normal(size=(3, 3))
        sim = SimilarityMatrix(C=t64(c, rg=False), tau=1.0)
        assert abs(clip_loss(sim).item() - scalar_clip_reference(c)) < 1e-5

    def test_grad_check_through_similarity(self):
        rng = np.random.default_rng(2)
        s, t = t64(rng.normal(size=(4, 5))), t64(rng.normal(size=(4, 5)))
        ls = t64(np.float64(np.log(1 / 0.07)))

        def f(s_, t_, ls_):
            temp = TemperatureParam()
            temp.log_scale = ls_
            sim = similarity_matrix(EmbeddingBatch(S=s_, T=t_, labels=list("abcd")), temp)
            return clip_loss(sim)

        assert grad_check(f, [s, t, ls]) < 1e-4

    def test_non_square_rejected(self):
        sim = SimilarityMatrix(C=t64(np.ones((2, 3)), rg=False), tau=1.0)
        with pytest.raises(ValueError):
            clip_loss(sim)

    def test_pair_permutation_symmetry(self):
        rng = np.random.default_rng(3)
        c = rng.normal(size=(5, 5))
        perm = rng.permutation(5)
        base = clip_loss(SimilarityMatrix(C=t64(c, rg=False), tau=1.0)).item()
        permuted = clip_loss(
            SimilarityMatrix(C=t64(c[np.ix_(perm, perm)], rg=False), tau=1.0)
        ).item()
        assert abs(base - permuted) < 1e-6


class TestUnicl:
    def test_distinct_labels_identity_targets(self):
        m = unicl_target_matrix(["a", "b", "c"])
        np.testing.assert_array_equal(m, np.eye(3))

    def test_duplicate_labels_spread(self):
        m = unicl_target_matrix(["a", "a", "b"])
        np.testing.assert_allclose(m[0], [0.5, 0.5, 0.0])

    @given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=12))
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one(self, labels):
        m = unicl_target_matrix(labels)
        np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)

    def test_equals_clip_when_distinct(self):
        rng = np.random.default_rng(4)
        sim = similarity_matrix(
            batch_for(rng.normal(size=(4, 6)), rng.normal(size=(4, 6))), TemperatureParam()
        )
        targets = unicl_target_matrix(["w", "x", "y", "z"])
        assert abs(unicl_loss(sim, targets).item() - clip_loss(sim).item()) < 1e-7

    def test_block_diagonal_floor_is_log_multiplicity(self):
        # two duplicated labels, block-aligned huge logits: loss -> ln(2)
        c = np.full((4, 4), -1000.0)
        c[:2, :2] = 1000.0
        c[2:, 2:] = 1000.0
        sim = SimilarityMatrix(C=t64(c, rg=False), tau=1.0)
        targets = unicl_target_matrix(["a", "a", "b", "b"])
        assert abs(unicl_loss(sim, targets).item() - math.log(2)) < 1e-6

    def test_grad_check(self):
        rng = np.random.default_rng(5)
        labels = ["a", "a", "b", "c"]

        def f(s_, t_):
            sim = similarity_matrix(EmbeddingBatch(S=s_, T=t_, labels=labels),
                                    TemperatureParam())
            return unicl_loss(sim, unicl_target_matrix(labels))

        assert grad_check(f, [t64(rng.normal(size=(4, 5))), t64(rng.normal(size=(4, 5)))]) < 1e-4

    def test_invalid_targets_rejected(self):
        sim = SimilarityMatrix(C=t64(np.zeros((2, 2)), rg=False), tau=1.0)
        with pytest.raises(ValueError):
            unicl_loss(sim, np.array([[0.9, 0.2], [0.0, 1.0]]))


class TestNtXent:
    def test_single_pair_rejected(self):
        z = t64(np.ones((1, 4)))
        with pytest.raises(ValueError):
            nt_xent(z, z)

    def test_orthonormal_matches_scalar_reference(self):
        z = np.eye(4)[:3]
        loss = nt_xent(t64(z, rg=False), t64(z, rg=False), tau_s=0.1)
        zz = np.vstack([z, z])
        zz /= np.linalg.norm(zz, axis=1, keepdims=True)
        logits = zz @ zz.T / 0.1
        np.fill_diagonal(logits, -1e9)
        ref = 0.0
        for i in range(6):
            j = (i + 3) % 6
            row = logits[i] - logits[i].max()
            ref += -(row[j] - math.log(np.exp(row).sum()))
        ref /= 6
        assert abs(loss.item() - ref) < 1e-5

    def test_pair_order_permutation_invariance(self):
        rng = np.random.default_rng(6)
        z1, z2 = rng.normal(size=(5, 7)), rng.normal(size=(5, 7))
        base = nt_xent(t64(z1, rg=False), t64(z2, rg=False)).item()
        perm = rng.permutation(5)
        permuted = nt_xent(t64(z1[perm], rg=False), t64(z2[perm], rg=False)).item()
        assert abs(base - permuted) < 1e-6

    def test_nonnegative_on_random_inputs(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            loss = nt_xent(t64(rng.normal(size=(4, 6)), rg=False),
                           t64(rng.normal(size=(4, 6)), rg=False))
            assert loss.item() >= 0.0

    def test_grad_check(self):
        rng = np.random.default_rng(8)
        assert grad_check(lambda a, b: nt_xent(a, b, 0.1),
                          [t64(rng.normal(size=(3, 4))), t64(rng.normal(size=(3, 4)))]) < 1e-4


class TestSlip:
    def _sim(self, rng):
        return similarity_matrix(
            batch_for(rng.normal(size=(4, 6)), rng.normal(size=(4, 6))), TemperatureParam()
        )

    def test_lambda_zero_equals_clip(self):
        rng = np.random.default_rng(9)
        sim = self._sim(rng)
        z = t64(rng.normal(size=(4, 5)), rg=False)
        assert slip_loss(sim, z, z, lam=0.0).item() == clip_loss(sim).item()

    def test_at_least_clip_for_nonnegative_lambda(self):
        rng = np.random.default_rng(10)
        sim = self._sim(rng)
        z1, z2 = t64(rng.normal(size=(4, 5)), rg=False), t64(rng.normal(size=(4, 5)), rg=False)
        assert slip_loss(sim, z1, z2, lam=1.0).item() >= clip_loss(sim).item()

    def test_zero_lambda_zeroes_view_gradients(self):
        rng = np.random.default_rng(11)
        z1 = t64(rng.normal(size=(4, 5)))
        z2 = t64(rng.normal(size=(4, 5)))
        s = t64(rng.normal(size=(4, 6)))
        t = t64(rng.normal(size=(4, 6)))
        sim = similarity_matrix(EmbeddingBatch(S=s, T=t, labels=list("abcd")),
                                TemperatureParam())
        loss = slip_loss(sim, z1, z2, lam=0.0)
        loss.backward()
        assert z1.grad is None and z2.grad is None
        assert s.grad is not None

    def test_grad_check_full(self):
        rng = np.random.default_rng(12)

        def f(s_, t_, z1_, z2_):
            sim = similarity_matrix(EmbeddingBatch(S=s_, T=t_, labels=list("abcd")),
                                    TemperatureParam())
            return slip_loss(sim, z1_, z2_, lam=0.5)

        inputs = [t64(rng.normal(size=(4, 6))), t64(rng.normal(size=(4, 6))),
                  t64(rng.normal(size=(4, 5))), t64(rng.normal(size=(4, 5)))]
        assert grad_check(f, inputs) < 1e-4


class TestAugmentations:
    def make_window(self, seed=0):
        return np.random.default_rng(seed).normal(size=(100, 3)).astype(np.float32)

    def test_negation_is_exact_sign_flip(self):
        w = self.make_window()
        out = apply_transform("negation", w, np.random.default_rng(0))
        np.testing.assert_array_equal(out, -w)

    def test_time_flip_involution(self):
        w = self.make_window()
        rng = np.random.default_rng(0)
        once = apply_transform("time_flip", w, rng)
        twice = apply_transform("time_flip", once, rng)
        np.testing.assert_allclose(twice, w, atol=1e-7)

    def test_jitter_half_normal_magnitude(self):
        rng = np.random.default_rng(13)
        spec = AugmentationSpec()
        total, count = 0.0, 0
        for i in range(200):  # 200 windows x 300 elements = 60k draws
            w = np.zeros((100, 3), dtype=np.float32)
            out = apply_transform("jitter", w, rng, spec)
            total += np.abs(out).sum()
            count += out.size
        mean_mag = total / count
        assert 0.035 <= mean_mag <= 0.045  # sigma * sqrt(2/pi) = 0.0399

    @pytest.mark.parametrize("name", list(AugmentationSpec().transforms))
    def test_every_transform_preserves_shape(self, name):
        w = self.make_window(3)
        out = apply_transform(name, w, np.random.default_rng(5))
        assert out.shape == (100, 3)
        assert np.all(np.isfinite(out))

    def test_augment_deterministic(self):
        w = self.make_window(4)
        spec = AugmentationSpec()
        a = augment(w, spec, seed=99)
        b = augment(w, spec, seed=99)
        np.testing.assert_array_equal(a, b)

    def test_augment_applies_one_or_two_transforms(self):
        w = self.make_window(5)
        spec = AugmentationSpec(transforms=("negation",))
        out = augment(w, spec, seed=1)
        np.testing.assert_allclose(out, -w, atol=1e-6)

    def test_rotation_preserves_row_norms(self):
        w = self.make_window(6)
        out = apply_transform("rotation", w, np.random.default_rng(7))
        np.testing.assert_allclose(np.linalg.norm(out, axis=1),
                                   np.linalg.norm(w, axis=1), rtol=1e-4)

    def test_unknown_transform_rejected(self):
        with pytest.raises(ValueError):
            AugmentationSpec(transforms=("warp_drive",))
