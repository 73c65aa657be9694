import numpy as np
import pytest

from cpcomplete.completion import (
    CompletionConfig,
    CPScalingOperator,
    complete,
    make_random_mask,
    relative_error,
)
from cpcomplete.cp_model import CPModel, build_q, reconstruct
from cpcomplete.exceptions import DataError
from cpcomplete.hybrid_l1 import HybridConfig
from cpcomplete.tensor_ops import Mask


def synthetic_rank(seed, dims, r, scale=10.0):
    rng = np.random.default_rng(seed)
    mats = [rng.standard_normal((d, r)) for d in dims]
    mats = [m / np.linalg.norm(m, axis=0) for m in mats]
    return reconstruct(CPModel(*mats, rng.uniform(1, 3, r) * scale))


class TestScalingOperator:
    def test_matches_dictionary_matrix(self):
        rng = np.random.default_rng(0)
        mats = [rng.normal(size=(d, 4)) for d in (5, 6, 7)]
        m = CPModel(*mats, rng.normal(size=4))
        op = CPScalingOperator(m)
        q = build_q(m)
        x = rng.normal(size=4)
        assert np.allclose(op.matvec(x), x @ q, atol=1e-12)
        y = rng.normal(size=5 * 6 * 7)
        assert np.allclose(op.rmatvec(y), q @ y, atol=1e-12)

    def test_reconstruct_consistency(self):
        rng = np.random.default_rng(1)
        mats = [rng.normal(size=(d, 3)) for d in (4, 4, 4)]
        m = CPModel(*mats, rng.normal(size=3))
        op = CPScalingOperator(m)
        assert np.allclose(op.reconstruct(m.alpha), reconstruct(m), atol=1e-12)


class TestMakeRandomMask:
    def test_full_fraction(self):
        assert make_random_mask((3, 3, 3), 1.0).count == 27

    def test_count_and_reproducibility(self):
        a = make_random_mask((10, 10, 10), 0.7, seed=5)
        b = make_random_mask((10, 10, 10), 0.7, seed=5)
        assert a.count == 700
        assert np.array_equal(a.observed, b.observed)

    def test_different_seeds_differ(self):
        a = make_random_mask((10, 10, 10), 0.3, seed=1)
        b = make_random_mask((10, 10, 10), 0.3, seed=2)
        assert not np.array_equal(a.observed, b.observed)

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            make_random_mask((3, 3, 3), 0.0)


class TestRelativeError:
    def test_identical(self):
        t = np.ones((2, 2, 2))
        assert relative_error(t, t) == 0.0

    def test_double(self):
        t = np.random.default_rng(2).normal(size=(3, 3, 3))
        assert np.isclose(relative_error(2 * t, t), 1.0)

    def test_direct_formula(self):
        rng = np.random.default_rng(3)
        s, a = rng.normal(size=(4, 4, 4)), rng.normal(size=(4, 4, 4))
        expected = np.linalg.norm((s - a).ravel()) / np.linalg.norm(a.ravel())
        assert np.isclose(relative_error(s, a), expected, rtol=1e-14)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            relative_error(np.ones((2, 2, 2)), np.zeros((2, 2, 2)))


class TestComplete:
    def test_full_mask_exact_rank(self):
        # the tolerance is set below the straggler scale so redundant
        # components have merged by the time the driver stops
        t = synthetic_rank(42, (12, 13, 14), 3)
        cfg = CompletionConfig(R0=10, m_max=500, eps_tol=1e-4, mode="hybrid", seed=0,
                               hybrid=HybridConfig(omega=0.2))
        model, s, trace = complete(t, Mask.full(t.shape), cfg)
        assert relative_error(s, t) <= 1e-3
        assert model.R == 3

    def test_masked_recovery(self):
        t = synthetic_rank(7, (30, 30, 30), 5)
        mask = make_random_mask(t.shape, 0.7, seed=7)
        cfg = CompletionConfig(R0=12, m_max=800, eps_tol=3e-4, mode="hybrid", seed=7,
                               hybrid=HybridConfig(omega=0.2))
        model, s, trace = complete(t, mask, cfg)
        assert relative_error(s, t) <= 5e-2

    def test_observed_entries_bit_exact(self):
        t = synthetic_rank(8, (10, 10, 10), 3)
        mask = make_random_mask(t.shape, 0.5, seed=8)
        cfg = CompletionConfig(R0=5, m_max=20, eps_tol=1e-3, seed=8)
        _, s, _ = complete(t, mask, cfg)
        assert np.array_equal(s[mask.where], t[mask.where])

    def test_trace_residual_progress(self):
        t = synthetic_rank(9, (10, 10, 10), 3)
        mask = make_random_mask(t.shape, 0.6, seed=9)
        cfg = CompletionConfig(R0=6, m_max=60, eps_tol=1e-6, seed=9)
        _, _, trace = complete(t, mask, cfg)
        assert trace.residual[-1] <= trace.residual[0]
        assert len(trace) == 60

    def test_deterministic_given_seed(self):
        t = synthetic_rank(10, (9, 9, 9), 3)
        mask = make_random_mask(t.shape, 0.7, seed=10)
        cfg = CompletionConfig(R0=5, m_max=25, eps_tol=1e-8, seed=11)
        m1, s1, tr1 = complete(t, mask, cfg)
        m2, s2, tr2 = complete(t, mask, cfg)
        assert np.array_equal(s1, s2)
        assert np.array_equal(m1.alpha, m2.alpha)
        assert tr1.residual == tr2.residual
        assert tr1.lam == tr2.lam

    def test_fixed_mode_runs(self):
        t = synthetic_rank(11, (8, 8, 8), 2, scale=1.0)
        mask = make_random_mask(t.shape, 0.8, seed=11)
        cfg = CompletionConfig(R0=4, m_max=30, eps_tol=1e-6, mode="fixed", lam=0.01, seed=11)
        _, _, trace = complete(t, mask, cfg)
        assert all(l == 0.01 for l in trace.lam)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            complete(np.ones((3, 3, 3)), Mask((3, 3, 3), []), CompletionConfig(R0=2))

    def test_non_finite_rejected(self):
        t = np.ones((3, 3, 3))
        t[0, 0, 0] = np.nan
        with pytest.raises(DataError):
            complete(t, Mask.full(t.shape), CompletionConfig(R0=2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CompletionConfig(R0=0)
        with pytest.raises(ValueError):
            CompletionConfig(eps_tol=2.0)
        with pytest.raises(ValueError):
            CompletionConfig(mode="banana")


class TestModeComparison:
    def test_hybrid_beats_fixed_lambda_on_image_like_data(self):
        # deterministic synthetic image: smooth ramps plus blocks, 8-bit
        # quantized, with the baseline's fixed lambda = 35
        h, w = 24, 32
        yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
        img = np.stack(
            [
                0.5 + 0.4 * np.sin(3 * xx) * np.cos(2 * yy),
                0.3 + 0.5 * xx * yy,
                0.6 - 0.3 * np.cos(4 * xx * yy),
            ],
            axis=2,
        )
        img[6:12, 8:16, :] *= 0.4
        img = np.clip(np.floor(img * 255 + 0.5), 0, 255) / 255.0
        mask = make_random_mask(img.shape, 0.7, seed=0)
        errors = {}
        for mode, lam in (("hybrid", None), ("fixed", 35.0)):
            cfg = CompletionConfig(
                R0=10, m_max=120, eps_tol=1e-3, mode=mode,
                lam=lam if lam else 35.0, seed=0, hybrid=HybridConfig(omega=0.2),
            )
            _, s, _ = complete(img, mask, cfg)
            errors[mode] = relative_error(s, img)
        assert errors["hybrid"] < errors["fixed"]
