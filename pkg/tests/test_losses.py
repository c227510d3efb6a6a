"""Loss suite against independent reference implementations.

The SSIM/MS-SSIM references below evaluate the defining formulas directly
on full 2-D windows in float64 (sliding_window_view + einsum), sharing no
code with the separable float32 production path.
"""

import math

import numpy as np
import pytest

from conftest import central_diff, check_directional, check_gradients, rand_tensor
from ppon import tensor as T
from ppon.losses import (
    DESK_CHANNEL_LADDER,
    Discriminator,
    DiscriminatorConfig,
    MS_BETA,
    MS_OMEGA,
    MsWeights,
    SsimParams,
    content_loss,
    desk_feature_extractor,
    identity_feature_extractor,
    ms_l1,
    ms_ssim,
    perception_total,
    perceptual_loss,
    ragan_d_loss,
    ragan_g_loss,
    ssim,
    structure_loss,
    symmetric_start_loss,
)

# ---------------------------------------------------------------------------
# reference implementations (float64, direct-window)

_CS_FLOOR = 1e-8


def _gauss2d(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim_terms_reference(x, y, size=11, sigma=1.5, L=1.0):
    """Per-image (l, cs) means for (N, C, H, W) float arrays."""
    win = _gauss2d(size, sigma)
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    n = x.shape[0]
    l_out, cs_out = [], []
    for i in range(n):
        l_vals, cs_vals = [], []
        for c in range(x.shape[1]):
            a = x[i, c].astype(np.float64)
            b = y[i, c].astype(np.float64)
            wa = np.lib.stride_tricks.sliding_window_view(a, (size, size))
            wb = np.lib.stride_tricks.sliding_window_view(b, (size, size))
            mu_a = np.einsum("hwij,ij->hw", wa, win)
            mu_b = np.einsum("hwij,ij->hw", wb, win)
            aa = np.einsum("hwij,ij->hw", wa * wa, win) - mu_a**2
            bb = np.einsum("hwij,ij->hw", wb * wb, win) - mu_b**2
            ab = np.einsum("hwij,ij->hw", wa * wb, win) - mu_a * mu_b
            l_vals.append((2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1))
            cs_vals.append((2 * ab + c2) / (aa + bb + c2))
        l_out.append(np.mean(l_vals))
        cs_out.append(np.mean(cs_vals))
    return np.array(l_out), np.array(cs_out)


def ssim_reference(x, y, **kw):
    l_term, cs_term = ssim_terms_reference(x, y, **kw)
    return float(np.mean(l_term * cs_term))


def _pool2_reference(a):
    n, c, h, w = a.shape
    return a[:, :, : h // 2 * 2, : w // 2 * 2].reshape(
        n, c, h // 2, 2, w // 2, 2
    ).mean(axis=(3, 5))


def ms_ssim_reference(x, y, beta, **kw):
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    m = len(beta)
    product = np.ones(x.shape[0])
    for j in range(m):
        l_term, cs_term = ssim_terms_reference(x, y, **kw)
        base = l_term * cs_term if j == m - 1 else cs_term
        product *= np.maximum(base, _CS_FLOOR) ** beta[j]
        if j != m - 1:
            x, y = _pool2_reference(x), _pool2_reference(y)
    return float(np.mean(product))


def ms_l1_reference(x, y, omega):
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    total = 0.0
    for j, w in enumerate(omega):
        total += w * float(np.mean(np.abs(x - y)))
        if j != len(omega) - 1:
            x, y = _pool2_reference(x), _pool2_reference(y)
    return total


def ragan_reference(c_real, c_fake):
    cr = c_real.astype(np.float64).ravel()
    cf = c_fake.astype(np.float64).ravel()

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    d_real = sig(cr - cf.mean())
    d_fake = sig(cf - cr.mean())
    return float(-np.mean(np.log(d_real)) - np.mean(np.log(1.0 - d_fake)))


# ---------------------------------------------------------------------------


class TestContentLoss:
    def test_identity_is_zero(self):
        x = rand_tensor(np.random.default_rng(0), (2, 3, 8, 8))
        assert content_loss(x, x).item() == 0.0

    def test_constant_offset(self):
        rng = np.random.default_rng(1)
        hr = rand_tensor(rng, (1, 3, 6, 6), low=0.0, high=0.4)
        sr = T.Tensor(hr.data + 0.5)
        assert content_loss(sr, hr).item() == pytest.approx(0.5, abs=1e-6)

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(2)
        a = rand_tensor(rng, (2, 3, 5, 7))
        b = rand_tensor(rng, (2, 3, 5, 7))
        total = 0.0
        for va, vb in zip(a.data.ravel().tolist(), b.data.ravel().tolist()):
            total += abs(va - vb)
        assert content_loss(a, b).item() == pytest.approx(total / a.size, abs=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(T.ShapeError):
            content_loss(
                rand_tensor(np.random.default_rng(3), (1, 3, 4, 4)),
                rand_tensor(np.random.default_rng(4), (1, 3, 5, 5)),
            )


class TestSsim:
    def test_self_similarity_is_one(self):
        for seed in (0, 1, 2):
            x = rand_tensor(np.random.default_rng(seed), (1, 3, 20, 20), low=0, high=1)
            value, _ = ssim(x, x)
            assert abs(value.item() - 1.0) < 1e-7

    def test_constant_images_closed_form(self):
        # x = 0, y = 1: luminance C1/(1+C1), contrast-structure exactly 1
        x = T.Tensor(np.zeros((1, 1, 16, 16), np.float32))
        y = T.Tensor(np.ones((1, 1, 16, 16), np.float32))
        value, cs = ssim(x, y)
        c1 = SsimParams().c1
        assert value.item() == pytest.approx(c1 / (1.0 + c1), rel=1e-5)
        assert cs.item() == pytest.approx(1.0, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        x = rand_tensor(rng, (1, 1, 24, 24), low=0, high=1)
        y = rand_tensor(rng, (1, 1, 24, 24), low=0, high=1)
        a, _ = ssim(x, y)
        b, _ = ssim(y, x)
        assert abs(a.item() - b.item()) < 1e-7

    def test_matches_direct_window_reference(self):
        rng = np.random.default_rng(6)
        for _ in range(4):
            x = rand_tensor(rng, (1, 1, 32, 32), low=0, high=1)
            y = rand_tensor(rng, (1, 1, 32, 32), low=0, high=1)
            fast, _ = ssim(x, y)
            assert abs(fast.item() - ssim_reference(x.data, y.data)) < 1e-6

    def test_window_too_large(self):
        x = rand_tensor(np.random.default_rng(7), (1, 1, 8, 8))
        with pytest.raises(T.ShapeError):
            ssim(x, x)

    def test_window_normalized(self):
        from ppon.losses import gaussian_window

        w = gaussian_window(11, 1.5)
        assert w.sum() == pytest.approx(1.0, abs=1e-6)
        assert len(w) == 11


class TestMsSsim:
    def test_beta_values_pinned(self):
        assert MS_BETA == (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
        assert MS_OMEGA == (1.0, 0.5, 0.25, 0.125, 0.125)
        assert sum(MS_BETA) == pytest.approx(1.0001, abs=1e-7)

    def test_beta_sum_asserted_at_construction(self):
        MsWeights()  # fine
        with pytest.raises(ValueError):
            MsWeights(beta=(0.5, 0.1, 0.1, 0.1, 0.1), omega=MS_OMEGA, m_scales=5)

    def test_truncated_renormalizes(self):
        w3 = MsWeights.truncated(3)
        assert w3.m_scales == 3
        assert sum(w3.beta) == pytest.approx(1.0, abs=1e-9)
        assert w3.omega == MS_OMEGA[:3]

    def test_self_similarity(self):
        x = rand_tensor(np.random.default_rng(8), (1, 1, 192, 192), low=0, high=1)
        assert abs(ms_ssim(x, x).item() - 1.0) < 1e-6

    def test_matches_reference_full_scale(self):
        rng = np.random.default_rng(9)
        for _ in range(2):
            x = rand_tensor(rng, (1, 1, 192, 192), low=0, high=1)
            y = T.Tensor(
                np.clip(x.data + rng.normal(0, 0.1, x.shape), 0, 1).astype(np.float32)
            )
            fast = ms_ssim(x, y).item()
            ref = ms_ssim_reference(x.data, y.data, MS_BETA)
            assert abs(fast - ref) < 1e-5

    def test_too_small_image_names_remedy(self):
        x = rand_tensor(np.random.default_rng(10), (1, 1, 64, 64))
        with pytest.raises(T.ShapeError, match="reduce the"):
            ms_ssim(x, x)

    def test_batch_is_mean_of_per_image(self):
        rng = np.random.default_rng(11)
        xs = [rand_tensor(rng, (1, 1, 192, 192), low=0, high=1) for _ in range(2)]
        ys = [rand_tensor(rng, (1, 1, 192, 192), low=0, high=1) for _ in range(2)]
        batch_x = T.Tensor(np.concatenate([t.data for t in xs]))
        batch_y = T.Tensor(np.concatenate([t.data for t in ys]))
        batched = ms_ssim(batch_x, batch_y).item()
        singles = [ms_ssim(x, y).item() for x, y in zip(xs, ys)]
        assert batched == pytest.approx(np.mean(singles), abs=1e-6)


class TestMsL1:
    def test_identity(self):
        x = rand_tensor(np.random.default_rng(12), (1, 3, 64, 64))
        assert ms_l1(x, x).item() == 0.0

    def test_constant_offset_sums_omega(self):
        # every pyramid level preserves a constant offset, so the loss is
        # c * sum(omega) = 2c for the published weights
        rng = np.random.default_rng(13)
        x = rand_tensor(rng, (1, 3, 64, 64), low=0.0, high=0.3)
        y = T.Tensor(x.data + 0.25)
        assert ms_l1(x, y).item() == pytest.approx(0.25 * sum(MS_OMEGA), rel=1e-5)

    def test_matches_pool_reference(self):
        rng = np.random.default_rng(14)
        x = rand_tensor(rng, (2, 3, 48, 48), low=0, high=1)
        y = rand_tensor(rng, (2, 3, 48, 48), low=0, high=1)
        fast = ms_l1(x, y).item()
        ref = ms_l1_reference(x.data, y.data, MS_OMEGA)
        assert fast == pytest.approx(ref, abs=1e-6)


class TestStructureLoss:
    def test_identity_is_zero(self):
        x = rand_tensor(np.random.default_rng(15), (1, 3, 192, 192), low=0, high=1)
        assert structure_loss(x, x).item() == 0.0

    def test_lambda_zero_reduces_to_ms_l1(self):
        rng = np.random.default_rng(16)
        x = rand_tensor(rng, (1, 3, 192, 192), low=0, high=1)
        y = rand_tensor(rng, (1, 3, 192, 192), low=0, high=1)
        assert structure_loss(x, y, lam=0.0).item() == ms_l1(x, y).item()

    def test_nonnegative(self):
        rng = np.random.default_rng(17)
        for _ in range(3):
            x = rand_tensor(rng, (1, 1, 192, 192), low=0, high=1)
            y = rand_tensor(rng, (1, 1, 192, 192), low=0, high=1)
            assert structure_loss(x, y).item() >= 0.0

    def test_gradient_on_80px_patch(self):
        # truncated 3-scale pyramid: 80 px admits at most three halvings
        # against an 11-tap window; sr close to hr keeps the lambda-scaled
        # loss small enough for float32 finite differences to resolve
        rng = np.random.default_rng(18)
        weights = MsWeights.truncated(3)
        hr = rand_tensor(rng, (1, 3, 80, 80), low=0.1, high=0.9)
        sr = T.Tensor(
            np.clip(
                hr.data + rng.normal(0, 0.05, hr.shape), 0.02, 0.98
            ).astype(np.float32),
            requires_grad=True,
        )

        def forward():
            return structure_loss(sr, hr, weights)

        # whole-gradient direction first, then the per-element checks that
        # float32 differencing of a lambda-scaled loss can still resolve
        check_directional(forward, [sr])
        sr.grad = None
        T.backward(forward())
        top = np.argsort(np.abs(sr.grad.ravel()))[-12:]
        for index in top:
            analytic = float(sr.grad.flat[index])
            numeric = central_diff(forward, sr.data, int(index), h=1e-2)
            assert abs(analytic - numeric) <= 1e-2 * max(abs(analytic), abs(numeric))


class TestRagan:
    def test_symmetric_logits_give_2ln2(self):
        # a constant batch makes every logit equal the other side's mean,
        # so every relativistic term sits at sigmoid(0) = 0.5
        logits = T.Tensor(np.full((4, 1, 1, 1), 0.37, np.float32))
        d = ragan_d_loss(logits, T.Tensor(logits.data.copy()))
        g = ragan_g_loss(logits, T.Tensor(logits.data.copy()))
        assert d.item() == pytest.approx(2 * math.log(2), abs=1e-6)
        assert g.item() == pytest.approx(2 * math.log(2), abs=1e-6)
        assert symmetric_start_loss() == pytest.approx(2 * math.log(2))

    def test_perfect_discriminator_limit(self):
        c_real = T.Tensor(np.full((4, 1, 1, 1), 60.0, np.float32))
        c_fake = T.Tensor(np.full((4, 1, 1, 1), -60.0, np.float32))
        assert ragan_d_loss(c_real, c_fake).item() == pytest.approx(0.0, abs=1e-6)

    def test_extreme_logits_stay_finite(self):
        c_real = T.Tensor(np.full((2, 1, 1, 1), 500.0, np.float32))
        c_fake = T.Tensor(np.full((2, 1, 1, 1), -500.0, np.float32))
        assert np.isfinite(ragan_d_loss(c_real, c_fake).item())
        assert np.isfinite(ragan_g_loss(c_real, c_fake).item())

    def test_g_is_d_with_swapped_arguments(self):
        rng = np.random.default_rng(20)
        a = rand_tensor(rng, (4, 1, 1, 1), low=-2, high=2)
        b = rand_tensor(rng, (4, 1, 1, 1), low=-2, high=2)
        assert ragan_g_loss(a, b).item() == ragan_d_loss(b, a).item()

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            a = rand_tensor(rng, (4, 1, 1, 1), low=-3, high=3)
            b = rand_tensor(rng, (4, 1, 1, 1), low=-3, high=3)
            fast = ragan_d_loss(a, b).item()
            assert fast == pytest.approx(ragan_reference(a.data, b.data), abs=1e-6)

    def test_batch_shape_mismatch(self):
        a = rand_tensor(np.random.default_rng(22), (4, 1, 1, 1))
        b = rand_tensor(np.random.default_rng(23), (3, 1, 1, 1))
        with pytest.raises(T.ShapeError):
            ragan_d_loss(a, b)

    def test_empty_batch_unconstructible(self):
        with pytest.raises(T.ShapeError):
            T.Tensor(np.zeros((0, 1, 1, 1), np.float32))

    def test_gradients(self):
        rng = np.random.default_rng(24)
        a = rand_tensor(rng, (5, 1, 1, 1), requires_grad=True, low=-1, high=1)
        b = rand_tensor(rng, (5, 1, 1, 1), requires_grad=True, low=-1, high=1)
        check_gradients(lambda: ragan_d_loss(a, b), [a, b])


class TestPerceptualLoss:
    def test_identity_inputs_zero_loss(self):
        fe = desk_feature_extractor()
        x = rand_tensor(np.random.default_rng(25), (1, 3, 64, 64), low=0, high=1)
        assert perceptual_loss(x, T.Tensor(x.data.copy()), fe).item() == 0.0

    def test_identity_extractor_reduces_to_mae(self):
        fe = identity_feature_extractor()
        rng = np.random.default_rng(26)
        a = rand_tensor(rng, (1, 3, 16, 16), low=0, high=1)
        b = rand_tensor(rng, (1, 3, 16, 16), low=0, high=1)
        assert perceptual_loss(a, b, fe).item() == pytest.approx(
            content_loss(a, b).item(), abs=1e-7
        )

    def test_deterministic_and_frozen(self):
        rng = np.random.default_rng(27)
        a = rand_tensor(rng, (1, 3, 64, 64), low=0, high=1)
        b = rand_tensor(rng, (1, 3, 64, 64), low=0, high=1)
        v1 = perceptual_loss(a, b, desk_feature_extractor()).item()
        v2 = perceptual_loss(a, b, desk_feature_extractor()).item()
        assert v1 == v2
        fe = desk_feature_extractor()
        for p in fe.parameters():
            assert p.frozen and not p.requires_grad

    def test_gradient_flows_into_sr_only(self):
        fe = desk_feature_extractor()
        rng = np.random.default_rng(28)
        sr = rand_tensor(rng, (1, 3, 32, 32), requires_grad=True, low=0.1, high=0.9)
        hr = rand_tensor(rng, (1, 3, 32, 32), low=0, high=1)
        loss = perceptual_loss(sr, hr, fe)
        T.backward(loss)
        assert sr.grad is not None
        for p in fe.parameters():
            assert p.grad is None and p.grad_accums == 0

    def test_gradient_check(self):
        fe = desk_feature_extractor()
        rng = np.random.default_rng(29)
        sr = rand_tensor(rng, (1, 3, 32, 32), requires_grad=True, low=0.1, high=0.9)
        hr = rand_tensor(rng, (1, 3, 32, 32), low=0, high=1)
        check_gradients(
            lambda: perceptual_loss(sr, hr, fe), [sr], rng=rng,
            max_checks_per_tensor=30,
        )


class TestPerceptionTotal:
    def test_eta_zero_equals_perceptual(self):
        fe = desk_feature_extractor()
        rng = np.random.default_rng(30)
        sr = rand_tensor(rng, (1, 3, 64, 64), low=0, high=1)
        hr = rand_tensor(rng, (1, 3, 64, 64), low=0, high=1)
        logits = rand_tensor(rng, (2, 1, 1, 1))
        total = perception_total(sr, hr, logits, logits, fe, eta=0.0)
        assert total.item() == perceptual_loss(sr, hr, fe).item()

    def test_symmetric_logits_zero_feature_term(self):
        fe = desk_feature_extractor()
        x = rand_tensor(np.random.default_rng(31), (1, 3, 64, 64), low=0, high=1)
        logits = T.Tensor(np.full((3, 1, 1, 1), -0.8, np.float32))
        total = perception_total(
            x, T.Tensor(x.data.copy()), logits, T.Tensor(logits.data.copy()), fe
        )
        assert total.item() == pytest.approx(5e-3 * 2 * math.log(2), abs=1e-7)

    def test_matches_independent_summation(self):
        fe = desk_feature_extractor()
        rng = np.random.default_rng(33)
        sr = rand_tensor(rng, (1, 3, 64, 64), low=0, high=1)
        hr = rand_tensor(rng, (1, 3, 64, 64), low=0, high=1)
        cr = rand_tensor(rng, (4, 1, 1, 1))
        cf = rand_tensor(rng, (4, 1, 1, 1))
        total = perception_total(sr, hr, cr, cf, fe).item()
        expected = (
            perceptual_loss(sr, hr, fe).item()
            + 5e-3 * ragan_g_loss(cr, cf).item()
        )
        assert total == pytest.approx(expected, abs=1e-7)


class TestDiscriminator:
    def test_output_shape(self):
        d = Discriminator(DiscriminatorConfig.desk(64), seed=0)
        x = rand_tensor(np.random.default_rng(34), (7, 3, 64, 64), low=0, high=1)
        with T.no_grad():
            logits = d(x)
        assert logits.shape == (7, 1, 1, 1)

    def test_default_ladder_grids(self):
        assert DiscriminatorConfig(input_size=128).grid == 4
        assert DiscriminatorConfig(input_size=192).grid == 6

    def test_input_size_validation(self):
        with pytest.raises(ValueError):
            DiscriminatorConfig(input_size=100)
        d = Discriminator(DiscriminatorConfig.desk(64), seed=0)
        with pytest.raises(T.ShapeError):
            d(rand_tensor(np.random.default_rng(35), (1, 3, 48, 48)))

    def test_zero_weights_give_symmetric_start(self):
        d = Discriminator(DiscriminatorConfig.desk(32), seed=0)
        for p in d.parameters():
            p.data[:] = 0.0
        rng = np.random.default_rng(36)
        with T.no_grad():
            c_real = d(rand_tensor(rng, (3, 3, 32, 32), low=0, high=1))
            c_fake = d(rand_tensor(rng, (3, 3, 32, 32), low=0, high=1))
        assert np.all(c_real.data == 0.0) and np.all(c_fake.data == 0.0)
        assert ragan_d_loss(c_real, c_fake).item() == pytest.approx(
            2 * math.log(2), abs=1e-6
        )

    def test_gradients_through_conv_stages(self):
        cfg = DiscriminatorConfig(
            input_size=16, channel_ladder=((6, 1), (8, 2)), dense_width=10
        )
        d = Discriminator(cfg, seed=1)
        rng = np.random.default_rng(37)
        x = rand_tensor(rng, (2, 3, 16, 16), requires_grad=True, low=0, high=1)
        hr_like = rand_tensor(rng, (2, 3, 16, 16), low=0, high=1)

        def forward():
            return ragan_d_loss(d(hr_like), d(x))

        check_gradients(
            forward, list(d.parameters()) + [x], rng=rng, max_checks_per_tensor=25,
        )
