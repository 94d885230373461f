import numpy as np
import pytest
import torch

from crossnet.data import write_image
from crossnet.decoder import FusionDecoder, warp_pyramid
from crossnet.encoders import BicubicUpsampler, ImageEncoder, PrecomputedUpsampler, sisr_upsample
from crossnet.imaging import DomainError
from crossnet.model import init_params


def encoder(seed):
    return init_params(ImageEncoder(), seed).eval()


class TestSisr:
    def test_bicubic_shape(self):
        assert sisr_upsample(torch.rand(3, 40, 64), 8).shape == (3, 320, 512)

    def test_constant(self):
        out = sisr_upsample(torch.full((1, 3, 10, 12), 0.42), 4)
        assert (out - 0.42).abs().max() < 1e-5

    def test_bad_factor(self):
        with pytest.raises(DomainError):
            sisr_upsample(torch.rand(3, 8, 8), 3)

    def test_wrong_size_impl(self):
        def bad(lr, factor, *, sample_id=None):
            return torch.zeros(3, 5, 5)

        with pytest.raises(DomainError):
            sisr_upsample(torch.rand(3, 8, 8), 4, bad)

    def test_precomputed_passthrough(self, tmp_path):
        rng = np.random.default_rng(0)
        stored = (rng.integers(0, 256, (32, 48, 3)) / 255.0).astype(np.float32)
        write_image(tmp_path / "scene7_3_3.png", stored)
        out = sisr_upsample(torch.rand(3, 4, 6), 8, PrecomputedUpsampler(tmp_path), sample_id="scene7_3_3")
        np.testing.assert_array_equal(out.numpy().transpose(1, 2, 0), stored)

    def test_precomputed_needs_id(self, tmp_path):
        with pytest.raises(DomainError):
            PrecomputedUpsampler(tmp_path)(torch.rand(3, 4, 4), 8)

    def test_bicubic_repr(self):
        assert "Bicubic" in repr(BicubicUpsampler())


class TestEncoder:
    def test_level_sizes(self):
        with torch.no_grad():
            feats = encoder(0)(torch.rand(1, 3, 320, 512))
        assert [tuple(f.shape[1:]) for f in feats] == [
            (64, 320, 512), (64, 160, 256), (64, 80, 128), (64, 40, 64)
        ]

    def test_zero_weights_give_relu_bias(self):
        enc = ImageEncoder()
        bias = torch.linspace(-1, 1, 64)
        with torch.no_grad():
            for conv in enc.convs:
                conv.weight.zero_()
                conv.bias.copy_(bias)
            feats = enc(torch.rand(1, 3, 64, 64))
        for f in feats:
            expected = bias.clamp(min=0).view(1, 64, 1, 1).expand_as(f)
            assert torch.equal(f, expected)

    def test_independent_encoders_differ(self):
        x = torch.rand(1, 3, 64, 64)
        with torch.no_grad():
            a, b = encoder(1)(x), encoder(2)(x)
        assert all(not torch.allclose(u, v) for u, v in zip(a, b))

    def test_wrong_channels(self):
        with pytest.raises(DomainError):
            encoder(0)(torch.rand(1, 4, 32, 32))

    def test_flat_image_gives_flat_features(self):
        with torch.no_grad():
            feats = encoder(4)(torch.full((1, 3, 64, 96), 0.7))
        for f in feats:
            spread = f.amax(dim=(-2, -1)) - f.amin(dim=(-2, -1))
            assert spread.max() < 1e-6

    @pytest.mark.parametrize("level", [1, 2, 3])
    def test_translation_covariance(self, level):
        enc = encoder(5).double()
        g = torch.Generator().manual_seed(level)
        big = torch.rand(1, 3, 160, 160, generator=g, dtype=torch.float64)
        shift = 2**level
        a = big[..., :128, :128]
        b = big[..., :128, shift : 128 + shift]
        with torch.no_grad():
            fa, fb = enc(a)[level], enc(b)[level]
        # fb[x] sees the input shifted by 2^level, i.e. fa[x + 1], on the interior
        m = 4
        diff = fb[..., m:-m, m : -m - 1] - fa[..., m:-m, m + 1 : -m]
        assert diff.abs().max() < 1e-4


class TestWarpPyramid:
    def feats(self):
        g = torch.Generator().manual_seed(0)
        return [torch.rand(1, 64, 64 >> i, 96 >> i, generator=g) for i in range(4)]

    def test_zero_flow_identity(self):
        feats = self.feats()
        flows = [torch.zeros(1, 2, *f.shape[-2:]) for f in feats]
        for a, b in zip(warp_pyramid(feats, flows), feats):
            assert (a - b).abs().max() < 1e-6

    def test_shapes_preserved(self):
        feats = self.feats()
        flows = [torch.randn(1, 2, *f.shape[-2:]) for f in feats]
        assert [f.shape for f in warp_pyramid(feats, flows)] == [f.shape for f in feats]

    def test_mismatch(self):
        feats = self.feats()
        flows = [torch.zeros(1, 2, 4, 4) for _ in feats]
        with pytest.raises(DomainError):
            warp_pyramid(feats, flows)

    def test_shift_oracle_through_encoder(self):
        # reference content sits d px to the right of the LR content; flow 2^-i * d at level i realigns it
        enc = encoder(9).double()
        d = 8
        g = torch.Generator().manual_seed(4)
        lr_img = torch.rand(1, 3, 192, 256, generator=g, dtype=torch.float64)
        ref_img = lr_img.roll(d, dims=-1)
        with torch.no_grad():
            lr_f, ref_f = enc(lr_img), enc(ref_img)
            flows = [torch.zeros(1, 2, *f.shape[-2:], dtype=torch.float64) for f in lr_f]
            for i, f in enumerate(flows):
                f[:, 0] = d / 2**i
            warped = warp_pyramid(ref_f, flows)
        for i, (a, b) in enumerate(zip(warped, lr_f)):
            m = 4 + (d >> i) + 2
            assert (a - b)[..., m:-m, m:-m].abs().max() < 1e-9, i


class TestDecoder:
    def pyramids(self, h=64, w=96, seed=0):
        g = torch.Generator().manual_seed(seed)
        return ([torch.rand(1, 64, h >> i, w >> i, generator=g) for i in range(4)],
                [torch.rand(1, 64, h >> i, w >> i, generator=g) for i in range(4)])

    def test_output_shape(self):
        dec = init_params(FusionDecoder(), 0)
        lr_f, ref_f = self.pyramids(320, 512)
        with torch.no_grad():
            assert dec(lr_f, ref_f).shape == (1, 3, 320, 512)

    def test_zero_head_constant_output(self):
        dec = init_params(FusionDecoder(), 0)
        with torch.no_grad():
            dec.predict.weight.zero_()
            dec.predict.bias.fill_(0.5)
            out = dec(*self.pyramids())
        assert torch.equal(out, torch.full_like(out, 0.5))

    def test_channel_mismatch(self):
        dec = FusionDecoder()
        lr_f, ref_f = self.pyramids()
        with pytest.raises(DomainError):
            dec([f[:, :32] for f in lr_f], [f[:, :32] for f in ref_f])

    def test_receptive_field_of_finest_reference_level(self):
        # F_REF^(0) enters only the post-fusion head: three 5x5 convs -> radius 6
        dec = init_params(FusionDecoder(), 2).double()
        lr_f, ref_f = self.pyramids(64, 64)
        lr_f = [f.double() for f in lr_f]
        ref_f = [f.double().requires_grad_(i == 0) for i, f in enumerate(ref_f)]
        out = dec(lr_f, ref_f)
        out.sum().backward()
        grad = ref_f[0].grad[0].abs().sum(0)
        probe_y, probe_x = 30, 33
        out2 = dec(lr_f, ref_f)
        # perturbation test: the influence region of one input pixel
        with torch.no_grad():
            bumped = [f.detach().clone() for f in ref_f]
            bumped[0][0, :, probe_y, probe_x] += 1.0
            delta = (dec(lr_f, bumped) - out2).abs().sum(1)[0]
        ys, xs = torch.nonzero(delta > 0, as_tuple=True)
        radius = 3 * (5 // 2)
        assert ys.numel() > 0
        assert (ys - probe_y).abs().max() <= radius
        assert (xs - probe_x).abs().max() <= radius
        assert grad.sum() > 0
