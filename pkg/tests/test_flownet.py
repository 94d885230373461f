import colorsys
import math

import numpy as np
import pytest
import torch

from crossnet.flownet import FlowNetS, FlowNetSPlus, flow_to_color, upsample_flow
from crossnet.imaging import DomainError
from crossnet.model import count_params, init_params


@pytest.fixture(scope="module")
def flownet():
    torch.manual_seed(0)
    return init_params(FlowNetSPlus(), seed=1).eval()


def test_pyramid_shapes_320x512(flownet):
    x = torch.rand(1, 3, 320, 512)
    with torch.no_grad():
        flows = flownet(x, x)
    assert [tuple(f.shape[-2:]) for f in flows] == [
        (320, 512), (160, 256), (80, 128), (40, 64), (20, 32), (10, 16)
    ]
    assert all(f.shape[1] == 2 for f in flows)


def test_identical_inputs_finite(flownet):
    x = torch.rand(2, 3, 64, 96)
    with torch.no_grad():
        flows = flownet(x, x)
    assert all(torch.isfinite(f).all() for f in flows)


def test_deterministic(flownet):
    a, b = torch.rand(1, 3, 64, 64), torch.rand(1, 3, 64, 64)
    with torch.no_grad():
        f1, f2 = flownet(a, b), flownet(a, b)
    assert all(torch.equal(x, y) for x, y in zip(f1, f2))


@pytest.mark.parametrize("shape", [(1, 3, 64, 80), (1, 3, 48, 64)])
def test_rejects_non_multiple_of_32(flownet, shape):
    x = torch.rand(*shape)
    with pytest.raises(DomainError):
        flownet(x, x)


def test_rejects_size_mismatch(flownet):
    with pytest.raises(DomainError):
        flownet(torch.rand(1, 3, 64, 64), torch.rand(1, 3, 64, 96))


def test_refinement_concat_structure():
    net = FlowNetSPlus()
    # each predictor sees (deconv features, skip features, upsampled coarser flow)
    assert net.predict_flow4.in_channels == 512 + 512 + 2
    assert net.predict_flow3.in_channels == 256 + 256 + 2
    assert net.predict_flow2.in_channels == 128 + 128 + 2
    assert net.predict_flow1.in_channels == 128 + 64 + 2
    assert net.predict_flow0.in_channels == 64 + 6 + 2
    assert net.deconv1[0].in_channels == net.predict_flow2.in_channels
    assert net.deconv0[0].in_channels == net.predict_flow1.in_channels


def test_plus_is_about_two_percent_larger():
    base, plus = count_params(FlowNetS()), count_params(FlowNetSPlus())
    ratio = plus / base
    assert 1.01 <= ratio <= 1.04
    # reference sizes: 31.9M vs 32.6M
    assert ratio == pytest.approx(32.6 / 31.9, abs=0.01)


def test_gradient_reaches_first_layer(flownet):
    net = FlowNetSPlus()
    init_params(net, seed=3)
    a, b = torch.rand(1, 3, 64, 64), torch.rand(1, 3, 64, 64)
    flows = net(a, b)
    flows[0][0, 0, 30, 30].backward()
    assert net.conv1[0].weight.grad.abs().sum() > 0


class TestUpsampleFlow:
    def test_constant_rescaled(self):
        flow = torch.stack([torch.full((5, 7), 3.0), torch.full((5, 7), -1.0)])
        out = upsample_flow(flow, scale_index=1)
        assert out.shape == (2, 10, 14)
        assert torch.allclose(out[0], torch.full((10, 14), 6.0))
        assert torch.allclose(out[1], torch.full((10, 14), -2.0))

    def test_shape(self):
        assert upsample_flow(torch.zeros(1, 2, 40, 64)).shape == (1, 2, 80, 128)

    def test_scale_zero_rejected(self):
        with pytest.raises(DomainError):
            upsample_flow(torch.zeros(2, 4, 4), scale_index=0)

    def test_twice_matches_single_x4(self):
        # linear field: bilinear upsampling is exact away from the clamped border
        ys, xs = torch.meshgrid(torch.arange(16.0), torch.arange(20.0), indexing="ij")
        flow = torch.stack([0.05 * xs - 0.02 * ys, 0.03 * ys + 0.01 * xs]).double()
        twice = upsample_flow(upsample_flow(flow))
        once = 4.0 * torch.nn.functional.interpolate(flow[None], scale_factor=4, mode="bilinear")[0]
        m = 8
        assert (twice - once)[:, m:-m, m:-m].abs().max() < 1e-5


class TestFlowToColor:
    def test_zero_is_white(self):
        img = flow_to_color(torch.zeros(2, 4, 5), 1.0)
        np.testing.assert_allclose(img, 1.0)

    def test_full_magnitude_zero_direction(self):
        img = flow_to_color(np.array([[[2.0]], [[0.0]]]), 2.0)
        np.testing.assert_allclose(img[0, 0], colorsys.hsv_to_rgb(0.0, 1.0, 1.0))

    @pytest.mark.parametrize("theta", [0.3, 1.1, 2.5, 4.0])
    def test_opposite_direction_is_complementary_hue(self, theta):
        u, v = math.cos(theta), math.sin(theta)
        a = flow_to_color(np.array([[[u]], [[v]]]), 1.0)[0, 0]
        b = flow_to_color(np.array([[[-u]], [[-v]]]), 1.0)[0, 0]
        np.testing.assert_allclose(a, colorsys.hsv_to_rgb(theta / (2 * math.pi), 1, 1), atol=1e-9)
        np.testing.assert_allclose(b, colorsys.hsv_to_rgb((theta / (2 * math.pi) + 0.5) % 1, 1, 1), atol=1e-9)
        # fully saturated complementary colours sum to white
        np.testing.assert_allclose(a + b, 1.0, atol=1e-9)

    def test_bad_max(self):
        with pytest.raises(DomainError):
            flow_to_color(torch.zeros(2, 2, 2), 0.0)
