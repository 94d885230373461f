"""Registered oracle cases and the runner behind ``python -m crossnet.oracles``.

Each case draws seeded inputs, computes the expected answer independently
of the package (NumPy brute force, closed forms, layer geometry), runs the
implementation through a swappable namespace, and reduces the comparison
to one error number checked against a tolerance. Swapping a function in
the namespace is how mutation checks inject bugs.
"""

from __future__ import annotations

import argparse
import colorsys
import csv
import math
import sys
import time
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Any, Callable

import numpy as np
import torch

__all__ = ["OracleCase", "CaseResult", "SuiteReport", "REGISTRY", "default_impl", "run_suite", "main"]

SUITE_BUDGET_S = 15 * 60


@dataclass(frozen=True)
class OracleCase:
    name: str
    generator: Callable[[np.random.Generator], Any]
    oracle: Callable[[Any], Any]
    measure: Callable[[Any, Any, SimpleNamespace], float]
    tolerance: float
    tags: frozenset = frozenset()
    claim: str = ""


@dataclass
class CaseResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    seconds: float
    detail: str = ""


@dataclass
class SuiteReport:
    results: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            out.append(f"{status} {r.name}: error {r.error:.3g} (tolerance {r.tolerance:.3g}) [{r.seconds:.1f} s]"
                       + (f" {r.detail}" if r.detail else ""))
        n_fail = sum(not r.passed for r in self.results)
        out.append(f"{len(self.results) - n_fail}/{len(self.results)} passed in {self.seconds:.1f} s")
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "error", "tolerance", "passed", "seconds", "detail"])
            for r in self.results:
                w.writerow([r.name, f"{r.error:.6g}", f"{r.tolerance:.6g}", int(r.passed), f"{r.seconds:.2f}", r.detail])


def default_impl() -> SimpleNamespace:
    """The package functions the cases exercise."""
    from . import data, decoder, encoders, flownet, imaging, metrics, model, smoke, tiling, training

    return SimpleNamespace(
        bilinear_sample=imaging.bilinear_sample,
        warp=imaging.warp,
        pad_to_multiple=imaging.pad_to_multiple,
        upsample_flow=flownet.upsample_flow,
        flow_to_color=flownet.flow_to_color,
        ImageEncoder=encoders.ImageEncoder,
        FusionDecoder=decoder.FusionDecoder,
        warp_pyramid=decoder.warp_pyramid,
        init_params=model.init_params,
        build_model=model.build_model,
        CrossNetConfig=model.CrossNetConfig,
        super_resolve=model.super_resolve,
        charbonnier_loss=metrics.charbonnier_loss,
        psnr=metrics.psnr,
        ssim_maps=metrics.ssim_maps,
        make_lr=data.make_lr,
        LightField=data.LightField,
        sample_training_pair=data.sample_training_pair,
        augment_parallax=data.augment_parallax,
        adam_step=training.adam_step,
        AdamState=training.AdamState,
        sliding_window_sr=tiling.sliding_window_sr,
        TileSpec=tiling.TileSpec,
        run_smoke=smoke.run_smoke,
        smoke_fixture=smoke.smoke_fixture,
        smoke_metrics=smoke.smoke_metrics,
        smoothed=smoke.smoothed,
    )


# ---------------------------------------------------------------- reference code


def np_bilinear_clamped(src: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Clamp-to-edge bilinear lookup of a (C, H, W) array at float positions."""
    c, h, w = src.shape
    x = np.clip(x, 0, w - 1)
    y = np.clip(y, 0, h - 1)
    x0 = np.clip(np.floor(x).astype(int), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(y).astype(int), 0, max(h - 2, 0))
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    ax, ay = x - x0, y - y0
    return (src[:, y0, x0] * (1 - ax) * (1 - ay) + src[:, y0, x1] * ax * (1 - ay)
            + src[:, y1, x0] * (1 - ax) * ay + src[:, y1, x1] * ax * ay)


def np_warp(src: np.ndarray, flow: np.ndarray) -> np.ndarray:
    _, h, w = src.shape
    ys, xs = np.mgrid[:h, :w].astype(np.float64)
    return np_bilinear_clamped(src, xs + flow[0], ys + flow[1])


def np_upsample2_values(field_: np.ndarray, factor: int) -> np.ndarray:
    """Half-pixel-centre bilinear upsampling by ``factor`` with edge clamping, values scaled by ``factor``."""
    c, h, w = field_.shape
    oy = (np.arange(h * factor) + 0.5) / factor - 0.5
    ox = (np.arange(w * factor) + 0.5) / factor - 0.5
    yy, xx = np.meshgrid(oy, ox, indexing="ij")
    return factor * np_bilinear_clamped(field_, xx, yy)


def gaussian_1d(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def np_blur_valid(img: np.ndarray) -> np.ndarray:
    g = gaussian_1d()
    k = len(g)
    h, w = img.shape
    rows = np.stack([img[:, j : j + k] @ g for j in range(w - k + 1)], axis=1)
    return np.stack([g @ rows[i : i + k] for i in range(h - k + 1)], axis=0)


def _chi2_z(counts: np.ndarray) -> float:
    """|chi-square - dof| / sd for counts against a uniform multinomial."""
    n, k = counts.sum(), counts.size
    expected = n / k
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    dof = k - 1
    return abs(chi2 - dof) / math.sqrt(2 * dof)


def _t64(a) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(a)).double()


# ---------------------------------------------------------------- imaging


def _case_bilinear_2x2():
    def gen(rng):
        return np.array([[[1.0, 2.0], [3.0, 5.0]]]), (0.5, 0.5)

    def oracle(inp):
        return (1 + 2 + 3 + 5) / 4

    def measure(inp, expected, impl):
        src, (x, y) = inp
        out = impl.bilinear_sample(_t64(src), torch.tensor([x, y], dtype=torch.float64).view(2, 1, 1))
        return abs(out.item() - expected)

    return OracleCase("bilinear_2x2_centre", gen, oracle, measure, 1e-12, frozenset({"warp", "imaging"}),
                      "sampling [[1,2],[3,5]] at (0.5, 0.5) gives 2.75")


def _case_warp_shift():
    shifts = [(s, 0) for s in (1, -1, 3, -3, 7, -7)] + [(0, s) for s in (1, -1, 3, -3, 7, -7)] + [(3, -7)]

    def gen(rng):
        return rng.random((2, 17, 23)), shifts

    def oracle(inp):
        src, sh = inp
        _, h, w = src.shape
        ys, xs = np.mgrid[:h, :w]
        return [src[:, np.clip(ys + dy, 0, h - 1), np.clip(xs + dx, 0, w - 1)] for dx, dy in sh]

    def measure(inp, expected, impl):
        src, sh = inp
        err = 0.0
        for (dx, dy), exp in zip(sh, expected):
            flow = torch.zeros(2, *src.shape[-2:], dtype=torch.float64)
            flow[0], flow[1] = dx, dy
            err = max(err, float(np.abs(impl.warp(_t64(src), flow).numpy() - exp).max()))
        return err

    return OracleCase("warp_integer_shift", gen, oracle, measure, 0.0, frozenset({"warp", "imaging"}),
                      "integer flows reproduce exact shifts; border pixels clamp")


def _case_warp_fd():
    def gen(rng):
        ys, xs = np.mgrid[:12, :14].astype(np.float64)
        src = np.stack([np.sin(0.4 * xs + 0.3 * ys), np.cos(0.25 * xs - 0.5 * ys)])
        # fractional parts kept in [0.2, 0.8] so the +-1e-3 probes never cross a lattice line
        flow = np.floor(rng.uniform(-2, 2, (2, 12, 14))) + rng.uniform(0.2, 0.8, (2, 12, 14))
        probes = [(int(rng.integers(2)), int(rng.integers(2, 10)), int(rng.integers(2, 12))) for _ in range(20)]
        weights = rng.standard_normal((2, 12, 14))
        return src, flow, probes, weights

    def oracle(inp):
        src, flow, probes, weights = inp
        h = 1e-3
        grads = []
        for ch, y, x in probes:
            fp, fm = flow.copy(), flow.copy()
            fp[ch, y, x] += h
            fm[ch, y, x] -= h
            grads.append(((np_warp(src, fp) * weights).sum() - (np_warp(src, fm) * weights).sum()) / (2 * h))
        return np.array(grads)

    def measure(inp, expected, impl):
        src, flow, probes, weights = inp
        f = _t64(flow).requires_grad_()
        (impl.warp(_t64(src), f) * _t64(weights)).sum().backward()
        got = np.array([f.grad[ch, y, x].item() for ch, y, x in probes])
        return float((np.abs(got - expected) / np.maximum(np.abs(expected), 1e-3)).max())

    return OracleCase("warp_flow_gradient_fd", gen, oracle, measure, 1e-3, frozenset({"warp", "imaging"}),
                      "flow gradient matches centred finite differences")


def _case_pad_size():
    def gen(rng):
        return (376, 541)

    def oracle(inp):
        return tuple(math.ceil(s / 32) * 32 for s in inp)

    def measure(inp, expected, impl):
        padded, record = impl.pad_to_multiple(torch.zeros(3, *inp), 32)
        size_ok = tuple(padded.shape[-2:]) == expected
        return 0.0 if size_ok and (record.height, record.width) == inp else 1.0

    return OracleCase("pad_to_32", gen, oracle, measure, 0.0, frozenset({"warp", "imaging"}),
                      "376x541 pads to 384x544")


# ---------------------------------------------------------------- flow estimator


def _case_upsample_compose():
    def gen(rng):
        a = rng.uniform(-0.1, 0.1, (2, 3))
        ys, xs = np.mgrid[:16, :20].astype(np.float64)
        return np.stack([a[i, 0] * xs + a[i, 1] * ys + a[i, 2] for i in range(2)])

    def oracle(inp):
        return np_upsample2_values(inp, 4)

    def measure(inp, expected, impl):
        got = impl.upsample_flow(impl.upsample_flow(_t64(inp), 5), 4).numpy()
        m = 8
        return float(np.abs(got - expected)[:, m:-m, m:-m].max())

    return OracleCase("flow_upsample_compose", gen, oracle, measure, 1e-5, frozenset({"flow"}),
                      "two x2 flow upsamplings equal one x4 upsampling on smooth fields")


def _case_color_wheel():
    def gen(rng):
        return rng.uniform(0, 2 * math.pi, 16)

    def oracle(thetas):
        return np.array([colorsys.hsv_to_rgb(((t + math.pi) / (2 * math.pi)) % 1.0, 1.0, 1.0) for t in thetas])

    def measure(thetas, expected, impl):
        flow = np.stack([-np.cos(thetas), -np.sin(thetas)])[:, None, :]
        got = impl.flow_to_color(flow, 1.0)[0]
        return float(np.abs(got - expected).max())

    return OracleCase("flow_color_complementary", gen, oracle, measure, 1e-9, frozenset({"flow"}),
                      "a flow rotated by 180 degrees gets the complementary hue")


# ---------------------------------------------------------------- encoders / decoder


def _case_encoder_shift():
    d = 8

    def gen(rng):
        return rng.random((1, 3, 192, 256))

    def oracle(img):
        # level i of the LR pyramid sees the reference content d / 2^i pixels to the left
        return [d / 2**i for i in range(4)]

    def measure(img, expected, impl):
        torch.manual_seed(0)
        enc = impl.init_params(impl.ImageEncoder(), 9).double().eval()
        lr_img = _t64(img)
        ref_img = torch.roll(lr_img, d, dims=-1)
        with torch.no_grad():
            lr_f, ref_f = enc(lr_img), enc(ref_img)
            flows = []
            for level, f in enumerate(lr_f):
                flow = torch.zeros(1, 2, *f.shape[-2:], dtype=torch.float64)
                flow[:, 0] = expected[level]
                flows.append(flow)
            warped = impl.warp_pyramid(ref_f, flows)
        err = 0.0
        for level, (a, b) in enumerate(zip(warped, lr_f)):
            m = 6 + (d >> level)
            err = max(err, float((a - b)[..., m:-m, m:-m].abs().max()))
        return err

    return OracleCase("encoder_shift_alignment", gen, oracle, measure, 1e-9, frozenset({"encoder"}),
                      "per-level flow d/2^i aligns encoded shifted pyramids")


def _case_decoder_receptive_field():
    def gen(rng):
        g = torch.Generator().manual_seed(int(rng.integers(1 << 31)))
        lr = [torch.rand(1, 64, 64 >> i, 64 >> i, generator=g, dtype=torch.float64) for i in range(4)]
        ref = [torch.rand(1, 64, 64 >> i, 64 >> i, generator=g, dtype=torch.float64) for i in range(4)]
        return lr, ref, (30, 33)

    def oracle(inp):
        # finest reference level feeds three 5x5 convolutions
        return 3 * (5 // 2)

    def measure(inp, radius, impl):
        lr, ref, (py, px) = inp
        dec = impl.init_params(impl.FusionDecoder(), 2).double().eval()
        bumped = [r.clone() for r in ref]
        bumped[0][0, :, py, px] += 1.0
        with torch.no_grad():
            delta = (dec(lr, bumped) - dec(lr, ref)).abs().sum(1)[0]
        ys, xs = torch.nonzero(delta > 0, as_tuple=True)
        if ys.numel() == 0:
            return float("inf")
        reach = max(int((ys - py).abs().max()), int((xs - px).abs().max()))
        return float(max(0, reach - radius))

    return OracleCase("decoder_receptive_field", gen, oracle, measure, 0.0, frozenset({"decoder"}),
                      "a finest-level reference pixel influences the output only within radius 6")


# ---------------------------------------------------------------- metrics


def _case_charbonnier_grad():
    def gen(rng):
        return [0.0, 1e-3]

    def oracle(diffs):
        eps = 1e-3
        return [d / math.sqrt(d * d + eps * eps) for d in diffs]

    def measure(diffs, expected, impl):
        err = 0.0
        for d, e in zip(diffs, expected):
            p = torch.tensor([d], dtype=torch.float64, requires_grad=True)
            impl.charbonnier_loss(p, torch.zeros(1, dtype=torch.float64)).backward()
            err = max(err, abs(p.grad.item() - e))
        return err

    return OracleCase("charbonnier_gradient", gen, oracle, measure, 1e-12, frozenset({"metrics"}),
                      "gradient 0 at zero diff, 1/sqrt(2) at diff = eps")


def _case_psnr_brute():
    def gen(rng):
        return rng.random((3, 20, 30)), rng.random((3, 20, 30))

    def oracle(inp):
        a, b = inp
        mse = sum(float(v) ** 2 for v in (a - b).ravel()) / a.size
        return 10 * math.log10(1 / mse)

    def measure(inp, expected, impl):
        return abs(impl.psnr(inp[0], inp[1]) - expected)

    return OracleCase("psnr_brute_force", gen, oracle, measure, 1e-9, frozenset({"metrics"}),
                      "PSNR agrees with a direct MSE computation")


def _case_ssim_negative():
    a, b = 0.2, 0.8

    def gen(rng):
        yy, xx = np.mgrid[:32, :32]
        return np.where((yy + xx) % 2 == 0, a, b)[None].astype(np.float64)

    def oracle(x):
        # y = 1 - x gives cov = -var and equal variances; the local variance
        # follows from the share p of window weight on one colour
        g = gaussian_1d()
        e = g[::2].sum() if len(g) % 2 else g[0::2].sum()
        p = e * e + (1 - e) * (1 - e)
        var = p * (1 - p) * (a - b) ** 2
        c2 = 0.03**2
        return (-2 * var + c2) / (2 * var + c2)

    def measure(x, expected, impl):
        _, cs = impl.ssim_maps(x, 1 - x)
        return float(np.abs(cs.numpy() - expected).max())

    return OracleCase("ssim_checkerboard_negative", gen, oracle, measure, 1e-9, frozenset({"metrics"}),
                      "x vs 1-x on a checkerboard: structure term equals the hand-evaluated negative value")


def _case_ssim_bias():
    def gen(rng):
        return 0.3 + 0.4 * rng.random((32, 32))

    def oracle(x):
        c1 = 0.01**2
        mu = np_blur_valid(x)
        return (2 * mu * (mu + 0.1) + c1) / (mu**2 + (mu + 0.1) ** 2 + c1)

    def measure(x, lum_expected, impl):
        lum, cs = impl.ssim_maps(x[None], x[None] + 0.1)
        return max(float(np.abs(cs.numpy() - 1.0).max()), float(np.abs(lum.numpy()[0] - lum_expected).max()))

    return OracleCase("ssim_bias_term_split", gen, oracle, measure, 1e-9, frozenset({"metrics"}),
                      "a uniform +0.1 bias changes only the luminance term")


# ---------------------------------------------------------------- data


def _case_antialias():
    n, scale = 512, 8
    mults = (1.5, 2.0, 3.0)

    def gen(rng):
        phase = rng.uniform(0, 2 * math.pi)
        nyq = 0.5 / scale
        xs = np.arange(n)
        return [np.tile(0.5 + 0.4 * np.cos(2 * math.pi * m * nyq * xs + phase), (3, n, 1)) for m in mults]

    def oracle(images):
        return 0.4  # input amplitude

    def measure(images, amp_in, impl):
        worst = 0.0
        for img in images:
            out = impl.make_lr(_t64(img), scale).numpy()
            row = out[0, out.shape[1] // 2]
            spec = np.abs(np.fft.rfft(row - row.mean())) * 2 / len(row)
            worst = max(worst, float(spec.max()) / amp_in)
        return worst

    return OracleCase("make_lr_antialias", gen, oracle, measure, 0.1, frozenset({"data"}),
                      "sinusoids at 1.5-3x the target Nyquist are attenuated more than 10x")


def _case_angular_uniform():
    draws = 10_000

    def gen(rng):
        return int(rng.integers(1 << 31))

    def oracle(seed):
        return 3.0  # |chi-square z| bound

    def measure(seed, bound, impl):
        lf = impl.LightField("u", torch.zeros(8, 8, 3, 8, 8))
        rng = np.random.default_rng(seed)
        lr_counts, ref_counts = np.zeros(64), np.zeros(64)
        for _ in range(draws):
            p = impl.sample_training_pair(lf, 8, rng)
            lr_counts[p.lr_pos[0] * 8 + p.lr_pos[1]] += 1
            ref_counts[p.ref_pos[0] * 8 + p.ref_pos[1]] += 1
        return max(_chi2_z(lr_counts), _chi2_z(ref_counts))

    return OracleCase("angular_sampling_uniform", gen, oracle, measure, 3.0, frozenset({"data"}),
                      "LR/ref angular positions are uniform over 64 cells (chi-square within 3 sd)")


def _case_parallax_uniform():
    draws = 10_000

    def gen(rng):
        return int(rng.integers(1 << 31))

    def oracle(seed):
        return 3.0

    def measure(seed, bound, impl):
        from .data import SamplePair

        # a ramp reference reveals the drawn offset at its centre pixel
        h = w = 64
        ys, xs = np.mgrid[:h, :w]
        ref = torch.from_numpy(np.stack([xs, ys, ys * 0]).astype(np.float64))
        pair = SamplePair(torch.zeros(3, 8, 8), ref, torch.zeros(3, 64, 64), (0, 0), (0, 0), 8)
        rng = np.random.default_rng(seed)
        counts = np.zeros((31, 31))
        outside = 0
        for _ in range(draws):
            out = impl.augment_parallax(pair, rng).ref
            dx, dy = 32 - int(out[0, 32, 32]), 32 - int(out[1, 32, 32])
            if abs(dx) > 15 or abs(dy) > 15:
                outside += 1
                continue
            counts[dy + 15, dx + 15] += 1
        return float("inf") if outside else _chi2_z(counts.ravel())

    return OracleCase("parallax_offsets_uniform", gen, oracle, measure, 3.0, frozenset({"data"}),
                      "reference offsets are uniform over [-15, 15]^2 (chi-square within 3 sd)")


# ---------------------------------------------------------------- training


def _case_adam_fixed_point():
    def gen(rng):
        return rng.uniform(0.05, 5.0, 8) * rng.choice([-1.0, 1.0], 8)

    def oracle(g):
        return np.sign(g)

    def measure(g, expected, impl):
        lr = 1e-3
        params = {"w": torch.zeros(len(g), dtype=torch.float64)}
        grads = {"w": _t64(g)}
        state = impl.AdamState()
        for _ in range(500):
            before = params["w"].clone()
            impl.adam_step(params, grads, state, lr)
        step = (before - params["w"]).numpy() / lr
        return float(np.abs(step - expected).max())

    return OracleCase("adam_constant_gradient", gen, oracle, measure, 1e-5, frozenset({"training"}),
                      "under a constant gradient each Adam step tends to lr * sign(g)")


# ---------------------------------------------------------------- smoke-trained model


def _smoke_state(impl):
    run = impl.run_smoke()
    return run, impl.smoke_metrics(run.model, impl.smoke_fixture())


_SMOKE_MEMO: dict = {}


def _memo_smoke(impl):
    key = id(impl.run_smoke)
    if key not in _SMOKE_MEMO:
        _SMOKE_MEMO[key] = _smoke_state(impl)
    return _SMOKE_MEMO[key]


def _case_smoke_ref_hr_vs_bicubic():
    def gen(rng):
        return None

    def oracle(_):
        return 3.0  # dB margin over bicubic

    def measure(_, margin, impl):
        _, m = _memo_smoke(impl)
        return margin - (m["ref_hr"] - m["bicubic"])

    return OracleCase("smoke_zero_parallax_beats_bicubic_3db", gen, oracle, measure, 0.0,
                      frozenset({"model", "smoke"}),
                      "with ref = HR the smoke model beats bicubic by at least 3 dB")


def _case_smoke_loss_trend():
    def gen(rng):
        return None

    def oracle(_):
        return -0.6  # Kendall tau bound for the block-mean trend

    def measure(_, bound, impl):
        from scipy.stats import kendalltau

        run, _ = _memo_smoke(impl)
        blocks = np.array_split(np.asarray(run.losses), 10)
        means = [b.mean() for b in blocks]
        tau = kendalltau(np.arange(len(means)), means).statistic
        return float(tau - bound)

    return OracleCase("smoke_loss_trend", gen, oracle, measure, 0.0, frozenset({"training", "smoke"}),
                      "block-averaged smoke loss trends down (Kendall tau <= -0.6)")


def _case_smoke_eval_vs_bicubic():
    def gen(rng):
        return None

    def oracle(_):
        return 0.0

    def measure(_, margin, impl):
        _, m = _memo_smoke(impl)
        return m["bicubic"] - m["ref_hr"] + margin

    return OracleCase("smoke_eval_ref_hr_above_bicubic", gen, oracle, measure, 0.0,
                      frozenset({"training", "smoke"}),
                      "evaluating with ref = HR on the training targets beats bicubic")


def _case_flow_viz_hue():
    def gen(rng):
        return None

    def oracle(_):
        # the four two-step pairs point right, left, down and up; hue is the flow angle over a full turn
        from .smoke import SMOKE_PAIRS

        hues = {}
        for i in range(4, 8):
            (lr_r, lr_c), (ref_r, ref_c) = SMOKE_PAIRS[i]
            hues[i] = (math.atan2(ref_r - lr_r, ref_c - lr_c) / (2 * math.pi)) % 1.0
        return hues

    def measure(_, hues, impl):
        run, _ = _memo_smoke(impl)
        fixture = impl.smoke_fixture()
        worst = 0.0
        for i, hue_expected in hues.items():
            pair = fixture[i]
            _, flows = impl.super_resolve(run.model, pair.lr, pair.ref)
            for level in range(4):
                flow = flows[level].numpy()
                rgb = impl.flow_to_color(flow, max(float(np.abs(flow).max()), 1e-6))
                h, w = rgb.shape[:2]
                centre = rgb[h // 4 : h - h // 4, w // 4 : w - w // 4].reshape(-1, 3)
                hues_px = np.array([colorsys.rgb_to_hsv(*px)[0] for px in centre])
                # circular mean of the hue angle
                ang = np.angle(np.exp(2j * np.pi * hues_px).mean()) / (2 * np.pi)
                worst = max(worst, abs((ang - hue_expected + 0.5) % 1.0 - 0.5))
        return worst

    return OracleCase("flow_viz_dominant_hue", gen, oracle, measure, 1 / 12, frozenset({"cli", "smoke"}),
                      "dominant hue at scales 0-3 matches each injected shift direction within 30 degrees")


# ---------------------------------------------------------------- tiling


def _case_tiling_constant():
    def gen(rng):
        return float(rng.uniform(0.1, 0.9))

    def oracle(value):
        return None  # direct forward is computed in measure from the same params

    def measure(value, _, impl):
        model = impl.build_model(impl.CrossNetConfig(scale_factor=8), 0).eval()
        lr, ref = torch.full((3, 64, 96), value), torch.full((3, 512, 768), value)
        direct = impl.super_resolve(model, lr, ref)[0]
        tiled = impl.sliding_window_sr(model, lr, ref, impl.TileSpec())
        return float((tiled - direct).abs().max())

    return OracleCase("tiling_constant_input", gen, oracle, measure, 1e-5, frozenset({"tiling", "cli"}),
                      "tiled output equals the direct forward on constant inputs")


REGISTRY: list[OracleCase] = [
    _case_bilinear_2x2(),
    _case_warp_shift(),
    _case_warp_fd(),
    _case_pad_size(),
    _case_upsample_compose(),
    _case_color_wheel(),
    _case_encoder_shift(),
    _case_decoder_receptive_field(),
    _case_smoke_ref_hr_vs_bicubic(),
    _case_charbonnier_grad(),
    _case_psnr_brute(),
    _case_ssim_negative(),
    _case_ssim_bias(),
    _case_antialias(),
    _case_angular_uniform(),
    _case_parallax_uniform(),
    _case_smoke_loss_trend(),
    _case_adam_fixed_point(),
    _case_smoke_eval_vs_bicubic(),
    _case_tiling_constant(),
    _case_flow_viz_hue(),
]


def run_suite(filter_tags=None, impl: SimpleNamespace | None = None, *, seed: int = 0,
              exclude_tags=None) -> SuiteReport:
    """Run every registered case carrying any of ``filter_tags`` (all when None)."""
    impl = impl or default_impl()
    wanted = set(filter_tags or ())
    skip = set(exclude_tags or ())
    report = SuiteReport()
    t_suite = time.perf_counter()
    for i, case in enumerate(REGISTRY):
        if wanted and not (wanted & case.tags):
            continue
        if skip & case.tags:
            continue
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        try:
            inputs = case.generator(rng)
            expected = case.oracle(inputs)
            error = float(case.measure(inputs, expected, impl))
            detail = ""
        except Exception as exc:  # noqa: BLE001 - a crash is a failed case
            error, detail = float("inf"), f"{type(exc).__name__}: {exc}"
        passed = error <= case.tolerance
        report.results.append(CaseResult(case.name, error, case.tolerance, passed, time.perf_counter() - t0, detail))
    report.seconds = time.perf_counter() - t_suite
    return report


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m crossnet.oracles", description="Run the oracle suite.")
    p.add_argument("--tags", nargs="*", help="only cases carrying one of these tags")
    p.add_argument("--exclude", nargs="*", help="skip cases carrying one of these tags (e.g. smoke)")
    p.add_argument("--csv", help="also write the report as CSV")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    report = run_suite(args.tags, seed=args.seed, exclude_tags=args.exclude)
    for line in report.lines():
        print(line)
    if args.tags is None and args.exclude is None:
        print(f"suite wall time {report.seconds:.0f} s (budget {SUITE_BUDGET_S} s on a 4-core desktop)")
    if args.csv:
        report.to_csv(args.csv)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
