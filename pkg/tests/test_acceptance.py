"""End-to-end acceptance checks.

Each test prints one ``[criterion N] <name>: PASS|FAIL`` line (run with
``pytest tests/test_acceptance.py -s`` to see them live).
"""

import functools
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from pptflow import autodiff as ad
from pptflow import svgplot
from pptflow.checkpoint import load_checkpoint, save_checkpoint
from pptflow.features import WindowSample, read_flow_csv, window_split
from pptflow.fuzzy import (
    OUTPUT_LABELS,
    FuzzySystem,
    OutputPartition,
)
from pptflow.model import PPTNet, PPTNetConfig
from pptflow.periods import amplitude_spectrum, topk_periods
from pptflow.training import (
    AdamW,
    TrainConfig,
    cross_feature_series,
    grad_check,
    mse_loss,
    train,
    two_sine_series,
)

from test_autodiff import check_grad
from test_fuzzy import centroid_of_levels, exact_centroid

FIXTURES = Path(__file__).parent / "fixtures"
ARTIFACTS = Path(__file__).parent.parent / "artifacts"


def criterion(number, name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[criterion {number}] {name}: FAIL", flush=True)
                raise
            print(f"[criterion {number}] {name}: PASS", flush=True)
        return wrapper
    return decorate


def small_net(C=2, **overrides):
    base = dict(C=C, d_model=16, d_ff=32, heads=2, top_k=2,
                num_periodic_blocks=1, num_decoder_layers=1,
                T=48, H=12, kernel_sizes=(1, 3), dropout=0.0, agg_hidden=4)
    base.update(overrides)
    return PPTNetConfig(**base)


@criterion(1, "gradient suite")
def test_criterion_1_gradients():
    start = time.time()
    rng = np.random.default_rng(0)
    # individual primitives against central finite differences
    check_grad(lambda p, q: ad.matmul(p, q).sum(),
               rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 2)), tol=1e-4)
    check_grad(lambda p, q: ad.conv2d_same(p, q).sum(),
               rng.normal(size=(2, 2, 4, 3)), rng.normal(size=(3, 2, 3, 3)),
               tol=1e-4)
    sm_w = rng.normal(size=(3, 5))
    check_grad(lambda p: ad.mul(ad.softmax_lastdim(p), ad.constant(sm_w)).sum(),
               rng.normal(size=(3, 5)), tol=1e-4)
    ln_w = rng.normal(size=(2, 6))
    check_grad(
        lambda p, g, b: ad.mul(ad.layer_norm(p, g, b), ad.constant(ln_w)).sum(),
        rng.normal(size=(2, 6)), rng.normal(size=6), rng.normal(size=6),
        tol=1e-4,
    )
    fft_w = rng.normal(size=(2, 7, 2))
    check_grad(
        lambda p: ad.mul(ad.rfft_magnitudes(p, axis=1),
                         ad.constant(fft_w)).sum(),
        rng.normal(size=(2, 12, 2)), tol=1e-4,
    )
    check_grad(lambda p: ad.relu(p).sum(), rng.normal(size=(3, 4)), tol=1e-4)
    check_grad(lambda p: ad.mul(p.mean(axis=1), p.mean(axis=1)).sum(),
               rng.normal(size=(4, 5)), tol=1e-4)

    # full tiny model
    cfg = PPTNetConfig(C=3, d_model=8, d_ff=16, heads=2, top_k=2,
                       num_periodic_blocks=1, num_decoder_layers=1,
                       T=16, H=4, kernel_sizes=(1, 3), dropout=0.0,
                       agg_hidden=4)
    model = PPTNet(cfg, seed=0)
    x = rng.normal(size=(2, cfg.T, cfg.C))
    target = rng.normal(size=(2, cfg.H, cfg.C))
    worst = grad_check(model, x, target, n_coords=200, seed=0)
    assert worst < 1e-3, f"full-model worst relative error {worst}"
    assert time.time() - start < 120.0


@criterion(2, "period recovery")
def test_criterion_2_period_recovery():
    start = time.time()
    rng = np.random.default_rng(1)
    t = np.arange(96)
    sigma = 0.05
    for _ in range(50):
        n_components = rng.integers(1, 7)
        freqs = rng.choice(np.arange(1, 48), size=n_components, replace=False)
        x = rng.normal(0.0, sigma, size=96)
        for f in freqs:
            amp = rng.uniform(2 * sigma, 1.0)
            phase = rng.uniform(0, 2 * np.pi)
            x = x + amp * np.sin(2 * np.pi * f * t / 96 + phase)
        spec = amplitude_spectrum(ad.constant(x[None, :, None]))
        pset = topk_periods(spec, 6, 96)
        assert set(freqs).issubset(set(pset.freqs)), (
            f"missed frequencies: {set(freqs) - set(pset.freqs)}"
        )
    assert time.time() - start < 10.0


@criterion(3, "feature-extraction golden fixture")
def test_criterion_3_golden_features():
    from pptflow.features import build_timeseries, read_segment
    meta, tracks = read_segment(
        FIXTURES / "01_recordingMeta.csv",
        FIXTURES / "01_tracks.csv",
        FIXTURES / "01_tracksMeta.csv",
    )
    for direction in ("positive_x", "negative_x"):
        ds = build_timeseries(tracks, meta, direction)
        golden = read_flow_csv(FIXTURES / f"golden_flow_{direction}.csv")
        np.testing.assert_array_equal(ds.values, golden)


@criterion(4, "fuzzy inference oracle")
def test_criterion_4_fuzzy_oracle():
    partition = OutputPartition()
    for label in OUTPUT_LABELS:
        levels = {label: 1.0}
        assert centroid_of_levels(levels, partition) == pytest.approx(
            exact_centroid(levels), abs=1e-6)
    rng = np.random.default_rng(2)
    for _ in range(20):
        levels = {lb: float(rng.uniform(0.0, 1.0)) for lb in OUTPUT_LABELS}
        assert centroid_of_levels(levels, partition) == pytest.approx(
            exact_centroid(levels), abs=1e-6)

    system = FuzzySystem.calibrate(np.linspace(0.0, 0.12, 20),
                                   np.linspace(0.0, 12.0, 20))
    for k in np.linspace(0.0, 0.12, 101):
        for v in np.linspace(0.0, 12.0, 101):
            p, _ = system.infer(k, v)
            assert 0.0 <= p <= 1.0
    jammed, _ = system.infer(0.12, 0.0)
    busy, _ = system.infer(0.06, 0.0)
    free, _ = system.infer(0.0, 6.0)
    assert jammed > busy > free


@criterion(5, "learnability")
def test_criterion_5_learnability():
    series = two_sine_series(559, n_features=2, periods=(12, 24), seed=0)
    windows, split = window_split(series, 48, 12)
    assert len(windows) == 500
    model = PPTNet(small_net(), seed=0)
    cfg = TrainConfig(lr_init=5e-3, epochs=200, batch_size=32, seed=0,
                      val_mse_goal=0.01)
    result = train(model, split["train"], split["val"], cfg)
    best_mse = min(r["val_mse"] for r in result.log)
    assert best_mse < 0.01, f"best validation MSE {best_mse}"
    assert len(result.log) <= 200

    # single-batch overfit
    windows = split["train"][:8]
    x = np.stack([w.input for w in windows])
    y = np.stack([w.target for w in windows])
    model = PPTNet(small_net(), seed=0)
    optimizer = AdamW(model.parameters(), weight_decay=0.0)
    final = None
    for _ in range(500):
        model.zero_grad()
        loss = mse_loss(model.forward(x, training=True), y)
        ad.backward(loss)
        optimizer.step(5e-3)
        final = float(loss.data)
        if final < 1e-3:
            break
    assert final < 1e-3, f"single-batch loss stuck at {final}"


def _masked_best(model_cfg, seed, train_w, val_w, epochs, mask=None):
    model = PPTNet(model_cfg, seed=seed)
    cfg = TrainConfig(lr_init=5e-3, epochs=epochs, batch_size=32, seed=seed,
                      target_mask=mask)
    result = train(model, train_w, val_w, cfg)
    return min(r["val_mse"] for r in result.log)


@criterion(6, "ablation directions")
def test_criterion_6_ablations():
    # (a) full model beats either component alone
    rng = np.random.default_rng(5)
    series = two_sine_series(400, n_features=2, seed=5) \
        + rng.normal(0, 0.05, (400, 2))
    _, split = window_split(series, 48, 12)
    full = _masked_best(small_net(), 0, split["train"], split["val"], 40)
    periodic_only = _masked_best(small_net(use_decoder=False), 0,
                                 split["train"], split["val"], 40)
    decoder_only = _masked_best(small_net(use_periodic_blocks=False), 0,
                                split["train"], split["val"], 40)
    assert full < periodic_only, (full, periodic_only)
    assert full < decoder_only, (full, decoder_only)

    # (b) a second, leading channel improves forecasts of the first
    series = cross_feature_series(400, lead=12, seed=0)
    _, split = window_split(series, 48, 12)
    mono_train = [WindowSample(w.input[:, :1], w.target[:, :1], w.origin)
                  for w in split["train"]]
    mono_val = [WindowSample(w.input[:, :1], w.target[:, :1], w.origin)
                for w in split["val"]]
    multi = _masked_best(small_net(C=2), 0, split["train"], split["val"],
                         25, mask=np.array([1.0, 0.0]))
    mono = _masked_best(small_net(C=1), 0, mono_train, mono_val, 25)
    assert multi < mono, (multi, mono)

    # (c) the period-count sweep completes and yields a curve
    series = two_sine_series(300, n_features=2, seed=9)
    _, split = window_split(series, 48, 12)
    ks, errors = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in (1, 2, 4, 6, 8):
            best = _masked_best(small_net(top_k=k), 0,
                                split["train"], split["val"], 2)
            ks.append(k)
            errors.append(best)
    assert all(np.isfinite(errors))
    ARTIFACTS.mkdir(exist_ok=True)
    svg = svgplot.line_chart(
        [("validation MSE", np.array(ks, dtype=float), np.array(errors))],
        title="Forecast error vs number of retained periods",
        xlabel="K", ylabel="validation MSE",
    )
    (ARTIFACTS / "k_sweep.svg").write_text(svg)


@criterion(7, "decoder causality")
def test_criterion_7_causality():
    cfg = small_net(H=8)
    model = PPTNet(cfg, seed=3)
    rng = np.random.default_rng(4)
    q = rng.normal(size=(1, cfg.H, cfg.d_model))
    base = model.decoder_stack(ad.constant(q)).data
    for _ in range(100):
        p = int(rng.integers(1, cfg.H))
        bumped = q.copy()
        bumped[:, p:] += rng.normal(size=(cfg.H - p, cfg.d_model))
        out = model.decoder_stack(ad.constant(bumped)).data
        drift = np.abs(out[:, :p] - base[:, :p]).max()
        assert drift <= 1e-9, f"position < {p} drifted by {drift}"


@criterion(8, "determinism and persistence")
def test_criterion_8_determinism(tmp_path):
    series = two_sine_series(320, n_features=2, seed=6)
    _, split = window_split(series, 48, 12)

    def run_log():
        model = PPTNet(small_net(), seed=11)
        cfg = TrainConfig(lr_init=5e-3, epochs=5, batch_size=32, seed=11)
        return train(model, split["train"], split["val"], cfg), model

    result_a, model_a = run_log()
    result_b, _ = run_log()
    assert result_a.log == result_b.log  # bitwise: floats compared exactly

    path = tmp_path / "model.ckpt"
    save_checkpoint(model_a, path)
    restored, _ = load_checkpoint(path)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 48, 2))
    np.testing.assert_array_equal(model_a.predict(x), restored.predict(x))
