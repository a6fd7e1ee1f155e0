"""Acceptance suite: ten numbered end-to-end criteria, one test each.

Every test prints a single "CRITERION nn PASS/FAIL" line (bypassing
capture, so it shows up in plain pytest output) with the measured
quantities, then asserts at the pinned tolerance. The tolerances and
instance counts here are contractual; do not loosen them to make a
failing build green.

The two training criteria share work: the decay-0.99 model trained for
criterion 8 doubles as the decay twin of criterion 9, and both twins
train on the same synthetic corpus with the same seed so the only
difference between them is the decay rate.
"""

import contextlib
import time

import numpy as np
import pytest

from tnn import bench, cli
from tnn.checkpoint import load_checkpoint, save_checkpoint
from tnn.data import ingest_corpus, unigram_baseline, write_synthetic_corpus
from tnn.equivalence import (
    ConvKernel,
    alibi_bias,
    alibi_via_decay,
    conv_via_toeplitz,
    direct_convolution,
    sample_stable,
    ssm_simulate,
    ssm_via_toeplitz,
)
from tnn.model import ModelConfig, TnnModel, evaluate_stream
from tnn.toeplitz import RelPosCoefficients, fft_matvec, naive_matvec

from conftest import grad_rel_err, norm_rel_err

STRATEGIES = ("paper_2n", "padded_pow2")
TRAIN_STEPS = 2000
TRAIN_SEED = 1234


def _emit(capsys, num: int, verdict: str, title: str, seconds: float, detail: str):
    line = f"CRITERION {num:2d} {verdict}  {title} [{seconds:.1f}s]"
    if detail:
        line += f" :: {detail}"
    with capsys.disabled():
        print("\n" + line)


@contextlib.contextmanager
def criterion(capsys, num: int, title: str):
    """Times the body and emits exactly one PASS or FAIL line for it."""
    info = {"detail": ""}
    start = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        detail = info["detail"] or f"{type(exc).__name__}: {exc}"
        _emit(capsys, num, "FAIL", title, time.perf_counter() - start, detail)
        raise
    _emit(capsys, num, "PASS", title, time.perf_counter() - start, info["detail"])


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("acceptance") / "corpus.txt"
    write_synthetic_corpus(str(path), min_bytes=120_000)
    return str(path)


@pytest.fixture(scope="session")
def corpus(corpus_file):
    return ingest_corpus(corpus_file)


def _train_twin(tmp_path_factory, corpus_file: str, name: str, config_text: str):
    out = tmp_path_factory.mktemp(f"run_{name}")
    args = [
        "train",
        "--data", corpus_file,
        "--steps", str(TRAIN_STEPS),
        "--seed", str(TRAIN_SEED),
        "--deterministic",
        "--out", str(out),
    ]
    if config_text:
        cfg_path = out / "twin.cfg"
        cfg_path.write_text(config_text)
        args[1:1] = ["--config", str(cfg_path)]
    start = time.perf_counter()
    rc = cli.main(args)
    elapsed = time.perf_counter() - start
    assert rc == 0, f"{name} twin training exited {rc}"
    model, extras = load_checkpoint(str(out / "checkpoint.tnn"))
    return {"model": model, "extras": extras, "elapsed": elapsed, "out": out}


@pytest.fixture(scope="session")
def decay_twin(tmp_path_factory, corpus_file):
    """decay = 0.99 (the library default); trained once, used by 8 and 9."""
    return _train_twin(tmp_path_factory, corpus_file, "decay", "")


@pytest.fixture(scope="session")
def nodecay_twin(tmp_path_factory, corpus_file):
    return _train_twin(tmp_path_factory, corpus_file, "nodecay", "decay = 1.0\n")


def test_criterion_01_fft_matches_naive(capsys):
    """>= 1000 random instances, n in 1..512, d in 1..8, both circulant
    strategies, normwise relative error <= 1e-9, under two minutes."""
    with criterion(capsys, 1, "fft kernel matches quadratic oracle") as info:
        rng = np.random.default_rng(101)
        corners = [(1, 1), (1, 8), (2, 1), (512, 1), (512, 8)]
        worst = 0.0
        instances = 0
        start = time.perf_counter()
        for i in range(1000):
            if i < len(corners):
                n, d = corners[i]
            else:
                n = int(round(np.exp(rng.uniform(0.0, np.log(512.0)))))
                n = min(max(n, 1), 512)
                d = int(rng.integers(1, 9))
            coeffs = RelPosCoefficients(rng.standard_normal((2 * n - 1, d)))
            x = rng.standard_normal((n, d))
            reference = naive_matvec(coeffs, x)
            for strategy in STRATEGIES:
                err = norm_rel_err(fft_matvec(coeffs, x, strategy), reference)
                worst = max(worst, err)
                assert err <= 1e-9, f"n={n} d={d} {strategy}: rel err {err:.3e}"
            instances += 1
        elapsed = time.perf_counter() - start
        assert instances >= 1000
        assert elapsed < 120.0, f"kernel sweep took {elapsed:.1f}s, budget 120s"
        info["detail"] = f"{instances} instances x {len(STRATEGIES)} strategies, worst rel err {worst:.2e}"


def test_criterion_02_scaling_ratios(capsys):
    """Median-time doubling ratios: fft paths <= 2.6 over n = 2048..16384,
    naive >= 3.5 over n = 512..4096, d = 64, under five minutes total."""
    with criterion(capsys, 2, "fft near-linear scaling, naive quadratic") as info:
        start = time.perf_counter()
        fft_records = bench.run_sweep(["fft_pow2", "fft_paper2n"], 2048, 16384, 64, trials=5)
        naive_records = bench.run_sweep(["naive"], 512, 4096, 64, trials=5)
        elapsed = time.perf_counter() - start
        fft_worst = 0.0
        for method in ("fft_pow2", "fft_paper2n"):
            ratios = bench.doubling_ratios(fft_records, method)
            assert len(ratios) == 3, (method, ratios)
            assert all(np.isfinite(r) for r in ratios), (method, ratios)
            assert max(ratios) <= 2.6, f"{method} doubling ratios {ratios}"
            fft_worst = max(fft_worst, max(ratios))
        naive_ratios = bench.doubling_ratios(naive_records, "naive")
        assert len(naive_ratios) == 3, naive_ratios
        assert min(naive_ratios) >= 3.5, f"naive doubling ratios {naive_ratios}"
        assert elapsed < 300.0, f"benchmark took {elapsed:.1f}s, budget 300s"
        info["detail"] = (
            f"fft worst ratio {fft_worst:.3f} (<= 2.6), "
            f"naive min ratio {min(naive_ratios):.3f} (>= 3.5)"
        )


def test_criterion_03_gradients_match_finite_differences(capsys):
    """Tiny model (1 layer, dim 4, expansion 8, vocab 5, length 6): every
    parameter class against central differences, relative error <= 1e-4."""
    with criterion(capsys, 3, "analytic gradients vs central differences") as info:
        cfg = ModelConfig(
            vocab_size=5,
            dim=4,
            gtu_dim=8,
            glu_dim=8,
            layers=1,
            rpe_layers=2,
            rpe_hidden=4,
            decay=0.9,
            learn_decay=True,
        )
        m = TnnModel(cfg, seed=33)
        rng = np.random.default_rng(34)
        toks = rng.integers(0, 5, size=(2, 6))
        start = time.perf_counter()
        _, grads = m.loss_and_grads(toks)
        h = 1e-5
        worst = 0.0
        checked = 0
        for name, p in m.params.items():
            fd = np.zeros_like(p, dtype=np.float64)
            flat, fd_flat = p.reshape(-1), fd.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                m.bump_versions()
                fp = m.loss(toks, path="fft")
                flat[j] = orig - h
                m.bump_versions()
                fm = m.loss(toks, path="fft")
                flat[j] = orig
                fd_flat[j] = (fp - fm) / (2 * h)
            m.bump_versions()
            err = grad_rel_err(grads[name], fd)
            worst = max(worst, err)
            checked += flat.size
            assert err <= 1e-4, f"{name}: rel err {err:.3e}"
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"gradient check took {elapsed:.1f}s, budget 60s"
        info["detail"] = (
            f"{len(m.params)} parameter classes, {checked} scalars, worst rel err {worst:.2e}"
        )


def test_criterion_04_convolution_equivalence(capsys):
    """200 random (kernel, signal) pairs, taps <= 8, length <= 64: Toeplitz
    route matches direct convolution within 1e-12."""
    with criterion(capsys, 4, "conv kernels reproduced exactly") as info:
        rng = np.random.default_rng(404)
        worst = 0.0
        for i in range(200):
            m = int(rng.integers(1, 9))
            n = int(rng.integers(1, 65))
            kernel = ConvKernel(rng.standard_normal(m))
            x = rng.standard_normal(n)
            reference = direct_convolution(kernel, x)
            strategy = STRATEGIES[i % 2]
            err = norm_rel_err(conv_via_toeplitz(kernel, x, strategy), reference)
            worst = max(worst, err)
            assert err <= 1e-12, f"m={m} n={n} {strategy}: rel err {err:.3e}"
        info["detail"] = f"200 pairs, worst rel err {worst:.2e}"


def test_criterion_05_ssm_equivalence(capsys):
    """200 random stable state-space systems, state dim <= 4, length <= 128:
    Toeplitz route matches step-by-step recurrence within 1e-10."""
    with criterion(capsys, 5, "stable SSM impulse responses reproduced") as info:
        rng = np.random.default_rng(505)
        worst = 0.0
        for i in range(200):
            state_dim = int(rng.integers(1, 5))
            n = int(rng.integers(2, 129))
            params = sample_stable(rng, state_dim)
            x = rng.standard_normal(n)
            reference = ssm_simulate(params, x)
            strategy = STRATEGIES[i % 2]
            err = norm_rel_err(ssm_via_toeplitz(params, x, strategy), reference)
            worst = max(worst, err)
            assert err <= 1e-10, f"h={state_dim} n={n} {strategy}: rel err {err:.3e}"
        info["detail"] = f"200 systems, worst rel err {worst:.2e}"


def test_criterion_06_alibi_identity(capsys):
    """ALiBi linear bias as score + slope * distance equals the decay-rate
    formulation exp(log-lambda * distance) applied to offsets 0..63,
    within 1e-12, over 200 random (score, slope) draws."""
    with criterion(capsys, 6, "ALiBi bias equals decay form on offsets 0..63") as info:
        rng = np.random.default_rng(606)
        offsets = np.arange(64)
        worst = 0.0
        for i in range(200):
            score = float(rng.normal(scale=3.0))
            slope = 0.0 if i == 0 else -float(np.exp(rng.uniform(-6.0, 2.0)))
            reference = alibi_bias(score, slope, offsets)
            err = norm_rel_err(alibi_via_decay(score, slope, offsets), reference)
            worst = max(worst, err)
            assert err <= 1e-12, f"score={score:.3f} slope={slope:.4f}: rel err {err:.3e}"
        info["detail"] = f"200 draws, worst rel err {worst:.2e}"


def test_criterion_07_causal_prefix_bit_identical(capsys):
    """100 random suffix perturbations of a causal model's input leave the
    prefix logits bit-identical, not merely close."""
    with criterion(capsys, 7, "suffix perturbations never touch prefix logits") as info:
        cfg = ModelConfig(
            vocab_size=32,
            dim=16,
            gtu_dim=32,
            glu_dim=24,
            layers=2,
            rpe_layers=2,
            rpe_hidden=8,
        )
        m = TnnModel(cfg, seed=77)
        rng = np.random.default_rng(78)
        n = 48
        base = rng.integers(0, cfg.vocab_size, size=(1, n))
        base_logits = m.forward(base)
        for _ in range(100):
            split = int(rng.integers(1, n))
            perturbed = base.copy()
            perturbed[0, split:] = rng.integers(0, cfg.vocab_size, size=n - split)
            if np.array_equal(perturbed, base):
                perturbed[0, n - 1] = (base[0, n - 1] + 1) % cfg.vocab_size
            out = m.forward(perturbed)
            assert np.array_equal(out[:, :split], base_logits[:, :split]), (
                f"prefix logits changed at split {split}"
            )
        info["detail"] = f"100 perturbations, prefix of length 1..{n - 1} bit-identical"


def test_criterion_08_training_beats_unigram(capsys, corpus, decay_twin):
    """2000 optimizer steps on a >= 100KB corpus bring validation
    cross-entropy strictly below the add-one-smoothed unigram baseline,
    with the training run itself under 15 minutes."""
    with criterion(capsys, 8, "trained model beats unigram baseline") as info:
        assert corpus.tokens.size >= 100_000, corpus.tokens.size
        assert decay_twin["extras"]["step"] == TRAIN_STEPS
        baseline = unigram_baseline(corpus.train, corpus.val, corpus.vocab_size)
        stats = evaluate_stream(decay_twin["model"], corpus.val, 128)
        assert stats["loss"] < baseline, (stats["loss"], baseline)
        assert decay_twin["elapsed"] < 900.0, decay_twin["elapsed"]
        info["detail"] = (
            f"val CE {stats['loss']:.4f} < unigram {baseline:.4f} nats "
            f"after {TRAIN_STEPS} steps ({decay_twin['elapsed']:.0f}s train)"
        )


def test_criterion_09_decay_extrapolation(capsys, corpus, decay_twin, nodecay_twin):
    """Twin models, identical seed and data, decay 0.99 vs 1.0, trained at
    length 128: at length 1024 the decay twin's loss is lower than the
    no-decay twin's, and within 10% of its own length-128 loss. Budget
    covers both trainings plus the evaluations."""
    with criterion(capsys, 9, "decay bias preserves length extrapolation") as info:
        start = time.perf_counter()
        d128 = evaluate_stream(decay_twin["model"], corpus.val, 128)["loss"]
        d1024 = evaluate_stream(decay_twin["model"], corpus.val, 1024)["loss"]
        n1024 = evaluate_stream(nodecay_twin["model"], corpus.val, 1024)["loss"]
        eval_seconds = time.perf_counter() - start
        total = decay_twin["elapsed"] + nodecay_twin["elapsed"] + eval_seconds
        assert d1024 < n1024, f"decay {d1024:.4f} vs no-decay {n1024:.4f} at 1024"
        assert d1024 <= 1.1 * d128, f"decay@1024 {d1024:.4f} > 1.1 * decay@128 {d128:.4f}"
        assert total < 1800.0, f"twin protocol took {total:.1f}s, budget 1800s"
        info["detail"] = (
            f"decay@128 {d128:.4f}, decay@1024 {d1024:.4f} (x{d1024 / d128:.3f}), "
            f"no-decay@1024 {n1024:.4f}; twins+eval {total:.0f}s"
        )


def test_criterion_10_checkpoint_round_trip(capsys, tmp_path):
    """save -> load -> save is byte-identical and the reloaded model's
    logits are bit-equal to the original's."""
    with criterion(capsys, 10, "checkpoint round trip is exact") as info:
        cfg = ModelConfig(
            vocab_size=11,
            dim=6,
            gtu_dim=12,
            glu_dim=10,
            layers=2,
            rpe_layers=2,
            rpe_hidden=5,
            learn_decay=True,
        )
        m = TnnModel(cfg, seed=55)
        rng = np.random.default_rng(56)
        toks = rng.integers(0, cfg.vocab_size, size=(2, 9))
        before = m.forward(toks)
        first = tmp_path / "first.tnn"
        second = tmp_path / "second.tnn"
        extras = {"step": 7, "tag": "acceptance"}
        save_checkpoint(m, str(first), extras=extras)
        loaded, extras_back = load_checkpoint(str(first))
        save_checkpoint(loaded, str(second), extras=extras_back)
        assert extras_back == extras
        assert first.read_bytes() == second.read_bytes(), "second save differs"
        assert np.array_equal(loaded.forward(toks), before), "reloaded logits differ"
        info["detail"] = f"{first.stat().st_size} bytes stable; logits bit-equal"
