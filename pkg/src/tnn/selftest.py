"""Named runtime properties covering every invariant the library promises.

Each property is a small, seeded, self-contained check; the table is what
`tnn selftest` runs. Property functions raise AssertionError with a
human-readable detail on violation and return None on success. The fault
injection hook flips a deliberate error into the paper_2n fft path so the
suite can demonstrate it actually detects wrong kernels: under injection
exactly the properties exercising that path fail.
"""

import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from tnn import checkpoint as ckpt_mod
from tnn import config as config_mod
from tnn import data as data_mod
from tnn import equivalence as eq
from tnn import model as model_mod
from tnn import optim as optim_mod
from tnn import rpe as rpe_mod
from tnn import tno as tno_mod
from tnn import toeplitz as tp
from tnn._backend import get_backend


@dataclass
class PropertyResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _rand_pair(rng, n, d):
    coeffs = tp.RelPosCoefficients(rng.standard_normal((2 * n - 1, d)))
    return coeffs, rng.standard_normal((n, d))


def _assert_close(err, tol, what):
    assert err <= tol, f"{what}: error {err:.3e} exceeds {tol:.0e}"


def _rel(a, b):
    scale = max(float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b))) / scale


# -- kernel --------------------------------------------------------------


def _fft_vs_naive(strategy, fast):
    rng = np.random.default_rng(11)
    rounds = 10 if fast else 60
    for _ in range(rounds):
        n = int(rng.integers(1, 129))
        d = int(rng.integers(1, 9))
        coeffs, x = _rand_pair(rng, n, d)
        err = _rel(tp.fft_matvec(coeffs, x, strategy), tp.naive_matvec(coeffs, x))
        _assert_close(err, 1e-9, f"{strategy} n={n} d={d}")


def kernel_fft_vs_naive_pow2(fast):
    _fft_vs_naive("padded_pow2", fast)


def kernel_fft_vs_naive_paper2n(fast):
    _fft_vs_naive("paper_2n", fast)


def kernel_block_recovery(fast):
    rng = np.random.default_rng(12)
    for strategy in tp.STRATEGIES:
        coeffs, _ = _rand_pair(rng, 17, 3)
        dense = tp.toeplitz_dense(coeffs)
        circ = tp.circulant_dense(tp.build_circulant(coeffs, strategy))
        assert (circ[:17, :17] == dense).all(), f"{strategy}: embedded block differs"


def kernel_linearity(fast):
    rng = np.random.default_rng(13)
    coeffs, x = _rand_pair(rng, 40, 4)
    y = rng.standard_normal(x.shape)
    a, b = 1.7, -0.4
    lhs = tp.fft_matvec(coeffs, a * x + b * y)
    rhs = a * tp.fft_matvec(coeffs, x) + b * tp.fft_matvec(coeffs, y)
    _assert_close(_rel(lhs, rhs), 1e-12, "linearity")


def kernel_adjoint(fast):
    rng = np.random.default_rng(14)
    for _ in range(4 if fast else 20):
        n = int(rng.integers(2, 65))
        coeffs, x = _rand_pair(rng, n, 3)
        g = rng.standard_normal(x.shape)
        y = tp.fft_matvec(coeffs, x)
        gx, _ = tp.matvec_backward(coeffs, x, g)
        lhs, rhs = float(np.sum(y * g)), float(np.sum(x * gx))
        scale = max(abs(lhs), abs(rhs), 1e-30)
        _assert_close(abs(lhs - rhs) / scale, 1e-10, f"adjoint n={n}")


def kernel_backward_fd(fast):
    rng = np.random.default_rng(15)
    n, d = 9, 2
    coeffs, x = _rand_pair(rng, n, d)
    g = rng.standard_normal(x.shape)
    _, grad_c = tp.matvec_backward(coeffs, x, g)
    h = 1e-6
    vals = coeffs.values.copy()
    for idx in [(0, 0), (n - 1, 1), (2 * n - 2, 0)]:
        vals[idx] += h
        up = float(np.sum(tp.naive_matvec(tp.RelPosCoefficients(vals), x) * g))
        vals[idx] -= 2 * h
        down = float(np.sum(tp.naive_matvec(tp.RelPosCoefficients(vals), x) * g))
        vals[idx] += h
        fd = (up - down) / (2 * h)
        _assert_close(abs(grad_c[idx] - fd) / max(abs(fd), 1e-8), 1e-6, f"coeff grad {idx}")


def kernel_backend_parity(fast):
    rng = np.random.default_rng(16)
    py = get_backend("py")
    coeffs, x = _rand_pair(rng, 33, 3)
    ours = tp.naive_matvec(coeffs, x)
    ref = np.zeros_like(x)
    py.naive_matvec(coeffs.values, x, ref)
    _assert_close(_rel(ours, ref), 1e-13, "active backend vs pure python")


# -- rpe -----------------------------------------------------------------


def rpe_length_independence(fast):
    rng = np.random.default_rng(21)
    net = rpe_mod.init_rpe(rpe_mod.RpeConfig(out_dim=3), rng)
    small = rpe_mod.rpe_forward(net, 8)
    big = rpe_mod.rpe_forward(net, 32)
    for k in range(-7, 8):
        a = small.values[small.offset_row(k)]
        b = big.values[big.offset_row(k)]
        assert (a == b).all(), f"offset {k} differs across lengths"


def rpe_determinism(fast):
    cfg = rpe_mod.RpeConfig(out_dim=4, hidden_dim=8)
    a = rpe_mod.init_rpe(cfg, np.random.default_rng(5))
    b = rpe_mod.init_rpe(cfg, np.random.default_rng(5))
    va, vb = rpe_mod.rpe_forward(a, 16).values, rpe_mod.rpe_forward(b, 16).values
    assert (va == vb).all(), "same seed produced different tables"


def rpe_param_count(fast):
    cfg = rpe_mod.RpeConfig(out_dim=5, layers=3, hidden_dim=7)
    net = rpe_mod.init_rpe(cfg, np.random.default_rng(6))
    actual = sum(w.size for w in net.weights) + sum(b.size for b in net.biases)
    assert actual == rpe_mod.num_params(cfg), f"{actual} != {rpe_mod.num_params(cfg)}"


# -- tno -----------------------------------------------------------------


def _operator(seed, **kw):
    rng = np.random.default_rng(seed)
    net = rpe_mod.init_rpe(rpe_mod.RpeConfig(out_dim=kw.pop("d", 4), hidden_dim=8), rng)
    return tno_mod.ToeplitzOperator(net, **kw)


def tno_causality(fast):
    rng = np.random.default_rng(31)
    op = _operator(31, causal=True)
    x = rng.standard_normal((12, 4))
    base = op.forward(x, path="exact")
    for _ in range(5 if fast else 25):
        pert = x.copy()
        cut = int(rng.integers(1, 12))
        pert[cut:] += rng.standard_normal((12 - cut, 4))
        out = op.forward(pert, path="exact")
        assert (out[:cut] == base[:cut]).all(), f"prefix before {cut} changed"


def tno_decay_envelope(fast):
    op = _operator(32, decay_rate=0.8, causal=False, unit_coeffs=True)
    values = op.effective_coeffs(9).values
    absk = np.abs(np.arange(-8, 9, dtype=np.float64))[:, None]
    assert (values == 0.8**absk).all(), "unit-coefficient table is not the decay envelope"
    mags = np.abs(values[:, 0])
    assert (np.diff(mags[:9]) >= 0).all() and (np.diff(mags[8:]) <= 0).all(), (
        "decay envelope is not monotone toward offset 0"
    )


def tno_batch_consistency(fast):
    rng = np.random.default_rng(33)
    op = _operator(33)
    batch = rng.standard_normal((5, 10, 4))
    for path in ("fft", "exact"):
        together = op.forward(batch, path=path)
        for i in range(5):
            alone = op.forward(batch[i], path=path)
            assert (together[i] == alone).all(), f"{path} batch item {i} differs"


def tno_alibi_profile(fast):
    slope = -0.35
    lam = eq.alibi_decay_rate(slope)
    op = _operator(34, decay_rate=lam, causal=False, unit_coeffs=True, d=1)
    values = op.effective_coeffs(8).values[:, 0]
    offsets = np.arange(-7, 8)
    expected = np.exp(slope * np.abs(offsets))
    _assert_close(_rel(values, expected), 1e-12, "operator decay vs alibi bias")


# -- model ---------------------------------------------------------------


def _tiny_model(seed=0, **overrides):
    base = dict(
        vocab_size=7, dim=4, gtu_dim=8, glu_dim=6, layers=1,
        rpe_layers=2, rpe_hidden=4, decay=0.9,
    )
    base.update(overrides)
    return model_mod.TnnModel(model_mod.ModelConfig(**base), seed=seed)


def model_gradient_check(fast):
    m = _tiny_model(seed=3, learn_decay=True)
    rng = np.random.default_rng(35)
    tokens = rng.integers(0, 7, size=(2, 6))
    _, grads = m.loss_and_grads(tokens)
    h = 1e-5
    for name, p in m.params.items():
        flat = p.reshape(-1)
        probe = [0, flat.size // 2, flat.size - 1] if not fast else [0]
        for i in sorted(set(probe)):
            old = flat[i]
            flat[i] = old + h
            m.bump_versions()
            up = m.loss(tokens, path="fft")
            flat[i] = old - h
            m.bump_versions()
            down = m.loss(tokens, path="fft")
            flat[i] = old
            m.bump_versions()
            fd = (up - down) / (2 * h)
            got = grads[name].reshape(-1)[i]
            denom = max(abs(fd), 1e-3)
            _assert_close(abs(got - fd) / denom, 1e-4, f"grad {name}[{i}]")


def model_causality_logits(fast):
    m = _tiny_model(seed=4)
    rng = np.random.default_rng(36)
    tokens = rng.integers(0, 7, size=10)
    base = m.forward(tokens)
    for _ in range(5 if fast else 20):
        cut = int(rng.integers(1, 10))
        pert = tokens.copy()
        pert[cut:] = rng.integers(0, 7, size=10 - cut)
        out = m.forward(pert)
        assert (out[:cut] == base[:cut]).all(), f"logits before {cut} changed"


def model_variable_length(fast):
    m = _tiny_model(seed=5)
    rng = np.random.default_rng(37)
    tokens = rng.integers(0, 7, size=24)
    full = m.forward(tokens)
    for cut in (6, 13):
        short = m.forward(tokens[:cut])
        assert (short == full[:cut]).all(), f"prefix of length {cut} differs"


def model_uniform_logits_loss(fast):
    m = _tiny_model(seed=6)
    for p in m.params.values():
        p[:] = 0.0
    for i in range(m.config.layers):
        for key in (f"blocks.{i}.norm1.gain", f"blocks.{i}.norm2.gain"):
            m.params[key][:] = 1.0
    m.params["final_norm.gain"][:] = 1.0
    m.bump_versions()
    tokens = np.arange(6) % 7
    loss = m.loss(tokens)
    _assert_close(abs(loss - np.log(7.0)), 1e-12, "uniform-logit loss vs ln vocab")


def model_determinism(fast):
    cfg = optim_mod.OptimConfig(peak_lr=1e-3, warmup_steps=5)
    losses = []
    for _ in range(2):
        m = _tiny_model(seed=7)
        state = optim_mod.AdamState(m.params)
        rng = np.random.default_rng(70)
        run = []
        for _ in range(3):
            batch = rng.integers(0, 7, size=(2, 8))
            run.append(optim_mod.train_step(m, state, batch, cfg)["loss"])
        losses.append(run)
    assert losses[0] == losses[1], "same seed diverged across runs"


def model_checkpoint_round_trip(fast):
    m = _tiny_model(seed=8)
    tokens = np.arange(8) % 7
    base = m.forward(tokens)
    with tempfile.TemporaryDirectory() as td:
        path = os.path.join(td, "m.tnn")
        ckpt_mod.save_checkpoint(m, path, extras={"step": 3})
        loaded, extras = ckpt_mod.load_checkpoint(path)
        assert extras["step"] == 3, "extras lost"
        again = os.path.join(td, "m2.tnn")
        ckpt_mod.save_checkpoint(loaded, again, extras=extras)
        with open(path, "rb") as fa, open(again, "rb") as fb:
            assert fa.read() == fb.read(), "save-load-save is not byte-identical"
        out = loaded.forward(tokens)
        assert (out == base).all(), "post-load logits differ"


# -- equivalence ---------------------------------------------------------


def equiv_conv_matches_direct(fast):
    rng = np.random.default_rng(41)
    for _ in range(5 if fast else 30):
        m = int(rng.integers(1, 9))
        n = int(rng.integers(m, 40))
        kernel = eq.ConvKernel(rng.standard_normal(m))
        x = rng.standard_normal(n)
        err = _rel(eq.conv_via_toeplitz(kernel, x), eq.direct_convolution(kernel, x))
        _assert_close(err, 1e-12, f"conv m={m} n={n}")


def equiv_ssm_matches_recurrence(fast):
    rng = np.random.default_rng(42)
    for _ in range(5 if fast else 30):
        params = eq.sample_stable(rng, int(rng.integers(1, 5)))
        n = int(rng.integers(2, 65))
        x = rng.standard_normal(n)
        err = _rel(eq.ssm_via_toeplitz(params, x), eq.ssm_simulate(params, x))
        _assert_close(err, 1e-10, f"ssm n={n}")


def equiv_alibi_identity(fast):
    rng = np.random.default_rng(43)
    offsets = np.arange(64)
    for _ in range(10 if fast else 50):
        s = float(rng.normal())
        slope = -float(rng.uniform(0.01, 2.0))
        err = _rel(eq.alibi_via_decay(s, slope, offsets), eq.alibi_bias(s, slope, offsets))
        _assert_close(err, 1e-12, "alibi identity")


# -- optim / config / data ------------------------------------------------


def optim_lr_schedule(fast):
    cfg = optim_mod.OptimConfig(peak_lr=2.0, warmup_steps=100)
    assert optim_mod.lr_at(cfg, 50) == 1.0, "warmup midpoint"
    assert optim_mod.lr_at(cfg, 100) == 2.0, "peak"
    assert abs(optim_mod.lr_at(cfg, 400) - 1.0) < 1e-12, "inverse-sqrt at 4x warmup"


def optim_zero_lr_fixed_point(fast):
    m = _tiny_model(seed=9)
    before = {k: v.copy() for k, v in m.params.items()}
    cfg = optim_mod.OptimConfig(peak_lr=0.0, warmup_steps=1, weight_decay=0.0)
    state = optim_mod.AdamState(m.params)
    batch = np.arange(8).reshape(1, 8) % 7
    optim_mod.train_step(m, state, batch, cfg)
    for k, v in m.params.items():
        assert (v == before[k]).all(), f"zero lr moved {k}"


def config_round_trip(fast):
    cfg = config_mod.RunConfig(dim=32, steps=7, causal=False, precision="f32")
    back = config_mod.parse_config_text(config_mod.serialize_config(cfg))
    assert back == cfg, "serialize-parse changed the config"


def data_byte_round_trip(fast):
    blob = bytes(range(256)) * 3
    tokens = data_mod.tokenize_bytes(blob)
    assert data_mod.detokenize(tokens, "byte") == blob, "byte tokenization not a bijection"


PROPERTIES = (
    ("kernel/fft_vs_naive_pow2", kernel_fft_vs_naive_pow2),
    ("kernel/fft_vs_naive_paper2n", kernel_fft_vs_naive_paper2n),
    ("kernel/block_recovery_bit_exact", kernel_block_recovery),
    ("kernel/linearity", kernel_linearity),
    ("kernel/adjoint", kernel_adjoint),
    ("kernel/backward_matches_fd", kernel_backward_fd),
    ("kernel/backend_parity", kernel_backend_parity),
    ("rpe/length_independence", rpe_length_independence),
    ("rpe/determinism", rpe_determinism),
    ("rpe/param_count", rpe_param_count),
    ("tno/causality_bit_exact", tno_causality),
    ("tno/decay_envelope", tno_decay_envelope),
    ("tno/batch_consistency", tno_batch_consistency),
    ("tno/alibi_profile", tno_alibi_profile),
    ("model/gradient_check", model_gradient_check),
    ("model/causality_logits", model_causality_logits),
    ("model/variable_length_prefix", model_variable_length),
    ("model/uniform_logits_loss", model_uniform_logits_loss),
    ("model/determinism", model_determinism),
    ("model/checkpoint_round_trip", model_checkpoint_round_trip),
    ("equiv/conv_matches_direct", equiv_conv_matches_direct),
    ("equiv/ssm_matches_recurrence", equiv_ssm_matches_recurrence),
    ("equiv/alibi_identity", equiv_alibi_identity),
    ("optim/lr_schedule", optim_lr_schedule),
    ("optim/zero_lr_fixed_point", optim_zero_lr_fixed_point),
    ("config/round_trip", config_round_trip),
    ("data/byte_round_trip", data_byte_round_trip),
)


def run_selftest(fast: bool = False, inject_fault: bool = False):
    """Run every property; returns the result list (never raises)."""
    results = []
    if inject_fault:
        tp.set_fault_injection(True)
    try:
        for name, fn in PROPERTIES:
            start = time.perf_counter()
            try:
                fn(fast)
                results.append(PropertyResult(name, True, "", time.perf_counter() - start))
            except AssertionError as exc:
                results.append(PropertyResult(name, False, str(exc), time.perf_counter() - start))
            except Exception as exc:  # noqa: BLE001 - a crash is a failure, not an abort
                detail = f"{type(exc).__name__}: {exc}"
                results.append(PropertyResult(name, False, detail, time.perf_counter() - start))
    finally:
        if inject_fault:
            tp.set_fault_injection(False)
    return results


def format_results(results) -> str:
    lines = []
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        suffix = "" if r.ok else f"  [{r.detail}]"
        lines.append(f"{mark}  {r.name}  ({r.seconds:.3f}s){suffix}")
    failed = sum(1 for r in results if not r.ok)
    lines.append(f"{len(results) - failed}/{len(results)} properties passed")
    return "\n".join(lines)
