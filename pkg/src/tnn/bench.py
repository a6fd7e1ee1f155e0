"""Timing harness for the matvec paths with verified-correct outputs.

Every timed method is first checked against the quadratic reference at the
same size; a timing row is only emitted when that check passes, and the row
carries a checksum of the reference output. All methods at one size share
one (coeffs, x) instance, so their checksums agree exactly when they were
verified against the same computation.

Trials are interleaved round-robin across all cases so a transient load
spike on the machine is spread over every size instead of biasing the
doubling ratio of whichever size it happened to hit. Short calls amortize
each trial over an inner loop. A size that cannot be allocated is recorded
with a NaN median and checksum "skipped-oom" rather than dropped, keeping
one row per (method, n).
"""

import csv
import hashlib
import time
from dataclasses import dataclass, fields

import numpy as np

from tnn import toeplitz
from tnn.errors import ConfigError
from tnn.toeplitz import RelPosCoefficients

METHODS = ("naive", "fft_paper2n", "fft_pow2")
VERIFY_TOL = 1e-9
WARMUP_TRIALS = 2
MIN_TRIALS = 5
TARGET_TRIAL_SECONDS = 0.025
MAX_INNER = 100
SKIP_CHECKSUM = "skipped-oom"


@dataclass
class BenchRecord:
    method: str
    n: int
    d: int
    trials: int
    median_seconds: float
    checksum: str


@dataclass
class _Case:
    method: str
    n: int
    d: int
    run: object
    inner: int
    checksum: str
    times: list


def _instance(n: int, d: int, rng: np.random.Generator):
    coeffs = RelPosCoefficients(rng.standard_normal((2 * n - 1, d)))
    x = rng.standard_normal((n, d))
    reference = toeplitz.naive_matvec(coeffs, x)
    digest = hashlib.sha256(np.ascontiguousarray(reference).tobytes()).hexdigest()[:16]
    return coeffs, x, reference, digest


def _runner(method: str, coeffs: RelPosCoefficients, x: np.ndarray):
    if method == "naive":
        return lambda: toeplitz.naive_matvec(coeffs, x)
    if method == "fft_paper2n":
        plan = toeplitz.prepare_fft(coeffs, strategy="paper_2n")
        return lambda: toeplitz.apply_fft(plan, x)
    if method == "fft_pow2":
        plan = toeplitz.prepare_fft(coeffs, strategy="padded_pow2")
        return lambda: toeplitz.apply_fft(plan, x)
    raise ConfigError(f"unknown bench method {method!r}; choose from {METHODS}")


def _prepare_case(
    method: str, n: int, d: int, coeffs, x, reference, digest: str
) -> _Case:
    """Verify against the reference, warm up, calibrate the inner loop."""
    run = _runner(method, coeffs, x)
    produced = run()
    err = np.max(np.abs(produced - reference)) / max(np.max(np.abs(reference)), 1e-30)
    if err > VERIFY_TOL:
        raise ValueError(
            f"{method} at n={n} failed verification: rel err {err:.3e} > {VERIFY_TOL}"
        )
    for _ in range(WARMUP_TRIALS):
        run()
    start = time.perf_counter()
    run()
    estimate = time.perf_counter() - start
    inner = int(min(MAX_INNER, max(1, TARGET_TRIAL_SECONDS / max(estimate, 1e-9))))
    return _Case(method, n, d, run, inner, digest, [])


def _measure_trial(case: _Case) -> None:
    # untimed call first: the previous case evicted this one's working set,
    # and that eviction is not a property of the method being measured
    case.run()
    start = time.perf_counter()
    for _ in range(case.inner):
        case.run()
    case.times.append((time.perf_counter() - start) / case.inner)


def _finish(case: _Case, trials: int) -> BenchRecord:
    return BenchRecord(
        case.method, case.n, case.d, trials, float(np.median(case.times)), case.checksum
    )


def bench_case(
    method: str, n: int, d: int, trials: int, rng: np.random.Generator
) -> BenchRecord:
    """Single verified timing; ValueError when verification fails, so a
    wrong kernel can never produce a timing row."""
    if trials < MIN_TRIALS:
        raise ConfigError(f"trials must be at least {MIN_TRIALS}")
    coeffs, x, reference, digest = _instance(n, d, rng)
    case = _prepare_case(method, n, d, coeffs, x, reference, digest)
    for _ in range(trials):
        _measure_trial(case)
    return _finish(case, trials)


def geometric_sizes(min_n: int, max_n: int) -> list:
    """Doubling sweep min_n, 2*min_n, ... up to max_n inclusive."""
    if min_n < 16 or max_n < min_n:
        raise ConfigError("need max_n >= min_n >= 16")
    sizes = []
    n = min_n
    while n <= max_n:
        sizes.append(n)
        n *= 2
    return sizes


def run_sweep(
    methods, min_n: int, max_n: int, d: int, trials: int, seed: int = 0
) -> list:
    if trials < MIN_TRIALS:
        raise ConfigError(f"trials must be at least {MIN_TRIALS}")
    for method in methods:
        if method not in METHODS:
            raise ConfigError(f"unknown bench method {method!r}; choose from {METHODS}")
    rng = np.random.default_rng(seed)
    cases = []
    skipped = []
    for n in geometric_sizes(min_n, max_n):
        try:
            coeffs, x, reference, digest = _instance(n, d, rng)
        except MemoryError:
            skipped.extend(
                BenchRecord(m, n, d, trials, float("nan"), SKIP_CHECKSUM) for m in methods
            )
            continue
        for method in methods:
            try:
                cases.append(_prepare_case(method, n, d, coeffs, x, reference, digest))
            except MemoryError:
                skipped.append(BenchRecord(method, n, d, trials, float("nan"), SKIP_CHECKSUM))
    for _ in range(trials):
        for case in cases:
            _measure_trial(case)
    records = [_finish(case, trials) for case in cases] + skipped
    records.sort(key=lambda r: (r.n, METHODS.index(r.method)))
    return records


def doubling_ratios(records, method: str) -> list:
    """Consecutive median-time ratios t(2n)/t(n) for one method."""
    rows = sorted((r for r in records if r.method == method), key=lambda r: r.n)
    ratios = []
    for prev, cur in zip(rows, rows[1:]):
        if cur.n == 2 * prev.n and prev.median_seconds > 0:
            ratios.append(cur.median_seconds / prev.median_seconds)
    return ratios


def write_csv(records, path: str) -> None:
    names = [f.name for f in fields(BenchRecord)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for rec in records:
            writer.writerow([getattr(rec, name) for name in names])


def read_csv(path: str) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            BenchRecord(
                row["method"], int(row["n"]), int(row["d"]), int(row["trials"]),
                float(row["median_seconds"]), row["checksum"],
            )
            for row in reader
        ]
