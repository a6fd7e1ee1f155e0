"""The selftest property table: coverage, clean pass, fault sensitivity."""

from tnn import toeplitz
from tnn.selftest import PROPERTIES, format_results, run_selftest


class TestSelftest:
    def test_all_properties_pass_clean(self):
        results = run_selftest(fast=True)
        failures = [r for r in results if not r.ok]
        assert not failures, "\n".join(f"{r.name}: {r.detail}" for r in failures)

    def test_property_names_cover_invariant_families(self):
        names = {name for name, _ in PROPERTIES}
        for family in ("kernel/", "rpe/", "tno/", "model/", "equiv/", "optim/"):
            assert any(n.startswith(family) for n in names), f"no {family} properties"
        for needed in (
            "kernel/fft_vs_naive_pow2",
            "kernel/adjoint",
            "model/gradient_check",
            "model/causality_logits",
            "model/checkpoint_round_trip",
            "tno/batch_consistency",
            "rpe/length_independence",
            "equiv/conv_matches_direct",
            "equiv/ssm_matches_recurrence",
            "equiv/alibi_identity",
        ):
            assert needed in names

    def test_fault_injection_fails_exactly_the_injected_path(self):
        results = run_selftest(fast=True, inject_fault=True)
        failed = sorted(r.name for r in results if not r.ok)
        assert failed == ["kernel/fft_vs_naive_paper2n"]
        # the hook is always restored, even after failures
        assert toeplitz._FAULT_INJECTION is False

    def test_format_lists_every_property(self):
        results = run_selftest(fast=True)
        text = format_results(results)
        for name, _ in PROPERTIES:
            assert name in text
        assert f"{len(PROPERTIES)}/{len(PROPERTIES)} properties passed" in text

    def test_failures_are_results_not_exceptions(self):
        toeplitz.set_fault_injection(True)
        try:
            results = run_selftest(fast=True)
        finally:
            toeplitz.set_fault_injection(False)
        assert any(not r.ok for r in results)
        assert all(isinstance(r.detail, str) for r in results)
