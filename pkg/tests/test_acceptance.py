"""Every acceptance criterion at its configured tolerance.

Each criterion runs once per session from ``png_lab/harness/configs/accept_NN.cfg``.
A PASS/FAIL line per criterion, followed by its individual checks, is printed in the
"acceptance criteria" section of the terminal summary. Checks known not to hold are
collected separately as strict expected failures, so they still run and are reported.
"""

import pytest

from png_lab.harness import acceptance

_CACHE: dict[int, acceptance.CriterionOutcome] = {}

# (criterion, check label) pairs flagged as expected failures by the evaluators
KNOWN_FAILURES = [(5, "trace equals closed form as written, no sign"), (8, "cylinder crossing frequency decreasing in T"),
                  (10, "vertical-line correlation at largest T above floor"), (14, "no trend of the ratio in du")]
KNOWN_FAILURES += [(n, "runtime") for n in sorted(acceptance.SINGLE_CORE_OVER_BUDGET)
                   if acceptance.runtime_expected_to_fail(n)]


def outcome(n: int, log) -> acceptance.CriterionOutcome:
    if n not in _CACHE:
        o = acceptance.run_criterion(n) if n != 15 else acceptance.reproducibility(
            threads=(1, 2), reference={k: v.digests for k, v in _CACHE.items() if k != 15})
        _CACHE[n] = o
        status = "PASS" if o.passed else "FAIL"
        log.append(f"[{status}] criterion {n} ({o.seconds:.1f} s)")
        log.extend("    " + line for line in o.lines())
    return _CACHE[n]


def _check(o, label):
    return next(c for c in o.checks if c.label == label)


@pytest.mark.parametrize("n", range(1, 16))
def test_criterion(n, acceptance_log):
    o = outcome(n, acceptance_log)
    assert o.checks
    bad = [c for c in o.checks if not c.passed and not c.expected_failure]
    assert not bad, "\n".join(f"{c.label}: {c.detail}" for c in bad)


@pytest.mark.parametrize("n, label", KNOWN_FAILURES)
@pytest.mark.xfail(strict=True, reason="documented in the decision ledger")
def test_known_failure(n, label, acceptance_log):
    c = _check(outcome(n, acceptance_log), label)
    assert c.expected_failure
    assert c.passed, c.detail


def test_known_failures_match_evaluators(acceptance_log):
    flagged = {(n, c.label) for n, o in _CACHE.items() for c in o.checks if c.expected_failure}
    assert flagged <= set(KNOWN_FAILURES)
