"""Acceptance gate: every experiment recipe in the registry must hold its
pinned metric bounds on freshly built artifacts. One test per recipe; each
prints the recipe's pass/fail summary line with every measured metric."""

import pytest

from deid.recipes import REGISTRY, verify_recipe

# cheap structural checks first, then the trained-model experiments
ORDER = (
    "architecture-suite",
    "gradient-check",
    "pipeline-identity",
    "determinism",
    "appearance",
    "throughput",
    "deid-effect",
    "verification-drop",
    "lambda-monotonicity",
    "ablation-orderings",
)


def test_every_recipe_is_in_the_gate():
    assert sorted(ORDER) == sorted(REGISTRY)


@pytest.mark.parametrize("name", ORDER)
def test_recipe(name, acceptance_ctx, acceptance_reports):
    report = verify_recipe(REGISTRY[name], acceptance_ctx, log=print)
    acceptance_reports.append(report)
    assert report.passed, report.summary()
