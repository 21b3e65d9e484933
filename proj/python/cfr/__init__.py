"""Python bindings for the cfr stress-testing toolkit."""

from ._core import (
    CfrError,
    acc_at_k,
    default_tau_grid,
    delta_of,
    directional_similarity,
    generate_synthetic,
    merge_adapter,
    reinforce,
    render_report,
    run_cli,
    stress_test,
)

__all__ = [
    "CfrError",
    "acc_at_k",
    "default_tau_grid",
    "delta_of",
    "directional_similarity",
    "generate_synthetic",
    "merge_adapter",
    "reinforce",
    "render_report",
    "run_cli",
    "stress_test",
]
