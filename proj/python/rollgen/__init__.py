"""Incremental code generation with rollback and constrained regeneration."""

from ._core import (
    GenerationTree,
    InfrastructureError,
    ScriptedProvider,
    StubSandbox,
    avg_pass_ratio,
    ccp,
    choose_rollback,
    constrain,
    entropy,
    generate,
    load_tasks,
    outline,
    pass_rate,
    policy_distribution,
    run_benchmark,
    sample,
)

__all__ = [
    "GenerationTree",
    "InfrastructureError",
    "ScriptedProvider",
    "StubSandbox",
    "avg_pass_ratio",
    "ccp",
    "choose_rollback",
    "constrain",
    "entropy",
    "generate",
    "load_tasks",
    "outline",
    "pass_rate",
    "policy_distribution",
    "run_benchmark",
    "sample",
]
