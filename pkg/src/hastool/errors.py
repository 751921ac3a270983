"""Exception types shared by every pass.

Each error carries a stable ``code`` string and maps onto one of the CLI exit
statuses: 1 for model/validation problems, 2 for infeasibility and cycles,
3 for repository, URI and I/O problems.
"""

from __future__ import annotations


class HasError(Exception):
    exit_status = 1

    def __init__(self, code: str, message: str = "", **details: object) -> None:
        self.code = code
        self.message = message
        self.details = details
        super().__init__(f"{code}: {message}" if message else code)


class ModelError(HasError):
    """A document is malformed or a model breaks a conformance rule."""

    exit_status = 1


class PlanningError(HasError):
    """Cycles, missing capabilities, routing failures and search limits."""

    exit_status = 2


class Infeasible(PlanningError):
    def __init__(self, gap: frozenset[str]) -> None:
        self.gap = frozenset(gap)
        super().__init__("INFEASIBLE", "missing skills for actions " + ", ".join(sorted(self.gap)), gap=sorted(self.gap))


class RepoError(HasError):
    exit_status = 3


class JobError(HasError):
    """Wraps a failure raised by one stage of ``run_job``."""

    def __init__(self, stage: str, cause: HasError) -> None:
        self.stage = stage
        self.cause = cause
        self.exit_status = cause.exit_status
        super().__init__(cause.code, f"stage {stage}: {cause.message or cause.code}", stage=stage, **cause.details)
