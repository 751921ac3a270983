"""Conformance findings.

Violations are data: validators never raise for a broken model, they return a
:class:`ValidationReport`. A model is conformant iff the report has no
violations; warnings do not affect conformance.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True, order=True)
class Violation:
    rule: str
    element: str
    message: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"rule": self.rule, "element": self.element, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()

    @property
    def conformant(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def to_dict(self, kind: str = "") -> dict:
        return {
            "kind": kind,
            "conformant": self.conformant,
            "violations": [v.to_dict() for v in self.violations],
            "warnings": [w.to_dict() for w in self.warnings],
        }


@dataclass
class Collector:
    """Accumulates findings while a validator walks a model."""

    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    def error(self, rule: str, element: str, message: str = "") -> None:
        self.violations.append(Violation(rule, element, message))

    def warn(self, rule: str, element: str, message: str = "") -> None:
        self.warnings.append(Violation(rule, element, message))

    def extend(self, report: ValidationReport) -> None:
        self.violations.extend(report.violations)
        self.warnings.extend(report.warnings)

    def report(self) -> ValidationReport:
        # Stable ordering keeps reports byte-identical across runs.
        return ValidationReport(tuple(sorted(set(self.violations))), tuple(sorted(set(self.warnings))))
