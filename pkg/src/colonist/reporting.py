"""Shared result records for statistical checks."""

import json
from dataclasses import dataclass, field
from typing import Optional


@dataclass
class StatTestResult:
    """One statistical check: estimate vs target with a derived tolerance.

    ``passed`` is true exactly when |estimate - target| <= tolerance.
    """

    name: str
    estimate: float
    target: float
    stderr: float
    tolerance: float
    passed: bool
    runtime: float = 0.0
    details: Optional[dict] = field(default=None)

    @staticmethod
    def from_gap(name, estimate, target, stderr, tolerance, runtime=0.0,
                 details=None):
        return StatTestResult(
            name=name, estimate=float(estimate), target=float(target),
            stderr=float(stderr), tolerance=float(tolerance),
            passed=bool(abs(estimate - target) <= tolerance),
            runtime=float(runtime), details=details)

    def to_json(self):
        # fixed key order; runtime is excluded so that output streams are
        # byte-identical for a fixed (config, seed, replica count)
        return json.dumps({
            "name": self.name,
            "estimate": self.estimate,
            "target": self.target,
            "stderr": self.stderr,
            "tolerance": self.tolerance,
            "pass": self.passed,
        })
