"""Structured verification reports with deterministic ordering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PASS = "pass"
FAIL = "fail"
SKIP = "skipped"


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str = ""


@dataclass
class Report:
    title: str
    checks: list[CheckResult] = field(default_factory=list)
    derived: list[tuple[str, str]] = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = ""):
        self.checks.append(CheckResult(name, PASS if ok else FAIL, detail))

    def skip(self, name: str, detail: str = ""):
        self.checks.append(CheckResult(name, SKIP, detail))

    def record(self, name: str, value: str):
        self.derived.append((name, value))

    def all_passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def filtered(self, needle: str | None) -> Report:
        if not needle:
            return self
        out = Report(self.title, [c for c in self.checks if needle in c.name], list(self.derived))
        return out

    def to_text(self) -> str:
        lines = [self.title]
        for c in self.checks:
            line = f"  [{c.status:>7}] {c.name}"
            if c.detail:
                line += f"  ({c.detail})"
            lines.append(line)
        if self.derived:
            lines.append("  derived:")
            for name, value in self.derived:
                lines.append(f"    {name} = {value}")
        lines.append(f"result: {'PASS' if self.all_passed() else 'FAIL'}")
        return "\n".join(lines)

    def to_json(self) -> str:
        payload = {
            "title": self.title,
            "checks": [
                {"name": c.name, "status": c.status, "detail": c.detail} for c in self.checks
            ],
            "derived": [{"name": n, "value": v} for n, v in self.derived],
            "passed": self.all_passed(),
        }
        return json.dumps(payload, indent=2, sort_keys=False)
