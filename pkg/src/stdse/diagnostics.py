from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    locus: str = ""
    severity: str = "error"

    def __str__(self) -> str:
        loc = f"{self.locus}: " if self.locus else ""
        return f"{self.severity}: {loc}{self.message} [{self.code}]"


def errors(diags):
    return [d for d in diags if d.severity == "error"]
