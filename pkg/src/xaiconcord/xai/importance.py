from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ValidationError

METHODS = ("mdi", "mda", "shap", "lime")


@dataclass(frozen=True)
class ImportanceVector:
    method: str
    model_id: str
    scores: dict = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown importance method {self.method!r}")

    @property
    def features(self):
        return list(self.scores)

    def ranked(self):
        """Features sorted by descending score (stable on ties)."""
        return sorted(self.scores, key=lambda f: -self.scores[f])

    def to_dict(self):
        return {
            "method": self.method,
            "model_id": self.model_id,
            "normalized": self.normalized,
            "scores": {k: float(v) for k, v in self.scores.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(doc["method"], str(doc.get("model_id", "")),
                       {str(k): float(v) for k, v in doc["scores"].items()},
                       bool(doc.get("normalized", False)))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationError(f"malformed importance document: {exc}") from None

    @classmethod
    def read(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise ValidationError(f"importance file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
