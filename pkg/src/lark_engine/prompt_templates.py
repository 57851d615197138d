"""Versioned prompt templates, hash-stamped into every trace and evaluation
record so prompt drift is always visible in comparisons."""

from __future__ import annotations

from pathlib import Path

from .errors import ValidationError
from .util import sha256_text

TEMPLATE_NAMES = ("seed", "plasticity", "maturation", "stakeholder_rank", "judge")

_DIR = Path(__file__).parent / "prompts"
_CACHE: dict[str, str] = {}


def template_text(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise ValidationError(f"unknown prompt template {name!r}")
    if name not in _CACHE:
        _CACHE[name] = (_DIR / f"{name}.txt").read_text(encoding="utf-8")
    return _CACHE[name]


def template_hash(name: str) -> str:
    return sha256_text(template_text(name))


def all_template_hashes() -> dict[str, str]:
    return {name: template_hash(name) for name in TEMPLATE_NAMES}


def render(name: str, **fields: str) -> str:
    return template_text(name).format(**fields)
