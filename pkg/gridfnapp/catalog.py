"""Experiment catalogue for `gridfn list`."""
from __future__ import annotations

import json

from gridfnapp.experiments import REGISTRY, Experiment

__all__ = ["catalog", "format_catalog", "catalog_json"]


def _matches(e: Experiment, term: str) -> bool:
    t = term.lower()
    return t in e.name.lower() or t in e.description.lower() or any(t in tag.lower() for tag in e.tags)


def catalog(filter_term: str | None = None) -> list[Experiment]:
    entries = sorted(REGISTRY.values(), key=lambda e: e.name)
    if filter_term:
        entries = [e for e in entries if _matches(e, filter_term)]
    return entries


def format_catalog(entries: list[Experiment]) -> str:
    if not entries:
        return "no experiments match"
    width = max(len(e.name) for e in entries)
    lines = []
    for e in entries:
        lines.append(f"{e.name.ljust(width)}  {e.description}")
        lines.append(f"{'':{width}}    reproduces: {e.reproduces}")
        lines.append(f"{'':{width}}    tags: {', '.join(e.tags)}")
    return "\n".join(lines)


def catalog_json(entries: list[Experiment]) -> str:
    return json.dumps([e.to_dict() for e in entries], indent=2, sort_keys=True)
