"""Line-oriented configuration files and canonical hashing.

Format: UTF-8, "[section]" headers, "key = value" lines, "#" comments.
The canonical serialization (sections and keys sorted, values normalized
through their parsed types) defines the config hash, so hashes change iff
a semantic field changes.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from ..errors import ConfigurationError


def parse_config_text(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigurationError(f"line {lineno}: empty section name")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigurationError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        sections[current][key.strip()] = value.strip()
    return sections


def load_config(path) -> dict[str, dict[str, str]]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def dump_config(sections: dict[str, dict]) -> str:
    lines = []
    for name in sections:
        lines.append(f"[{name}]")
        for key, value in sections[name].items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def canonical_text(sections: dict[str, dict]) -> str:
    """Sections and keys sorted, values stringified via repr of their
    normalized form."""
    lines = []
    for name in sorted(sections):
        lines.append(f"[{name}]")
        for key in sorted(sections[name]):
            value = sections[name][key]
            lines.append(f"{key} = {_normalize(value)}")
    return "\n".join(lines)


def _normalize(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (int, str)):
        return str(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_normalize(v) for v in value)
    return str(value)


def config_hash(sections: dict[str, dict]) -> str:
    return hashlib.sha256(canonical_text(sections).encode("utf-8")).hexdigest()[:12]
