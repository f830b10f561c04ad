"""Plain key=value run configuration with flag overrides.

A config file holds one ``key=value`` pair per line (``#`` comments and
blank lines ignored); keys use the flag names with underscores.  Flags win
over the file, the file wins over built-in defaults.  Every run logs its
fully resolved configuration so results can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


class ConfigError(ValueError):
    pass


def load_config_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolved_lines(args: argparse.Namespace, command: str) -> list[str]:
    lines = [f"command={command}"]
    for key in sorted(vars(args)):
        if key in ("func", "config", "command"):
            continue
        lines.append(f"{key}={getattr(args, key)}")
    return lines


def log_resolved(args: argparse.Namespace, command: str, out_dir: str | Path | None = None) -> None:
    lines = resolved_lines(args, command)
    for line in lines:
        print(f"config: {line}", file=sys.stderr)
    if out_dir is not None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "run-config.txt").write_text("\n".join(lines) + "\n")
