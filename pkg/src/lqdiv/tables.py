"""Bit-stable CSV emission: 12 significant digits, LF endings, hashed header."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["format_number", "write_table"]


def format_number(v: object) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v + 0.0:.12g}"  # maps -0.0 to 0
    return str(v)


def write_table(
    path: Path | str,
    columns: Sequence[str],
    rows: Iterable[Sequence[object]],
    comment: str | None = None,
) -> None:
    lines: list[str] = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    text = "\n".join(lines) + "\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
