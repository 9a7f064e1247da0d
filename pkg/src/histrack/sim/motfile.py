"""MOT-Challenge text files: ``frame,id,left,top,width,height,conf,x,y,z``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..metrics import LabeledFrame


class MotParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class MotRow:
    frame: int
    id: int
    left: float
    top: float
    width: float
    height: float
    conf: float = 1.0

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.width, self.height)


def format_row(row: MotRow) -> str:
    return (
        f"{row.frame:d},{row.id:d},{row.left:.2f},{row.top:.2f},"
        f"{row.width:.2f},{row.height:.2f},{row.conf:.2f},-1,-1,-1\n"
    )


def write_mot_file(rows, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for row in rows:
            fh.write(format_row(row))


def parse_line(line: str, lineno: int = 0, path="<string>") -> MotRow:
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) < 7:
        raise MotParseError(path, lineno, f"expected at least 7 fields, got {len(parts)}")
    try:
        return MotRow(
            int(float(parts[0])), int(float(parts[1])),
            float(parts[2]), float(parts[3]), float(parts[4]), float(parts[5]), float(parts[6]),
        )
    except ValueError as exc:
        raise MotParseError(path, lineno, str(exc)) from None


def read_mot_file(path) -> list[MotRow]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                rows.append(parse_line(line, lineno, path))
    return rows


def rows_to_frames(rows, frames=None) -> list[LabeledFrame]:
    """Group rows by frame; ``frames`` lists frame numbers to emit even when empty."""
    grouped: dict[int, list] = {f: [] for f in (frames or [])}
    for r in rows:
        grouped.setdefault(r.frame, []).append((r.id, r.box))
    return [LabeledFrame(f, tuple(grouped[f])) for f in sorted(grouped)]


def frames_to_rows(frames) -> list[MotRow]:
    return [
        MotRow(f.frame, ident, *box, conf=1.0)
        for f in frames
        for ident, box in f.entries
    ]


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
