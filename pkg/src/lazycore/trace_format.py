"""Line-oriented text format for trace files.

A trace file is::

    CRTRACE<TAB>1
    <event line>...
    PROGRAM_END<TAB><steps><TAB><status>

Each event line is the event name followed by its fields, tab separated.
Strings escape backslash, tab and newline as ``\\\\``, ``\\t`` and ``\\n``.
Files may be gzip-compressed; readers detect this from the magic bytes.
"""

from __future__ import annotations

import dataclasses
import enum
import gzip
import io
import typing
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from . import tracer
from .tracer import EVENT_TYPES, ProgramEnd, TraceEvent

MAGIC = "CRTRACE\t1"
GZIP_MAGIC = b"\x1f\x8b"


class FormatError(ValueError):
    def __init__(self, message: str, line_no: int = 0):
        prefix = f"line {line_no}: " if line_no else ""
        super().__init__(prefix + message)
        self.line_no = line_no


def escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape(s: str) -> str:
    if "\\" not in s:
        return s
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\":
            nxt = s[i + 1:i + 2]
            if nxt == "\\":
                out.append("\\")
            elif nxt == "t":
                out.append("\t")
            elif nxt == "n":
                out.append("\n")
            else:
                raise ValueError(f"bad escape sequence '\\{nxt}'")
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _field_types(cls) -> list[tuple[str, type]]:
    hints = typing.get_type_hints(cls, vars(tracer))
    return [(f.name, hints[f.name]) for f in dataclasses.fields(cls)]


_SCHEMA = {cls.NAME: (cls, _field_types(cls)) for cls in EVENT_TYPES}


def _encode(value) -> str:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, bool):
        raise TypeError("booleans are not a trace field type")
    if isinstance(value, int):
        return str(value)
    return escape(value)


def write_event(ev: TraceEvent) -> str:
    """Serialize one event (without the trailing newline)."""
    parts = [ev.NAME]
    parts.extend(_encode(getattr(ev, f.name)) for f in dataclasses.fields(ev))
    return "\t".join(parts)


def _int(token: str) -> int:
    body = token[1:] if token.startswith("-") else token
    if not body.isdigit() or not body.isascii() or (len(body) > 1 and body[0] == "0"):
        raise ValueError(f"bad integer {token!r}")
    return int(token)


def read_event(line: str, line_no: int = 0) -> TraceEvent:
    """Parse one event line (no trailing newline)."""
    parts = line.split("\t")
    entry = _SCHEMA.get(parts[0])
    if entry is None:
        raise FormatError(f"unknown event {parts[0]!r}", line_no)
    cls, types = entry
    if len(parts) - 1 != len(types):
        raise FormatError(f"{parts[0]} expects {len(types)} fields, got {len(parts) - 1}",
                          line_no)
    values = []
    try:
        for token, (_, ty) in zip(parts[1:], types):
            if ty is int:
                values.append(_int(token))
            elif ty is str:
                values.append(unescape(token))
            else:
                values.append(ty(token))
    except ValueError as err:
        raise FormatError(str(err), line_no) from None
    return cls(*values)


# ---------------------------------------------------------------------------
# Files


def open_text(path: Union[str, Path]) -> IO[str]:
    """Open a plain or gzip-compressed text file for reading."""
    raw = open(path, "rb")
    head = raw.peek(2)[:2] if hasattr(raw, "peek") else b""
    if head == GZIP_MAGIC:
        stream = gzip.GzipFile(fileobj=raw, mode="rb")
        return io.TextIOWrapper(stream, encoding="utf-8", newline="\n")
    return io.TextIOWrapper(raw, encoding="utf-8", newline="\n")


def iter_events(lines: Iterable[str]) -> Iterator[TraceEvent]:
    """Stream events out of trace lines (each ending in a newline).

    Checks the magic line and that the stream ends with exactly one
    ``PROGRAM_END`` event. Memory use is constant per line.
    """
    ended = False
    line_no = 0
    for line_no, line in enumerate(lines, 1):
        if not line.endswith("\n"):
            raise FormatError("missing newline at end of line (truncated file?)", line_no)
        text = line[:-1]
        if line_no == 1:
            if text != MAGIC:
                raise FormatError("missing CRTRACE magic/version line", 1)
            continue
        if ended:
            raise FormatError("event after PROGRAM_END", line_no)
        ev = read_event(text, line_no)
        ended = isinstance(ev, ProgramEnd)
        yield ev
    if line_no == 0:
        raise FormatError("empty trace file", 1)
    if not ended:
        raise FormatError("trace does not end with PROGRAM_END", line_no)


def read_trace(path: Union[str, Path]) -> Iterator[TraceEvent]:
    with open_text(path) as f:
        yield from iter_events(f)


def dumps(events: Iterable[TraceEvent]) -> str:
    """Whole trace as text, magic line included."""
    return "".join(f"{line}\n" for line in [MAGIC, *map(write_event, events)])


class TraceWriter:
    """Write events to a trace file, one line each, optionally gzip-compressed."""

    def __init__(self, path: Union[str, Path], compress: bool = False):
        self._raw = open(path, "wb")
        if compress:
            # mtime and name fixed so identical traces give identical bytes
            self._gz = gzip.GzipFile(filename="", mode="wb", fileobj=self._raw, mtime=0)
            stream = self._gz
        else:
            self._gz = None
            stream = self._raw
        self._out = io.TextIOWrapper(stream, encoding="utf-8", newline="\n")
        self._out.write(MAGIC + "\n")

    def __call__(self, ev: TraceEvent) -> None:
        self._out.write(write_event(ev) + "\n")

    def close(self) -> None:
        self._out.flush()
        self._out.detach()
        if self._gz is not None:
            self._gz.close()
        self._raw.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
