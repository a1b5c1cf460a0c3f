"""Render summary tables written by ``lazycore analyze`` for humans."""

from __future__ import annotations

from pathlib import Path
from typing import Union

from .analysis import TABLE_NAMES
from .trace_format import unescape

TITLES = {
    "programs": "Programs",
    "lifecycle": "Promise life cycle",
    "strictness": "Parameter strictness",
    "functions": "Functions",
    "force_orders": "Function force orders",
    "force_depth": "Force depth",
    "reads": "Reads",
    "expr_class": "Promise expressions",
    "meta_use": "Meta-programmed promises",
    "side_effects": "Side-effect locality",
    "escapes": "Escaped promises",
}

# Tables whose first count column gets a percentage column.
_SHARE = {"lifecycle", "strictness", "force_orders", "force_depth", "reads",
          "expr_class", "meta_use"}


class MissingSummary(FileNotFoundError):
    pass


def load_tables(summary_dir: Union[str, Path]) -> dict[str, list[list[str]]]:
    """Read every table file; each table is a header row plus data rows."""
    summary_dir = Path(summary_dir)
    tables = {}
    for name in TABLE_NAMES:
        path = summary_dir / f"{name}.tsv"
        if not path.is_file():
            raise MissingSummary(f"missing summary table {path}")
        with open(path, encoding="utf-8", newline="\n") as f:
            rows = [[unescape(c) for c in line.rstrip("\n").split("\t")] for line in f]
        tables[name] = rows
    return tables


def _pct(n: int, total: int) -> str:
    return f"{100.0 * n / total:.1f}%" if total else "-"


def _markdown(header: list[str], rows: list[list[str]]) -> list[str]:
    out = ["| " + " | ".join(header) + " |",
           "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return out


def render_markdown(tables: dict[str, list[list[str]]]) -> str:
    out = ["# Laziness report", ""]
    for name in TABLE_NAMES:
        header, *rows = tables[name]
        n_keys = len(header) - 1 if name not in ("expr_class", "side_effects", "escapes") \
            else len(header) - 2
        rows = [list(r) for r in rows]
        if name == "lifecycle":
            for r in rows:
                r[1] = r[1] or "--"
        if name in _SHARE:
            total = sum(int(r[n_keys]) for r in rows)
            header = header + ["share"]
            rows = [r + [_pct(int(r[n_keys]), total)] for r in rows]
        out.append(f"## {TITLES[name]}")
        out.append("")
        if name == "functions":
            counts = {r[0]: int(r[1]) for r in rows}
            out.append(f"Strict functions: {counts['strict']} of {counts['eligible']} eligible "
                       f"({counts['functions']} functions observed).")
            out.append("")
        out.extend(_markdown(header, rows))
        out.append("")
    return "\n".join(out)


def render_tsv(tables: dict[str, list[list[str]]]) -> str:
    out = []
    for name in TABLE_NAMES:
        out.append(f"# {name}")
        out.extend("\t".join(r) for r in tables[name])
        out.append("")
    return "\n".join(out)
