"""Trace analysis: Reduce, Combine and Summarize.

``reduce_trace`` makes one pass over a trace and produces a
:class:`Reduction`: one :class:`PromiseRecord` per promise and one
:class:`CallFact` per call. Reductions can be saved to ``.crreduce`` files and
folded together with :func:`combine` into a :class:`CorpusSummary`.

Promise life cycles are strings over ``F`` (forced), ``R`` (value read),
``M`` (expression read by substitute) and ``E`` (escaped). ``E`` is never
logged by the tracer. It is inserted before the first touch of a promise that
happens after the call which created it has returned.
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .machine import PromiseKind
from .trace_format import FormatError, escape, unescape
from .tracer import (
    CallEnter, CallExit, ExprClass, Locality, ProgramEnd, ProgramStart, PromCreate,
    PromForceEnter, PromForceExit, PromMeta, PromRead, TraceEvent, VarDef, VarWrite,
)

LIFECYCLE_RE = re.compile(r"M*E?M*(F[RME]*)?")

REDUCE_MAGIC = "CRREDUCE\t1"


class TraceInvariantError(ValueError):
    """The trace is inconsistent; no numbers should be computed from it."""


@dataclass
class PromiseRecord:
    program: str
    prom_id: int
    kind: PromiseKind
    call_id: int
    param: str
    position: int
    expr_class: ExprClass
    lifecycle: str = ""
    force_depth: Optional[int] = None
    read_count: int = 0
    meta_count: int = 0
    escaped: bool = False
    effects_local: int = 0
    effects_lexical: int = 0
    effects_other: int = 0

    @property
    def category(self) -> str:
        if self.kind is PromiseKind.DELAYED:
            return "NON_ARGUMENT"
        return "ESCAPED" if self.escaped else "ARGUMENT"

    @property
    def meta_use(self) -> str:
        meta = "M" in self.lifecycle
        value = "F" in self.lifecycle or "R" in self.lifecycle
        if meta and value:
            return "META_AND_VALUE"
        if meta:
            return "META_ONLY"
        if value:
            return "VALUE_ONLY"
        return "UNUSED"


@dataclass
class CallFact:
    program: str
    call_id: int
    site: str
    n_params: int
    completed: bool = False
    order: tuple[int, ...] = ()


@dataclass
class Reduction:
    program: str
    status: str
    steps: int
    promises: list[PromiseRecord] = field(default_factory=list)
    calls: list[CallFact] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Reduce


def reduce_trace(events: Iterable[TraceEvent]) -> Reduction:
    """Single pass over a trace. Raises TraceInvariantError on inconsistencies."""
    it = iter(events)
    first = next(it, None)
    if not isinstance(first, ProgramStart):
        raise TraceInvariantError("trace must start with PROGRAM_START")
    program = first.name
    stack: list[int] = []
    calls: dict[int, CallFact] = {}
    promises: dict[int, PromiseRecord] = {}
    created_at: dict[int, int] = {}
    forcing: list[int] = []
    forced: set[int] = set()
    memoized: set[int] = set()
    n_created: Counter = Counter()
    end: Optional[ProgramEnd] = None

    def active() -> int:
        return stack[-1] if stack else 0

    def touch(rec: PromiseRecord, letter: str) -> None:
        if not rec.escaped and rec.call_id and calls[rec.call_id].completed:
            rec.escaped = True
            rec.lifecycle += "E"
        rec.lifecycle += letter

    def check_active(ev, call_id: int) -> None:
        if call_id != active():
            raise TraceInvariantError(f"{ev}: active call is {active()}, not {call_id}")

    def get(pid: int) -> PromiseRecord:
        if pid not in promises:
            raise TraceInvariantError(f"unknown promise {pid}")
        return promises[pid]

    for ev in it:
        if end is not None:
            raise TraceInvariantError("event after PROGRAM_END")
        if isinstance(ev, CallEnter):
            if ev.call_id != len(calls) + 1:
                raise TraceInvariantError(f"call ids out of order at {ev.call_id}")
            stack.append(ev.call_id)
            calls[ev.call_id] = CallFact(program, ev.call_id, ev.closure, ev.n_params)
        elif isinstance(ev, CallExit):
            if not stack or stack[-1] != ev.call_id:
                raise TraceInvariantError(f"unbalanced CALL_EXIT {ev.call_id}")
            stack.pop()
            calls[ev.call_id].completed = True
        elif isinstance(ev, PromCreate):
            if ev.prom_id != len(promises) + 1:
                raise TraceInvariantError(f"promise ids out of order at {ev.prom_id}")
            check_active(ev, ev.call_id)
            position = 0
            if ev.kind is not PromiseKind.DELAYED:
                if not ev.call_id:
                    raise TraceInvariantError("argument promise outside a call")
                n_created[ev.call_id] += 1
                position = n_created[ev.call_id]
            promises[ev.prom_id] = PromiseRecord(program, ev.prom_id, ev.kind, ev.call_id,
                                                 ev.param, position, ev.expr_class)
            created_at[ev.prom_id] = len(stack)
        elif isinstance(ev, PromForceEnter):
            rec = get(ev.prom_id)
            check_active(ev, ev.call_id)
            if ev.prom_id in forced:
                raise TraceInvariantError(f"promise {ev.prom_id} forced twice")
            depth = len(stack) - created_at[ev.prom_id]
            if ev.depth != depth:
                raise TraceInvariantError(
                    f"promise {ev.prom_id}: emitted depth {ev.depth}, reconstructed {depth}")
            forced.add(ev.prom_id)
            forcing.append(ev.prom_id)
            touch(rec, "F")
            rec.force_depth = depth
            if rec.position:
                calls[rec.call_id].order += (rec.position,)
        elif isinstance(ev, PromForceExit):
            if not forcing or forcing[-1] != ev.prom_id:
                raise TraceInvariantError(f"unbalanced PROM_FORCE_EXIT {ev.prom_id}")
            forcing.pop()
            memoized.add(ev.prom_id)
        elif isinstance(ev, PromRead):
            rec = get(ev.prom_id)
            check_active(ev, ev.call_id)
            if ev.prom_id not in memoized:
                raise TraceInvariantError(f"read of unevaluated promise {ev.prom_id}")
            touch(rec, "R")
            rec.read_count += 1
        elif isinstance(ev, PromMeta):
            rec = get(ev.prom_id)
            check_active(ev, ev.call_id)
            touch(rec, "M")
            rec.meta_count += 1
        elif isinstance(ev, (VarDef, VarWrite)):
            if ev.locality is Locality.NONE:
                if ev.prom_id:
                    raise TraceInvariantError("write outside a promise names a promise")
                continue
            if not forcing or forcing[-1] != ev.prom_id:
                raise TraceInvariantError(f"write attributed to {ev.prom_id}, not the "
                                          "innermost forcing promise")
            rec = get(ev.prom_id)
            if ev.locality is Locality.LOCAL:
                rec.effects_local += 1
            elif ev.locality is Locality.LEXICAL:
                rec.effects_lexical += 1
            else:
                rec.effects_other += 1
        elif isinstance(ev, ProgramEnd):
            end = ev
    if end is None:
        raise TraceInvariantError("trace has no PROGRAM_END")
    if end.status == "OK" and (stack or forcing):
        raise TraceInvariantError("program ended OK with open calls or forces")
    return Reduction(program, end.status, end.steps,
                     list(promises.values()), list(calls.values()))


# ---------------------------------------------------------------------------
# Strictness


ALWAYS, SOMETIMES, NEVER = "ALWAYS", "SOMETIMES", "NEVER"


@dataclass
class FunctionSummary:
    program: str
    site: str
    n_params: int
    call_count: int
    params: tuple[str, ...]
    orders: tuple[tuple[int, ...], ...]

    @property
    def eligible(self) -> bool:
        return self.call_count >= 2 and self.n_params >= 1

    @property
    def strict(self) -> bool:
        return self.eligible and all(p == ALWAYS for p in self.params) \
            and len(self.orders) == 1


@dataclass
class _FunctionFacts:
    n_params: int
    calls: int = 0
    forced: Counter = field(default_factory=Counter)
    orders: set = field(default_factory=set)

    def merge(self, other: "_FunctionFacts") -> None:
        self.calls += other.calls
        self.forced.update(other.forced)
        self.orders |= other.orders


def _function_facts(calls: Iterable[CallFact]) -> dict[tuple[str, str], _FunctionFacts]:
    out: dict[tuple[str, str], _FunctionFacts] = {}
    for c in calls:
        if not c.completed:
            continue
        key = (c.program, c.site)
        facts = out.setdefault(key, _FunctionFacts(c.n_params))
        facts.calls += 1
        facts.forced.update(set(c.order))
        facts.orders.add(c.order)
    return out


def _summaries(facts: dict[tuple[str, str], _FunctionFacts]) -> list[FunctionSummary]:
    out = []
    for (program, site), f in sorted(facts.items()):
        params = []
        for pos in range(1, f.n_params + 1):
            n = f.forced[pos]
            params.append(ALWAYS if n == f.calls else NEVER if n == 0 else SOMETIMES)
        out.append(FunctionSummary(program, site, f.n_params, f.calls, tuple(params),
                                   tuple(sorted(f.orders))))
    return out


def classify_strictness(calls: Iterable[CallFact]) -> list[FunctionSummary]:
    """Per-function parameter classes and force orders over completed calls."""
    return _summaries(_function_facts(calls))


# ---------------------------------------------------------------------------
# Combine / Summarize


@dataclass
class Table:
    name: str
    keys: tuple[str, ...]
    values: tuple[str, ...]
    rows: dict = field(default_factory=dict)

    def add(self, key, *amounts: int) -> None:
        key = key if isinstance(key, tuple) else (key,)
        row = self.rows.setdefault(key, [0] * len(self.values))
        for i, a in enumerate(amounts):
            row[i] += a

    def sorted_rows(self) -> list[tuple[tuple, list[int]]]:
        def order(key):
            return tuple((0, k, "") if isinstance(k, int) else (1, 0, k) for k in key)
        return sorted(self.rows.items(), key=lambda kv: order(kv[0]))

    def total(self, column: int = 0) -> int:
        return sum(r[column] for r in self.rows.values())


TABLE_NAMES = ("programs", "lifecycle", "strictness", "functions", "force_orders",
               "force_depth", "reads", "expr_class", "meta_use", "side_effects", "escapes")


@dataclass
class CorpusSummary:
    tables: dict[str, Table]
    functions: list[FunctionSummary]

    def __getitem__(self, name: str) -> Table:
        return self.tables[name]


def _empty_tables() -> dict[str, Table]:
    t = {
        "programs": Table("programs", ("measure",), ("count",)),
        "lifecycle": Table("lifecycle", ("category", "lifecycle"), ("promises",)),
        "strictness": Table("strictness", ("class",), ("parameters",)),
        "functions": Table("functions", ("measure",), ("functions",)),
        "force_orders": Table("force_orders", ("orders",), ("functions",)),
        "force_depth": Table("force_depth", ("depth",), ("promises",)),
        "reads": Table("reads", ("reads",), ("promises",)),
        "expr_class": Table("expr_class", ("category", "expr_class"), ("promises", "forced")),
        "meta_use": Table("meta_use", ("use",), ("promises",)),
        "side_effects": Table("side_effects", ("locality",), ("promises", "writes")),
        "escapes": Table("escapes", ("kind",), ("promises", "escaped")),
    }
    for measure in ("programs", "promises", "calls"):
        t["programs"].add(measure, 0)
    for cls in (ALWAYS, SOMETIMES, NEVER):
        t["strictness"].add(cls, 0)
    for measure in ("functions", "eligible", "strict"):
        t["functions"].add(measure, 0)
    for use in ("UNUSED", "META_ONLY", "META_AND_VALUE", "VALUE_ONLY"):
        t["meta_use"].add(use, 0)
    for loc in ("LOCAL", "LEXICAL", "OTHERENV"):
        t["side_effects"].add(loc, 0, 0)
    for kind in PromiseKind:
        t["escapes"].add(kind.value, 0, 0)
    return t


def combine(reductions: Iterable[Reduction]) -> CorpusSummary:
    """Fold per-trace reductions into corpus tables. Input order is irrelevant."""
    t = _empty_tables()
    facts: dict[tuple[str, str], _FunctionFacts] = {}
    for red in reductions:
        t["programs"].add("programs", 1)
        t["programs"].add("promises", len(red.promises))
        t["programs"].add("calls", len(red.calls))
        for p in red.promises:
            _count_promise(t, p)
        for key, f in _function_facts(red.calls).items():
            if key in facts:
                facts[key].merge(f)
            else:
                facts[key] = f
    functions = _summaries(facts)
    for fs in functions:
        t["functions"].add("functions", 1)
        if not fs.eligible:
            continue
        t["functions"].add("eligible", 1)
        t["functions"].add("strict", int(fs.strict))
        t["force_orders"].add(len(fs.orders), 1)
        for cls in fs.params:
            t["strictness"].add(cls, 1)
    return CorpusSummary(t, functions)


def _count_promise(t: dict[str, Table], p: PromiseRecord) -> None:
    t["lifecycle"].add((p.category, p.lifecycle), 1)
    if p.force_depth is not None:
        t["force_depth"].add(p.force_depth, 1)
    t["reads"].add(p.read_count, 1)
    t["expr_class"].add((p.category, p.expr_class.value), 1, int("F" in p.lifecycle))
    t["meta_use"].add(p.meta_use, 1)
    for loc, n in (("LOCAL", p.effects_local), ("LEXICAL", p.effects_lexical),
                   ("OTHERENV", p.effects_other)):
        if n:
            t["side_effects"].add(loc, 1, n)
    t["escapes"].add(p.kind.value, 1, int(p.escaped))


# ---------------------------------------------------------------------------
# Reduce files


def _opt(v: Optional[int]) -> str:
    return "-" if v is None else str(v)


def dump_reduction(red: Reduction) -> str:
    lines = [REDUCE_MAGIC,
             "\t".join(["PROGRAM", escape(red.program), red.status, str(red.steps)])]
    for p in red.promises:
        lines.append("\t".join([
            "PROMISE", str(p.prom_id), p.kind.value, str(p.call_id), escape(p.param),
            str(p.position), p.expr_class.value, p.lifecycle, _opt(p.force_depth),
            str(p.read_count), str(p.meta_count), str(int(p.escaped)),
            str(p.effects_local), str(p.effects_lexical), str(p.effects_other),
        ]))
    for c in red.calls:
        lines.append("\t".join([
            "CALL", str(c.call_id), escape(c.site), str(c.n_params), str(int(c.completed)),
            ",".join(map(str, c.order)),
        ]))
    lines.append("END")
    return "".join(line + "\n" for line in lines)


def load_reduction(text: str) -> Reduction:
    lines = text.split("\n")
    if not lines or lines[0] != REDUCE_MAGIC:
        raise FormatError("missing CRREDUCE magic/version line", 1)
    if len(lines) < 3 or lines[-1] != "" or lines[-2] != "END":
        raise FormatError("reduce file is truncated", len(lines))
    red: Optional[Reduction] = None
    for no, line in enumerate(lines[1:-2], 2):
        f = line.split("\t")
        try:
            if f[0] == "PROGRAM" and len(f) == 4 and red is None:
                red = Reduction(unescape(f[1]), f[2], int(f[3]))
            elif f[0] == "PROMISE" and len(f) == 15 and red is not None:
                red.promises.append(PromiseRecord(
                    red.program, int(f[1]), PromiseKind(f[2]), int(f[3]), unescape(f[4]),
                    int(f[5]), ExprClass(f[6]), f[7], None if f[8] == "-" else int(f[8]),
                    int(f[9]), int(f[10]), f[11] == "1", int(f[12]), int(f[13]), int(f[14])))
            elif f[0] == "CALL" and len(f) == 6 and red is not None:
                order = tuple(int(x) for x in f[5].split(",")) if f[5] else ()
                red.calls.append(CallFact(red.program, int(f[1]), unescape(f[2]), int(f[3]),
                                          f[4] == "1", order))
            else:
                raise FormatError(f"unexpected record {f[0]!r}", no)
        except ValueError as err:
            if isinstance(err, FormatError):
                raise
            raise FormatError(str(err), no) from None
    if red is None:
        raise FormatError("reduce file has no PROGRAM record", 2)
    return red


def write_reduction(red: Reduction, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_reduction(red), encoding="utf-8", newline="\n")


def read_reduction(path: Union[str, Path]) -> Reduction:
    with open(path, encoding="utf-8", newline="\n") as f:
        return load_reduction(f.read())


def dump_table(table: Table) -> str:
    lines = ["\t".join(table.keys + table.values)]
    for key, vals in table.sorted_rows():
        lines.append("\t".join([escape(str(k)) for k in key] + [str(v) for v in vals]))
    return "".join(line + "\n" for line in lines)
