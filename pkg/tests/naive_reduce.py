"""Deliberately naive second implementation of trace reduction.

Every per-promise and per-call fact is recomputed by re-scanning the whole
event list, with no incremental state shared between promises. It is slow
(quadratic) and exists only to cross-check ``lazycore.analysis``.
"""

from __future__ import annotations

from collections import Counter

from lazycore.analysis import ALWAYS, NEVER, SOMETIMES, CallFact, PromiseRecord
from lazycore.machine import PromiseKind
from lazycore.tracer import (
    CallEnter, CallExit, PromCreate, PromForceEnter, PromMeta, PromRead, ProgramStart,
    VarDef, VarWrite,
)


def _stack_height(events, upto):
    h = 0
    for ev in events[:upto]:
        if isinstance(ev, CallEnter):
            h += 1
        elif isinstance(ev, CallExit):
            h -= 1
    return h


def _exit_index(events, call_id):
    for i, ev in enumerate(events):
        if isinstance(ev, CallExit) and ev.call_id == call_id:
            return i
    return None


def naive_promises(events) -> list[PromiseRecord]:
    program = next(ev.name for ev in events if isinstance(ev, ProgramStart))
    out = []
    for ci, create in enumerate(events):
        if not isinstance(create, PromCreate):
            continue
        pid = create.prom_id
        position = 0
        if create.kind is not PromiseKind.DELAYED:
            position = sum(1 for ev in events[:ci + 1]
                           if isinstance(ev, PromCreate) and ev.call_id == create.call_id
                           and ev.kind is not PromiseKind.DELAYED)
        exit_at = _exit_index(events, create.call_id) if create.call_id else None
        letters = []
        escaped = False
        depth = None
        for i, ev in enumerate(events):
            letter = None
            if isinstance(ev, PromForceEnter) and ev.prom_id == pid:
                letter = "F"
                depth = _stack_height(events, i) - _stack_height(events, ci)
            elif isinstance(ev, PromRead) and ev.prom_id == pid:
                letter = "R"
            elif isinstance(ev, PromMeta) and ev.prom_id == pid:
                letter = "M"
            if letter is None:
                continue
            if exit_at is not None and exit_at < i and not escaped:
                escaped = True
                letters.append("E")
            letters.append(letter)
        lifecycle = "".join(letters)
        effects = Counter(ev.locality.value for ev in events
                          if isinstance(ev, (VarDef, VarWrite)) and ev.prom_id == pid)
        out.append(PromiseRecord(
            program, pid, create.kind, create.call_id, create.param, position,
            create.expr_class, lifecycle, depth, lifecycle.count("R"), lifecycle.count("M"),
            escaped, effects["LOCAL"], effects["LEXICAL"], effects["OTHERENV"]))
    return out


def naive_calls(events) -> list[CallFact]:
    program = next(ev.name for ev in events if isinstance(ev, ProgramStart))
    promises = naive_promises(events)
    out = []
    for ev in events:
        if not isinstance(ev, CallEnter):
            continue
        completed = _exit_index(events, ev.call_id) is not None
        own = {p.prom_id: p.position for p in promises
               if p.call_id == ev.call_id and p.kind is not PromiseKind.DELAYED}
        order = tuple(own[f.prom_id] for f in events
                      if isinstance(f, PromForceEnter) and f.prom_id in own)
        out.append(CallFact(program, ev.call_id, ev.closure, ev.n_params, completed, order))
    return out


def naive_function_rows(calls: list[CallFact]) -> list[tuple]:
    """(program, site, n_params, calls, classes, sorted orders) per function."""
    keys = sorted({(c.program, c.site) for c in calls if c.completed})
    rows = []
    for key in keys:
        mine = [c for c in calls if c.completed and (c.program, c.site) == key]
        n_params = mine[0].n_params
        classes = []
        for pos in range(1, n_params + 1):
            hits = [pos in c.order for c in mine]
            classes.append(ALWAYS if all(hits) else NEVER if not any(hits) else SOMETIMES)
        orders = tuple(sorted({c.order for c in mine}))
        rows.append((key[0], key[1], n_params, len(mine), tuple(classes), orders))
    return rows


def naive_tables(promises: list[PromiseRecord], calls: list[CallFact],
                 n_programs: int) -> dict[str, dict]:
    """Nonzero rows of every summary table, computed from scratch."""
    t: dict[str, Counter] = {}

    def bump(table, key, *amounts):
        row = t.setdefault(table, {}).setdefault(key, [0] * len(amounts))
        for i, a in enumerate(amounts):
            row[i] += a

    bump("programs", ("programs",), n_programs)
    bump("programs", ("promises",), len(promises))
    bump("programs", ("calls",), len(calls))
    for p in promises:
        if p.kind is PromiseKind.DELAYED:
            category = "NON_ARGUMENT"
        else:
            category = "ESCAPED" if "E" in p.lifecycle else "ARGUMENT"
        bump("lifecycle", (category, p.lifecycle), 1)
        if "F" in p.lifecycle:
            bump("force_depth", (p.force_depth,), 1)
        bump("reads", (p.lifecycle.count("R"),), 1)
        bump("expr_class", (category, p.expr_class.value), 1, int("F" in p.lifecycle))
        meta = "M" in p.lifecycle
        value = "F" in p.lifecycle or "R" in p.lifecycle
        use = {(True, True): "META_AND_VALUE", (True, False): "META_ONLY",
               (False, True): "VALUE_ONLY", (False, False): "UNUSED"}[(meta, value)]
        bump("meta_use", (use,), 1)
        for loc, n in (("LOCAL", p.effects_local), ("LEXICAL", p.effects_lexical),
                       ("OTHERENV", p.effects_other)):
            if n:
                bump("side_effects", (loc,), 1, n)
        bump("escapes", (p.kind.value,), 1, int("E" in p.lifecycle))
    for _, _, n_params, n_calls, classes, orders in naive_function_rows(calls):
        bump("functions", ("functions",), 1)
        if n_calls < 2 or n_params < 1:
            continue
        bump("functions", ("eligible",), 1)
        strict = all(c == ALWAYS for c in classes) and len(orders) == 1
        bump("functions", ("strict",), int(strict))
        bump("force_orders", (len(orders),), 1)
        for c in classes:
            bump("strictness", (c,), 1)
    return {name: {k: v for k, v in rows.items() if any(v)} for name, rows in t.items()}
