"""Dynamic-analysis tracer: turns machine transitions into an event stream.

The tracer keeps a shadow call stack that mirrors the machine's call frames.
It uses it to attribute promise forces to the active call and to compute
force depth, the number of call levels between the call that created a
promise and the call that forces it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, ClassVar, Optional, Union

from . import machine as m
from .machine import PromiseKind
from .syntax import Call, Expr, StrLit, Var, deparse


class ExprClass(enum.Enum):
    SYM = "SYM"
    CONST = "CONST"
    CALL = "CALL"
    OTHER = "OTHER"


class Locality(enum.Enum):
    NONE = "NONE"
    LOCAL = "LOCAL"
    LEXICAL = "LEXICAL"
    OTHER = "OTHERENV"


def classify_expr(e: Expr) -> ExprClass:
    if isinstance(e, Var):
        return ExprClass.SYM
    if isinstance(e, StrLit):
        return ExprClass.CONST
    if isinstance(e, Call):
        return ExprClass.CALL
    return ExprClass.OTHER


# ---------------------------------------------------------------------------
# Events. Field order is the serialized order.


@dataclass(frozen=True)
class ProgramStart:
    NAME: ClassVar[str] = "PROGRAM_START"
    name: str


@dataclass(frozen=True)
class CallEnter:
    NAME: ClassVar[str] = "CALL_ENTER"
    call_id: int
    closure: str  # definition site key, e.g. "main:5-20"
    n_params: int
    n_args: int


@dataclass(frozen=True)
class CallExit:
    NAME: ClassVar[str] = "CALL_EXIT"
    call_id: int


@dataclass(frozen=True)
class PromCreate:
    NAME: ClassVar[str] = "PROM_CREATE"
    prom_id: int
    call_id: int
    param: str
    kind: PromiseKind
    expr_class: ExprClass
    expr: str


@dataclass(frozen=True)
class PromForceEnter:
    NAME: ClassVar[str] = "PROM_FORCE_ENTER"
    prom_id: int
    call_id: int
    depth: int


@dataclass(frozen=True)
class PromForceExit:
    NAME: ClassVar[str] = "PROM_FORCE_EXIT"
    prom_id: int


@dataclass(frozen=True)
class PromRead:
    NAME: ClassVar[str] = "PROM_READ"
    prom_id: int
    call_id: int


@dataclass(frozen=True)
class PromMeta:
    NAME: ClassVar[str] = "PROM_META"
    prom_id: int
    call_id: int


@dataclass(frozen=True)
class EvalEnter:
    NAME: ClassVar[str] = "EVAL_ENTER"
    env_loc: int


@dataclass(frozen=True)
class EvalExit:
    NAME: ClassVar[str] = "EVAL_EXIT"


@dataclass(frozen=True)
class VarDef:
    NAME: ClassVar[str] = "VAR_DEF"
    frame_loc: int
    name: str
    locality: Locality
    prom_id: int


@dataclass(frozen=True)
class VarWrite:
    NAME: ClassVar[str] = "VAR_WRITE"
    frame_loc: int
    name: str
    locality: Locality
    prom_id: int


@dataclass(frozen=True)
class VarRead:
    NAME: ClassVar[str] = "VAR_READ"
    frame_loc: int
    name: str


@dataclass(frozen=True)
class ProgramEnd:
    NAME: ClassVar[str] = "PROGRAM_END"
    steps: int
    status: str


TraceEvent = Union[ProgramStart, CallEnter, CallExit, PromCreate, PromForceEnter,
                   PromForceExit, PromRead, PromMeta, EvalEnter, EvalExit, VarDef,
                   VarWrite, VarRead, ProgramEnd]

EVENT_TYPES: tuple[type, ...] = (
    ProgramStart, CallEnter, CallExit, PromCreate, PromForceEnter, PromForceExit,
    PromRead, PromMeta, EvalEnter, EvalExit, VarDef, VarWrite, VarRead, ProgramEnd,
)


class TracerInvariantError(AssertionError):
    pass


# ---------------------------------------------------------------------------


class Tracer:
    """Machine hooks that emit :data:`TraceEvent` values to ``sink``.

    With ``check=True`` the shadow stack is compared against the machine's
    call frames after every rule.
    """

    def __init__(self, sink: Callable[[TraceEvent], None], check: bool = False):
        self.sink = sink
        self.check = check
        self.shadow: list[tuple[int, int]] = []  # (call_id, frame_loc)
        self.forcing: list[tuple[int, m.Env]] = []  # (prom_id, evaluation env)
        self._created_at: dict[int, int] = {}  # prom_id -> shadow depth at creation

    @property
    def active_call(self) -> int:
        return self.shadow[-1][0] if self.shadow else 0

    def on_rule(self, rule: str, machine: m.Machine, info: dict) -> None:
        for ev in self.hook_dispatch(rule, info):
            self.sink(ev)
        if self.check:
            # Cheap per-rule check; with the push/pop discipline above it implies
            # the shadow stack equals the machine's call frames at every step.
            if machine.active_call_id != self.active_call:
                raise TracerInvariantError(f"shadow stack top {self.active_call} != "
                                           f"machine {machine.active_call_id}")
            if rule in ("Invk1", "Invk0") and machine.stack[-1].ref != self.active_call:
                raise TracerInvariantError("call frame not on top after invoke")

    def hook_dispatch(self, rule: str, info: dict) -> list[TraceEvent]:
        if rule in ("Invk1", "Invk0"):
            fn = info["closure"]
            call_id = info["call_id"]
            self.shadow.append((call_id, info["frame"]))
            site = fn.span.key if fn.span is not None else "?"
            out: list[TraceEvent] = [CallEnter(call_id, site, len(fn.params), info["n_args"])]
            for p in info["promises"]:
                out.append(self._create(p))
            return out
        if rule in ("Ret1", "Ret0"):
            call_id, _ = self.shadow.pop()
            if call_id != info["call_id"]:
                raise TracerInvariantError(f"returned from {info['call_id']}, expected {call_id}")
            return [CallExit(call_id)]
        if rule == "Delay":
            if info["promise"].origin.call_id != self.active_call:
                raise TracerInvariantError("delayed promise created outside the active call")
            return [self._create(info["promise"])]
        if rule == "Force":
            p = info["promise"]
            pid = p.origin.prom_id
            self.forcing.append((pid, p.env))
            depth = len(self.shadow) - self._created_at[pid]
            return [PromForceEnter(pid, self.active_call, depth)]
        if rule == "Memo":
            pid = info["promise"].origin.prom_id
            top, _ = self.forcing.pop()
            if top != pid:
                raise TracerInvariantError(f"promise {pid} finished while forcing {top}")
            return [PromForceExit(pid)]
        if rule == "ReadVal":
            return [PromRead(info["promise"].origin.prom_id, self.active_call)]
        if rule == "Subst":
            return [PromMeta(info["promise"].origin.prom_id, self.active_call)]
        if rule == "Assign":
            cls = VarWrite if info["existed"] else VarDef
            locality, pid = self._locality(info["frame"])
            return [cls(info["frame"], info["name"], locality, pid)]
        if rule in ("Lookup", "Lookup2"):
            return [VarRead(info["frame"], info["name"])]
        if rule == "Eval":
            return [EvalEnter(info["loc"])]
        if rule == "EvalRet":
            return [EvalExit()]
        return []

    def _create(self, p: m.Promise) -> PromCreate:
        o = p.origin
        self._created_at[o.prom_id] = len(self.shadow)
        return PromCreate(o.prom_id, o.call_id, o.param, o.kind,
                          classify_expr(p.exp), deparse(p.exp))

    def _locality(self, frame_loc: int) -> tuple[Locality, int]:
        if not self.forcing:
            return Locality.NONE, 0
        pid, env = self.forcing[-1]
        if env and env[0] == frame_loc:
            return Locality.LOCAL, pid
        if frame_loc in env[1:]:
            return Locality.LEXICAL, pid
        return Locality.OTHER, pid


def trace_run(program, name: str = "main", max_steps: int = m.DEFAULT_MAX_STEPS,
              sink: Optional[Callable[[TraceEvent], None]] = None,
              check: bool = False) -> tuple[m.Outcome, list[TraceEvent]]:
    """Run ``program`` under the tracer.

    Events go to ``sink`` when given; otherwise they are collected and
    returned as the second element.
    """
    events: list[TraceEvent] = []
    emit = sink if sink is not None else events.append
    emit(ProgramStart(name))
    tracer = Tracer(emit, check=check)
    outcome = m.run(program, max_steps=max_steps, hooks=tracer)
    emit(ProgramEnd(outcome.steps, outcome.status))
    return outcome, events
