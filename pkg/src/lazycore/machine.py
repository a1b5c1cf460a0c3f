"""Small-step abstract machine for the lazy core language.

A machine state is a stack of frames over a heap. Each frame holds a focus
expression (which may contain already-computed values, wrapped in :class:`Val`)
and the environment it is evaluated in. Each call to :meth:`Machine.step`
fires exactly one reduction rule, selected by the unique decomposition of the
top focus into an evaluation context and a redex.

Rules: Fun, Concat, Assign, Delay, Env, Subst, Eval, EvalRet, Invk1, Invk0,
Ret1, Ret0, Lookup, Lookup2, Force, ReadVal, Memo, RetProm, plus Seq for
``{ a; b }`` sequencing.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Protocol, Union

from .syntax import (
    Assign, Block, Call, Concat, DelayedAssign, EnvCapture, Eval, Expr, Function,
    Param, ParseError, SourceSpan, StrLit, Substitute, Var, deparse, parse, quote,
)

Location = int
Env = tuple[Location, ...]  # innermost frame first


# ---------------------------------------------------------------------------
# Values and heap objects


@dataclass(frozen=True)
class Str:
    text: str


@dataclass(frozen=True, eq=False)
class Closure:
    params: tuple[Param, ...]
    body: Expr
    env: Env
    span: Optional[SourceSpan] = None


@dataclass(frozen=True)
class EnvVal:
    loc: Location


@dataclass(frozen=True)
class PromVal:
    loc: Location


Value = Union[Str, Closure, EnvVal, PromVal]


@dataclass(frozen=True)
class Val:
    """A value plugged back into an expression during reduction."""

    value: Value
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


class PromiseKind(enum.Enum):
    ARG = "ARG"
    DEFAULT = "DEFAULT"
    DELAYED = "DELAYED"


@dataclass
class PromiseOrigin:
    prom_id: int
    kind: PromiseKind
    call_id: int  # creating call, 0 at top level
    param: str = ""
    position: int = 0  # 1-based parameter position, 0 for delayed promises


@dataclass
class Promise:
    exp: Expr
    env: Optional[Env]  # None once cleared by Memo
    origin: PromiseOrigin
    val: Optional[Value] = None
    forcing: bool = False


@dataclass
class Frame:
    bindings: dict[str, Value] = field(default_factory=dict)


@dataclass
class EnvRecord:
    env: Env


class FrameKind(enum.Enum):
    PLAIN = "PLAIN"
    PROMISE_FORCE = "PROMISE_FORCE"
    EVAL_CALL = "EVAL_CALL"
    CALL_RETURN = "CALL_RETURN"


@dataclass
class StackFrame:
    focus: Any  # Expr possibly containing Val nodes
    env: Env
    kind: FrameKind = FrameKind.PLAIN
    ref: int = 0  # promise location for PROMISE_FORCE, call id for CALL_RETURN


# ---------------------------------------------------------------------------
# Errors


class ErrorCode(enum.Enum):
    UNBOUND_VARIABLE = "UNBOUND_VARIABLE"
    NOT_A_CLOSURE = "NOT_A_CLOSURE"
    TYPE_ERROR = "TYPE_ERROR"
    ARITY_ERROR = "ARITY_ERROR"
    MISSING_DEFAULT = "MISSING_DEFAULT"
    PROMISE_CYCLE = "PROMISE_CYCLE"
    PARSE_ERROR_IN_EVAL = "PARSE_ERROR_IN_EVAL"
    STEP_LIMIT_EXCEEDED = "STEP_LIMIT_EXCEEDED"


class RuntimeFault(Exception):
    """An error raised by the program being run (not by the machine)."""

    def __init__(self, code: ErrorCode, message: str, span: Optional[SourceSpan] = None):
        where = f"{span}: " if span is not None else ""
        super().__init__(f"{where}{message}")
        self.code = code
        self.message = message
        self.span = span


class MachineInvariantError(AssertionError):
    """The machine reached a state the rules say is impossible."""


# ---------------------------------------------------------------------------
# Hooks


class Hooks(Protocol):
    def on_rule(self, rule: str, machine: "Machine", info: dict) -> None: ...


class NullHooks:
    def on_rule(self, rule: str, machine: "Machine", info: dict) -> None:
        pass


# ---------------------------------------------------------------------------
# Environments


def lookup_get(heap: dict, env: Env, name: str) -> Optional[tuple[Location, Value]]:
    """Find ``name`` in the innermost frame of ``env`` that binds it.

    Returns ``(frame location, value)`` or ``None`` when unbound.
    """
    for loc in env:
        frame = heap[loc]
        if name in frame.bindings:
            return loc, frame.bindings[name]
    return None


def is_value(e) -> bool:
    return isinstance(e, (Val, StrLit))


def value_of(e) -> Value:
    return Str(e.text) if isinstance(e, StrLit) else e.value


def _redex_path(e) -> Optional[list[int]]:
    """Path (child indices) from ``e`` to its redex, or None if ``e`` is a value.

    Child indices: Concat 0/1, Assign 0, Call 0 (callee), Eval 0/1,
    DelayedAssign 0 (env), Block i.
    """
    path = []
    while True:
        if isinstance(e, (Val, StrLit)):
            return None if not path else path
        if isinstance(e, Concat):
            if not is_value(e.lhs):
                path.append(0)
                e = e.lhs
            elif not is_value(e.rhs):
                path.append(1)
                e = e.rhs
            else:
                return path
        elif isinstance(e, Assign):
            if is_value(e.rhs):
                return path
            path.append(0)
            e = e.rhs
        elif isinstance(e, Call):
            if is_value(e.callee):
                return path
            path.append(0)
            e = e.callee
        elif isinstance(e, Eval):
            if not is_value(e.code):
                path.append(0)
                e = e.code
            elif not is_value(e.env):
                path.append(1)
                e = e.env
            else:
                return path
        elif isinstance(e, DelayedAssign):
            if is_value(e.env):
                return path
            path.append(0)
            e = e.env
        elif isinstance(e, Block):
            if is_value(e.exprs[0]):
                return path
            path.append(0)
            e = e.exprs[0]
        else:
            return path


def _child(e, i: int):
    if isinstance(e, Concat):
        return e.rhs if i else e.lhs
    if isinstance(e, Assign):
        return e.rhs
    if isinstance(e, Call):
        return e.callee
    if isinstance(e, Eval):
        return e.env if i else e.code
    if isinstance(e, DelayedAssign):
        return e.env
    if isinstance(e, Block):
        return e.exprs[i]
    raise MachineInvariantError(f"no child {i} in {type(e).__name__}")


def _with_child(e, i: int, new):
    if isinstance(e, Concat):
        return replace(e, rhs=new) if i else replace(e, lhs=new)
    if isinstance(e, Assign):
        return replace(e, rhs=new)
    if isinstance(e, Call):
        return replace(e, callee=new)
    if isinstance(e, Eval):
        return replace(e, env=new) if i else replace(e, code=new)
    if isinstance(e, DelayedAssign):
        return replace(e, env=new)
    if isinstance(e, Block):
        return replace(e, exprs=e.exprs[:i] + (new,) + e.exprs[i + 1:])
    raise MachineInvariantError(f"no child {i} in {type(e).__name__}")


def _get_at(e, path: list[int]):
    for i in path:
        e = _child(e, i)
    return e


def _plug(e, path: list[int], new):
    if not path:
        return new
    return _with_child(e, path[0], _plug(_child(e, path[0]), path[1:], new))


def _source_name(text: str) -> str:
    return "eval#" + hashlib.sha1(text.encode("utf-8")).hexdigest()[:8]


def show_value(v: Value) -> str:
    if isinstance(v, Str):
        return quote(v.text)
    if isinstance(v, Closure):
        return deparse(Function(v.params, v.body))
    if isinstance(v, EnvVal):
        return f"<environment {v.loc}>"
    return f"<promise {v.loc}>"


# ---------------------------------------------------------------------------
# The machine


class Machine:
    def __init__(self, program: Expr, hooks: Optional[Hooks] = None):
        self.heap: dict[Location, Any] = {}
        self._next_loc = 0
        self.next_call_id = 0
        self.next_prom_id = 0
        self.steps = 0
        self.hooks = hooks or NullHooks()
        global_frame = self.alloc(Frame())
        self.global_env: Env = (global_frame,)
        self.stack: list[StackFrame] = [StackFrame(program, self.global_env)]

    def alloc(self, obj) -> Location:
        self._next_loc += 1
        self.heap[self._next_loc] = obj
        return self._next_loc

    @property
    def terminal(self) -> bool:
        return len(self.stack) == 1 and is_value(self.stack[0].focus)

    @property
    def result(self) -> Value:
        return value_of(self.stack[0].focus)

    def _fire(self, rule: str, **info) -> str:
        self.hooks.on_rule(rule, self, info)
        return rule

    def step(self) -> str:
        """Fire one rule; return its name. Raises RuntimeFault on program errors."""
        if self.terminal:
            raise MachineInvariantError("step on a terminal state")
        top = self.stack[-1]
        rule = self._step_top(top)
        self.steps += 1
        return rule

    def _step_top(self, top: StackFrame) -> str:
        focus = top.focus
        if top.kind is FrameKind.PROMISE_FORCE and isinstance(focus, Val) \
                and isinstance(focus.value, PromVal):
            return self._force_or_read(top, focus.value.loc)
        if is_value(focus):
            return self._return(top, value_of(focus))
        path = _redex_path(focus)
        redex = _get_at(focus, path)
        new, rule = self._reduce(top, redex)
        if rule is None:
            return new  # rule pushed a frame and already reported itself
        top.focus = _plug(focus, path, new)
        return rule

    # Rules whose redex is the top frame's value -----------------------------

    def _force_or_read(self, top: StackFrame, loc: Location) -> str:
        prom: Promise = self.heap[loc]
        if prom.val is not None:
            top.focus = Val(prom.val)
            return self._fire("ReadVal", loc=loc, promise=prom)
        if prom.forcing:
            raise RuntimeFault(ErrorCode.PROMISE_CYCLE,
                               f"promise {deparse(prom.exp)} forces itself", prom.exp.span)
        prom.forcing = True
        self.stack.append(StackFrame(prom.exp, prom.env, FrameKind.PLAIN))
        return self._fire("Force", loc=loc, promise=prom)

    def _return(self, top: StackFrame, v: Value) -> str:
        if isinstance(v, PromVal):
            raise MachineInvariantError("a promise surfaced as a computed value")
        self.stack.pop()
        below = self.stack[-1]
        if top.kind is FrameKind.PLAIN:
            if below.kind is not FrameKind.PROMISE_FORCE:
                raise MachineInvariantError("plain frame above a non-promise frame")
            prom: Promise = self.heap[below.ref]
            if not prom.forcing or prom.val is not None:
                raise MachineInvariantError("Memo on a promise that is not being forced")
            prom.val = v
            prom.env = None
            prom.forcing = False
            below.focus = Val(v)
            return self._fire("Memo", loc=below.ref, promise=prom)
        path = _redex_path(below.focus)
        redex = _get_at(below.focus, path)
        if top.kind is FrameKind.PROMISE_FORCE:
            if not isinstance(redex, Var):
                raise MachineInvariantError("RetProm without a variable redex")
            rule = self._fire("RetProm", loc=top.ref)
        elif top.kind is FrameKind.CALL_RETURN:
            if not isinstance(redex, Call):
                raise MachineInvariantError("Ret without a call redex")
            rule = self._fire("Ret1" if redex.args else "Ret0", call_id=top.ref)
        else:
            if not isinstance(redex, Eval):
                raise MachineInvariantError("EvalRet without an eval redex")
            rule = self._fire("EvalRet")
        below.focus = _plug(below.focus, path, Val(v, redex.span))
        return rule

    # Rules that rewrite a redex in place ------------------------------------

    def _reduce(self, top: StackFrame, e) -> tuple[Any, Optional[str]]:
        env = top.env
        if isinstance(e, Function):
            v = Closure(e.params, e.body, env, e.span)
            return Val(v, e.span), self._fire("Fun", closure=v)

        if isinstance(e, Concat):
            a, b = value_of(e.lhs), value_of(e.rhs)
            if not (isinstance(a, Str) and isinstance(b, Str)):
                raise RuntimeFault(ErrorCode.TYPE_ERROR, "'+' needs two strings", e.span)
            return Val(Str(a.text + b.text), e.span), self._fire("Concat")

        if isinstance(e, Assign):
            v = value_of(e.rhs)
            frame_loc = env[0]
            frame = self.heap[frame_loc]
            existed = e.name in frame.bindings
            frame.bindings[e.name] = v
            return Val(v, e.span), self._fire("Assign", frame=frame_loc, name=e.name,
                                              existed=existed)

        if isinstance(e, EnvCapture):
            loc = self.alloc(EnvRecord(env))
            return Val(EnvVal(loc), e.span), self._fire("Env", loc=loc)

        if isinstance(e, DelayedAssign):
            target = value_of(e.env)
            if not isinstance(target, EnvVal):
                raise RuntimeFault(ErrorCode.TYPE_ERROR,
                                   "delayedAssign needs an environment", e.span)
            target_env = self.heap[target.loc].env
            self.next_prom_id += 1
            origin = PromiseOrigin(self.next_prom_id, PromiseKind.DELAYED, self.active_call_id)
            ploc = self.alloc(Promise(e.code, env, origin))
            self.heap[target_env[0]].bindings[e.name] = PromVal(ploc)
            return Val(target, e.span), self._fire("Delay", loc=ploc, promise=self.heap[ploc],
                                                   frame=target_env[0], name=e.name)

        if isinstance(e, Substitute):
            found = lookup_get(self.heap, env, e.name)
            if found is None:
                raise RuntimeFault(ErrorCode.UNBOUND_VARIABLE,
                                   f"object '{e.name}' not found", e.span)
            _, v = found
            if not isinstance(v, PromVal):
                raise RuntimeFault(ErrorCode.TYPE_ERROR,
                                   f"substitute: '{e.name}' is not a promise", e.span)
            prom = self.heap[v.loc]
            text = deparse(prom.exp)
            return Val(Str(text), e.span), self._fire("Subst", loc=v.loc, promise=prom)

        if isinstance(e, Var):
            found = lookup_get(self.heap, env, e.name)
            if found is None:
                raise RuntimeFault(ErrorCode.UNBOUND_VARIABLE,
                                   f"object '{e.name}' not found", e.span)
            frame_loc, v = found
            if isinstance(v, PromVal):
                self.stack.append(StackFrame(Val(v), env, FrameKind.PROMISE_FORCE, v.loc))
                return self._fire("Lookup2", frame=frame_loc, name=e.name, loc=v.loc), None
            return Val(v, e.span), self._fire("Lookup", frame=frame_loc, name=e.name)

        if isinstance(e, Eval):
            code, target = value_of(e.code), value_of(e.env)
            if not isinstance(code, Str):
                raise RuntimeFault(ErrorCode.TYPE_ERROR, "eval needs a string", e.span)
            if not isinstance(target, EnvVal):
                raise RuntimeFault(ErrorCode.TYPE_ERROR, "eval needs an environment", e.span)
            try:
                parsed = parse(code.text, _source_name(code.text))
            except ParseError as err:
                raise RuntimeFault(ErrorCode.PARSE_ERROR_IN_EVAL,
                                   f"eval: {err.message}", e.span) from err
            self.stack.append(StackFrame(parsed, self.heap[target.loc].env,
                                         FrameKind.EVAL_CALL))
            return self._fire("Eval", loc=target.loc), None

        if isinstance(e, Call):
            return self._invoke(e, env), None

        if isinstance(e, Block):
            rest = e.exprs[1:]
            if not rest:
                return e.exprs[0], self._fire("Seq")
            new = rest[0] if len(rest) == 1 else replace(e, exprs=rest)
            return new, self._fire("Seq")

        raise MachineInvariantError(f"no rule for {type(e).__name__}")

    def _invoke(self, e: Call, caller_env: Env) -> str:
        fn = value_of(e.callee)
        if not isinstance(fn, Closure):
            raise RuntimeFault(ErrorCode.NOT_A_CLOSURE, "attempt to apply non-function", e.span)
        n, k = len(fn.params), len(e.args)
        if k > n:
            raise RuntimeFault(ErrorCode.ARITY_ERROR,
                               f"{k} arguments passed to a function of {n}", e.span)
        for p in fn.params[k:]:
            if p.default is None:
                raise RuntimeFault(ErrorCode.MISSING_DEFAULT,
                                   f"argument '{p.name}' is missing, with no default", e.span)
        self.next_call_id += 1
        call_id = self.next_call_id
        frame = Frame()
        frame_loc = self.alloc(frame)
        callee_env = (frame_loc,) + fn.env
        created = []
        for i, p in enumerate(fn.params):
            self.next_prom_id += 1
            if i < k:
                kind, exp, penv = PromiseKind.ARG, e.args[i], caller_env
            else:
                kind, exp, penv = PromiseKind.DEFAULT, p.default, callee_env
            origin = PromiseOrigin(self.next_prom_id, kind, call_id, p.name, i + 1)
            loc = self.alloc(Promise(exp, penv, origin))
            frame.bindings[p.name] = PromVal(loc)
            created.append(self.heap[loc])
        self.stack.append(StackFrame(fn.body, callee_env, FrameKind.CALL_RETURN, call_id))
        return self._fire("Invk1" if k else "Invk0", call_id=call_id, closure=fn,
                          frame=frame_loc, n_args=k, promises=created)

    @property
    def active_call_id(self) -> int:
        for fr in reversed(self.stack):
            if fr.kind is FrameKind.CALL_RETURN:
                return fr.ref
        return 0


# ---------------------------------------------------------------------------
# Driver


@dataclass
class Outcome:
    value: Optional[Value]
    error: Optional[RuntimeFault]
    steps: int
    machine: Machine

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def status(self) -> str:
        return "OK" if self.error is None else self.error.code.value


DEFAULT_MAX_STEPS = 1_000_000


def run(program: Union[Expr, str], max_steps: int = DEFAULT_MAX_STEPS,
        hooks: Optional[Hooks] = None) -> Outcome:
    """Run ``program`` from an empty global frame until it stops."""
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    if isinstance(program, str):
        program = parse(program)
    m = Machine(program, hooks)
    try:
        while not m.terminal:
            if m.steps >= max_steps:
                raise RuntimeFault(ErrorCode.STEP_LIMIT_EXCEEDED,
                                   f"no result after {max_steps} steps")
            m.step()
    except RuntimeFault as err:
        return Outcome(None, err, m.steps, m)
    return Outcome(m.result, None, m.steps, m)
