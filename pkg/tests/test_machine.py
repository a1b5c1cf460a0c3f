import pytest

from lazycore.machine import (
    DEFAULT_MAX_STEPS, EnvRecord, ErrorCode, Frame, FrameKind, Machine, Promise,
    PromiseKind, Str, lookup_get, run, show_value,
)
from lazycore.syntax import parse


def value(text: str) -> str:
    out = run(text)
    assert out.ok, out.error
    return show_value(out.value)


def status(text: str, **kw) -> str:
    return run(text, **kw).status


class RuleLog:
    def __init__(self):
        self.rules = []

    def on_rule(self, rule, machine, info):
        self.rules.append(rule)


# ---------------------------------------------------------------------------
# get


def test_lookup_get_examples():
    heap = {1: Frame({"x": Str("a")}), 2: Frame({"x": Str("b")})}
    assert lookup_get(heap, (1,), "x") == (1, Str("a"))
    assert lookup_get(heap, (2, 1), "x") == (2, Str("b"))
    assert lookup_get({1: Frame()}, (1,), "y") is None


def test_lookup_get_recurses_outward():
    heap = {1: Frame({"y": Str("outer")}), 2: Frame({"x": Str("inner")})}
    assert lookup_get(heap, (2, 1), "y") == (1, Str("outer"))


# ---------------------------------------------------------------------------
# Rule-level behaviour


def test_memoized_argument_side_effect_runs_once():
    log = RuleLog()
    out = run('f <- function(x) x + x; f((y <- "h"))', hooks=log)
    assert show_value(out.value) == '"hh"'
    assert log.rules.count("Force") == 1
    assert log.rules.count("ReadVal") == 1
    # one Assign for f, one for y inside the promise
    assert log.rules.count("Assign") == 2


def test_promise_cycle():
    out = run("(function(x = x) x)()")
    assert out.status == "PROMISE_CYCLE"
    assert out.error.code is ErrorCode.PROMISE_CYCLE


def test_unforced_argument_is_never_evaluated():
    assert value('g <- function(a, b) a; g("v", nonexistent)') == '"v"'


def test_unused_argument_side_effect_never_happens():
    out = run('g <- function(a) "k"; g((y <- "s")); y')
    assert out.status == "UNBOUND_VARIABLE"


def test_delayed_assign():
    assert value('e <- environment(); delayedAssign(z, "a" + "b", e); z') == '"ab"'


def test_delayed_assign_does_not_touch_code():
    assert value('e <- environment(); delayedAssign(z, nope, e); "fine"') == '"fine"'


def test_substitute_deparses_without_forcing():
    assert value('f <- function(x) substitute(x); f("a" + "b")') == '"\\"a\\" + \\"b\\""'
    assert value('f <- function(x) substitute(x); f(nope)') == '"nope"'


def test_eval_in_captured_environment():
    assert value('f <- function() { y <- "in"; environment() }; '
                 'eval("y + \\"!\\"", f())') == '"in!"'


def test_eval_of_substitute():
    assert value('r <- function(x) eval(substitute(x), environment()); r("c" + "d")') == '"cd"'


def test_default_evaluated_in_callee_env():
    assert value('f <- function(x, y = x + "!") y; f("a")') == '"a!"'


def test_argument_evaluated_in_caller_env():
    assert value('x <- "caller"; f <- function(x, y) y; f("callee", x)') == '"caller"'


def test_closures_capture_definition_env():
    assert value('mk <- function(x) function() x; h <- mk("a"); x <- "b"; h()') == '"a"'


def test_assign_writes_top_frame_only():
    assert value('x <- "g"; f <- function() x <- "l"; f(); x') == '"g"'


def test_block_value_is_last():
    assert value('{ "a"; "b" }') == '"b"'


def test_show_value_forms():
    assert value("function(x) x") == "function(x) x"
    assert value("environment()") == "<environment 2>"


@pytest.mark.parametrize("text, code", [
    ("nope", "UNBOUND_VARIABLE"),
    ('"a"("b")', "NOT_A_CLOSURE"),
    ('"a" + function() "b"', "TYPE_ERROR"),
    ('eval(environment(), environment())', "TYPE_ERROR"),
    ('eval("a", "b")', "TYPE_ERROR"),
    ('delayedAssign(z, "a", "b")', "TYPE_ERROR"),
    ('x <- "a"; substitute(x)', "TYPE_ERROR"),
    ('f <- function(x) x; f("a", "b")', "ARITY_ERROR"),
    ('f <- function(x) x; f()', "MISSING_DEFAULT"),
    ('eval("(", environment())', "PARSE_ERROR_IN_EVAL"),
    ('f <- function(x) f(x); f("a")', "STEP_LIMIT_EXCEEDED"),
])
def test_error_codes(text, code):
    assert status(text, max_steps=5000) == code


def test_errors_carry_spans():
    out = run('f <- function(x) x;\nf(nope)')
    assert out.error.span is not None
    assert (out.error.span.line, out.error.span.column) == (2, 3)
    assert str(out.error).startswith("main:2:3: ")


def test_step_limit_is_exact():
    out = run('f <- function(x) f(x); f("a")', max_steps=123)
    assert out.status == "STEP_LIMIT_EXCEEDED"
    assert out.steps == 123


def test_max_steps_must_be_positive():
    with pytest.raises(ValueError):
        run('"a"', max_steps=0)


def test_default_step_limit():
    assert DEFAULT_MAX_STEPS == 1_000_000


def test_step_count_is_stable():
    counts = {run('"a" + "b"').steps for _ in range(3)}
    assert counts == {1}


def test_missing_argument_without_default_fails_at_call_time():
    # a divergence from lazy missing-argument errors, kept on purpose
    assert status('f <- function(x) "k"; f()') == "MISSING_DEFAULT"


# ---------------------------------------------------------------------------
# Invariants checked after every step


class InvariantChecker:
    """Hooks that assert machine invariants after each rule fires."""

    def __init__(self):
        self.forced = set()

    def on_rule(self, rule, machine, info):
        if rule == "Force":
            loc = info["loc"]
            assert loc not in self.forced
            self.forced.add(loc)
        for obj in machine.heap.values():
            if isinstance(obj, Promise):
                if obj.val is not None:
                    assert obj.env is None and not obj.forcing
                if obj.forcing:
                    assert obj.val is None
        assert machine.stack[0].kind is FrameKind.PLAIN
        for fr in machine.stack[1:]:
            if fr.kind is FrameKind.PROMISE_FORCE:
                assert isinstance(machine.heap[fr.ref], Promise)


@pytest.mark.parametrize("text", [
    'f <- function(x) x + x; f((y <- "h"))',
    'e <- environment(); delayedAssign(z, "a" + "b", e); z + z',
    'h <- function(x) x; g <- function(x) h(x); g("a")',
    'mk <- function(x) { x; x; function() x }; h <- mk("a"); h()',
    'f <- function(x, y = x + "!") y + x; f("a")',
    'r <- function(x) eval(substitute(x), environment()); r("c" + "d")',
])
def test_invariants_hold_every_step(text):
    checker = InvariantChecker()
    out = run(text, hooks=checker)
    assert out.ok
    m = out.machine
    assert len(m.stack) == 1 and m.terminal
    assert all(not isinstance(o, Promise) or not o.forcing for o in m.heap.values())


def test_locations_are_sequential_and_typed():
    out = run('f <- function(x) environment(); f("a")')
    m = out.machine
    assert sorted(m.heap) == list(range(1, len(m.heap) + 1))
    kinds = [type(m.heap[k]).__name__ for k in sorted(m.heap)]
    assert kinds == ["Frame", "Frame", "Promise", "EnvRecord"]
    assert isinstance(m.heap[4], EnvRecord) and m.heap[4].env == (2, 1)


def test_promise_origins():
    out = run('e <- environment(); f <- function(a, b = "d") '
              '{ delayedAssign(z, "q", e); a + b }; f("x")')
    promises = [o for o in out.machine.heap.values() if isinstance(o, Promise)]
    origins = [(p.origin.prom_id, p.origin.kind, p.origin.call_id, p.origin.param)
               for p in promises]
    assert origins == [(1, PromiseKind.ARG, 1, "a"), (2, PromiseKind.DEFAULT, 1, "b"),
                       (3, PromiseKind.DELAYED, 1, "")]


def test_step_method_reports_rule_names():
    m = Machine(parse('"a" + "b"'))
    assert m.step() == "Concat"
    assert m.terminal and m.result == Str("ab")
