"""Seeded generator of small random programs for fuzzing the machine.

Generation is scope-aware: variables are mostly drawn from names that are
bound at that point, and calls to known functions mostly pass the right
number of arguments. A minority of programs still fail (unbound names, arity
errors, promise cycles), which is intended.
"""

from __future__ import annotations

import random

from lazycore.syntax import (
    Assign, Block, Call, Concat, DelayedAssign, EnvCapture, Eval, Function, Param,
    StrLit, Substitute, Var, deparse,
)

PARAMS = ("x", "y", "z")
STRINGS = ("", "s", "t", "u\n", "q\"q", "b\\s")


class ProgramGen:
    def __init__(self, seed: int, max_depth: int = 4):
        self.rng = random.Random(seed)
        self.max_depth = max_depth
        self.funcs: dict[str, int] = {}  # global name -> arity

    def leaf(self, scope: tuple[str, ...], params: tuple[str, ...]):
        r = self.rng.random()
        if r < 0.3 or not scope:
            return StrLit(self.rng.choice(STRINGS))
        if r < 0.85:
            pool = params if params and self.rng.random() < 0.6 else scope
            return Var(self.rng.choice(pool))
        if r < 0.93 and params:
            return Substitute(self.rng.choice(params))
        if r < 0.97:
            return Var("unbound")
        return EnvCapture()

    def function(self, depth: int, scope, n: int = -1) -> Function:
        n = self.rng.randrange(4) if n < 0 else n
        names = PARAMS[:n]
        inner = tuple(dict.fromkeys(scope + names))
        params = tuple(Param(p, self.expr(depth + 1, inner, names)
                             if self.rng.random() < 0.3 else None) for p in names)
        if names and self.rng.random() < 0.2:
            # closure over a parameter, so its promise can escape the call
            body = Function((), Var(self.rng.choice(names)))
            if self.rng.random() < 0.5:
                body = Block((self.expr(depth + 1, inner, names), body))
            return Function(params, body)
        return Function(params, self.expr(depth + 1, inner, names))

    def call(self, depth: int, scope, params) -> Call:
        rng = self.rng
        d = depth + 1
        if self.funcs and rng.random() < 0.7:
            name = rng.choice(sorted(self.funcs))
            n = self.funcs[name]
            if rng.random() < 0.1:
                n = rng.randrange(4)
            return Call(Var(name), tuple(self.expr(d, scope, params) for _ in range(n)))
        if rng.random() < 0.2:
            return Call(self.call(d, scope, params), ())
        fn = self.function(depth, scope)
        n = len(fn.params) - (rng.random() < 0.3)
        return Call(fn, tuple(self.expr(d, scope, params) for _ in range(max(n, 0))))

    def expr(self, depth: int = 0, scope: tuple[str, ...] = (), params: tuple[str, ...] = ()):
        if depth >= self.max_depth:
            return self.leaf(scope, params)
        rng = self.rng
        kind = rng.choices(("leaf", "concat", "assign", "function", "call", "eval",
                            "delayed", "block"),
                           weights=(3, 2, 1, 1, 4, 1, 1, 1))[0]
        d = depth + 1
        sub = lambda: self.expr(d, scope, params)  # noqa: E731
        if kind == "leaf":
            return self.leaf(scope, params)
        if kind == "concat":
            return Concat(sub(), sub())
        if kind == "assign":
            return Assign(rng.choice(("a", "b") + params), sub())
        if kind == "function":
            return self.function(depth, scope)
        if kind == "call":
            return self.call(depth, scope, params)
        if kind == "eval":
            code = StrLit(deparse(sub())) if rng.random() < 0.7 else sub()
            return Eval(code, EnvCapture())
        if kind == "delayed":
            return DelayedAssign(rng.choice(("a", "b") + params), sub(), EnvCapture())
        return Block(tuple(sub() for _ in range(rng.randrange(1, 4))))

    def program(self) -> str:
        """Global strings and functions, then a few expressions, as source text."""
        scope: tuple[str, ...] = ()
        parts = []
        for name in ("a", "b"):
            if self.rng.random() < 0.8:
                parts.append(Assign(name, StrLit(self.rng.choice(STRINGS))))
                scope += (name,)
        for name in ("f", "g"):
            if self.rng.random() < 0.85:
                n = self.rng.randrange(4)
                # registered after its body so it cannot call itself directly
                parts.append(Assign(name, self.function(1, scope, n)))
                self.funcs[name] = n
                scope += (name,)
        parts += [self.expr(0, scope) for _ in range(self.rng.randrange(1, 4))]
        return "; ".join(deparse(p) for p in parts)


def programs(n: int, seed: int = 20240611) -> list[str]:
    return [ProgramGen(seed * 100_003 + i).program() for i in range(n)]
