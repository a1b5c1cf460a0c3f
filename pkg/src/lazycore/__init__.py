"""Reference interpreter and laziness profiler for a small lazy core language."""

from .machine import Outcome, run
from .syntax import ParseError, deparse, parse
from .tracer import trace_run

__all__ = ["Outcome", "ParseError", "deparse", "parse", "run", "trace_run"]
__version__ = "0.1.0"
