"""Command line front end: ``lazycore run|trace|analyze|report``."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import analysis, report
from .machine import DEFAULT_MAX_STEPS, Outcome, run, show_value
from .syntax import ParseError, parse
from .trace_format import FormatError, TraceWriter, read_trace
from .tracer import ProgramEnd, ProgramStart, trace_run

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2

TRACE_SUFFIXES = (".crtrace", ".crtrace.z")


def _default_max_steps() -> int:
    raw = os.environ.get("LAZYCORE_MAX_STEPS")
    return int(raw) if raw else DEFAULT_MAX_STEPS


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def _read_source(path: str) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()


def _print_outcome(outcome: Outcome) -> int:
    if outcome.ok:
        print(f"VALUE\t{show_value(outcome.value)}")
        return EXIT_OK
    print(f"ERROR\t{outcome.status}\t{outcome.error}")
    return EXIT_FAIL


def cmd_run(args) -> int:
    try:
        source = _read_source(args.file)
    except OSError as err:
        print(f"lazycore: {err}", file=sys.stderr)
        return EXIT_IO
    try:
        program = parse(source)
    except ParseError as err:
        print(f"ERROR\tPARSE_ERROR\t{err}")
        return EXIT_FAIL
    return _print_outcome(run(program, max_steps=args.max_steps))


def _trace_suffix(compress: bool) -> str:
    return ".crtrace.z" if compress else ".crtrace"


def _trace_jobs(names: Sequence[str], out: Optional[str],
                compress: bool) -> list[tuple[Path, Path]]:
    """Pair each source with its trace path. Directories expand to their
    ``*.cr`` files, whose traces keep the relative layout under ``out``."""
    suffix = _trace_suffix(compress)
    many = len(names) > 1 or any(Path(n).is_dir() for n in names)
    jobs = []
    for name in names:
        src = Path(name)
        if src.is_dir():
            for f in sorted(src.rglob("*.cr"), key=lambda p: p.relative_to(src).as_posix()):
                rel = f.relative_to(src).with_suffix(suffix)
                jobs.append((f, f.with_suffix(suffix) if out is None else Path(out) / rel))
        elif out is None:
            jobs.append((src, src.with_suffix(suffix)))
        elif many or Path(out).is_dir():
            jobs.append((src, Path(out) / (src.stem + suffix)))
        else:
            jobs.append((src, Path(out)))
    return jobs


def cmd_trace(args) -> int:
    status = EXIT_OK
    for src, dest in _trace_jobs(args.files, args.out, args.compress):
        try:
            source = _read_source(str(src))
        except OSError as err:
            print(f"lazycore: {err}", file=sys.stderr)
            return EXIT_IO
        try:
            dest.parent.mkdir(parents=True, exist_ok=True)
            with TraceWriter(dest, compress=args.compress) as sink:
                try:
                    program = parse(source)
                except ParseError as err:
                    sink(ProgramStart(src.name))
                    sink(ProgramEnd(0, "PARSE_ERROR"))
                    print(f"ERROR\tPARSE_ERROR\t{err}")
                    status = EXIT_FAIL
                    continue
                outcome, _ = trace_run(program, name=src.name, max_steps=args.max_steps,
                                       sink=sink)
        except OSError as err:
            print(f"lazycore: {err}", file=sys.stderr)
            return EXIT_IO
        if _print_outcome(outcome) != EXIT_OK:
            status = EXIT_FAIL
    return status


def discover_traces(corpus: Path) -> list[Path]:
    found = [p for p in corpus.rglob("*") if p.is_file() and p.name.endswith(TRACE_SUFFIXES)]
    return sorted(found, key=lambda p: p.relative_to(corpus).as_posix())


def _reduce_one(path: Path) -> tuple[Optional[analysis.Reduction], str]:
    try:
        red = analysis.reduce_trace(read_trace(path))
    except (FormatError, analysis.TraceInvariantError, UnicodeDecodeError, OSError,
            EOFError) as err:
        return None, f"corrupt: {err}"
    if red.status != "OK":
        return None, f"failed: {red.status}"
    return red, ""


def analyze(corpus: Path, out: Path, jobs: int = 1) -> tuple[analysis.CorpusSummary,
                                                             list[tuple[str, str]]]:
    """Reduce every trace under ``corpus``, combine, and write the tables to ``out``."""
    paths = discover_traces(corpus)
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_reduce_one, paths))
    else:
        results = [_reduce_one(p) for p in paths]
    out.mkdir(parents=True, exist_ok=True)
    reduced_dir = out / "reduced"
    reductions, skipped = [], []
    for path, (red, reason) in zip(paths, results):
        rel = path.relative_to(corpus).as_posix()
        if red is None:
            skipped.append((rel, reason))
            continue
        dest = reduced_dir / (rel + ".crreduce")
        dest.parent.mkdir(parents=True, exist_ok=True)
        analysis.write_reduction(red, dest)
        reductions.append(red)
    summary = analysis.combine(reductions)
    for name in analysis.TABLE_NAMES:
        (out / f"{name}.tsv").write_text(analysis.dump_table(summary[name]),
                                         encoding="utf-8", newline="\n")
    (out / "function_summaries.tsv").write_text(_dump_functions(summary.functions),
                                                encoding="utf-8", newline="\n")
    lines = ["trace\treason"] + [f"{r}\t{why}" for r, why in skipped]
    (out / "skipped.tsv").write_text("".join(line + "\n" for line in lines),
                                     encoding="utf-8", newline="\n")
    return summary, skipped


def _dump_functions(functions: Sequence[analysis.FunctionSummary]) -> str:
    lines = ["program\tsite\tparams\tcalls\tclasses\torders\teligible\tstrict"]
    for f in functions:
        orders = ";".join(",".join(map(str, o)) for o in f.orders)
        lines.append("\t".join([f.program, f.site, str(f.n_params), str(f.call_count),
                                ",".join(f.params), orders, str(int(f.eligible)),
                                str(int(f.strict))]))
    return "".join(line + "\n" for line in lines)


def cmd_analyze(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        print(f"lazycore: {corpus} is not a directory", file=sys.stderr)
        return EXIT_IO
    summary, skipped = analyze(corpus, Path(args.out), args.jobs)
    n = summary["programs"].rows[("programs",)][0]
    print(f"analyzed {n} traces, skipped {len(skipped)}")
    return EXIT_OK if n else EXIT_FAIL


def cmd_report(args) -> int:
    try:
        tables = report.load_tables(args.summary_dir)
    except report.MissingSummary as err:
        print(f"lazycore: {err}", file=sys.stderr)
        return EXIT_FAIL
    text = report.render_markdown(tables) if args.format == "markdown" \
        else report.render_tsv(tables)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lazycore",
                                description="Lazy core-language interpreter and tracer")
    sub = p.add_subparsers(dest="command", required=True)

    def steps(sp):
        sp.add_argument("--max-steps", type=_positive, default=_default_max_steps(),
                        help="step budget (default: $LAZYCORE_MAX_STEPS or 1000000)")

    sp = sub.add_parser("run", help="run a program and print its value")
    sp.add_argument("file")
    steps(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("trace", help="run programs and write event traces")
    sp.add_argument("files", nargs="+", help="program files or directories of *.cr files")
    sp.add_argument("--out", help="trace file, or directory when tracing several programs")
    sp.add_argument("--compress", action="store_true", help="gzip the trace (.crtrace.z)")
    steps(sp)
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("analyze", help="reduce and combine a directory of traces")
    sp.add_argument("corpus")
    sp.add_argument("--out", required=True, help="output directory for summary tables")
    sp.add_argument("--jobs", type=_positive, default=os.cpu_count() or 1)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("report", help="render summary tables")
    sp.add_argument("summary_dir")
    sp.add_argument("--format", choices=("markdown", "tsv"), default="markdown")
    sp.add_argument("--out", help="write to a file instead of stdout")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
