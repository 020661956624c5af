from __future__ import annotations

import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

import typer
from rich.console import Console

from .alias import compute_points_to
from .analysis import ModuleAnalysis
from .callgraph import build_call_graph, default_roots, islands
from .config import get_settings
from .dot import callgraph_to_dot, pdg_to_dot, sccdag_to_dot
from .errors import MidendError, ParseError, VerificationError
from .interp import (
    MODE_CONCURRENT,
    MODE_SEQUENTIAL,
    ExecResult,
    collect_profile,
    embed_profile,
    hotness,
    parse_profile_lines,
    profile_lines,
    read_profile,
    run_pair,
    run_parallel,
    run_program,
    task_functions,
)
from .ir.link import link_modules
from .ir.model import EntityKind, ModuleIR
from .ir.parser import parse_with_lines
from .ir.printer import print_module
from .ir.verify import verify_module
from .logging_utils import get_logger
from .parallel import doall_check, doall_transform
from .pdg import build_pdg, embed_pdg
from .transforms import MovePoint, dead_function_elimination, licm, move_before

app = typer.Typer(add_completion=False, pretty_exceptions_show_locals=False)
err_console = Console(stderr=True)

MODES = {"seq": MODE_SEQUENTIAL, "par": MODE_CONCURRENT}


class _Source:
    def __init__(self, path: Path, module: ModuleIR, lines: dict[int, int]) -> None:
        self.path = path
        self.module = module
        self.lines = lines

    def line_of(self, exc: MidendError) -> Optional[int]:
        if isinstance(exc, ParseError):
            return exc.line
        if isinstance(exc, VerificationError):
            for diagnostic in exc.diagnostics:
                line = self.line_of_entity(diagnostic.entity)
                if line is not None:
                    return line
        return exc.line

    def line_of_entity(self, entity) -> Optional[int]:
        if entity is None:
            return None
        if entity.kind is EntityKind.INSTRUCTION:
            return self.lines.get(entity.ordinal)
        owners = self.module.block_owner()
        if entity.kind is EntityKind.BLOCK and entity.ordinal in owners:
            _, block = owners[entity.ordinal]
            return self.lines.get(block.instructions[0].id)
        if entity.kind is EntityKind.FUNCTION and 0 <= entity.ordinal < len(self.module.functions):
            first = self.module.functions[entity.ordinal].entry.instructions[0]
            return self.lines.get(first.id)
        return None


def _report_error(path: Path, message: str, line: Optional[int]) -> None:
    where = f"{path}:{line}" if line is not None else str(path)
    err_console.print(f"[red]error:[/] {message} at {where}", highlight=False, markup=True)


@contextmanager
def _guard(path: Path, source: Optional[_Source] = None) -> Iterator[None]:
    """Render toolkit errors as one diagnostic line and exit with status 1."""
    try:
        yield
    except MidendError as exc:
        line = source.line_of(exc) if source is not None else exc.line
        _report_error(path, str(exc), line)
        raise typer.Exit(code=1) from exc


def _load(path: Path) -> _Source:
    resolved = path.expanduser()
    if not resolved.exists():
        raise typer.BadParameter(f"IR file not found: {resolved}")
    with _guard(resolved):
        module, lines = parse_with_lines(resolved.read_text(encoding="utf-8"))
    return _Source(resolved, module, lines)


def _parse_args(values: Optional[list[str]]) -> list[list[int]]:
    """Each ``--args`` value is one input vector: integers separated by spaces or commas."""
    if not values:
        return [[]]
    vectors = []
    for value in values:
        try:
            vectors.append([int(part) for part in value.replace(",", " ").split()])
        except ValueError as exc:
            raise typer.BadParameter(f"--args must list integers, got {value!r}") from exc
    return vectors


def _resolve_mode(mode: str) -> str:
    if mode not in MODES:
        raise typer.BadParameter("--mode must be one of: seq, par")
    return MODES[mode]


def _resolve_verbose(verbose: bool, quiet: bool) -> bool:
    if verbose and quiet:
        raise typer.BadParameter("Cannot use --verbose and --quiet together.")
    if verbose:
        return True
    if quiet:
        return False
    return get_settings().verbose


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")


def _execute(module: ModuleIR, args: list[int], mode: str, seed: int, budget: int) -> ExecResult:
    if task_functions(module):
        return run_parallel(module, args, mode, seed=seed, step_budget=budget)
    return run_program(module, args, budget)


def _format_result(result: ExecResult) -> str:
    lines = [str(value) for value in result.output]
    lines.append(f"exit {result.exit_value}")
    lines.append(f"steps {result.steps}")
    if result.trap:
        lines.append(f"trap {result.trap}")
    return "\n".join(lines) + "\n"


@app.command()
def verify(path: Path = typer.Argument(..., help="IR file to check")) -> None:
    """Parse and verify a module."""
    source = _load(path)
    diagnostics = verify_module(source.module)
    for diagnostic in diagnostics:
        _report_error(source.path, str(diagnostic), source.line_of_entity(diagnostic.entity))
    if diagnostics:
        raise typer.Exit(code=1)
    typer.echo("ok")


@app.command()
def run(
    path: Path = typer.Argument(..., help="IR file to execute"),
    args: Optional[list[str]] = typer.Option(None, "--args", help="Arguments to @main"),
    mode: str = typer.Option("seq", "--mode", help="Task execution mode (seq|par)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for randomized task order"),
    step_budget: Optional[int] = typer.Option(None, "--step-budget", help="Instruction budget"),
) -> None:
    """Interpret @main and print its output, exit value and step count."""
    settings = get_settings()
    resolved_mode = _resolve_mode(mode)
    vectors = _parse_args(args)
    source = _load(path)
    trapped = False
    with _guard(source.path, source):
        for vector in vectors:
            result = _execute(
                source.module,
                vector,
                resolved_mode,
                settings.seed if seed is None else seed,
                step_budget or settings.step_budget,
            )
            sys.stdout.write(_format_result(result))
            trapped = trapped or result.trap is not None
    if trapped:
        raise typer.Exit(code=1)


@app.command()
def prof(
    path: Path = typer.Argument(..., help="IR file to profile"),
    args: Optional[list[str]] = typer.Option(None, "--args", help="Input vector; repeat for more"),
    edges: bool = typer.Option(False, "--edges", help="Include CFG edge counts", is_flag=True),
    step_budget: Optional[int] = typer.Option(None, "--step-budget", help="Instruction budget"),
) -> None:
    """Collect an IR-level profile and print it as ``!prof`` lines."""
    settings = get_settings()
    vectors = _parse_args(args)
    source = _load(path)
    with _guard(source.path, source):
        profile = collect_profile(source.module, vectors, step_budget or settings.step_budget)
    sys.stdout.write("".join(f"!prof {line}\n" for line in profile_lines(profile, edges)))


@app.command("embed-prof")
def embed_prof(
    path: Path = typer.Argument(..., help="IR file to annotate"),
    profile: Optional[Path] = typer.Option(None, "--profile", help="Profile file (stdin if omitted)"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output IR path"),
) -> None:
    """Embed a profile produced by ``prof`` into the module as metadata."""
    source = _load(path)
    text = profile.read_text(encoding="utf-8") if profile else sys.stdin.read()
    with _guard(source.path, source):
        embedded = embed_profile(source.module, parse_profile_lines(text.splitlines()))
    _emit(print_module(embedded), out)


@app.command()
def pdg(
    path: Path = typer.Argument(..., help="IR file to analyze"),
    loop: Optional[int] = typer.Option(None, "--loop", help="Restrict to one loop's dependence graph"),
    baseline: bool = typer.Option(False, "--baseline", help="Alias-free all-pairs memory edges", is_flag=True),
    embed: bool = typer.Option(False, "--embed", help="Print the module with !pdg metadata", is_flag=True),
    dot: Optional[Path] = typer.Option(None, "--dot", help="Write a DOT rendering here"),
) -> None:
    """Print the program dependence graph."""
    source = _load(path)
    with _guard(source.path, source):
        analysis = ModuleAnalysis(source.module)
        if loop is not None:
            graph = analysis.info(loop).ldg
        elif baseline:
            graph = build_pdg(source.module, baseline=True)
        else:
            graph = analysis.pdg
        if embed:
            sys.stdout.write(print_module(embed_pdg(source.module, graph)))
        else:
            sys.stdout.write("".join(f"{line}\n" for line in graph.dump()))
        if dot is not None:
            _emit(pdg_to_dot(source.module, graph), dot)


@app.command()
def sccdag(
    path: Path = typer.Argument(..., help="IR file to analyze"),
    loop: int = typer.Option(..., "--loop", help="Loop id (ordinal of its header block)"),
    dot: Optional[Path] = typer.Option(None, "--dot", help="Write a DOT rendering here"),
) -> None:
    """Print the classified SCCDAG of one loop."""
    source = _load(path)
    with _guard(source.path, source):
        info = ModuleAnalysis(source.module).info(loop)
        sys.stdout.write("".join(f"{line}\n" for line in info.dag.dump()))
        if dot is not None:
            _emit(sccdag_to_dot(source.module, info.dag, info.ldg), dot)


@app.command()
def callgraph(
    path: Path = typer.Argument(..., help="IR file to analyze"),
    dot: Optional[Path] = typer.Option(None, "--dot", help="Write a DOT rendering here"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging", is_flag=True),
    quiet: bool = typer.Option(False, "--quiet", help="Silence verbose logging", is_flag=True),
) -> None:
    """Print call edges and unreachable-island structure."""
    logger = get_logger(verbose=_resolve_verbose(verbose, quiet))
    source = _load(path)
    with _guard(source.path, source):
        graph = build_call_graph(source.module, logger=logger)
        lines = graph.dump()
        lines.extend(
            "island {" + ", ".join(f"@{name}" for name in sorted(island.members)) + "}"
            for island in islands(graph)
        )
        sys.stdout.write("".join(f"{line}\n" for line in lines))
        if dot is not None:
            _emit(callgraph_to_dot(graph), dot)


@app.command()
def pts(path: Path = typer.Argument(..., help="IR file to analyze")) -> None:
    """Print the points-to set of every pointer-carrying value."""
    source = _load(path)
    with _guard(source.path, source):
        result = compute_points_to(source.module, get_settings().max_offsets)
        sys.stdout.write("".join(f"{line}\n" for line in result.dump(source.module)))


@app.command()
def report(path: Path = typer.Argument(..., help="IR file to analyze")) -> None:
    """One line per loop: depth, hotness, invariants, induction variables and trip count."""
    source = _load(path)
    with _guard(source.path, source):
        analysis = ModuleAnalysis(source.module)
        profile = read_profile(source.module)
        for loop in analysis.loops:
            info = analysis.info(loop)
            if info.governing is None:
                governing = "no"
            else:
                trips = info.trip_count
                governing = f"yes(trip={'?' if trips is None else trips})"
            heat = hotness(source.module, loop, profile) if profile else 0.0
            typer.echo(
                f"loop {loop} fn=@{loop.function} depth={loop.depth} hot={heat:.3f} "
                f"invariants={len(info.invariants)}/naive={len(info.naive)} "
                f"ivs={len(info.ivs)} governing={governing}"
            )


@app.command("licm")
def licm_command(
    path: Path = typer.Argument(..., help="IR file to transform"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output IR path"),
    naive: bool = typer.Option(False, "--naive", help="Use operand-only invariants", is_flag=True),
    hot_threshold: Optional[float] = typer.Option(None, "--hot-threshold", help="Minimum loop hotness"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging", is_flag=True),
    quiet: bool = typer.Option(False, "--quiet", help="Silence verbose logging", is_flag=True),
) -> None:
    """Hoist loop invariants to preheaders."""
    settings = get_settings()
    threshold = settings.hot_threshold if hot_threshold is None else hot_threshold
    if not 0.0 <= threshold <= 1.0:
        raise typer.BadParameter("--hot-threshold must be within [0, 1]")
    logger = get_logger(verbose=_resolve_verbose(verbose, quiet))
    source = _load(path)
    with _guard(source.path, source):
        result = licm(source.module, naive=naive, hot_threshold=threshold, logger=logger)
    if not result.total:
        logger.info("no invariant could be hoisted")
    _emit(print_module(result.module), out)


@app.command()
def dfe(
    path: Path = typer.Argument(..., help="IR file to transform"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output IR path"),
    root: Optional[list[str]] = typer.Option(None, "--root", help="Extra root function; repeatable"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging", is_flag=True),
    quiet: bool = typer.Option(False, "--quiet", help="Silence verbose logging", is_flag=True),
) -> None:
    """Remove functions no root can reach."""
    logger = get_logger(verbose=_resolve_verbose(verbose, quiet))
    source = _load(path)
    with _guard(source.path, source):
        roots = None
        if root:
            roots = default_roots(source.module) + [name.lstrip("@") for name in root]
        result = dead_function_elimination(source.module, roots=roots, logger=logger)
    if not result.removed:
        logger.info("no dead functions")
    _emit(print_module(result.module), out)


@app.command()
def doall(
    path: Path = typer.Argument(..., help="IR file to transform"),
    loop: int = typer.Option(..., "--loop", help="Loop id (ordinal of its header block)"),
    tasks: Optional[int] = typer.Option(None, "--tasks", help="Number of tasks"),
    mode: str = typer.Option("seq", "--mode", help="Execution mode of the --args self-check (seq|par)"),
    args: Optional[list[str]] = typer.Option(None, "--args", help="Compare outputs on this input"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for randomized task order"),
    hot_threshold: Optional[float] = typer.Option(None, "--hot-threshold", help="Minimum loop hotness"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output IR path"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging", is_flag=True),
    quiet: bool = typer.Option(False, "--quiet", help="Silence verbose logging", is_flag=True),
) -> None:
    """Outline a loop into strided tasks with privatized reductions."""
    settings = get_settings()
    resolved_tasks = tasks or settings.tasks
    if resolved_tasks < 1:
        raise typer.BadParameter("--tasks must be >= 1")
    resolved_mode = _resolve_mode(mode)
    threshold = settings.hot_threshold if hot_threshold is None else hot_threshold
    logger = get_logger(verbose=_resolve_verbose(verbose, quiet))
    source = _load(path)
    with _guard(source.path, source):
        analysis = ModuleAnalysis(source.module)
        target = analysis.loop(loop)
        if threshold > 0 and hotness(source.module, target) < threshold:
            err_console.print(f"DOALL rejected: loop {target} is below the hot threshold {threshold}")
            raise typer.Exit(code=1)
        plan = doall_check(source.module, target, tasks=resolved_tasks, analysis=analysis)
        if not plan.applicable:
            err_console.print(plan.rejected, highlight=False, markup=False)
            raise typer.Exit(code=1)
        transformed = doall_transform(source.module, plan, resolved_tasks, logger=logger)
        if args:
            budget = settings.step_budget
            for vector in _parse_args(args):
                before = run_program(source.module, vector, budget)
                after = run_parallel(
                    transformed,
                    vector,
                    resolved_mode,
                    seed=settings.seed if seed is None else seed,
                    step_budget=budget,
                )
                if not before.same_behaviour(after):
                    _report_error(source.path, f"transformed loop {target} changed behaviour", None)
                    raise typer.Exit(code=1)
    _emit(print_module(transformed), out)


@app.command()
def move(
    path: Path = typer.Argument(..., help="IR file to transform"),
    instr: int = typer.Option(..., "--instr", help="Instruction to move"),
    before: Optional[int] = typer.Option(None, "--before", help="Instruction to move in front of"),
    end: Optional[str] = typer.Option(None, "--end", help="Block whose terminator to move in front of"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output IR path"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging", is_flag=True),
    quiet: bool = typer.Option(False, "--quiet", help="Silence verbose logging", is_flag=True),
) -> None:
    """Move one instruction when every dependence and SSA dominance survives."""
    if (before is None) == (end is None):
        raise typer.BadParameter("Give exactly one of --before and --end.")
    logger = get_logger(verbose=_resolve_verbose(verbose, quiet))
    source = _load(path)
    with _guard(source.path, source):
        if before is not None:
            point = MovePoint(source.module.instruction(before).block.label, before)
        else:
            point = MovePoint(end)  # type: ignore[arg-type]
        moved = move_before(source.module, instr, point, logger=logger)
    _emit(print_module(moved), out)


@app.command("check-equiv")
def check_equiv(
    first: Path = typer.Argument(..., help="Reference IR file"),
    second: Path = typer.Argument(..., help="Transformed IR file"),
    args: Optional[list[str]] = typer.Option(None, "--args", help="Input vector; repeat for more"),
    mode: str = typer.Option("seq", "--mode", help="Task execution mode (seq|par)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for randomized task order"),
    step_budget: Optional[int] = typer.Option(None, "--step-budget", help="Instruction budget"),
) -> None:
    """Interpret two modules side by side on the same inputs."""
    settings = get_settings()
    resolved_mode = _resolve_mode(mode)
    resolved_seed = settings.seed if seed is None else seed
    budget = step_budget or settings.step_budget
    vectors = _parse_args(args)
    left = _load(first)
    right = _load(second)
    with _guard(right.path, right):
        for vector in vectors:
            a, b = run_pair(
                lambda: _execute(left.module, vector, resolved_mode, resolved_seed, budget),
                lambda: _execute(right.module, vector, resolved_mode, resolved_seed, budget),
            )
            if not a.same_behaviour(b):
                shown = " ".join(str(value) for value in vector)
                typer.echo(f"DIFFERENT on args [{shown}]")
                typer.echo(f"  {first}: output={a.output} exit={a.exit_value} trap={a.trap}")
                typer.echo(f"  {second}: output={b.output} exit={b.exit_value} trap={b.trap}")
                raise typer.Exit(code=1)
    typer.echo("EQUIVALENT")


@app.command()
def link(
    paths: list[Path] = typer.Argument(..., help="IR files to concatenate"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output IR path"),
) -> None:
    """Concatenate modules, renumbering entities and rebasing metadata ordinals."""
    sources = [_load(path) for path in paths]
    with _guard(sources[-1].path):
        linked = link_modules([source.module for source in sources])
    _emit(print_module(linked), out)


if __name__ == "__main__":  # pragma: no cover
    app()
