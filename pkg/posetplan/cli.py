"""CLI interface for posetplan."""

import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, DeadlockError, InstanceTooLarge, PosetPlanError
from .fixtures import get_fixture, list_fixtures
from .hoa import export_hoa
from .model import Scenario, load_scenario
from .oracle import ExactInstance, exact_optimum
from .planner import (BnbStats, PlanningContext, Schedule, bnb, gantt_rows, plan, plan_to_dict,
                      task_automaton, validate_schedule, write_gantt_csv)
from .poset import Poset, PosetStats, compute_posets, poset_graph, word_satisfies
from .pruning import prune
from .simulation import expected_message_count, noise_range, simulate


console = Console()
logger = logging.getLogger(__name__)


def setup_logging(verbose: bool):
    """Route library logging through rich."""
    root = logging.getLogger('posetplan')
    root.handlers = [RichHandler(console=console, show_path=False, rich_tracebacks=False)]
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)
    root.propagate = False


def fail(error: Exception):
    """Print an error and exit with its code."""
    console.print(f"✗ Error: {error}", style="red")
    if isinstance(error, DeadlockError):
        for index, blockers in sorted(error.wait_for.items()):
            console.print(f"  subtask {index} waits for: {', '.join(sorted(blockers))}")
    sys.exit(getattr(error, 'exit_code', 1))


def output_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def read_source(value: Optional[str]) -> Optional[str]:
    """File contents when value names a file, else value itself."""
    if value is None:
        return None
    path = Path(value)
    if path.is_file():
        return path.read_text().strip()
    return value


def resolve_task(fixture: Optional[str], task: Optional[str], formula: Optional[str],
                 hoa_path: Optional[str], scenario_path: Optional[str],
                 require_scenario: bool = True) -> Tuple[Optional[Scenario], Optional[str], Optional[str]]:
    """Scenario, formula text and HOA text from a fixture and/or explicit files.

    Explicit files override the fixture's parts.
    """
    scenario = None
    formula_text = read_source(formula)
    hoa_text = Path(hoa_path).read_text() if hoa_path else None

    if fixture:
        fx = get_fixture(fixture)
        scenario = fx.scenario
        if formula_text is None and hoa_text is None:
            formula_text = fx.formula(task)
            if formula_text is None:
                hoa_text = fx.hoa

    if scenario_path:
        scenario = load_scenario(scenario_path)
    if scenario is None and require_scenario:
        raise ConfigError("Provide --scenario or --fixture")
    return scenario, formula_text, hoa_text


def task_options(func):
    """Options shared by every command that reads a task."""
    options = [
        click.option('--fixture', help='Shipped fixture providing scenario and task'),
        click.option('--task', 'task_key', help='Formula key within the fixture'),
        click.option('--formula', help='sc-LTL formula text or file'),
        click.option('--hoa', type=click.Path(exists=True, dir_okay=False), help='HOA automaton file'),
        click.option('--scenario', type=click.Path(exists=True, dir_okay=False), help='Scenario JSON file'),
        click.option('--out', help='Output directory'),
        click.option('--format', 'output_format_', type=click.Choice(['human', 'json']), default=None),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def search_options(func):
    options = [
        click.option('--budget-poset', type=float, help='Seconds for poset mining'),
        click.option('--budget-bnb', type=float, help='Seconds of branch and bound per poset'),
        click.option('--lb-mode', type=click.Choice(['min', 'max', 'alt']), help='Lower-bound mode'),
        click.option('--opposed-arity', type=int, help='Largest opposed set examined'),
        click.option('--decomposition-cap', type=int, help='Subtask sets tried per run'),
        click.option('--jobs', type=int, help='Parallel search workers'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_run(ctx, require_source: bool = True, **flags) -> RunConfig:
    config = ctx.obj['config']
    flags.setdefault('out', None)
    return RunConfig.from_options(config, require_source=require_source, **flags)


def output_format(ctx, value: Optional[str]) -> str:
    return value or ctx.obj['config'].get('output', {}).get('format', 'human')


@click.group()
@click.version_option(version=__version__)
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='YAML config file')
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
@click.pass_context
def cli(ctx, config_path, verbose):
    """posetplan - Minimum-time multi-agent planning under collaborative sc-LTL tasks."""
    setup_logging(verbose)
    try:
        config = load_config(config_path)
    except ConfigError as e:
        fail(e)
    ctx.obj = {'config': config}


@cli.command()
@task_options
@click.pass_context
def translate(ctx, fixture, task_key, formula, hoa, scenario, out, output_format_):
    """Translate a formula into an HOA automaton."""
    try:
        team, formula_text, _ = resolve_task(fixture, task_key, formula, None, scenario,
                                             require_scenario=False)
        if formula_text is None:
            raise ConfigError("Provide --formula or a fixture with a formula")
        run = build_run(ctx, formula=formula_text, out=out)
        nba = task_automaton(formula=formula_text, scenario=team, atom_cap=run.extra['atom_cap'])
        path = output_dir(run.out) / 'task.hoa'
        path.write_text(export_hoa(nba, name=formula_text))
    except PosetPlanError as e:
        fail(e)

    stats = nba.stats()
    if output_format(ctx, output_format_) == 'json':
        console.print_json(json.dumps({'hoa': str(path), **stats}))
        return
    console.print(f"✓ Automaton with {stats['states']} states and {stats['edges']} edges", style="green")
    console.print(f"  Written to: {path}")


@cli.command(name='prune')
@task_options
@click.pass_context
def prune_cmd(ctx, fixture, task_key, formula, hoa, scenario, out, output_format_):
    """Prune the task automaton against a team."""
    try:
        team, formula_text, hoa_text = resolve_task(fixture, task_key, formula, hoa, scenario)
        run = build_run(ctx, formula=formula_text, hoa=hoa_text, scenario=scenario, out=out)
        nba = task_automaton(formula_text, hoa_text, team, run.extra['atom_cap'])
        pruned, report = prune(nba, team, run.extra['support_cap'])
        out_dir = output_dir(run.out)
        (out_dir / 'prune_report.json').write_text(report.to_json())
        (out_dir / 'pruned.hoa').write_text(export_hoa(pruned, name=f'pruned {team.name}'))
    except PosetPlanError as e:
        fail(e)

    if output_format(ctx, output_format_) == 'json':
        console.print_json(report.to_json())
        return
    console.print("✓ Automaton pruned", style="green")
    for line in report.summary_lines():
        console.print(f"  {line}")
    if report.infeasible_atoms:
        console.print(f"  Infeasible atoms: {', '.join(report.infeasible_atoms)}", style="yellow")
    console.print(f"  Report: {out_dir / 'prune_report.json'}")


@cli.command()
@task_options
@search_options
@click.pass_context
def posets(ctx, fixture, task_key, formula, hoa, scenario, out, output_format_,
           budget_poset, budget_bnb, lb_mode, opposed_arity, decomposition_cap, jobs):
    """Mine accepting posets of the pruned automaton."""
    try:
        team, formula_text, hoa_text = resolve_task(fixture, task_key, formula, hoa, scenario)
        run = build_run(ctx, formula=formula_text, hoa=hoa_text, scenario=scenario, out=out,
                        budget_poset=budget_poset, opposed_arity=opposed_arity,
                        decomposition_cap=decomposition_cap)
        nba = task_automaton(formula_text, hoa_text, team, run.extra['atom_cap'])
        pruned, _ = prune(nba, team, run.extra['support_cap'])

        stats = PosetStats()
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                      console=console, transient=True) as progress:
            progress.add_task(description="Mining posets...", total=None)
            found = compute_posets(pruned, run.budget_poset, stats=stats, **run.poset_options())

        out_dir = output_dir(run.out)
        (out_dir / 'posets.json').write_text(json.dumps(
            {'posets': [p.to_dict() for p in found], 'stats': stats.to_dict()}, indent=2))
        for poset in found:
            (out_dir / f'poset_{poset.id}.dot').write_text(poset_graph(poset).to_dot())
    except PosetPlanError as e:
        fail(e)

    if output_format(ctx, output_format_) == 'json':
        console.print_json(json.dumps({'posets': [p.to_dict() for p in found], 'stats': stats.to_dict()}))
        return
    if not found:
        console.print("No poset found within the budget", style="yellow")
        return

    table = Table(title=f"Posets ({len(found)})")
    table.add_column("ID", style="cyan")
    table.add_column("Subtasks")
    table.add_column("Order pairs")
    table.add_column("Opposed sets")
    table.add_column("Words")
    for poset in found:
        table.add_row(str(poset.id), str(len(poset.subtasks)), str(len(poset.leq)),
                      str(len(poset.opposed)), str(poset.language_size))
    console.print(table)
    console.print(f"  Written to: {out_dir}")


def schedule_table(sched: Schedule) -> Table:
    table = Table(title=f"Plan (makespan {sched.makespan:.2f}s)")
    table.add_column("Subtask", style="cyan")
    table.add_column("Region")
    table.add_column("Coalition")
    table.add_column("Start", justify="right")
    table.add_column("End", justify="right")
    for index in sched.order():
        table.add_row(str(index), sched.regions[index], ', '.join(sched.coalition_of[index].members),
                      f"{sched.starts[index]:.2f}", f"{sched.finish(index):.2f}")
    return table


@cli.command(name='plan')
@task_options
@search_options
@click.pass_context
def plan_cmd(ctx, fixture, task_key, formula, hoa, scenario, out, output_format_,
             budget_poset, budget_bnb, lb_mode, opposed_arity, decomposition_cap, jobs):
    """Compute a minimum-makespan plan."""
    fmt = output_format(ctx, output_format_)

    def progress(elapsed: float, sched: Schedule):
        if fmt == 'human':
            console.print(f"t={elapsed:.3f} incumbent={sched.makespan:.2f}")

    try:
        team, formula_text, hoa_text = resolve_task(fixture, task_key, formula, hoa, scenario)
        run = build_run(ctx, formula=formula_text, hoa=hoa_text, scenario=scenario, out=out,
                        budget_poset=budget_poset, budget_bnb=budget_bnb, lb_mode=lb_mode,
                        opposed_arity=opposed_arity, decomposition_cap=decomposition_cap, jobs=jobs)
        result = plan(team, formula_text, hoa_text,
                      budget_poset=run.budget_poset, budget_bnb=run.budget_bnb,
                      lb_mode=run.lb_mode, jobs=run.jobs, max_posets=run.extra['max_posets'],
                      atom_cap=run.extra['atom_cap'], support_cap=run.extra['support_cap'],
                      poset_options=run.poset_options(), on_improve=progress)

        problems = validate_schedule(PlanningContext(result.poset, team, run.lb_mode), result.schedule)
        if problems:
            raise PosetPlanError(f"Plan failed validation: {'; '.join(problems)}")

        out_dir = output_dir(run.out)
        data = plan_to_dict(result)
        (out_dir / 'plan.json').write_text(json.dumps(data, indent=2))
        write_gantt_csv(gantt_rows(result.schedule, team), str(out_dir / 'gantt.csv'))
        (out_dir / 'poset.dot').write_text(poset_graph(result.poset).to_dot())
        (out_dir / 'prune_report.json').write_text(result.report.to_json())
    except PosetPlanError as e:
        fail(e)

    if fmt == 'json':
        console.print_json(json.dumps(data))
        return
    console.print(schedule_table(result.schedule))
    stats = result.bnb_stats.get(result.poset.id, BnbStats())
    console.print(f"✓ Plan found: makespan {result.makespan:.2f}s from poset {result.poset.id} "
                  f"({len(result.posets)} posets, {stats.pruned_percentage:.1f}% of nodes pruned)",
                  style="green")
    console.print(f"  Written to: {out_dir}")


def parse_failures(values: Tuple[str, ...]) -> List[Tuple[str, float]]:
    """Parse AGENT@TIME failure flags."""
    failures = []
    for value in values:
        agent, sep, at = value.rpartition('@')
        if not sep or not agent:
            raise ConfigError(f"Failure must look like AGENT@TIME, got '{value}'")
        try:
            failures.append((agent, float(at)))
        except ValueError:
            raise ConfigError(f"Failure time must be a number, got '{at}'")
    return failures


@cli.command(name='simulate')
@click.option('--fixture', help='Shipped fixture providing the scenario')
@click.option('--scenario', type=click.Path(exists=True, dir_okay=False), help='Scenario JSON file')
@click.option('--plan', 'plan_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Plan JSON written by the plan command')
@click.option('--noise', type=float, help='Duration spread, factors drawn from [1-s, 1+s]')
@click.option('--seed', type=int, help='Noise seed')
@click.option('--fail', 'fail_flags', multiple=True, help='Failure injection AGENT@TIME (repeatable)')
@click.option('--nominal', is_flag=True, help='Ignore failures declared in the scenario')
@click.option('--lb-mode', type=click.Choice(['min', 'max', 'alt']), help='Lower-bound mode for re-planning')
@click.option('--out', help='Output directory')
@click.option('--format', 'output_format_', type=click.Choice(['human', 'json']), default=None)
@click.pass_context
def simulate_cmd(ctx, fixture, scenario, plan_path, noise, seed, fail_flags, nominal, lb_mode, out,
                 output_format_):
    """Execute a plan with synchronization messages, noise and failures."""
    config = ctx.obj['config']
    sim_cfg = config.get('simulation', {})
    try:
        team, _, _ = resolve_task(fixture, None, None, None, scenario)
        run = build_run(ctx, require_source=False, seed=seed, out=out, lb_mode=lb_mode)
        data = json.loads(Path(plan_path).read_text())
        if not data.get('poset'):
            raise ConfigError(f"Plan file {plan_path} carries no poset")
        poset = Poset.from_dict(data['poset'])
        sched = Schedule.from_dict(data)

        if fail_flags:
            failures = parse_failures(fail_flags)
        elif nominal:
            failures = []
        else:
            failures = list(team.failures)
        spread = noise if noise is not None else float(sim_cfg.get('noise', 0.0))
        try:
            factors = noise_range(spread)
        except ValueError as e:
            raise ConfigError(str(e))

        trace = simulate(sched, poset, team, noise=factors, failures=failures, seed=run.seed,
                         replan_budget=float(sim_cfg.get('replan_budget', 5.0)), lb_mode=run.lb_mode)
        satisfied = word_satisfies(poset, trace.induced_word(), trace.durations())

        out_dir = output_dir(run.out)
        (out_dir / 'trace.json').write_text(trace.to_json())
        write_gantt_csv(trace.segments, str(out_dir / 'trace_gantt.csv'))
    except PosetPlanError as e:
        fail(e)

    summary = {
        'makespan': trace.makespan,
        'planned_makespan': sched.makespan,
        'messages': trace.message_count(),
        'replans': len(trace.replans),
        'constraints_satisfied': satisfied,
    }
    if output_format(ctx, output_format_) == 'json':
        console.print_json(json.dumps(summary))
    else:
        style = "green" if satisfied else "red"
        mark = "✓" if satisfied else "✗"
        console.print(f"{mark} Mission finished at t={trace.makespan:.2f}s "
                      f"(planned {sched.makespan:.2f}s)", style=style)
        console.print(f"  Messages: {trace.message_count()} (nominal {expected_message_count(poset)})")
        for replan in trace.replans:
            console.print(f"  Re-plan at t={replan.time:.2f} after failure of {', '.join(replan.failed)}: "
                          f"makespan {replan.schedule.makespan:.2f}s in {replan.planning_seconds:.3f}s")
        console.print(f"  Written to: {out_dir}")
    if not satisfied:
        sys.exit(1)


@cli.command()
@task_options
@search_options
@click.pass_context
def oracle(ctx, fixture, task_key, formula, hoa, scenario, out, output_format_,
           budget_poset, budget_bnb, lb_mode, opposed_arity, decomposition_cap, jobs):
    """Solve a small instance exactly and compare with branch and bound."""
    rows = []
    try:
        team, formula_text, hoa_text = resolve_task(fixture, task_key, formula, hoa, scenario)
        run = build_run(ctx, formula=formula_text, hoa=hoa_text, scenario=scenario, out=out,
                        budget_poset=budget_poset, budget_bnb=budget_bnb, lb_mode=lb_mode,
                        opposed_arity=opposed_arity, decomposition_cap=decomposition_cap)
        nba = task_automaton(formula_text, hoa_text, team, run.extra['atom_cap'])
        pruned, _ = prune(nba, team, run.extra['support_cap'])
        found = compute_posets(pruned, run.budget_poset, **run.poset_options())

        for poset in found:
            try:
                instance = ExactInstance(poset, team)
            except InstanceTooLarge as e:
                logger.warning("Skipping poset %d: %s", poset.id, e)
                continue
            _, optimum = exact_optimum(instance)
            incumbent = bnb(instance.context(), run.budget_bnb)
            rows.append({'poset': poset.id, 'optimum': optimum, 'bnb': incumbent.makespan})
        if not rows:
            raise InstanceTooLarge("No poset of this task fits the exact solver")

        out_dir = output_dir(run.out)
        (out_dir / 'oracle.json').write_text(json.dumps({'results': rows}, indent=2))
    except PosetPlanError as e:
        fail(e)

    if output_format(ctx, output_format_) == 'json':
        console.print_json(json.dumps({'results': rows}))
        return
    table = Table(title="Exact optimum vs branch and bound")
    table.add_column("Poset", style="cyan")
    table.add_column("Optimum", justify="right")
    table.add_column("BnB", justify="right")
    table.add_column("Match")
    for row in rows:
        match = abs(row['optimum'] - row['bnb']) <= 1e-6
        table.add_row(str(row['poset']), f"{row['optimum']:.3f}", f"{row['bnb']:.3f}",
                      "[green]✓[/]" if match else "[red]✗[/]")
    console.print(table)
    console.print(f"✓ Best exact makespan: {min(r['optimum'] for r in rows):.3f}s", style="green")


@cli.command(name='fixtures')
@click.option('--format', 'output_format_', type=click.Choice(['human', 'json']), default=None)
@click.pass_context
def fixtures_cmd(ctx, output_format_):
    """List the shipped fixtures."""
    shipped = list_fixtures()
    if output_format(ctx, output_format_) == 'json':
        console.print_json(json.dumps([f.to_dict() for f in shipped]))
        return

    table = Table(title="Fixtures")
    table.add_column("Name", style="cyan")
    table.add_column("Description")
    table.add_column("Tasks")
    for fx in shipped:
        tasks = ', '.join(sorted(fx.formulas)) or ('HOA' if fx.hoa_file else '-')
        table.add_row(fx.name, fx.description, tasks)
    console.print(table)


if __name__ == '__main__':
    cli()
