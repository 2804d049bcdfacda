#!/usr/bin/env python
# -*- coding: utf-8 -*-

""" Command line tool that runs swarm simulation scenarios: formation
    control with distributed estimation, distributed trajectory optimization
    through a ring, and the scaling comparison against the decentralized
    baseline.
"""

import click
import json
import logging
import os
import sys

from pathlib import Path
from typing import List, Optional

from swarmlab.swarmsim.lib.allchecks import all_checks
from swarmlab.swarmsim.lib.executor import Executor
from swarmlab.swarmsim.lib.report import RunReport, TraceLevel, write_report
from swarmlab.swarmsim.lib.scenario import CompareParams, ScenarioConfig, \
    ScenarioConfigError, SimMode, load
from swarmlab.swarmsim.lib.swarmchecks import STABILITY_CHECKS
from swarmlab.swarmsim.lib.trajopt.trajectory import SolverFailure


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONVERGENCE = 2
EXIT_SOLVER = 3


def exit_code(report: RunReport) -> int:
    ''' solver failures take precedence over convergence failures '''
    if report.solver_failure:
        return EXIT_SOLVER
    if report.convergence_failure:
        return EXIT_CONVERGENCE
    return EXIT_OK


def parse_agent_counts(value: Optional[str]) -> Optional[List[int]]:
    ''' "4,8,12" -> [4, 8, 12] '''
    if value is None:
        return None
    try:
        counts = [int(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma separated integers, got '{value}'")
    if not counts:
        raise click.BadParameter("at least one agent count is required")
    return counts


def _load_config(config: str) -> ScenarioConfig:
    if not os.path.isfile(config):
        click.echo(
            "Scenario file ({}) does not exist".format(config),
            err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        return load(config)
    except ScenarioConfigError as e:
        for msg in e.messages:
            click.echo(msg, err=True)
        sys.exit(EXIT_VALIDATION)


def _execute(cfg: ScenarioConfig, out_dir: str, trace_level: str):
    exe = Executor(cfg, all_checks)

    def print_prog(progress):
        click.echo(f"progress = {progress:.2f}", err=True)

    try:
        report = exe.run(print_prog, trace_level=TraceLevel(trace_level))
    except ScenarioConfigError as e:
        for msg in e.messages:
            click.echo(msg, err=True)
        sys.exit(EXIT_VALIDATION)
    except SolverFailure as e:
        logging.getLogger(__name__).error(e, exc_info=True)
        click.echo(f"Solver failure: {e}", err=True)
        sys.exit(EXIT_SOLVER)

    write_report(report, Path(out_dir), TraceLevel(trace_level))

    for output in report.checks:
        print(json.dumps(output, indent=4))
    click.echo(f"digest = {report.digest()}", err=True)
    sys.exit(exit_code(report))


@click.group()
@click.option(
    '-v', '--verbose',
    is_flag=True,
    help='Log debug detail')
def cli(verbose):
    '''Run swarm simulation scenarios'''
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


trace_level_option = click.option(
    '--trace-level',
    type=click.Choice([level.value for level in TraceLevel]),
    default=TraceLevel.summary.value,
    help='none: report only, summary: plus plot data, full: plus every trace')
seed_option = click.option(
    '--seed',
    type=int,
    required=False,
    help='Overrides the scenario seed')
out_dir_option = click.option(
    '--out-dir',
    default='swarmsim_out',
    help='Folder the report and traces are written to')


@cli.command()
@click.argument('config')
@seed_option
@out_dir_option
@trace_level_option
def run(config, seed, out_dir, trace_level):
    '''Run the scenario in CONFIG'''
    cfg = _load_config(config).with_overrides(seed=seed)
    _execute(cfg, out_dir, trace_level)


@cli.command('check-stability')
@click.argument('config')
def check_stability(config):
    '''Eigenvalue checks of the observer, controller and scale estimator gains'''
    cfg = _load_config(config)
    exe = Executor(cfg, all_checks)
    try:
        outputs = exe.run_stability_checks(STABILITY_CHECKS)
    except ScenarioConfigError as e:
        for msg in e.messages:
            click.echo(msg, err=True)
        sys.exit(EXIT_VALIDATION)

    for output in outputs:
        print(json.dumps(output, indent=4))
    if any(output['check_state'] != 'pass' for output in outputs):
        sys.exit(EXIT_CONVERGENCE)
    sys.exit(EXIT_OK)


@cli.command()
@click.argument('config')
@click.option(
    '--agents',
    required=False,
    help='Comma separated swarm sizes, eg; 4,8,12,16,20')
@click.option(
    '--reps',
    type=int,
    required=False,
    help='Random scenarios per swarm size')
@seed_option
@out_dir_option
@trace_level_option
def compare(config, agents, reps, seed, out_dir, trace_level):
    '''Compare distributed re-planning with the decentralized baseline'''
    cfg = _load_config(config)
    group = cfg.compare.to_dict()
    counts = parse_agent_counts(agents)
    if counts is not None:
        group['agents'] = counts
    if reps is not None:
        group['reps'] = reps
    cfg = cfg.with_overrides(
        seed=seed,
        mode=SimMode.compare,
        compare=CompareParams(**group))
    _execute(cfg, out_dir, trace_level)


if __name__ == '__main__':
    cli()
