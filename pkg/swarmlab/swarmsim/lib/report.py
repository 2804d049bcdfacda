'''
Run report, trace files and the CSV data behind the distance, constraint,
solve time and estimation error plots.
'''

from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import csv
import hashlib
import json
import logging

from .simnet import jsonable

logger = logging.getLogger(__name__)


class TraceLevel(str, Enum):
    none = 'none'
    summary = 'summary'
    full = 'full'


@dataclass
class RunReport:
    '''
    Outputs of one simulation run.

    `traces` holds row lists keyed by trace name, `summary` the metrics
    derived from them and `timing` every wall clock measurement. Timing is
    left out of the digest so the digest depends on config and seed only.
    '''
    name: str
    mode: str
    seed: int
    summary: Dict[str, Any] = field(default_factory=dict)
    traces: Dict[str, List[Dict]] = field(default_factory=dict)
    failure_flags: Dict[str, bool] = field(default_factory=dict)
    checks: List[Dict] = field(default_factory=list)
    timing: Dict[str, Any] = field(default_factory=dict)

    @property
    def convergence_failure(self) -> bool:
        return bool(self.failure_flags.get('convergence_failure', False))

    @property
    def solver_failure(self) -> bool:
        return bool(self.failure_flags.get('solver_failure', False))

    def to_dict(self, timing: bool = True, traces: bool = False) -> Dict:
        d = {
            'name': self.name,
            'mode': self.mode,
            'seed': self.seed,
            'summary': self.summary,
            'failure_flags': self.failure_flags,
            'checks': [_without_timing(c) for c in self.checks] if not timing else self.checks,
        }
        if traces:
            d['traces'] = self.traces
        if timing:
            d['timing'] = self.timing
        return jsonable(d)

    def digest(self) -> str:
        ''' sha256 over the canonical JSON of everything except timing '''
        text = json.dumps(self.to_dict(timing=False, traces=True), sort_keys=True)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _without_timing(check: Dict) -> Dict:
    ''' check outputs minus their execution start and end stamps '''
    out = dict(check)
    if 'execution' in out:
        execution = dict(out['execution'])
        execution.pop('start', None)
        execution.pop('end', None)
        out['execution'] = execution
    return out


def _write_csv(path: Path, rows: List[Dict], columns: Optional[List[str]] = None) -> Path:
    columns = columns or list(rows[0].keys())
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _cell(row.get(c)) for c in columns})
    return path


def _cell(value: Any) -> Any:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return value


def emit_plots_data(report: RunReport, out_dir: Path) -> List[Path]:
    '''
    Writes one CSV per plot family that the run has data for.

        distances.csv           pairwise distances per sample (trajopt runs)
        constraints_vs_n.csv    collision rows and partners per optimization
        solve_time_vs_n.csv     solve time per optimization, wall clock
        estimation_errors.csv   observer, formation and scale errors over time

    Returns:
        paths of the files written
    '''
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    distances = report.traces.get('distances')
    if distances:
        written.append(_write_csv(out_dir / 'distances.csv', distances))

    comparison = report.traces.get('comparison')
    if comparison:
        written.append(_write_csv(
            out_dir / 'constraints_vs_n.csv', comparison,
            ['n_agents', 'algorithm', 'repetitions', 'optimizations',
             'avg_constraints_per_agent', 'avg_partners_per_agent']))
    elif 'avg_constraints_per_agent' in report.summary:
        written.append(_write_csv(
            out_dir / 'constraints_vs_n.csv', [report.summary],
            ['n_agents', 'algorithm', 'optimizations',
             'avg_constraints_per_agent', 'avg_partners_per_agent']))

    solve_times = report.timing.get('solve_time_vs_n')
    if solve_times:
        written.append(_write_csv(
            out_dir / 'solve_time_vs_n.csv', solve_times,
            ['n_agents', 'algorithm', 'avg_solve_time_per_agent']))

    errors = report.traces.get('errors')
    if errors:
        written.append(_write_csv(out_dir / 'estimation_errors.csv', errors))

    for path in written:
        logger.debug(f"Wrote {path}")
    return written


def write_report(
        report: RunReport,
        out_dir: Path,
        trace_level: TraceLevel = TraceLevel.summary) -> List[Path]:
    '''
    Writes report.json, then the plot CSVs for the summary level and every
    trace as JSON lines for the full level.
    '''
    trace_level = TraceLevel(trace_level)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report_path = out_dir / 'report.json'
    d = report.to_dict()
    d['digest'] = report.digest()
    with open(report_path, 'w') as f:
        json.dump(d, f, indent=4, sort_keys=True)
    written = [report_path]

    if trace_level in (TraceLevel.summary, TraceLevel.full):
        written.extend(emit_plots_data(report, out_dir))

    if trace_level == TraceLevel.full:
        for name, rows in sorted(report.traces.items()):
            path = out_dir / f"{name}.jsonl"
            with open(path, 'w') as f:
                for row in rows:
                    f.write(json.dumps(jsonable(row), sort_keys=True) + '\n')
            written.append(path)

    logger.info(f"Report written to {report_path}")
    return written
