'''
Definition of Swarm Checks implemented in swarmsim
'''
from __future__ import annotations
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from .scenario import ScenarioConfig, SimMode
from .report import RunReport


class SwarmCheckState(str, Enum):
    cs_pass = 'pass'
    cs_warning = 'warning'
    cs_fail = 'fail'


@dataclass
class CheckParam:
    name: str
    value: Any

    def to_dict(self) -> Dict:
        return {'name': self.name, 'value': self.value}


@dataclass
class CheckExecution:
    start: Optional[str]
    end: Optional[str]
    status: str
    error: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            'start': self.start,
            'end': self.end,
            'status': self.status,
            'error': self.error,
        }


@dataclass
class CheckOutputs:
    '''
    Encapsulates the various outputs from a swarm check
    '''
    execution: CheckExecution
    messages: List[str] = field(default_factory=list)
    data: Dict[str, Any] = field(default_factory=dict)
    check_state: SwarmCheckState = SwarmCheckState.cs_pass

    def to_dict(self) -> Dict:
        return {
            'execution': self.execution.to_dict(),
            'messages': list(self.messages),
            'data': self.data,
            'check_state': SwarmCheckState(self.check_state).value,
        }


class SwarmCheck:
    '''
    Base class for all swarm checks

    Checks are run after the simulation (or, for the stability checks, in
    place of it) over the scenario and the run report.
    '''

    id = ''
    name = ''
    version = '1'
    input_params: List[CheckParam] = []
    # simulation modes this check applies to
    modes: Tuple[SimMode, ...] = ()
    # needs a completed run report
    needs_report = True

    def __init__(self, input_params: List[CheckParam]):
        self.input_params = input_params

        # used to record time check was started, and when it completed
        self.start_time = None
        self.end_time = None

        # did the check execute successfully
        self.execution_status = 'draft'
        # any error messages that occured during running of the check
        self.error_message = None

    @classmethod
    def applies_to(cls, mode: SimMode) -> bool:
        return SimMode(mode) in cls.modes

    def check_started(self):
        '''
        to be called before the check `run` function. Initialises the check
        '''
        self.start_time = datetime.now().strftime("%Y-%m-%dT%H:%M:%S.%f")
        self.execution_status = 'running'

    def check_ended(self):
        '''
        to be called after the check `run` function. Finalises the check
        '''
        self.end_time = datetime.now().strftime("%Y-%m-%dT%H:%M:%S.%f")

        if self.execution_status == 'running':
            self.execution_status = 'completed'

    def get_param(self, param_name: str) -> Any:
        ''' Gets the parameter value from the list of CheckParams. Returns
        None if no parameter found. If multiple parameters share the same
        name, the first will be returned.
        '''
        param = next(
            (param for param in self.input_params if param.name == param_name),
            None
        )
        if param is None:
            return None
        return param.value

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        '''
        Abstract function definition for how each check should implement its
        run method.

        Args:
            config (ScenarioConfig): scenario the run was made from
            report (RunReport): completed run, None for checks that do not
                need one
        '''
        raise NotImplementedError

    def get_outputs(self) -> CheckOutputs:
        '''
        Gets the results of this check
        '''
        raise NotImplementedError

    def _execution(self) -> CheckExecution:
        return CheckExecution(
            start=self.start_time,
            end=self.end_time,
            status=self.execution_status,
            error=self.error_message
        )

    def _failed_outputs(self) -> Optional[CheckOutputs]:
        ''' outputs for a check that did not run to completion, else None '''
        if self.execution_status in ('aborted', 'failed'):
            return CheckOutputs(
                execution=self._execution(),
                messages=[self.error_message] if self.error_message else [],
                data={},
                check_state=SwarmCheckState.cs_fail
            )
        return None
