from typing import List, Optional

import logging

from .graph import LeaderSet
from .estimation import check_observer_stability, check_scale_stability, \
    default_observer_gains, default_scale_estimator, observer_error_matrix, \
    slowest_decay_rate
from .control import check_controller_stability, closed_loop_matrix, \
    default_control_gains
from .scenario import ESTIMATION_MODES, TRAJOPT_MODES, ScenarioConfig, SimMode
from .report import RunReport
from .swarmcheck import CheckOutputs, CheckParam, SwarmCheck, SwarmCheckState

logger = logging.getLogger(__name__)


class _StabilityCheck(SwarmCheck):
    '''
    Common part of the eigenvalue checks. A check passes when the smallest
    eigenvalue of its gain matrix is above the "Minimum eigenvalue"
    parameter.
    '''

    modes = ESTIMATION_MODES
    needs_report = False
    input_params = [
        CheckParam("Minimum eigenvalue", 1e-12),
    ]

    def __init__(self, input_params: List[CheckParam]):
        super().__init__(input_params)
        self._min_eig = self.get_param('Minimum eigenvalue')
        self.min_eigenvalue = None
        self.decay_rate = None

    def _evaluate(self, config: ScenarioConfig):
        ''' returns (min eigenvalue, slowest decay rate or None) '''
        raise NotImplementedError

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        self.min_eigenvalue, self.decay_rate = self._evaluate(config)

    def get_outputs(self) -> CheckOutputs:
        failed = self._failed_outputs()
        if failed is not None:
            return failed

        messages = []
        check_state = SwarmCheckState.cs_pass
        if not self.min_eigenvalue > self._min_eig:
            messages.append(
                f"Smallest eigenvalue {self.min_eigenvalue:.3g} is not above "
                f"{self._min_eig}, the error dynamics do not converge")
            check_state = SwarmCheckState.cs_fail

        data = {
            'stable': check_state == SwarmCheckState.cs_pass,
            'min_eigenvalue': float(self.min_eigenvalue),
        }
        if self.decay_rate is not None:
            data['slowest_decay_rate'] = float(self.decay_rate)

        return CheckOutputs(
            execution=self._execution(),
            messages=messages,
            data=data,
            check_state=check_state
        )


class ObserverStabilityCheck(_StabilityCheck):
    '''
    Positive definiteness of B D_rp B^T + E D_gp E^T for the observer gains
    of the scenario's sensing graph and leaders.
    '''

    id = '3f0c6a52-8d1e-4b7a-9c25-5e0d7a41b9c3'
    name = 'Observer Stability Check'
    version = '1'

    def _evaluate(self, config: ScenarioConfig):
        g = config.graph.build(config.n_agents)
        leaders = LeaderSet(config.leaders)
        gains = default_observer_gains(g, leaders, config.observer.k_p, config.observer.k_v)
        result = check_observer_stability(g, leaders, gains)
        rate = slowest_decay_rate(observer_error_matrix(gains, g.n_nodes))
        logger.info(f"Observer min eigenvalue {result.min_eigenvalue:.4g}")
        return result.min_eigenvalue, rate


class ControllerStabilityCheck(_StabilityCheck):
    '''
    Positive eigenvalues of Gamma = L_v + G_v for the formation control gains.
    '''

    id = '9a7e2d14-61b3-4c0f-8f52-2b6c93e0d7a8'
    name = 'Controller Stability Check'
    version = '1'

    def _evaluate(self, config: ScenarioConfig):
        g = config.graph.build(config.n_agents)
        leaders = LeaderSet(config.leaders)
        gains = default_control_gains(g, leaders, config.control.k_p, config.control.k_v)
        result = check_controller_stability(g, leaders, gains)
        rate = slowest_decay_rate(closed_loop_matrix(gains, g.n_nodes))
        logger.info(f"Controller min eigenvalue {result.min_eigenvalue:.4g}")
        return result.min_eigenvalue, rate


class ScaleStabilityCheck(_StabilityCheck):
    '''
    Positive eigenvalues of L_s + G_s for the formation scale estimator.
    '''

    id = 'c41b8e07-2f6a-4d93-a1e5-70d9b3f8c62e'
    name = 'Scale Estimator Stability Check'
    version = '1'

    def _evaluate(self, config: ScenarioConfig):
        g = config.graph.build(config.n_agents)
        state = default_scale_estimator(g, LeaderSet(config.leaders), config.scale.initial)
        result = check_scale_stability(state)
        return result.min_eigenvalue, result.min_eigenvalue


STABILITY_CHECKS = [
    ObserverStabilityCheck,
    ControllerStabilityCheck,
    ScaleStabilityCheck,
]


class FormationErrorCheck(SwarmCheck):
    '''
    Largest per axis deviation of the final positions from the desired
    formation.
    '''

    id = '5b2d9f61-0c7e-4a38-b4d6-1e8f27a3c095'
    name = 'Formation Error Check'
    version = '1'
    modes = ESTIMATION_MODES
    input_params = [
        CheckParam("Maximum formation error", 5e-3),
    ]

    def __init__(self, input_params: List[CheckParam]):
        super().__init__(input_params)
        self._max_error = self.get_param('Maximum formation error')
        self.final_error = None

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        self.final_error = float(report.summary['final_formation_error'])

    def get_outputs(self) -> CheckOutputs:
        failed = self._failed_outputs()
        if failed is not None:
            return failed

        messages = []
        check_state = SwarmCheckState.cs_pass
        if self.final_error > self._max_error:
            messages.append(
                f"Final formation error {self.final_error:.3g} m exceeds "
                f"{self._max_error} m")
            check_state = SwarmCheckState.cs_fail

        return CheckOutputs(
            execution=self._execution(),
            messages=messages,
            data={'final_formation_error': self.final_error},
            check_state=check_state
        )


class ScaleErrorCheck(SwarmCheck):
    '''
    Largest difference between any agent's scale estimate and the true scale
    at the end of the run.
    '''

    id = 'e8a1f3c6-7d20-4b95-8e4a-3c1b6d0f9a27'
    name = 'Scale Estimate Check'
    version = '1'
    modes = (SimMode.scale_demo,)
    input_params = [
        CheckParam("Maximum scale error", 0.1),
    ]

    def __init__(self, input_params: List[CheckParam]):
        super().__init__(input_params)
        self._max_error = self.get_param('Maximum scale error')
        self.final_error = None

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        self.final_error = float(report.summary['final_scale_error'])

    def get_outputs(self) -> CheckOutputs:
        failed = self._failed_outputs()
        if failed is not None:
            return failed

        messages = []
        check_state = SwarmCheckState.cs_pass
        if self.final_error > self._max_error:
            messages.append(
                f"Final scale estimate error {self.final_error:.3g} exceeds "
                f"{self._max_error}")
            check_state = SwarmCheckState.cs_fail

        return CheckOutputs(
            execution=self._execution(),
            messages=messages,
            data={'final_scale_error': self.final_error},
            check_state=check_state
        )


class MinSeparationCheck(SwarmCheck):
    '''
    Smallest distance between any two agents over all plan samples.
    '''

    id = '0d6e4b29-a3f8-4c17-9b52-8f7c1e2a6d40'
    name = 'Minimum Separation Check'
    version = '1'
    modes = TRAJOPT_MODES
    input_params = [
        CheckParam("Collision radius", 0.3),
        CheckParam("Tolerance", 1e-6),
    ]

    def __init__(self, input_params: List[CheckParam]):
        super().__init__(input_params)
        self._radius = self.get_param('Collision radius')
        self._tol = self.get_param('Tolerance')
        self.min_distance = None

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        value = report.summary.get('min_distance')
        self.min_distance = float('inf') if value is None else float(value)

    def get_outputs(self) -> CheckOutputs:
        failed = self._failed_outputs()
        if failed is not None:
            return failed

        messages = []
        check_state = SwarmCheckState.cs_pass
        if self.min_distance < self._radius - self._tol:
            messages.append(
                f"Agents come within {self.min_distance:.4f} m of each other, "
                f"the collision radius is {self._radius} m")
            check_state = SwarmCheckState.cs_fail

        return CheckOutputs(
            execution=self._execution(),
            messages=messages,
            data={'min_distance': self.min_distance},
            check_state=check_state
        )


class RingCrossingCheck(SwarmCheck):
    '''
    Every agent crosses the ring plane inside the opening. Crossing points
    between the tube and the ring radius pass with a warning.
    '''

    id = '7c3a0e85-4b1d-4f69-a2c7-d59e8b60f314'
    name = 'Ring Crossing Check'
    version = '1'
    modes = TRAJOPT_MODES
    input_params = []

    def __init__(self, input_params: List[CheckParam]):
        super().__init__(input_params)
        self.offsets = []
        self.radius = None
        self.tube_radius = None

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        self.offsets = list(report.summary['ring_offsets'])
        self.radius = config.ring.radius
        self.tube_radius = config.ring.tube_radius

    def get_outputs(self) -> CheckOutputs:
        failed = self._failed_outputs()
        if failed is not None:
            return failed

        missed = [i + 1 for i, d in enumerate(self.offsets) if d is None]
        outside = [i + 1 for i, d in enumerate(self.offsets)
                   if d is not None and d >= self.radius]
        wide = [i + 1 for i, d in enumerate(self.offsets)
                if d is not None and self.tube_radius < d < self.radius]

        messages = []
        check_state = SwarmCheckState.cs_pass
        if missed:
            messages.append(f"Agents {missed} never cross the ring plane")
        if outside:
            messages.append(f"Agents {outside} cross the ring plane outside the opening")
        if missed or outside:
            check_state = SwarmCheckState.cs_fail
        elif wide:
            messages.append(f"Agents {wide} cross outside the tube cross section")
            check_state = SwarmCheckState.cs_warning

        valid = [d for d in self.offsets if d is not None]
        return CheckOutputs(
            execution=self._execution(),
            messages=messages,
            data={'max_offset': max(valid) if valid else None, 'offsets': self.offsets},
            check_state=check_state
        )


class BoundaryConditionCheck(SwarmCheck):
    '''
    Executed plans start and end at the scenario's positions, at rest.
    '''

    id = 'a95f2c17-6e0b-48d3-b7a1-2d4c8e9f0b56'
    name = 'Boundary Condition Check'
    version = '1'
    modes = TRAJOPT_MODES
    input_params = [
        CheckParam("Tolerance", 1e-6),
    ]

    def __init__(self, input_params: List[CheckParam]):
        super().__init__(input_params)
        self._tol = self.get_param('Tolerance')
        self.boundary_error = None

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        self.boundary_error = float(report.summary['boundary_error'])

    def get_outputs(self) -> CheckOutputs:
        failed = self._failed_outputs()
        if failed is not None:
            return failed

        messages = []
        check_state = SwarmCheckState.cs_pass
        if self.boundary_error > self._tol:
            messages.append(
                f"Boundary conditions are missed by {self.boundary_error:.3g}")
            check_state = SwarmCheckState.cs_fail

        return CheckOutputs(
            execution=self._execution(),
            messages=messages,
            data={'boundary_error': self.boundary_error},
            check_state=check_state
        )


class ConvergenceCheck(SwarmCheck):
    '''
    Fails when the run raised its convergence or solver failure flag, warns
    when a motion capture track was lost.
    '''

    id = 'f2d7b6a0-9c4e-4e81-85b3-6a0c1f7d2e98'
    name = 'Convergence Check'
    version = '1'
    modes = tuple(SimMode)
    input_params = []

    def __init__(self, input_params: List[CheckParam]):
        super().__init__(input_params)
        self.flags = {}

    def run(self, config: ScenarioConfig, report: Optional[RunReport]):
        self.flags = dict(report.failure_flags)

    def get_outputs(self) -> CheckOutputs:
        failed = self._failed_outputs()
        if failed is not None:
            return failed

        messages = []
        check_state = SwarmCheckState.cs_pass
        if self.flags.get('solver_failure'):
            messages.append("A trajectory solve failed")
            check_state = SwarmCheckState.cs_fail
        if self.flags.get('convergence_failure'):
            messages.append("Re-planning reached its iteration cap")
            check_state = SwarmCheckState.cs_fail
        if self.flags.get('lost_track') and check_state == SwarmCheckState.cs_pass:
            messages.append("A motion capture track was lost")
            check_state = SwarmCheckState.cs_warning

        return CheckOutputs(
            execution=self._execution(),
            messages=messages,
            data={k: bool(v) for k, v in sorted(self.flags.items())},
            check_state=check_state
        )
