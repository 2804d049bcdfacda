from swarmlab.swarmsim.lib.swarmchecks import *

all_checks = [
    ObserverStabilityCheck,
    ControllerStabilityCheck,
    ScaleStabilityCheck,
    FormationErrorCheck,
    ScaleErrorCheck,
    MinSeparationCheck,
    RingCrossingCheck,
    BoundaryConditionCheck,
    ConvergenceCheck
]
