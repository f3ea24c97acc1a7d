"""Exception hierarchy shared by the simulator, the CLI and the HTTP surface."""


class SimulationError(Exception):
    """Base class for every error raised by the simulator"""


class ConfigError(SimulationError, ValueError):
    """Invalid experiment or process configuration (CLI exit code 2)"""


class ContractViolation(SimulationError, RuntimeError):
    """A caller broke an operation precondition"""


class PlacementError(SimulationError):
    """Node placement could not produce distinct positions"""


class InvariantViolation(SimulationError, RuntimeError):
    """A protocol property was broken during a run (CLI exit code 3)"""


class ClassificationError(InvariantViolation):
    """A trace snapshot matched no system state"""


class RoundCapExceeded(InvariantViolation):
    """An epoch ran past the hard round cap"""

    def __init__(self, epoch: int, rounds: int):
        super().__init__(f"Epoch {epoch} exceeded the round cap after {rounds} rounds")
        self.epoch = epoch
        self.rounds = rounds


class UnknownPresetError(ConfigError):
    """Preset name not in the registry (CLI usage error, HTTP 404)"""


EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INVARIANT_VIOLATION = 3
