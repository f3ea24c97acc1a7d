# Simulation services: radio channel, crypto, protocol, adversary, ledger and experiments
from .simulation_service import SimulationEngine, run_simulation, stream_simulation
from .preset_service import PresetService, run_preset
from .bench_service import bench_crypto

__all__ = [
    "SimulationEngine",
    "run_simulation",
    "stream_simulation",
    "PresetService",
    "run_preset",
    "bench_crypto",
]
