"""
Backend Module Initialization
Provides easy imports for the simulator's core components.

The runner is not re-exported here: it depends on src.config.experiment, which
itself builds on these modules. Import it as src.backend.runner.
"""

from .errors import SimulatorError
from .graph import Graph, baseline_graph, laplacian
from .kernel import Kernel
from .funcspace import GridFunction, KernelExpansion, SplineGrid, baseline_grid
from .learner import GainSchedule, NetworkState, network_step, validate_gains
from .streams import StreamSpec, derive_rng

__all__ = [
    'SimulatorError',
    'Graph',
    'baseline_graph',
    'laplacian',
    'Kernel',
    'GridFunction',
    'KernelExpansion',
    'SplineGrid',
    'baseline_grid',
    'GainSchedule',
    'NetworkState',
    'network_step',
    'validate_gains',
    'StreamSpec',
    'derive_rng',
]

__version__ = '1.0.0'
