"""Neural fitted Q iteration with LSTM, GRU and MUT1 value networks on
partially observable grid worlds."""

from .gridworlds import GridSpec, GridWorld
from .numerics import NonFiniteError, OptimizerState, ParameterSet, Tape
from .recnet import ARCHITECTURES, ValueNetwork, init_network, load_network, save_network
from .valuelearn import AlgoConfig, DivergenceError, RunRecord, TargetSample, fitted_iteration

__version__ = "0.1.0"
