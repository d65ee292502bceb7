"""Filter pruning while training for small convolutional networks."""
from .config import ConfigError, RunConfig, load_config
from .cost import cost_report, latency_prt, latency_pwt, network_cost_report, savings
from .criteria import Criterion, select_victims, zero_filters_percentage
from .experiment import compare, run
from .kernels import BACKEND
from .network import Network
from .schedule import Mode, ScheduleConfig, ScheduleState, epoch_end_hook

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "Criterion", "Mode", "Network", "RunConfig", "ScheduleConfig",
    "ScheduleState", "compare", "cost_report", "epoch_end_hook", "latency_prt", "latency_pwt",
    "load_config", "network_cost_report", "run", "savings", "select_victims", "zero_filters_percentage",
]
