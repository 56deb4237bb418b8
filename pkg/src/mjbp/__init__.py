"""Mixed-timescale joint beamforming and power splitting for a massive-MIMO SWIPT downlink."""

from .baselines import mrt_beamformer, zf_beamformer
from .channel import (
    ChannelStatistics,
    ConfigurationError,
    GeometryConfig,
    SystemDims,
    array_response,
    draw_error_samples,
    draw_estimated_channel,
    draw_estimated_channels,
    pathloss_gain,
    sample_statistics,
)
from .config import ConfigError, ExperimentConfig, parse_config, parse_config_text
from .experiments import ResultRow, cdf_bounds, emit_csv, read_csv, run_sweep, tradeoff_sweep
from .fp import FpOptions, SaaInstance, fp_bcd
from .power import (
    EhParams,
    NoiseParams,
    UtilitySpec,
    eta_hat,
    grad_eta_rho,
    harvested_power,
    input_rf_power,
    rate_bounds,
    sinr,
    utility,
)
from .qcqp import solve_qcqp
from .ssca import LongTermOptions, StepSchedule, SystemParams, run

__version__ = "0.1.0"
