"""Joint state and parameter estimation for a stochastic SIR model.

The transmission rate follows a random walk and is tracked by an extended
Kalman filter; static parameters are calibrated with transitional MCMC.
"""
from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    DegeneratePosteriorError,
    DegenerateUpdateError,
    DivergenceError,
    EpiFilterError,
    InvalidStateError,
    NumericalError,
    ParameterError,
    WorkflowError,
)
from .filtering import (
    FilterRun,
    GaussianBelief,
    InitialBeliefConfig,
    ekf_forecast,
    ekf_update,
    initial_belief,
    run_filter,
)
from .forecast import ForecastResult, forecast, forecast_ensemble
from .inference import PosteriorEnsemble, PriorSpec, calibrate, posterior_summary, tmcmc
from .model import (
    AugmentedState,
    StaticParams,
    effective_reproduction,
    jacobians_measurement,
    jacobians_model,
    measure,
    re_moments,
    step_model,
)
from .observations import ObservationSeries
from .synthgen import ScenarioConfig, SyntheticTruth, generate

__version__ = "0.1.0"
