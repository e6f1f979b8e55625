"""Time-driven vs event-driven control loops on a minimal sensor/actuator CPS.

Simulates the sensor, actuator and an Arrowhead-style local cloud, meters
per-component power and compares the energy of both control-loop designs.
"""

from .core import (
    ComponentId,
    Energy,
    Limit,
    PowerSample,
    Temperature,
    ValueTrace,
    generate_trace,
    integrate_energy,
    should_trigger,
)
from .experiment import ExperimentConfig, export, run_experiment, summarize
from .power import PowerModel, account_energy, calibrate_default_model, sample_run
from .scheduler import Event, ScheduledEvent, Scheduler, periodic

__version__ = "0.1.0"
