"""Behavioural synapse model and plasticity metrics."""

from .fitting import FitError, NonlinearityFit, StpFit, fit_nonlinearity, fit_stp_decay, stp_model
from .io import PULSE_HEADER, STP_HEADER, read_pulse_trace, read_stp_dataset, write_pulse_trace, write_stp_dataset
from .metrics import (
    READ,
    PulseTrace,
    SwitchingStats,
    asymmetric_ratio,
    asymmetric_ratio_model,
    crossover_width,
    cumulative_switching_stats,
    dynamic_range,
    energy_efficiency,
    energy_per_pulse,
    gaussian_accuracy,
    gaussian_switching_trace,
    insertion_speed_ratio,
    insertion_time,
    insertion_time_in_plane,
    insertion_time_out_of_plane,
    ppf_ptp,
    project_efficiency,
    project_energy,
    resistance_in_plane,
    resistance_out_of_plane,
    scaling_projection,
    speed_ratio_sweep,
    synthetic_cycle,
)
from .model import (
    DEPRESS,
    POTENTIATE,
    EnergyParams,
    SynapseDevice,
    SynapticDeviceModel,
    apply_pulse,
    apply_pulses,
    apply_write_noise,
    conductance_closed_form,
    depression_closed_form,
    pulse_step,
    retention_decay,
    retention_factor,
    retention_window_for_loss,
)

__all__ = [name for name in dir() if not name.startswith("_")]
