"""lawforge: joint recovery of a PDE state and a human-readable physical
law from indirect, noisy, reduced spectral measurements, with the law
represented by a rational-function network with sine and exponential
activations."""

__version__ = "0.1.0"

from .field import Grid, StateField, ddt, ddx, l2_spacetime, sample, sobolev_h2_norm
from .harness import ExperimentConfig, ground_truth, run_sweep
from .measure import MeasurementRecord, add_noise, analyze_reduced, synthesize
from .optim import ObjectiveConfig, alternate, objective, schedules_for
from .symnet import NetworkSpec, batch_forward, default_parfam_spec, forward
from .extract import fit_linear_law, to_expression, to_text

__all__ = [
    "Grid",
    "StateField",
    "ExperimentConfig",
    "MeasurementRecord",
    "NetworkSpec",
    "ObjectiveConfig",
    "add_noise",
    "alternate",
    "analyze_reduced",
    "batch_forward",
    "ddt",
    "ddx",
    "default_parfam_spec",
    "fit_linear_law",
    "forward",
    "ground_truth",
    "l2_spacetime",
    "objective",
    "run_sweep",
    "sample",
    "schedules_for",
    "sobolev_h2_norm",
    "synthesize",
    "to_expression",
    "to_text",
]
