"""Physics-informed networks for the transport equation."""

from .coefficients import CoeffValues, DarcyNetCoeffs, DimensionlessCoeffs, Dual, UniformFlowCoeffs
from .estimators import FieldRegressor, InversePINN, TransportPINN, TransportProblem
from .losses import (MeasurementSet, ade_terms, loss_backward, loss_forward, loss_inverse,
                     weighted_total)
from .operators import (darcy_residual, neumann_operator, residual_normalized, residual_raw,
                        transport_operator)
from .training import (TrainConfig, TrainedModel, fit_field_dnn, train, train_forward,
                       train_inverse, write_history_csv)

__all__ = [
    "CoeffValues", "DarcyNetCoeffs", "DimensionlessCoeffs", "Dual", "UniformFlowCoeffs",
    "FieldRegressor", "InversePINN", "TransportPINN", "TransportProblem", "MeasurementSet",
    "ade_terms", "loss_backward", "loss_forward", "loss_inverse", "weighted_total",
    "darcy_residual", "neumann_operator", "residual_normalized", "residual_raw",
    "transport_operator", "TrainConfig", "TrainedModel", "fit_field_dnn", "train",
    "train_forward", "train_inverse", "write_history_csv",
]
