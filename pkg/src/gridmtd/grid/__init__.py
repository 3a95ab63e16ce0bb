"""Network modelling: cases, admittance, measurements, Jacobians, power flow."""

from .admittance import AdmittanceSet, build_admittance
from .cases import bundled_case14, case14, three_bus, two_bus
from .jacobian import ActiveFlowJacobianParts, active_flow_jacobian, jacobians
from .measurement import (
    MeasurementVector,
    branch_losses,
    build_descriptors,
    evaluate_h,
    measure,
    measurement_count,
    measurement_fn,
    sigma_rule,
)
from .model import (
    Branch,
    Bus,
    CaseError,
    GridModel,
    SetpointViolation,
    StateVector,
    apply_setpoint,
    load_case,
    parse_case,
    reactance_of_susceptance,
    susceptance_of_reactance,
)
from .powerflow import PowerFlowError, solve_power_flow

__all__ = [
    "AdmittanceSet", "build_admittance",
    "bundled_case14", "case14", "three_bus", "two_bus",
    "ActiveFlowJacobianParts", "active_flow_jacobian", "jacobians",
    "MeasurementVector", "branch_losses", "build_descriptors", "evaluate_h",
    "measure", "measurement_count", "measurement_fn", "sigma_rule",
    "Branch", "Bus", "CaseError", "GridModel", "SetpointViolation",
    "StateVector", "apply_setpoint", "load_case", "parse_case",
    "reactance_of_susceptance", "susceptance_of_reactance",
    "PowerFlowError", "solve_power_flow",
]
