"""Column layouts of the CSV artifacts."""
from marshmallow import fields

from core.serializer import BaseSchema, Real, Regime

__all__ = (
    "AssumptionReportSchema",
    "SolveStepSchema",
    "ValueRowSchema",
    "PolicyRowSchema",
    "EulerRowSchema",
    "HistogramRowSchema",
    "RegimeRowSchema",
    "DriftReportSchema",
    "DriftNodeSchema",
)


class AssumptionReportSchema(BaseSchema):
    d = Real()
    x_bar = Real()
    alpha = Real()
    alpha_beta = Real()
    lambda2 = Real()
    kappa2 = Real()
    d1_value = Real()
    d3_irreducible = fields.Boolean()
    z_bar = Real()
    reciprocal_mean = Real()
    minimal_r = fields.Integer()
    f2_satisfied = fields.Boolean()
    d1_satisfied = fields.Boolean()
    d2_satisfied = fields.Boolean()


class SolveStepSchema(BaseSchema):
    iteration = fields.Integer()
    delta_w = Real()
    ratio = Real()
    converged = fields.Boolean()


class ValueRowSchema(BaseSchema):
    x = Real()
    regime = Regime()
    V = Real()


class PolicyRowSchema(BaseSchema):
    x = Real()
    regime = Regime()
    phi_star = Real()
    invest_ratio = Real()
    c_star = Real()


class EulerRowSchema(BaseSchema):
    x = Real()
    regime = Regime()
    residual = Real()
    relative_residual = Real()
    excluded = fields.Boolean()


class HistogramRowSchema(BaseSchema):
    regime = Regime()
    bin_left = Real()
    bin_right = Real()
    count = fields.Integer()
    frequency = Real()


class RegimeRowSchema(BaseSchema):
    regime = Regime()
    frequency = Real()
    stationary = Real()


class DriftReportSchema(BaseSchema):
    lambda_hat = Real()
    kappa_hat = Real()
    satisfied = fields.Boolean()
    worst_x = fields.Function(lambda report: float(report.worst_node[0]))
    worst_regime = fields.Function(lambda report: int(report.worst_node[1]) + 1)
    n_nodes = fields.Function(lambda report: len(report.nodes))


class DriftNodeSchema(BaseSchema):
    x = Real()
    regime = Regime()
    lyapunov = Real()
    expectation = Real()
    bound = Real()
