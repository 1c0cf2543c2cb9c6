import pytest

from sovdebt import (
    ConstantStrategyCurve,
    Model,
    ModelParams,
    build_equilibrium,
    reference_costs,
)

# Reference configuration used across the suite: all touch/restart events
# lie inside the no-devaluation band (x_star < x_flat), where the
# constant-strategy identities are exact.
REF = {
    "r": 0.05,
    "lam": 0.2,
    "mu": 0.02,
    "x_star": 1.2,
    "bankruptcy_cost": 0.075,
    "theta_value": 0.7,
    "l0": 0.1,
    "c1": 0.2,
}


def make_reference_model(**overrides) -> Model:
    cfg = {**REF, **overrides}
    theta_value = cfg.pop("theta_value")
    l0, c1 = cfg.pop("l0"), cfg.pop("c1")
    params = ModelParams(
        theta=lambda s: theta_value,
        theta_spec={"family": "constant", "value": theta_value},
        **cfg,
    )
    return Model(params=params, costs=reference_costs(l0=l0, c1=c1))


@pytest.fixture(scope="session")
def model() -> Model:
    return make_reference_model()


@pytest.fixture(scope="session")
def curve(model) -> ConstantStrategyCurve:
    return ConstantStrategyCurve(model)


@pytest.fixture(scope="session")
def solution(model, curve):
    return build_equilibrium(model, curve=curve)
