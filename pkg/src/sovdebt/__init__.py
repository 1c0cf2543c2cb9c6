"""Feedback equilibria for a deterministic sovereign-debt management model.

The package constructs the equilibrium value function V*, bond price p*,
and feedback controls (u*, v*) on [0, x_star] by backward integration of
the minus-branch costate system with restart at contacts with the
constant-strategy cost, then verifies the equilibrium by forward
simulation and reproduces the large-threshold salvage regimes.
"""

from .config import ARTIFACT_VERSION as __version__  # noqa: F401
from .costs import (  # noqa: F401
    CostModel,
    conj_c,
    conj_l,
    costs_from_derivatives,
    reference_costs,
    u_star,
    v_star,
)
from .hamiltonian import (  # noqa: F401
    Branch,
    Model,
    ModelParams,
    costate_root,
    costate_root_deta,
    h_max,
    hamiltonian,
    hamiltonian_grad,
    holder_constant,
    price_slope,
    xi_sharp,
)
from .constant_strategy import (  # noqa: F401
    ConstantStrategyCurve,
    p_const,
    v_const,
    w_cost,
    w_cost_dual,
    w_prime,
    x_crit,
    x_flat,
)
from .backward import (  # noqa: F401
    BackwardArc,
    StopReason,
    delta_flat_bound,
    eps_limit,
    integrate_backward,
    restart_eps,
)
from .equilibrium import EquilibriumSolution, build_equilibrium  # noqa: F401
from .simulate import (  # noqa: F401
    Trajectory,
    discounted_cost,
    equilibrium_policy,
    price_functional,
    simulate,
    verify_equilibrium,
)
