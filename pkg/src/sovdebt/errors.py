"""Exception hierarchy for the debt-management solver."""


class DebtModelError(Exception):
    """Base class for all solver-specific failures."""


class NoSolutionError(DebtModelError):
    """The level-set equation r*eta = H(x, xi, p) has no costate root
    because r*eta exceeds the Hamiltonian peak at (x, p)."""

    def __init__(self, x, eta, p, h_peak, message=""):
        self.x, self.eta, self.p, self.h_peak = x, eta, p, h_peak
        detail = message or (
            f"r*eta = {0.0 + eta!r} scaled level exceeds the Hamiltonian peak "
            f"{h_peak!r} at x={x!r}, p={p!r}; no costate root exists"
        )
        super().__init__(detail)


class SingularSlopeError(DebtModelError):
    """H_xi vanished (to within the singularity guard) where a finite
    price slope or costate sensitivity was requested."""


class BracketError(DebtModelError):
    """A root bracket could not be established by doubling."""


class HypothesisError(DebtModelError):
    """A structural hypothesis required by the equilibrium construction
    fails for the supplied configuration. ``violated`` names the inequality."""

    def __init__(self, violated, message=""):
        self.violated = violated
        super().__init__(message or f"hypothesis violated: {violated}")


class InfeasibleRestartError(DebtModelError):
    """Restart data (W(x0) - eps, p_c(x0)) lies above the Hamiltonian peak,
    so the backward continuation cannot leave the touch point.  This is a
    structural property of restart sites above the no-devaluation band."""


class NonCauchyError(DebtModelError):
    """The eps-regularized family of backward arcs failed to converge within
    the allotted refinement levels."""


class ConstructionError(DebtModelError):
    """The arc concatenation stopped for a reason the construction does not
    recognize (singularity inside an arc, price exiting (0,1], step failure)."""


class RegimeViolatedError(DebtModelError):
    """Preconditions for the closed-form no-control regime do not hold at
    the requested point."""


class StiffnessError(DebtModelError):
    """Forward simulation step control failed; partial trajectory attached."""

    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)
