"""Exception hierarchy shared by all modules."""


class AnisoTopoError(Exception):
    """Base class for every error raised by the package."""


class SubdifferentialNotSingleton(AnisoTopoError):
    """Gradient requested on a branch boundary (or at the origin)."""


class NonConvexUnsupported(AnisoTopoError):
    """Operation needs a convex anisotropy."""


class InvalidTagSegment(AnisoTopoError):
    """Boundary tag rule does not lie on the domain boundary."""


class NoDirichletConstraint(AnisoTopoError):
    """Elasticity system has no Dirichlet-type boundary and is singular."""


class SolverDiverged(AnisoTopoError):
    """Iterative linear solver failed to reach its tolerance."""


class StepsizeTooLarge(AnisoTopoError):
    """Time step makes the lumped diagonal of the VI operator non-positive."""


class SecantStalled(AnisoTopoError):
    """Mass multiplier search could not bracket the target mass."""


class InnerNotConverged(AnisoTopoError):
    """Projected Gauss-Seidel hit its sweep cap."""


class NoInterface(AnisoTopoError):
    """Phase field has no zero crossing."""


class UnknownScenario(AnisoTopoError):
    """Scenario name is not one of the shipped configurations."""


class ParseError(AnisoTopoError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(AnisoTopoError):
    def __init__(self, key: str, constraint: str):
        super().__init__(f"{key}: must be {constraint}")
        self.key = key
        self.constraint = constraint


SOLVER_ERRORS = (
    SolverDiverged,
    StepsizeTooLarge,
    SecantStalled,
    InnerNotConverged,
    NoDirichletConstraint,
)
