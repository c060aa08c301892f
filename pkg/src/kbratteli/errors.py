"""Exception types raised across the package."""


class KGraphError(ValueError):
    """Base class for invalid k-graph input."""

    reason = "InvalidKGraph"

    def to_dict(self):
        return {"reason": self.reason, "message": str(self)}


class DimensionMismatch(KGraphError):
    reason = "DimensionMismatch"


class NotCommuting(KGraphError):
    reason = "NotCommuting"

    def __init__(self, i, j):
        # i, j are 1-based matrix indices
        self.i, self.j = i, j
        super().__init__(f"A_{i} A_{j} != A_{j} A_{i}")

    def to_dict(self):
        return {"reason": self.reason, "message": str(self), "pair": [self.i, self.j]}


class NotIrreducible(KGraphError):
    reason = "NotIrreducible"


class SpectralRadiusAtMostOne(KGraphError):
    reason = "SpectralRadiusAtMostOne"

    def __init__(self, i, rho):
        self.i, self.rho = i, rho
        super().__init__(f"spectral radius of A_{i} is {rho!r}, need > 1")

    def to_dict(self):
        return {"reason": self.reason, "message": str(self), "index": self.i}


class NoConvergence(RuntimeError):
    pass


class BudgetExceeded(RuntimeError):
    def __init__(self, estimated_count, budget):
        self.estimated_count = estimated_count
        self.budget = budget
        super().__init__(f"tree would have {estimated_count} nodes (budget {budget})")


class NotBranching(ValueError):
    def __init__(self, node, count):
        self.node = node
        super().__init__(f"node {node} has {count} children; need at least 2")


class ParamOutOfRange(ValueError):
    pass


class TruncationError(ValueError):
    """Requested evaluation is not resolved by the finite-depth tree."""


class NotAGenerator(ValueError):
    pass
