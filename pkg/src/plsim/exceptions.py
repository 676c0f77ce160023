"""Error types raised across the package, with stable machine-readable codes."""


class PlsimError(Exception):
    """Base class; ``code`` is stable for CLI error JSON."""

    code = "PlsimError"

    def payload(self):
        return {"code": self.code, "message": str(self)}


class MissingColumn(PlsimError):
    code = "MissingColumn"

    def __init__(self, name):
        super().__init__(f"column {name!r} not found in the input table")
        self.name = name


class NonFiniteValue(PlsimError):
    code = "NonFiniteValue"

    def __init__(self, row, col, count=1):
        super().__init__(
            f"non-finite value in column {col!r} at row {row}"
            + (f" ({count} offending cells in total)" if count > 1 else "")
        )
        self.row = row
        self.col = col
        self.count = count

    def payload(self):
        return {"code": self.code, "row": int(self.row), "col": self.col,
                "count": int(self.count), "message": str(self)}


class TooFewRows(PlsimError):
    code = "TooFewRows"

    def __init__(self, n, needed):
        super().__init__(f"got {n} rows, need at least {needed} (n > p + q + 2)")
        self.n = n
        self.needed = needed

    def payload(self):
        return {"code": self.code, "n": int(self.n), "needed": int(self.needed),
                "message": str(self)}


class ChartOutOfBall(PlsimError):
    code = "ChartOutOfBall"


class ConstraintViolated(PlsimError):
    code = "ConstraintViolated"


class DegenerateNeighborhood(PlsimError):
    code = "DegenerateNeighborhood"


class AllBandwidthsDegenerate(PlsimError):
    code = "AllBandwidthsDegenerate"


class NoConvergence(PlsimError):
    """Carries the best-so-far fit in ``.fit``."""

    code = "NoConvergence"

    def __init__(self, max_iter, fit=None):
        super().__init__(f"optimizer did not converge in {max_iter} iterations")
        self.max_iter = max_iter
        self.fit = fit


class SingularCovariance(PlsimError):
    code = "SingularCovariance"


class NonFiniteSE(PlsimError):
    code = "NonFiniteSE"


class AllCoefficientsZero(PlsimError):
    """Penalty strong enough to empty the model; carries the degenerate fit."""

    code = "AllCoefficientsZero"

    def __init__(self, fit=None):
        super().__init__("all beta and all free alpha coordinates were set to zero")
        self.fit = fit


class InfeasibleConstraint(PlsimError):
    code = "InfeasibleConstraint"


class RankDeficientA(PlsimError):
    code = "RankDeficientA"


class SingularMiddleMatrix(PlsimError):
    code = "SingularMiddleMatrix"


class DegenerateIndex(PlsimError):
    code = "DegenerateIndex"
