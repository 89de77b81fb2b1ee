"""Exception hierarchy shared by all modules."""


class OSCVError(Exception):
    """Base class for every error raised by the package."""


class InvalidParam(OSCVError, ValueError):
    pass


class DegenerateKernel(OSCVError, ValueError):
    """A kernel construction divides by (numerically) zero."""


class UnknownKernelLabel(OSCVError, KeyError):
    def __str__(self):
        return f"unknown kernel label: {self.args[0]!r}"


class QuadratureFailure(OSCVError, ArithmeticError):
    pass


class NonIntegrableTail(QuadratureFailure):
    """The truncated outer integral of B(g) still has a non-negligible integrand."""


class InvalidSample(OSCVError, ValueError):
    pass


class InvalidBandwidth(OSCVError, ValueError):
    pass


class DegenerateCriterion(OSCVError):
    """The criterion minimum sits at the lower edge of the bandwidth grid."""


class NotRobustKernel(OSCVError, ValueError):
    pass


class InvalidSpec(OSCVError, ValueError):
    pass


class SmoothDensity(OSCVError, ValueError):
    """A nonsmooth-only formula was applied to a density without cusps."""


class DegenerateJumps(OSCVError, ValueError):
    pass


class ParseError(OSCVError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column

    def __str__(self):
        where = ""
        if self.row is not None:
            where = f" (row {self.row}" + (f", column {self.column})" if self.column is not None else ")")
        return f"{self.args[0]}{where}"
