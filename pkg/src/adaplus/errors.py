"""Structured errors raised by the optimizer kernels, the oracle, and the bench harness."""


class OptimizerError(Exception):
    """Base class for structured kernel and oracle failures."""


class DimensionMismatch(OptimizerError):
    """A vector had the wrong length for the state it was paired with."""

    def __init__(self, what: str, expected: int, got: int):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected length {expected}, got {got}")


class NonFiniteValue(OptimizerError):
    """A NaN or infinity showed up in a gradient, intermediate, or parameter.

    ``stage`` names the update stage that produced the value (``gradient``,
    ``m``, ``second_moment``, ``m_bar``, ``m_hat``, ``s_hat``,
    ``delta_theta``, ``theta_after``), ``index`` the offending element and
    ``step`` the 1-based step counter at the time of the failure.
    """

    def __init__(self, stage: str, index: int | None = None, step: int | None = None):
        self.stage = stage
        self.index = index
        self.step = step
        where = f" at step {step}" if step is not None else ""
        elem = f", element {index}" if index is not None else ""
        super().__init__(f"non-finite value in {stage}{where}{elem}")


class ConfigError(Exception):
    """A run configuration is malformed or references unknown identifiers."""
