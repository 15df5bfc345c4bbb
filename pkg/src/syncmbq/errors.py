"""Exception types shared across the package."""

from __future__ import annotations


class MdpValidationError(ValueError):
    pass


class RowNotStochastic(MdpValidationError):
    def __init__(self, state: int, action: int, row_sum: float):
        self.state, self.action, self.row_sum = state, action, row_sum
        super().__init__(
            f"transition row (s={state}, a={action}) sums to {row_sum!r}, expected 1"
        )


class NegativeProbability(MdpValidationError):
    def __init__(self, state: int, action: int, next_state: int, value: float):
        self.state, self.action, self.next_state = state, action, next_state
        super().__init__(
            f"negative probability {value!r} at (s={state}, a={action}, s'={next_state})"
        )


class DiscountOutOfRange(MdpValidationError):
    def __init__(self, discount: float):
        self.discount = discount
        super().__init__(f"discount must lie in (0, 1), got {discount!r}")


class SizeMismatch(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class ModeMismatch(ValueError):
    pass


class InvalidRange(ValueError):
    pass


class InvalidDimensions(InvalidRange):
    pass


class EpsOutOfValidity(InvalidRange):
    """Raised when a tolerance falls outside the window where a bound holds.

    ``window`` is the admissible interval for epsilon squared.
    """

    def __init__(self, eps: float, window: tuple[float, float], what: str = "bound"):
        self.eps = eps
        self.window = window
        super().__init__(
            f"eps={eps!r} outside validity window of {what}: "
            f"eps^2 must lie in [{window[0]:g}, {window[1]:g}]"
        )


class NonConvergence(RuntimeError):
    pass


class SandwichViolation(AssertionError):
    def __init__(self, step: int, entry: tuple[int, int], lower: float, value: float, upper: float):
        self.step, self.entry = step, entry
        super().__init__(
            f"ordering Q^L <= Q <= Q^U broken at step {step}, entry {entry}: "
            f"{lower!r} <= {value!r} <= {upper!r} fails"
        )
