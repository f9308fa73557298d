"""
Exceptions raised by the wpir package.

Every error derives from WpirError; errors that describe a bad input value also
derive from ValueError so that callers can catch either.
"""
from typing import List, Sequence


class WpirError(Exception):
    """Base class for all wpir errors"""


# core
class InvalidParams(WpirError, ValueError):
    pass


class NotBijective(WpirError, ValueError):
    pass


class Overflow(WpirError, OverflowError):
    pass


class TooLarge(WpirError, ValueError):
    pass


# scheme
class IndexOutOfRange(WpirError, IndexError):
    pass


class MalformedAnswers(WpirError, ValueError):
    pass


class StoreFormatError(WpirError, ValueError):
    pass


# allocation
class NotNormalized(WpirError, ValueError):
    def __init__(self, k: int, residual: float):
        super().__init__(f"probabilities for message {k} sum to 1{residual:+.3e}")
        self.k = k
        self.residual = residual


class NegativeProbability(WpirError, ValueError):
    def __init__(self, k: int, key, value: float = 0.0):
        super().__init__(f"negative probability {value:.3e} for message {k}, key {key}")
        self.k = k
        self.key = key
        self.value = value


class Infeasible(WpirError, ValueError):
    pass


# optimizer
class OutOfRange(WpirError, ValueError):
    pass


class NotConverged(WpirError, RuntimeError):
    pass


class NoBracket(WpirError, RuntimeError):
    pass


class Degenerate(WpirError, ValueError):
    pass


class NotMonotone(WpirError, RuntimeError):
    """A tradeoff curve whose leakage increases with the download cost"""

    def __init__(self, curve: str, increase: float):
        super().__init__(f"{curve} curve increases by {increase:.3e} somewhere on the grid")
        self.curve = curve
        self.increase = increase


class CertificateFailed(WpirError):
    def __init__(self, violations: Sequence[str]):
        self.violations: List[str] = list(violations)
        super().__init__(f"{len(self.violations)} violated condition(s): " + "; ".join(self.violations[:5]))


# sim
class DecodeMismatch(WpirError, RuntimeError):
    pass


# net
class FrameError(WpirError, ValueError):
    def __init__(self, reason: int, message: str = ""):
        super().__init__(message or f"frame error 0x{reason:02X}")
        self.reason = reason


class ConnectionFailed(WpirError, ConnectionError):
    def __init__(self, endpoint: str, cause: str = ""):
        super().__init__(f"cannot reach {endpoint}" + (f": {cause}" if cause else ""))
        self.endpoint = endpoint


class Timeout(WpirError, TimeoutError):
    def __init__(self, endpoint: str):
        super().__init__(f"timeout waiting for {endpoint}")
        self.endpoint = endpoint


class AnswerLengthMismatch(WpirError, ValueError):
    pass
