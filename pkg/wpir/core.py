"""
Shared building blocks: system parameters, byte symbols, permutations and the
Hamming-weight combinatorics of the key space.

- SystemParams: N servers, K messages of L = N-1 symbols, trust weights gamma
- symbols are bytes in GF(2^8), added with XOR
- Permutation: bijection from servers [1:N] to [0:N-1]
- WeightProfile: t_j / s_j counts of key vectors by Hamming weight
"""
import itertools
import operator
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger as log
from scipy.special import comb

from .errors import InvalidParams, NotBijective, Overflow, TooLarge

# enumeration guard for operations that walk [0:N-1]^K
MAX_ENUMERABLE = 10**6
# weight profiles are exact integers, but callers convert to int64 arrays
INT_LIMIT = 2**63

GAMMA_TOL = 1e-12

Symbol = int


@dataclass(frozen=True)
class SystemParams:
    N: int
    K: int
    gamma: Tuple[float, ...] = ()
    L: int = field(init=False)

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise InvalidParams(f"N must be an integer >= 2, got {self.N}")
        if not isinstance(self.K, (int, np.integer)) or self.K < 2:
            raise InvalidParams(f"K must be an integer >= 2, got {self.K}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "L", self.N - 1)
        gamma = tuple(float(g) for g in self.gamma) if self.gamma else (1.0 / self.N,) * self.N
        if len(gamma) != self.N:
            raise InvalidParams(f"gamma needs {self.N} weights, got {len(gamma)}")
        if any(not np.isfinite(g) or g <= 0 for g in gamma):
            raise InvalidParams(f"gamma weights must be positive, got {gamma}")
        ordered = tuple(sorted(gamma))
        if ordered != gamma:
            log.warning(f"gamma {gamma} re-sorted ascending to {ordered}; server 1 is the most trusted")
        object.__setattr__(self, "gamma", ordered)

    @property
    def gamma_sum(self) -> float:
        return float(sum(self.gamma))

    @property
    def homogeneous(self) -> bool:
        return max(self.gamma) - min(self.gamma) <= GAMMA_TOL * max(self.gamma)

    @property
    def d_star(self) -> float:
        """Capacity download cost (1 - N^-K)/(1 - N^-1), the completely private point"""
        return (1.0 - float(self.N) ** -self.K) / (1.0 - 1.0 / self.N)

    def p_hat(self, D: float) -> float:
        """Minimum direct-download probability 1 - D + D/N needed to reach download cost D"""
        return 1.0 - D + D / self.N

    def d_for_p_hat(self, p_hat: float) -> float:
        return (1.0 - p_hat) * self.N / (self.N - 1)

    def with_gamma(self, gamma: Sequence[float]) -> "SystemParams":
        return SystemParams(self.N, self.K, tuple(gamma))

    def check_enumerable(self):
        if self.N**self.K > MAX_ENUMERABLE:
            raise TooLarge(f"N^K = {self.N}^{self.K} exceeds the enumeration cap {MAX_ENUMERABLE}")

    def __str__(self) -> str:
        gamma = ";".join(f"{g:g}" for g in self.gamma)
        return f"N={self.N} K={self.K} L={self.L} gamma={gamma}"


def parse_gamma(text: str) -> Tuple[float, ...]:
    """Parse semicolon separated weights such as '0.1;0.3;0.6'"""
    try:
        values = tuple(float(part) for part in text.replace(",", ";").split(";") if part.strip())
    except ValueError as e:
        raise InvalidParams(f"cannot parse gamma '{text}'") from e
    if not values:
        raise InvalidParams("gamma is empty")
    return values


# --------------------------------------------------------------
# symbols
# --------------------------------------------------------------


def check_symbol(value: int) -> Symbol:
    if not 0 <= value <= 0xFF:
        raise InvalidParams(f"symbol {value} is not a byte")
    return value


def xor_sum(symbols: Iterable[Symbol]) -> Symbol:
    """Field addition of any number of symbols, 0 for none"""
    return reduce(operator.xor, symbols, 0)


# --------------------------------------------------------------
# permutations
# --------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Permutation:
    """Bijection from servers [1:N] to [0:N-1], stored as image[n-1] = pi(n)"""

    image: Tuple[int, ...]

    def __call__(self, n: int) -> int:
        return self.image[n - 1]

    @property
    def N(self) -> int:
        return len(self.image)

    @property
    def is_cyclic(self) -> bool:
        N = self.N
        return all(self.image[(i + 1) % N] == (self.image[i] + 1) % N for i in range(N))

    def server_of(self, value: int) -> int:
        """Inverse map: the server n with pi(n) = value"""
        return self.image.index(value) + 1

    def __str__(self) -> str:
        return "(" + ",".join(str(v) for v in self.image) + ")"


def make_permutation(image: Sequence[int], N: Optional[int] = None) -> Permutation:
    image = tuple(int(v) for v in image)
    if N is not None and len(image) != N:
        raise NotBijective(f"permutation needs {N} entries, got {len(image)}")
    if sorted(image) != list(range(len(image))):
        raise NotBijective(f"{image} is not a bijection onto [0:{len(image) - 1}]")
    return Permutation(image)


def cyclic_permutations(N: int) -> List[Permutation]:
    """The N cyclic shifts of (0,1,...,N-1), sorted by pi(1)"""
    return [Permutation(tuple((shift + i) % N for i in range(N))) for shift in range(N)]


def all_permutations(N: int) -> List[Permutation]:
    return [Permutation(p) for p in itertools.permutations(range(N))]


# --------------------------------------------------------------
# Hamming-weight combinatorics
# --------------------------------------------------------------


@dataclass(frozen=True)
class WeightProfile:
    """
    t[j]: number of vectors in [0:N-1]^K with Hamming weight j (j = 0..K)
    s[j]: number of vectors in [0:N-1]^(K-1) with Hamming weight j (j = 0..K-1)
    """

    N: int
    K: int
    t: Tuple[int, ...]
    s: Tuple[int, ...]

    @property
    def t_array(self) -> np.ndarray:
        return np.array(self.t, dtype=float)

    @property
    def s_array(self) -> np.ndarray:
        return np.array(self.s, dtype=float)


def weight_profile(N: int, K: int) -> WeightProfile:
    if N < 2 or K < 2:
        raise InvalidParams(f"weight profile needs N >= 2 and K >= 2, got N={N} K={K}")
    if N**K >= INT_LIMIT:
        raise Overflow(f"N^K = {N}^{K} does not fit a 64-bit integer")
    t = tuple(int(comb(K, j, exact=True)) * (N - 1) ** j for j in range(K + 1))
    s = tuple(int(comb(K - 1, j, exact=True)) * (N - 1) ** j for j in range(K))
    return WeightProfile(N, K, t, s)


def hamming_weight(v: Iterable[int]) -> int:
    return sum(1 for x in v if x != 0)
