"""
The W-PIR# code: random keys, per-server queries, server answers, the
interference signal and decoding.

Message symbols are bytes; W_k[0] is a virtual zero symbol that is never stored.
Answers are `bytes` objects of length 0, 1 or L.
"""
import ctypes
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger as log

from .core import Permutation, Symbol, SystemParams, all_permutations, hamming_weight, make_permutation, xor_sum
from .errors import IndexOutOfRange, InvalidParams, MalformedAnswers, StoreFormatError, TooLarge

# enumerate_key_space refuses coded key spaces larger than this
MAX_CODED_KEYS = 10**5

STORE_MAGIC = b"WPIR"
STORE_VERSION = 1

Answer = bytes

# --------------------------------------------------------------
# random keys and queries
# --------------------------------------------------------------


@dataclass(frozen=True)
class Direct:
    """Direct download of the whole message from server n"""

    n: int

    def __str__(self) -> str:
        return f"#{self.n}"


@dataclass(frozen=True)
class Coded:
    """TSC key: interference vector f over the K-1 other messages and permutation pi"""

    f: Tuple[int, ...]
    pi: Permutation

    @property
    def weight(self) -> int:
        return hamming_weight(self.f)

    def __str__(self) -> str:
        return f"f={''.join(str(v) for v in self.f)} pi={self.pi}"


RandomKey = Union[Direct, Coded]


@dataclass(frozen=True)
class Escape:
    """The escape symbol #_k: send the whole of message k"""

    k: int

    def __str__(self) -> str:
        return f"#_{self.k}"


@dataclass(frozen=True)
class Vec:
    q: Tuple[int, ...]

    @property
    def is_zero(self) -> bool:
        return not any(self.q)

    def __str__(self) -> str:
        return "".join(str(v) for v in self.q)


Query = Union[Escape, Vec]


def key_sort_key(key: RandomKey):
    """Deterministic key order: Direct by server, then Coded by (f, pi)"""
    if isinstance(key, Direct):
        return (0, (key.n,), ())
    return (1, key.f, key.pi.image)


def validate_key(key: RandomKey, params: SystemParams) -> RandomKey:
    if isinstance(key, Direct):
        if not 1 <= key.n <= params.N:
            raise InvalidParams(f"direct server {key.n} not in [1:{params.N}]")
    elif isinstance(key, Coded):
        if len(key.f) != params.K - 1 or any(not 0 <= v < params.N for v in key.f):
            raise InvalidParams(f"key vector {key.f} not in [0:{params.N - 1}]^{params.K - 1}")
        if key.pi.N != params.N:
            raise InvalidParams(f"permutation {key.pi} does not act on {params.N} servers")
    else:
        raise InvalidParams(f"unknown key type {type(key).__name__}")
    return key


def key_to_dict(key: RandomKey) -> dict:
    if isinstance(key, Direct):
        return {"direct": key.n}
    return {"f": list(key.f), "pi": list(key.pi.image)}


def key_from_dict(data: dict) -> RandomKey:
    if "direct" in data:
        return Direct(int(data["direct"]))
    return Coded(tuple(int(v) for v in data["f"]), make_permutation(data["pi"]))


def answer_length(query: Query, params: SystemParams) -> int:
    if isinstance(query, Escape):
        return params.L
    return 0 if query.is_zero else 1


def check_message_index(k: int, params: SystemParams) -> int:
    if not 1 <= k <= params.K:
        raise IndexOutOfRange(f"message index {k} not in [1:{params.K}]")
    return k


def coded_value(key: Coded, n: int, N: int) -> int:
    """The entry (pi(n) - sum f) mod N placed at the requested position for server n"""
    return (key.pi(n) - sum(key.f)) % N


def encode_queries(k: int, key: RandomKey, params: SystemParams) -> List[Query]:
    check_message_index(k, params)
    validate_key(key, params)
    N, K = params.N, params.K
    if isinstance(key, Direct):
        return [Escape(k) if n == key.n else Vec((0,) * K) for n in range(1, N + 1)]
    queries: List[Query] = []
    for n in range(1, N + 1):
        q = key.f[: k - 1] + (coded_value(key, n, N),) + key.f[k - 1 :]
        queries.append(Vec(q))
    return queries


def enumerate_key_space(params: SystemParams) -> List[RandomKey]:
    N, K = params.N, params.K
    coded = N ** (K - 1) * math.factorial(N)
    if coded > MAX_CODED_KEYS:
        raise TooLarge(f"{coded} coded keys for N={N} K={K} exceed the cap {MAX_CODED_KEYS}")
    keys: List[RandomKey] = [Direct(n) for n in range(1, N + 1)]
    perms = sorted(all_permutations(N))
    for f in itertools.product(range(N), repeat=K - 1):
        keys.extend(Coded(f, pi) for pi in perms)
    return keys


# --------------------------------------------------------------
# message store
# --------------------------------------------------------------


class StoreHeader(ctypes.BigEndianStructure):
    """Header of a message-store file, followed by K*L symbol bytes row-major"""

    _pack_ = 1
    _fields_ = [
        ("magic", ctypes.c_char * 4),
        ("version", ctypes.c_uint8),
        ("K", ctypes.c_uint16),
        ("L", ctypes.c_uint16),
    ]


HEADER_SIZE = ctypes.sizeof(StoreHeader)


@dataclass
class MessageStore:
    params: SystemParams
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8)
        if self.data.shape != (self.params.K, self.params.L):
            raise StoreFormatError(f"store shape {self.data.shape} does not match K={self.params.K} L={self.params.L}")
        self.data.setflags(write=False)

    def symbol(self, m: int, i: int) -> Symbol:
        """W_m[i] with the virtual dummy W_m[0] = 0"""
        return 0 if i == 0 else int(self.data[m - 1, i - 1])

    def message(self, k: int) -> bytes:
        check_message_index(k, self.params)
        return self.data[k - 1].tobytes()

    @classmethod
    def random(cls, params: SystemParams, rng: np.random.Generator) -> "MessageStore":
        return cls(params, rng.integers(0, 256, size=(params.K, params.L), dtype=np.uint8))

    def to_bytes(self) -> bytes:
        header = StoreHeader(STORE_MAGIC, STORE_VERSION, self.params.K, self.params.L)
        return bytes(header) + self.data.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, gamma: Sequence[float] = ()) -> "MessageStore":
        if len(blob) < HEADER_SIZE:
            raise StoreFormatError(f"store is {len(blob)} bytes, shorter than its header")
        header = StoreHeader.from_buffer_copy(blob[:HEADER_SIZE])
        if header.magic != STORE_MAGIC:
            raise StoreFormatError(f"bad magic {header.magic!r}")
        if header.version != STORE_VERSION:
            raise StoreFormatError(f"unsupported store version {header.version}")
        K, L = header.K, header.L
        body = blob[HEADER_SIZE:]
        if len(body) != K * L:
            raise StoreFormatError(f"store body has {len(body)} bytes, expected {K * L}")
        try:
            params = SystemParams(L + 1, K, tuple(gamma))
        except InvalidParams as e:
            raise StoreFormatError(f"store header K={K} L={L}: {e}") from e
        return cls(params, np.frombuffer(body, dtype=np.uint8).reshape(K, L).copy())

    def save(self, path: Path):
        Path(path).write_bytes(self.to_bytes())
        log.debug(f"saved store {self.params.K}x{self.params.L} to {path}")

    @classmethod
    def load(cls, path: Path, gamma: Sequence[float] = ()) -> "MessageStore":
        try:
            blob = Path(path).read_bytes()
        except OSError as e:
            raise StoreFormatError(f"cannot read store {path}: {e}") from e
        return cls.from_bytes(blob, gamma)


# --------------------------------------------------------------
# server and user functions
# --------------------------------------------------------------


def interference(f: Sequence[int], k: int, store: MessageStore) -> Symbol:
    """XOR of W_m[f-entry] over the K-1 messages m != k, in message order"""
    others = [m for m in range(1, store.params.K + 1) if m != k]
    return xor_sum(store.symbol(m, i) for m, i in zip(others, f))


def answer(q: Query, store: MessageStore) -> Answer:
    if isinstance(q, Escape):
        return store.message(q.k)
    if q.is_zero:
        return b""
    return bytes([xor_sum(store.symbol(m, i) for m, i in enumerate(q.q, start=1))])


def decode(answers: Sequence[Answer], k: int, key: RandomKey, params: SystemParams) -> bytes:
    queries = encode_queries(k, key, params)
    if len(answers) != params.N:
        raise MalformedAnswers(f"expected {params.N} answers, got {len(answers)}")
    for n, (q, a) in enumerate(zip(queries, answers), start=1):
        if len(a) != answer_length(q, params):
            raise MalformedAnswers(f"answer from server {n} has {len(a)} symbols, query {q} expects {answer_length(q, params)}")
    if isinstance(key, Direct):
        return bytes(answers[key.n - 1])
    # the server whose inserted entry is 0 returns the interference itself (empty when f = 0)
    n_star = key.pi.server_of(sum(key.f) % params.N)
    noise = answers[n_star - 1][0] if answers[n_star - 1] else 0
    message = bytearray(params.L)
    for n in range(1, params.N + 1):
        i = coded_value(key, n, params.N)
        if i:
            message[i - 1] = answers[n - 1][0] ^ noise
    return bytes(message)


def download_symbols(answers: Sequence[Answer]) -> int:
    return sum(len(a) for a in answers)


# --------------------------------------------------------------
# query/answer table
# --------------------------------------------------------------

MESSAGE_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class TableRow:
    key: RandomKey
    label: str
    F: str
    pi_or_n: str
    queries: List[str]
    answers: List[str]


def _letter(m: int) -> str:
    return MESSAGE_LETTERS[m - 1] if m <= len(MESSAGE_LETTERS) else f"w{m}"


def symbolic_answer(q: Query, params: SystemParams) -> str:
    if isinstance(q, Escape):
        return ",".join(f"{_letter(q.k)}_{i}" for i in range(1, params.L + 1))
    if q.is_zero:
        return "∅"
    return "⊕".join(f"{_letter(m)}_{i}" for m, i in enumerate(q.q, start=1) if i)


def table_key_order(params: SystemParams) -> List[RandomKey]:
    """Direct rows by server, then f ascending with permutations in descending order"""
    keys = enumerate_key_space(params)
    direct = [key for key in keys if isinstance(key, Direct)]
    coded = [key for key in keys if isinstance(key, Coded)]
    coded.sort(key=lambda key: tuple(-v for v in key.pi.image))
    coded.sort(key=lambda key: key.f)
    return direct + coded


def query_answer_table(params: SystemParams, k: int, store: Optional[MessageStore] = None) -> List[TableRow]:
    check_message_index(k, params)
    rows = []
    for key in table_key_order(params):
        queries = encode_queries(k, key, params)
        if store is None:
            answers = [symbolic_answer(q, params) for q in queries]
        else:
            answers = [answer(q, store).hex() or "∅" for q in queries]
        if isinstance(key, Direct):
            label, F, pi_or_n = f"p_(#)^{{{k},{key.n}}}", "#", str(key.n)
        else:
            f = "".join(str(v) for v in key.f)
            label = f"p_({f})^{{{k},[{','.join(str(v) for v in key.pi.image)}]}}"
            F, pi_or_n = f, str(key.pi)
        rows.append(TableRow(key, label, F, pi_or_n, [str(q) for q in queries], answers))
    return rows


def render_table(params: SystemParams, k: int, store: Optional[MessageStore] = None) -> str:
    rows = query_answer_table(params, k, store)
    header = ["Prob.", "F", "pi or n"]
    for n in range(1, params.N + 1):
        header += [f"Q_{n}^[{k}]", f"A_{n}"]
    cells = [header] + [[r.label, r.F, r.pi_or_n] + [x for pair in zip(r.queries, r.answers) for x in pair] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = [f"Requesting message k={k}"]
    for i, row in enumerate(cells):
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def key_index(params: SystemParams) -> Dict[RandomKey, int]:
    return {key: i for i, key in enumerate(enumerate_key_space(params))}
