"""
Named allocations for the command line, so that simulations and retrievals do not
need a hand-written JSON allocation.

    uniform-tsc    the completely private point, D = D*, cyclic permutations only
    clean-tsc      the completely private point over all N! permutations
    direct         everything from server 1, D = 1
    maxl-opt(D)    the optimal Max-L allocation at download cost D
    mi-opt(D)      the optimal MI allocation at download cost D (escapes on server 1)

D may be written as a fraction, e.g. maxl-opt(7/6).
"""
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, List, Optional

from .allocation import Allocation, clean_tsc, direct_only, expand_reduced, load_allocation, uniform_tsc
from .core import SystemParams
from .errors import InvalidParams
from .optimizer import maxl_optimal, mi_closed_form_allocation

PRESET_RE = re.compile(r"^(?P<name>[a-z-]+)(\((?P<arg>[^)]*)\))?$")


@dataclass
class Preset:
    name: str
    description: str
    build: Callable[[SystemParams, Optional[float]], Allocation]
    needs_D: bool = False

    def __post_init__(self):
        assert self.name, "preset name must be provided"


preset_list: List[Preset] = [
    Preset("uniform-tsc", "every cyclic (f, pi) at N^-K", lambda params, D: expand_reduced(uniform_tsc(params), params)),
    Preset("clean-tsc", "every f and all N! permutations, uniform", lambda params, D: clean_tsc(params)),
    Preset("direct", "all mass on Direct(1)", lambda params, D: direct_only(params)),
    Preset("maxl-opt", "optimal Max-L allocation at D", lambda params, D: maxl_optimal(params, D)[0], needs_D=True),
    Preset("mi-opt", "optimal MI allocation at D", lambda params, D: mi_closed_form_allocation(params, D)[0], needs_D=True),
]


def parse_D(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise InvalidParams(f"cannot read download cost '{text}'") from e


def build_preset(spec: str, params: SystemParams) -> Allocation:
    match = PRESET_RE.match(spec.strip().lower())
    preset = next((p for p in preset_list if match and p.name == match["name"]), None)
    if preset is None:
        names = ", ".join(p.name for p in preset_list)
        raise InvalidParams(f"unknown preset '{spec}', use one of {names}")
    D = parse_D(match["arg"]) if match["arg"] else None
    if preset.needs_D and D is None:
        raise InvalidParams(f"preset {preset.name} needs a download cost, e.g. {preset.name}(7/6)")
    return preset.build(params, D)


def resolve_allocation(spec: str, params: SystemParams) -> Allocation:
    """A JSON allocation file when the path exists, a preset otherwise"""
    path = Path(spec)
    if path.suffix.lower() == ".json" or path.is_file():
        return load_allocation(path, params)
    return build_preset(spec, params)
