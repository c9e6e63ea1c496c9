"""Symbolic description of one factorized layer."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import prod

FAMILIES = ("tucker", "sttu", "tt", "stt", "tr", "str")
KINDS = ("fc", "conv", "tensor")
_STP = {"sttu": "tucker", "stt": "tt", "str": "tr"}


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class LayerPlan:
    """One layer (or bare tensor) to be stored in a factorized format.

    ``format`` is the family name (``tr``, ``str``, ``tt``, ``stt``,
    ``tucker``, ``sttu``); ``kind`` selects fully-connected, convolutional
    or a plain tensor decomposition.  Classical families always run at
    ``t = 1``.  ``rank`` may be left as ``None`` for symbolic accounting.
    """

    format: str
    input_dims: tuple
    output_dims: tuple = ()
    rank: int | tuple | None = None
    t: int = 1
    kind: str = "fc"
    kernel: int = 1
    height: int | None = None
    width: int | None = None
    stride: int = 1
    padding: int = 0
    batch: int = 1
    pad_odd: bool = False
    name: str = field(default="", compare=False)

    def __post_init__(self):
        fmt = self.format.lower()
        object.__setattr__(self, "format", fmt)
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        object.__setattr__(self, "output_dims", tuple(int(d) for d in self.output_dims))
        if isinstance(self.rank, (list, tuple)):
            object.__setattr__(self, "rank", tuple(int(r) for r in self.rank))
        if fmt not in FAMILIES:
            raise PlanError(f"unknown format {self.format!r}")
        if self.kind not in KINDS:
            raise PlanError(f"unknown kind {self.kind!r}")
        if fmt in _STP.values() and self.t != 1:
            object.__setattr__(self, "t", 1)
        if self.t < 1:
            raise PlanError("ratio t must be >= 1")
        dims = self.input_dims + self.output_dims
        if not self.input_dims or any(d < 1 for d in dims):
            raise PlanError("dims must be positive and input_dims non-empty")
        if self.kind != "tensor" and not self.output_dims:
            raise PlanError(f"{self.kind} layers need output_dims")
        ranks = self.ranks
        if ranks is not None:
            if any(r < 1 for r in ranks):
                raise PlanError("rank must be positive")
            if self.t > 1 and any(r % self.t for r in ranks):
                raise PlanError(f"rank {self.rank} must be divisible by t={self.t}")
        if self.kind == "conv" and self.kernel < 1:
            raise PlanError("kernel size must be positive")
        if self.family == "tt" and self.kind == "conv" and len(self.input_dims) != len(self.output_dims):
            raise PlanError("TT-matrix layers need as many input as output factors")
        if self.family == "tt" and self.kind == "tensor":
            raise PlanError("TT formats are defined for fc and conv layers only")
        if self.stride < 1 or self.padding < 0 or self.batch < 1:
            raise PlanError("stride and batch must be >= 1, padding >= 0")

    # -- derived -----------------------------------------------------------

    @property
    def family(self):
        """Classical family name: ``tr``, ``tt`` or ``tucker``."""
        return _STP.get(self.format, self.format)

    @property
    def is_stp(self):
        return self.format in _STP

    @property
    def tag(self):
        """Storage format tag of the resulting weight."""
        stp = self.is_stp
        if self.family == "tr":
            return "STR" if stp else "TR"
        if self.family == "tucker":
            return "STTu" if stp else "Tucker"
        suffix = "mat" if self.kind == "conv" else "vec"
        return ("STT" if stp else "TT") + suffix

    @property
    def ranks(self):
        if self.rank is None:
            return None
        return self.rank if isinstance(self.rank, tuple) else (self.rank,)

    def _pad(self, dims):
        if self.pad_odd and self.t > 1:
            return tuple(d + 1 if d % 2 else d for d in dims)
        return dims

    @property
    def in_dims(self):
        """Input factor sizes after the optional odd-size padding."""
        return self._pad(self.input_dims)

    @property
    def out_dims(self):
        return self._pad(self.output_dims)

    @property
    def I(self):  # noqa: E743
        return prod(self.in_dims)

    @property
    def O(self):  # noqa: E743
        return prod(self.out_dims) if self.out_dims else 1

    @property
    def fan_in(self):
        if self.kind == "conv":
            return self.kernel**2 * self.I
        if self.kind == "fc":
            return self.I
        return 1

    def out_spatial(self):
        if self.height is None or self.width is None:
            raise PlanError("conv FLOP counts need height and width")
        f = lambda n: (n + 2 * self.padding - self.kernel) // self.stride + 1  # noqa: E731
        return f(self.height), f(self.width)

    def with_(self, **kw):
        return replace(self, **kw)
