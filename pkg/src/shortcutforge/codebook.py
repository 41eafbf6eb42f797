"""Attribute codebook: bijection between attribute tuples and class codes.

Codes are little-endian mixed-radix integers (first attribute is the least
significant digit), so a flat n-class label set and a CelebA-style tuple of
binary attributes go through the same mechanism. Each code additionally maps
to a 64-bit pattern key via SplitMix64, which seeds all keyed perturbation
generators; the construction is pure integer arithmetic mod 2**64 so keys are
identical across platforms and languages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import SpecError

MASK64 = (1 << 64) - 1

# SplitMix64 constants (public domain, Steele et al. splittable RNG).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_1 = 0xBF58476D1CE4E5B9
_MIX_2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a fixed public bijection on 64-bit integers."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _MIX_1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX_2) & MASK64
    return x ^ (x >> 31)


def key_stream(key: int, index: int) -> int:
    """index-th word of the keyed stream: mix64(key + (index+1)*GOLDEN)."""
    return mix64((key + (index + 1) * _GOLDEN) & MASK64)


def key_uniform(key: int, index: int) -> float:
    """index-th stream word mapped to a float in [0, 1)."""
    return key_stream(key, index) / 2.0**64


@dataclass(frozen=True)
class AttributeCodebook:
    """Ordered attribute schema plus the seed that keys per-code patterns.

    Parameters
    ----------
    names : tuple of str
        Attribute names, in manifest column order.
    arities : tuple of int
        Number of values each attribute can take (>= 2).
    seed : int
        64-bit seed; distinct seeds give unrelated pattern keys.
    """

    names: tuple
    arities: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "arities", tuple(int(a) for a in self.arities))
        if len(self.names) != len(self.arities):
            raise SpecError("names and arities must have equal length")
        if len(self.names) == 0:
            raise SpecError("codebook needs at least one attribute")
        if len(set(self.names)) != len(self.names):
            raise SpecError("duplicate attribute name")
        if any(a < 2 for a in self.arities):
            raise SpecError("every attribute arity must be >= 2")
        if not (0 <= int(self.seed) <= MASK64):
            raise SpecError("seed must fit in 64 bits")

    @property
    def capacity(self) -> int:
        cap = 1
        for a in self.arities:
            cap *= a
        return cap

    def encode(self, attrs) -> int:
        """Attribute tuple -> class code (little-endian mixed radix)."""
        attrs = tuple(int(v) for v in attrs)
        if len(attrs) != len(self.arities):
            raise SpecError(
                f"expected {len(self.arities)} attribute values, got {len(attrs)}"
            )
        code = 0
        base = 1
        for name, value, arity in zip(self.names, attrs, self.arities):
            if not 0 <= value < arity:
                raise SpecError(
                    f"attribute {name!r} value {value} outside arity {arity}"
                )
            code += value * base
            base *= arity
        return code

    def decode(self, code: int) -> tuple:
        """Class code -> attribute tuple. Inverse of encode."""
        code = int(code)
        if not 0 <= code < self.capacity:
            raise SpecError(f"code {code} out of range [0, {self.capacity})")
        values = []
        for arity in self.arities:
            values.append(code % arity)
            code //= arity
        return tuple(values)

    def pattern_key(self, code: int) -> int:
        """Class code -> deterministic 64-bit pattern key.

        mix64 is a bijection, so distinct codes under one seed are guaranteed
        distinct keys (not merely with high probability).
        """
        if not 0 <= int(code) < self.capacity:
            raise SpecError(f"code {code} out of range [0, {self.capacity})")
        return key_stream(int(self.seed), int(code))

    def to_json_dict(self) -> dict:
        return {
            "schema": [[n, a] for n, a in zip(self.names, self.arities)],
            "seed": int(self.seed),
            "capacity": self.capacity,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "AttributeCodebook":
        names = tuple(n for n, _ in obj["schema"])
        arities = tuple(int(a) for _, a in obj["schema"])
        book = cls(names=names, arities=arities, seed=int(obj.get("seed", 0)))
        if "capacity" in obj and int(obj["capacity"]) != book.capacity:
            raise SpecError("capacity field inconsistent with schema")
        return book

    @classmethod
    def from_json(cls, text: str) -> "AttributeCodebook":
        return cls.from_json_dict(json.loads(text))
