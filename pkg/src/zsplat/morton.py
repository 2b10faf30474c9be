"""Morton (Z-order) codes: quantization, bit interleaving, code shifts, and
sorting of point representations along the curve.

Codes pack three ``depth``-bit coordinates into one 64-bit word, bit ``i`` of x
landing at position ``3i``, y at ``3i+1``, z at ``3i+2``. ``depth`` is capped
at 21 so the code fits a single word. Shifting a code by ``h`` levels discards
``3h`` interleaved bits, which nests: the shifted code equals the code of the
coordinates each shifted right by ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, RangeError

MAX_DEPTH = 21

_U = np.uint64


def _spread3(v: np.ndarray) -> np.ndarray:
    """Space the low 21 bits of each value three apart (bit i -> bit 3i)."""
    v = v & _U(0x1FFFFF)
    v = (v | (v << _U(32))) & _U(0x1F00000000FFFF)
    v = (v | (v << _U(16))) & _U(0x1F0000FF0000FF)
    v = (v | (v << _U(8))) & _U(0x100F00F00F00F00F)
    v = (v | (v << _U(4))) & _U(0x10C30C30C30C30C3)
    v = (v | (v << _U(2))) & _U(0x1249249249249249)
    return v


def _compact3(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_spread3` (bit 3i -> bit i)."""
    v = v & _U(0x1249249249249249)
    v = (v ^ (v >> _U(2))) & _U(0x10C30C30C30C30C3)
    v = (v ^ (v >> _U(4))) & _U(0x100F00F00F00F00F)
    v = (v ^ (v >> _U(8))) & _U(0x1F0000FF0000FF)
    v = (v ^ (v >> _U(16))) & _U(0x1F00000000FFFF)
    v = (v ^ (v >> _U(32))) & _U(0x1FFFFF)
    return v


def _check_depth(depth: int) -> None:
    if not 1 <= depth <= MAX_DEPTH:
        raise RangeError(f"depth must be in [1, {MAX_DEPTH}], got {depth}")


@dataclass(frozen=True)
class ZCode:
    """A Morton code together with its per-axis bit depth.

    Depth 0 is the fully collapsed root cell (value 0); codes produced by
    :func:`encode` always have depth >= 1.
    """

    value: int
    depth: int

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH:
            raise RangeError(f"depth must be in [0, {MAX_DEPTH}], got {self.depth}")
        if not 0 <= self.value < 1 << (3 * self.depth):
            raise RangeError(
                f"code value {self.value} out of range for depth {self.depth}"
            )


def encode_array(coords: np.ndarray, depth: int) -> np.ndarray:
    """Interleave integer (N, 3) coordinates into uint64 Morton codes."""
    _check_depth(depth)
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise InputError(f"expected (N, 3) integer coordinates, got {coords.shape}")
    hi = 1 << depth
    if coords.size and (coords.min() < 0 or coords.max() >= hi):
        raise RangeError(f"coordinates must lie in [0, {hi - 1}] at depth {depth}")
    c = coords.astype(np.uint64)
    return _spread3(c[:, 0]) | (_spread3(c[:, 1]) << _U(1)) | (_spread3(c[:, 2]) << _U(2))


def decode_array(codes: np.ndarray, depth: int) -> np.ndarray:
    """De-interleave uint64 Morton codes into (N, 3) int64 coordinates."""
    _check_depth(depth)
    codes = np.asarray(codes, dtype=np.uint64)
    if codes.size and int(codes.max()) >= 1 << (3 * depth):
        raise RangeError(f"code exceeds 2^(3*{depth})")
    x = _compact3(codes)
    y = _compact3(codes >> _U(1))
    z = _compact3(codes >> _U(2))
    return np.stack([x, y, z], axis=1).astype(np.int64)


def encode(x: int, y: int, z: int, depth: int) -> ZCode:
    """Morton code of a single coordinate triple."""
    value = encode_array(np.array([[x, y, z]], dtype=np.int64), depth)[0]
    return ZCode(int(value), depth)


def decode(code: ZCode) -> tuple[int, int, int]:
    """Coordinate triple of a single Morton code (exact inverse of encode)."""
    x, y, z = decode_array(np.array([code.value], dtype=np.uint64), code.depth)[0]
    return int(x), int(y), int(z)


def shift(code: ZCode, levels: int) -> ZCode:
    """Drop ``levels`` coordinate levels (3 bits each) from a code.

    Satisfies the nesting law: shifting encode(x, y, z) by h equals
    encode(x >> h, y >> h, z >> h) at the reduced depth.
    """
    if not 0 <= levels <= code.depth:
        raise RangeError(f"shift levels {levels} out of [0, {code.depth}]")
    if levels == 0:
        return code
    return ZCode(code.value >> (3 * levels), code.depth - levels)


def shift_array(codes: np.ndarray, levels: int, depth: int) -> np.ndarray:
    """Array form of :func:`shift`: values shifted right by ``3 * levels``."""
    if not 0 <= levels <= depth:
        raise RangeError(f"shift levels {levels} out of [0, {depth}]")
    return np.asarray(codes, dtype=np.uint64) >> _U(3 * levels)


@dataclass(frozen=True)
class Quantizer:
    """Uniform grid mapping world points to integer cells.

    ``origin`` is the world position of cell (0,0,0)'s corner, ``cell`` the
    edge length of one cell, ``depth`` the per-axis bit budget. Quantized
    coordinates are clamped to [0, 2^depth - 1].
    """

    origin: np.ndarray  # (3,)
    cell: float
    depth: int

    def __post_init__(self):
        _check_depth(self.depth)
        if not (np.isfinite(self.cell) and self.cell > 0):
            raise RangeError(f"cell size must be positive, got {self.cell}")
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def fit(cls, points: np.ndarray, depth: int = 16, pad: float = 1e-3) -> "Quantizer":
        """Bounding-box quantizer: box expanded by ``pad`` (fractional), cell
        equal to the longest expanded extent divided by 2^depth."""
        points = np.asarray(points, dtype=np.float64)
        if points.size == 0:
            raise InputError("cannot fit a quantizer to an empty point set")
        if not np.isfinite(points).all():
            raise InputError("points contain non-finite values")
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        extent = hi - lo
        span = float(extent.max())
        if span <= 0.0:
            span = 1.0
        margin = 0.5 * pad * np.maximum(extent, span * 1e-12)
        origin = lo - margin
        cell = span * (1.0 + pad) / (1 << depth)
        return cls(origin, cell, depth)

    def quantize(self, points: np.ndarray) -> np.ndarray:
        """Component-wise floor((p - origin) / cell), clamped to the grid."""
        points = np.asarray(points, dtype=np.float64)
        squeeze = points.ndim == 1
        pts = np.atleast_2d(points)
        if pts.shape[-1] != 3:
            raise InputError(f"expected 3-vectors, got shape {points.shape}")
        if not np.isfinite(pts).all():
            raise InputError("cannot quantize non-finite points")
        idx = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        np.clip(idx, 0, (1 << self.depth) - 1, out=idx)
        return idx[0] if squeeze else idx

    def encode_points(self, points: np.ndarray) -> np.ndarray:
        """Morton codes of world points under this grid."""
        return encode_array(self.quantize(np.atleast_2d(points)), self.depth)

    def coarsen(self, levels: int) -> "Quantizer":
        """The grid after discarding ``levels`` coordinate levels."""
        if not 0 <= levels < self.depth:
            raise RangeError(f"cannot coarsen depth {self.depth} by {levels}")
        return Quantizer(self.origin, self.cell * (1 << levels), self.depth - levels)

    def cell_centers(self, coords: np.ndarray) -> np.ndarray:
        """World-space centers of integer cells (same grid level as self)."""
        coords = np.asarray(coords, dtype=np.float64)
        return self.origin + (coords + 0.5) * self.cell


def sort_by_code(rep, quantizer: Quantizer):
    """Order a point representation along the Z-curve.

    Returns (sorted representation, sorted uint64 codes, permutation). The
    sort is stable: equal codes keep their input order.
    """
    if len(rep) == 0:
        raise InputError("cannot serialize an empty point representation")
    codes = quantizer.encode_points(rep.positions)
    perm = np.argsort(codes, kind="stable")
    return rep.take(perm), codes[perm], perm
