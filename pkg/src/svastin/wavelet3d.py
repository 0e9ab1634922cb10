"""Single-level orthonormal Haar wavelet transforms for video tensors.

Videos are unbatched ``(C, T, W, H)`` tensors. The 3D transform decomposes the
temporal, width and height axes into low/high halves, producing 8 sub-bands
packed into the channel axis as ``(8C, T/2, W/2, H/2)``: channel block
``[8k, 8k+7]`` holds the bands of input channel ``k`` in ``BAND_ORDER_3D``.
Sub-band letters are ordered (temporal, width, height), e.g. ``"llh"`` is
low-pass in time and width, high-pass in height.

A framewise 2D variant (width/height only, ``(4C, T, W/2, H/2)``) is provided
for the spatial-only network arm of the dimensionality ablation.
"""

import math
from dataclasses import dataclass

import torch

_SQRT2 = math.sqrt(2.0)

_AXIS_NAMES = {1: "temporal", 2: "width", 3: "height"}


@dataclass(frozen=True)
class SubbandLabel:
    """One of the 8 sub-bands, as low/high flags per (temporal, width, height) axis."""

    temporal: str
    width: str
    height: str

    def __post_init__(self):
        for axis in (self.temporal, self.width, self.height):
            if axis not in ("low", "high"):
                raise ValueError(f"sub-band axis must be 'low' or 'high', got {axis!r}")

    @classmethod
    def from_str(cls, letters: str) -> "SubbandLabel":
        if len(letters) != 3 or any(ch not in "lh" for ch in letters):
            raise ValueError(f"sub-band label must match [lh]{{3}}, got {letters!r}")
        words = {"l": "low", "h": "high"}
        return cls(words[letters[0]], words[letters[1]], words[letters[2]])

    @property
    def index(self) -> int:
        """Position of this band within a channel block of the packed coefficients."""
        bit = {"low": 0, "high": 1}
        return 4 * bit[self.temporal] + 2 * bit[self.width] + bit[self.height]

    def __str__(self) -> str:
        return "".join(axis[0] for axis in (self.temporal, self.width, self.height))


BAND_ORDER_3D = tuple(
    SubbandLabel.from_str(s) for s in ("lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh")
)
BAND_ORDER_2D = ("ll", "lh", "hl", "hh")  # (width, height) letters


def _check_video(x: torch.Tensor, dims: tuple[int, ...]) -> None:
    if x.ndim != 4:
        raise ValueError(f"expected a (C, T, W, H) tensor, got {x.ndim} dims")
    for d in dims:
        n = x.shape[d]
        if n < 2 or n % 2 != 0:
            raise ValueError(
                f"{_AXIS_NAMES[d]} axis has size {n}; each transformed axis must be even and >= 2"
            )


def _haar_split(x: torch.Tensor, dim: int) -> tuple[torch.Tensor, torch.Tensor]:
    idx = [slice(None)] * x.ndim
    idx[dim] = slice(0, None, 2)
    a = x[tuple(idx)]
    idx[dim] = slice(1, None, 2)
    b = x[tuple(idx)]
    return (a + b) / _SQRT2, (a - b) / _SQRT2


def _haar_merge(lo: torch.Tensor, hi: torch.Tensor, dim: int) -> torch.Tensor:
    a = (lo + hi) / _SQRT2
    b = (lo - hi) / _SQRT2
    out = torch.stack((a, b), dim=dim + 1)
    shape = list(lo.shape)
    shape[dim] *= 2
    return out.reshape(shape)


def dwt3d_forward(x: torch.Tensor) -> torch.Tensor:
    """Orthonormal Haar transform of a (C, T, W, H) video into (8C, T/2, W/2, H/2)."""
    _check_video(x, dims=(1, 2, 3))
    bands = []
    for xt in _haar_split(x, 1):
        for xw in _haar_split(xt, 2):
            bands.extend(_haar_split(xw, 3))
    return torch.stack(bands, dim=1).reshape(8 * x.shape[0], *bands[0].shape[1:])


def dwt3d_inverse(c: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`dwt3d_forward`; output is not clamped to [0, 1]."""
    if c.ndim != 4:
        raise ValueError(f"expected a (8C, T/2, W/2, H/2) tensor, got {c.ndim} dims")
    if c.shape[0] % 8 != 0:
        raise ValueError(f"channel count {c.shape[0]} is not divisible by 8")
    bands = c.reshape(c.shape[0] // 8, 8, *c.shape[1:]).unbind(dim=1)
    halves_w = [_haar_merge(bands[i], bands[i + 1], 3) for i in (0, 2, 4, 6)]
    halves_t = [_haar_merge(halves_w[i], halves_w[i + 1], 2) for i in (0, 2)]
    return _haar_merge(halves_t[0], halves_t[1], 1)


def subband(c: torch.Tensor, label: "SubbandLabel | str") -> torch.Tensor:
    """Select one named sub-band for every input channel, as (C, T/2, W/2, H/2)."""
    if isinstance(label, str):
        label = SubbandLabel.from_str(label)
    if c.ndim != 4 or c.shape[0] % 8 != 0:
        raise ValueError("expected packed 3D coefficients with channels divisible by 8")
    return c.reshape(c.shape[0] // 8, 8, *c.shape[1:])[:, label.index]


def dwt2d_forward(x: torch.Tensor) -> torch.Tensor:
    """Framewise Haar transform over width/height only: (C, T, W, H) -> (4C, T, W/2, H/2)."""
    _check_video(x, dims=(2, 3))
    bands = []
    for xw in _haar_split(x, 2):
        bands.extend(_haar_split(xw, 3))
    return torch.stack(bands, dim=1).reshape(4 * x.shape[0], *bands[0].shape[1:])


def dwt2d_inverse(c: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`dwt2d_forward`."""
    if c.ndim != 4:
        raise ValueError(f"expected a (4C, T, W/2, H/2) tensor, got {c.ndim} dims")
    if c.shape[0] % 4 != 0:
        raise ValueError(f"channel count {c.shape[0]} is not divisible by 4")
    bands = c.reshape(c.shape[0] // 4, 4, *c.shape[1:]).unbind(dim=1)
    lo_w = _haar_merge(bands[0], bands[1], 3)
    hi_w = _haar_merge(bands[2], bands[3], 3)
    return _haar_merge(lo_w, hi_w, 2)
