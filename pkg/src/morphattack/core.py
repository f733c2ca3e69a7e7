"""Core raster types, the morphing (warping) operator, and flow norms.

Conventions fixed here and relied on everywhere else:

* Images are single-channel, row-major, intensities in [0, 1].
* A flow field stores per-pixel horizontal (h) and vertical (v)
  displacements in pixels, under the *backward-warp* sign convention:
  ``output(r, c) = input(r + v(r, c), c + h(r, c))``.  Positive h samples
  from the right, positive v from below.
* Out-of-bounds sample coordinates clamp to the nearest border pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


def _frozen_f64(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Image:
    """Grayscale raster; pixels shaped (height, width), values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = _frozen_f64(self.pixels)
        if px.ndim != 2:
            raise DimensionMismatch(f"image must be 2-D, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image intensities must be finite")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def vectorize(self) -> np.ndarray:
        """Row-major length-N copy of the intensities."""
        return self.pixels.reshape(-1).copy()

    @classmethod
    def devectorize(cls, vec: np.ndarray, width: int, height: int) -> "Image":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != width * height:
            raise DimensionMismatch(
                f"vector length {vec.size} != {width}x{height}")
        return cls(vec.reshape(height, width))


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel (h, v) displacements in pixels; arrays shaped (height, width)."""

    h: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        h = _frozen_f64(self.h)
        v = _frozen_f64(self.v)
        if h.ndim != 2 or h.shape != v.shape:
            raise DimensionMismatch(
                f"flow channels must share a 2-D shape, got {h.shape} vs {v.shape}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(v))):
            raise ValueError("flow displacements must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.h.shape[0]

    @property
    def width(self) -> int:
        return self.h.shape[1]

    @classmethod
    def zero(cls, width: int, height: int) -> "FlowField":
        z = np.zeros((height, width))
        return cls(z, z.copy())

    @classmethod
    def from_vectors(cls, h: np.ndarray, v: np.ndarray,
                     width: int, height: int) -> "FlowField":
        h = np.asarray(h, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if h.size != width * height or v.size != width * height:
            raise DimensionMismatch("flow vector length != width*height")
        return cls(h.reshape(height, width), v.reshape(height, width))


@dataclass(frozen=True)
class RoiMask:
    """Binary rectangular region of interest inside a width x height frame.

    Realizes the diagonal 0/1 weighting applied during matrix assembly;
    rows == 0 (with cols == 0) means the full frame.
    """

    width: int
    height: int
    top: int = 0
    left: int = 0
    rows: int = 0
    cols: int = 0

    def __post_init__(self):
        rows = self.rows or self.height
        cols = self.cols or self.width
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        if not (0 <= self.top and self.top + rows <= self.height
                and 0 <= self.left and self.left + cols <= self.width):
            raise DimensionMismatch(
                f"ROI rect {(self.top, self.left, rows, cols)} outside "
                f"{self.width}x{self.height} frame")

    @classmethod
    def full(cls, width: int, height: int) -> "RoiMask":
        return cls(width=width, height=height)

    def is_full(self) -> bool:
        return (self.top == 0 and self.left == 0
                and self.rows == self.height and self.cols == self.width)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.height, self.width))
        m[self.top:self.top + self.rows, self.left:self.left + self.cols] = 1.0
        return m

    def weight_vector(self, vec: np.ndarray) -> np.ndarray:
        """Apply the 0/1 diagonal to a row-major length-N vector."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.width * self.height:
            raise DimensionMismatch("vector length != mask frame size")
        return (vec.reshape(self.height, self.width) * self.mask()).reshape(-1)

    def apply_image(self, image: Image) -> Image:
        if (image.width, image.height) != (self.width, self.height):
            raise DimensionMismatch("ROI frame does not match image")
        return Image(image.pixels * self.mask())

    def apply_flow(self, flow: FlowField) -> FlowField:
        if (flow.width, flow.height) != (self.width, self.height):
            raise DimensionMismatch("ROI frame does not match flow")
        m = self.mask()
        return FlowField(flow.h * m, flow.v * m)


def crop_roi(image: Image, roi: RoiMask) -> Image:
    """Zero all pixels outside the ROI rectangle."""
    return roi.apply_image(image)


def morph(image: Image, flow: FlowField) -> Image:
    """Backward-warp `image` by `flow` with bilinear interpolation.

    output(r, c) = bilinear sample of image at (r + v(r,c), c + h(r,c));
    sample coordinates are clamped to the raster borders and the result is
    clipped to [0, 1].  The zero field is an exact identity.
    """
    if (image.width, image.height) != (flow.width, flow.height):
        raise DimensionMismatch(
            f"image {image.height}x{image.width} vs flow "
            f"{flow.height}x{flow.width}")
    hgt, wid = image.height, image.width
    rows, cols = np.meshgrid(np.arange(hgt, dtype=np.float64),
                             np.arange(wid, dtype=np.float64), indexing="ij")
    src_r = np.clip(rows + flow.v, 0.0, hgt - 1.0)
    src_c = np.clip(cols + flow.h, 0.0, wid - 1.0)

    r0 = np.floor(src_r).astype(np.intp)
    c0 = np.floor(src_c).astype(np.intp)
    r1 = np.minimum(r0 + 1, hgt - 1)
    c1 = np.minimum(c0 + 1, wid - 1)
    fr = src_r - r0
    fc = src_c - c0

    px = image.pixels
    top = px[r0, c0] * (1.0 - fc) + px[r0, c1] * fc
    bot = px[r1, c0] * (1.0 - fc) + px[r1, c1] * fc
    out = top * (1.0 - fr) + bot * fr
    return Image(np.clip(out, 0.0, 1.0))


def flow_norm(flow: FlowField, p: str = "l2") -> float:
    """Intensity of a field over the concatenated (h, v) components.

    p="l2": sqrt(sum h_i^2 + v_i^2); p="linf": max |component|.
    """
    if p == "l2":
        return float(np.sqrt(np.sum(flow.h * flow.h) + np.sum(flow.v * flow.v)))
    if p == "linf":
        if flow.h.size == 0:
            return 0.0
        return float(max(np.max(np.abs(flow.h)), np.max(np.abs(flow.v))))
    raise ValueError(f"unknown norm selector {p!r} (expected 'l2' or 'linf')")


def flow_scale(flow: FlowField, factor: float) -> FlowField:
    """Multiply every displacement by `factor`."""
    factor = float(factor)
    if not np.isfinite(factor):
        raise ValueError("scale factor must be finite")
    return FlowField(flow.h * factor, flow.v * factor)
