"""Deterministic image preprocessing and augmentation pipeline.

Rasters are plain numpy arrays of shape (H, W, 3): uint8 through the crop,
spatial, photometric, distortion, and resize stages, float64 after
normalization. The full chain, in order:

  1. center crop to 100x100               (always)
  2. horizontal flip OR rotate-90         (p=0.5, training only)
  3. contrast OR gamma OR brightness      (p=0.5, training only)
  4. elastic OR grid OR optical warp      (p=0.3, training only)
  5. bilinear resize to 224x224           (always)
  6. per-channel normalization            (always)

Pinned conventions (the transform names do not fix these, so they are fixed
here and golden-tested):

  * all warps use backward mapping, bilinear interpolation, reflected border;
  * resize samples at ``(i + 0.5) * scale - 0.5`` (corner alignment off);
  * pixel values are rounded and clamped back to uint8 between stages;
  * every random decision comes from the caller's ``numpy.random.Generator``
    in a fixed draw order, so (image, plan, seed) is bit-reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .errors import LoadError

__all__ = [
    "AugmentPlan",
    "apply_plan",
    "center_crop",
    "spatial_step",
    "photometric_step",
    "distortion_step",
    "resize_bilinear",
    "normalize",
    "denormalize",
    "embed_raster",
    "read_ppm",
    "write_ppm",
    "save_tensor",
    "load_tensor",
]


@dataclass(frozen=True)
class AugmentPlan:
    """Ordered augmentation steps with their probabilities and parameter ranges."""

    crop_size: tuple[int, int] = (100, 100)
    p_spatial: float = 0.5
    p_photometric: float = 0.5
    p_distortion: float = 0.3
    contrast_limit: float = 0.4
    gamma_range: tuple[float, float] = (0.2, 1.8)
    brightness_limit: float = 0.4
    elastic_alpha: float = 120.0
    elastic_sigma: float = 6.0
    elastic_alpha_affine: float = 3.6
    grid_cells: int = 5
    grid_jitter: float = 0.3
    optical_distort_limit: float = 2.0
    optical_shift_limit: float = 0.5
    resize_to: tuple[int, int] = (224, 224)
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_spatial", "p_photometric", "p_distortion"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


def _as_raster(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) raster, got shape {img.shape}")
    return img


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Steps 1 and 5-6: deterministic stages
# ---------------------------------------------------------------------------


def center_crop(img: np.ndarray, out_w: int = 100, out_h: int = 100) -> np.ndarray:
    """Copy the centered ``out_h`` x ``out_w`` window; offsets floor((in-out)/2)."""
    img = _as_raster(img)
    h, w = img.shape[:2]
    if out_h > h or out_w > w:
        raise ValueError(f"crop {out_w}x{out_h} larger than image {w}x{h}")
    top = (h - out_h) // 2
    left = (w - out_w) // 2
    return img[top : top + out_h, left : left + out_w].copy()


def resize_bilinear(img: np.ndarray, out_h: int = 224, out_w: int = 224) -> np.ndarray:
    """Bilinear resize with sample centers at ``(i + 0.5) * scale - 0.5``."""
    img = _as_raster(img)
    h, w = img.shape[:2]
    src = img.astype(np.float64)

    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.intp)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]

    top = src[y0[:, None], x0[None, :]] * (1 - fx) + src[y0[:, None], x1[None, :]] * fx
    bot = src[y1[:, None], x0[None, :]] * (1 - fx) + src[y1[:, None], x1[None, :]] * fx
    out = top * (1 - fy) + bot * fy
    if img.dtype == np.uint8:
        return _to_uint8(out)
    return out


def normalize(img: np.ndarray, mean: tuple[float, float, float] = (0.485, 0.456, 0.406),
              std: tuple[float, float, float] = (0.229, 0.224, 0.225)) -> np.ndarray:
    """Map uint8 values to per-channel ``(v/255 - mean) / std`` float64."""
    img = _as_raster(img).astype(np.float64)
    return (img / 255.0 - np.asarray(mean)) / np.asarray(std)


def denormalize(img: np.ndarray, mean: tuple[float, float, float] = (0.485, 0.456, 0.406),
                std: tuple[float, float, float] = (0.229, 0.224, 0.225)) -> np.ndarray:
    """Inverse of :func:`normalize`, returning float values on the 0-255 scale."""
    img = np.asarray(img, dtype=np.float64)
    return (img * np.asarray(std) + np.asarray(mean)) * 255.0


# ---------------------------------------------------------------------------
# Step 2: spatial transforms
# ---------------------------------------------------------------------------


def horizontal_flip(img: np.ndarray) -> np.ndarray:
    return _as_raster(img)[:, ::-1].copy()


def rotate90(img: np.ndarray, k: int) -> np.ndarray:
    return np.rot90(_as_raster(img), k).copy()


def spatial_step(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One of horizontal flip or a random quarter-turn, chosen uniformly."""
    if rng.random() < 0.5:
        return horizontal_flip(img)
    k = int(rng.integers(1, 4))
    return rotate90(img, k)


# ---------------------------------------------------------------------------
# Step 3: photometric transforms
# ---------------------------------------------------------------------------


def adjust_contrast(img: np.ndarray, alpha: float) -> np.ndarray:
    """Scale deviations from the scalar image mean by ``1 + alpha``."""
    img = _as_raster(img)
    mean = img.astype(np.float64).mean()
    return _to_uint8(mean + (1.0 + alpha) * (img.astype(np.float64) - mean))


def adjust_brightness(img: np.ndarray, beta: float) -> np.ndarray:
    return _to_uint8(_as_raster(img).astype(np.float64) * (1.0 + beta))


def adjust_gamma(img: np.ndarray, gamma: float) -> np.ndarray:
    """Apply ``v -> v**gamma`` on the [0, 1] scale."""
    img = _as_raster(img)
    return _to_uint8(np.power(img.astype(np.float64) / 255.0, gamma) * 255.0)


def photometric_step(img: np.ndarray, rng: np.random.Generator,
                     contrast_limit: float = 0.4,
                     gamma_range: tuple[float, float] = (0.2, 1.8),
                     brightness_limit: float = 0.4) -> np.ndarray:
    """One of contrast, gamma, or brightness adjustment, chosen uniformly."""
    choice = int(rng.integers(0, 3))
    if choice == 0:
        alpha = rng.uniform(-contrast_limit, contrast_limit)
        return adjust_contrast(img, alpha)
    if choice == 1:
        gamma = rng.uniform(gamma_range[0], gamma_range[1])
        return adjust_gamma(img, gamma)
    beta = rng.uniform(-brightness_limit, brightness_limit)
    return adjust_brightness(img, beta)


# ---------------------------------------------------------------------------
# Step 4: geometric distortions
# ---------------------------------------------------------------------------


def _remap(img: np.ndarray, src_y: np.ndarray, src_x: np.ndarray) -> np.ndarray:
    """Backward-map every channel, bilinear interpolation, reflected border."""
    img = _as_raster(img)
    out = np.empty((src_y.shape[0], src_y.shape[1], 3), dtype=np.float64)
    for c in range(3):
        out[:, :, c] = map_coordinates(
            img[:, :, c].astype(np.float64), [src_y, src_x], order=1, mode="reflect"
        )
    if img.dtype == np.uint8:
        return _to_uint8(out)
    return out


def elastic_displacement_field(shape: tuple[int, int], rng: np.random.Generator,
                               alpha: float = 120.0, sigma: float = 6.0
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed uniform-noise displacement, ``alpha * blur(U[-1, 1], sigma)``."""
    h, w = shape
    dx = gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), sigma, mode="reflect") * alpha
    dy = gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), sigma, mode="reflect") * alpha
    return dy, dx


def _affine_from_jitter(shape: tuple[int, int], rng: np.random.Generator,
                        alpha_affine: float) -> np.ndarray:
    """Affine matrix fit through three anchor points jittered by +/- alpha_affine px."""
    h, w = shape
    cx, cy = w / 2.0, h / 2.0
    s = min(w, h) / 3.0
    pts = np.array([[cx, cy], [cx + s, cy], [cx, cy + s]], dtype=np.float64)
    jitter = rng.uniform(-alpha_affine, alpha_affine, pts.shape)
    moved = pts + jitter
    # Solve src = A @ [x, y, 1] so that the jittered points map back to the anchors.
    g = np.column_stack([moved, np.ones(3)])
    coeff, *_ = np.linalg.lstsq(g, pts, rcond=None)
    return coeff.T  # (2, 3), rows give src_x and src_y


def elastic_warp(img: np.ndarray, rng: np.random.Generator, alpha: float = 120.0,
                 sigma: float = 6.0, alpha_affine: float = 3.6) -> np.ndarray:
    """Random affine jitter followed by a smoothed random displacement field."""
    img = _as_raster(img)
    h, w = img.shape[:2]
    dy, dx = elastic_displacement_field((h, w), rng, alpha, sigma)
    mat = _affine_from_jitter((h, w), rng, alpha_affine)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    src_x = mat[0, 0] * xx + mat[0, 1] * yy + mat[0, 2] + dx
    src_y = mat[1, 0] * xx + mat[1, 1] * yy + mat[1, 2] + dy
    return _remap(img, src_y, src_x)


def grid_warp(img: np.ndarray, rng: np.random.Generator, cells: int = 5,
              jitter: float = 0.3) -> np.ndarray:
    """Per-axis piecewise-linear stretch over a ``cells`` x ``cells`` grid.

    Cell widths are scaled by ``1 + U(-jitter, jitter)`` and renormalized so
    the full axis still maps onto itself; zero jitter is the identity.
    """
    img = _as_raster(img)
    h, w = img.shape[:2]

    def axis_map(n: int) -> np.ndarray:
        widths = (n / cells) * (1.0 + rng.uniform(-jitter, jitter, cells))
        src_nodes = np.concatenate([[0.0], np.cumsum(widths)])
        src_nodes *= n / src_nodes[-1]
        out_nodes = np.linspace(0.0, n, cells + 1)
        return np.interp(np.arange(n, dtype=np.float64), out_nodes, src_nodes)

    # x axis drawn first, then y; pinned for reproducibility
    map_x = axis_map(w)
    map_y = axis_map(h)
    src_x = np.broadcast_to(map_x[None, :], (h, w))
    src_y = np.broadcast_to(map_y[:, None], (h, w))
    return _remap(img, src_y, src_x)


def optical_warp(img: np.ndarray, rng: np.random.Generator,
                 distort_limit: float = 2.0, shift_limit: float = 0.5) -> np.ndarray:
    """Radial barrel/pincushion warp around a randomly shifted center.

    Source position is ``center + (p - center) * (1 + k * r^2)`` with the
    radius normalized by half the larger image dimension.
    """
    img = _as_raster(img)
    h, w = img.shape[:2]
    k = rng.uniform(-distort_limit, distort_limit)
    sx = rng.uniform(-shift_limit, shift_limit) * w
    sy = rng.uniform(-shift_limit, shift_limit) * h
    cx = (w - 1) / 2.0 + sx
    cy = (h - 1) / 2.0 + sy
    radius = max(w, h) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    r2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / radius**2
    src_x = cx + (xx - cx) * (1.0 + k * r2)
    src_y = cy + (yy - cy) * (1.0 + k * r2)
    return _remap(img, src_y, src_x)


def distortion_step(img: np.ndarray, rng: np.random.Generator,
                    plan: AugmentPlan | None = None) -> np.ndarray:
    """One of elastic, grid, or optical distortion, chosen uniformly."""
    plan = plan or AugmentPlan()
    choice = int(rng.integers(0, 3))
    if choice == 0:
        return elastic_warp(img, rng, plan.elastic_alpha, plan.elastic_sigma,
                            plan.elastic_alpha_affine)
    if choice == 1:
        return grid_warp(img, rng, plan.grid_cells, plan.grid_jitter)
    return optical_warp(img, rng, plan.optical_distort_limit, plan.optical_shift_limit)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def apply_plan(img: np.ndarray, plan: AugmentPlan, rng: np.random.Generator | None,
               training: bool, trace: dict | None = None) -> np.ndarray:
    """Run the six-step chain; stochastic steps fire only when ``training``.

    With ``training=False`` (or all probabilities zero) the output is the
    deterministic crop -> resize -> normalize path and ``rng`` may be None.
    ``trace``, when given, records which stochastic steps fired.
    """
    out = center_crop(img, plan.crop_size[0], plan.crop_size[1])
    fired = {"spatial": False, "photometric": False, "distortion": False}
    if training:
        if rng is None:
            raise ValueError("training=True requires an rng")
        if rng.random() < plan.p_spatial:
            fired["spatial"] = True
            out = spatial_step(out, rng)
        if rng.random() < plan.p_photometric:
            fired["photometric"] = True
            out = photometric_step(out, rng, plan.contrast_limit, plan.gamma_range,
                                   plan.brightness_limit)
        if rng.random() < plan.p_distortion:
            fired["distortion"] = True
            out = distortion_step(out, rng, plan)
    if trace is not None:
        trace.update(fired)
    out = resize_bilinear(out, plan.resize_to[0], plan.resize_to[1])
    return normalize(out, plan.mean, plan.std)


def embed_raster(img: np.ndarray, grid: int = 4) -> np.ndarray:
    """Block-mean pool a (H, W, 3) float raster to a flat 3*grid^2 feature vector.

    This is the bridge from pipeline output to the vector learner; H and W
    must be divisible by ``grid``.
    """
    img = _as_raster(img).astype(np.float64)
    h, w = img.shape[:2]
    if h % grid or w % grid:
        raise ValueError(f"raster {h}x{w} not divisible by grid {grid}")
    pooled = img.reshape(grid, h // grid, grid, w // grid, 3).mean(axis=(1, 3))
    return pooled.reshape(-1)


# ---------------------------------------------------------------------------
# Fixture I/O: binary PPM (P6) and small raw-tensor golden files
# ---------------------------------------------------------------------------


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary P6 PPM with maxval 255 into a (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise LoadError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise LoadError(f"{path}: not a binary P6 PPM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise LoadError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    if pixels.size != w * h * 3:
        raise LoadError(f"{path}: expected {w * h * 3} pixel bytes")
    return pixels.reshape(h, w, 3).copy()


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    img = _as_raster(img)
    if img.dtype != np.uint8:
        raise ValueError("PPM output requires uint8 data")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


_TENSOR_MAGIC = b"RTNS"
_DTYPE_CODES = {0: np.uint8, 1: np.float64}


def save_tensor(path: str | Path, arr: np.ndarray) -> None:
    """Write an array as magic + dtype code + ndim + dims + raw bytes."""
    arr = np.ascontiguousarray(arr)
    code = next((k for k, v in _DTYPE_CODES.items() if arr.dtype == v), None)
    if code is None:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    with open(path, "wb") as fh:
        fh.write(_TENSOR_MAGIC)
        fh.write(struct.pack("<BB", code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
        fh.write(arr.tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _TENSOR_MAGIC:
        raise LoadError(f"{path}: bad tensor magic")
    code, ndim = struct.unpack_from("<BB", data, 4)
    dims = struct.unpack_from(f"<{ndim}q", data, 6)
    dtype = _DTYPE_CODES[code]
    offset = 6 + 8 * ndim
    return np.frombuffer(data, dtype=dtype, offset=offset).reshape(dims).copy()
