"""Self-attention patch scoring and top-K selection.

A raw RGB frame is cut into overlapping patches; each flattened patch (with
a constant-1 column appended for the bias) is projected through Key and
Query matrices.  The row-softmax of K.Q^T/sqrt(d) is an attention matrix
whose column sums vote for patch importance; the K highest-voted patch
centers, normalized to [0, 1], are the controller's entire percept.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FrameTooSmall, LengthMismatch, ShapeMismatch, BadConfig


@dataclass
class AttentionConfig:
    patch_size: int = 10
    patch_stride: int = 5
    d: int = 4                 # transformation dimension
    k: int = 10                # top selected patches
    channels: int = 3

    def __post_init__(self):
        if self.patch_size < 1 or self.patch_stride < 1:
            raise BadConfig("patch_size and patch_stride must be >= 1")
        if self.k < 1 or self.d < 0 or self.channels < 1:
            raise BadConfig("bad attention dimensions")

    @property
    def patch_len(self):
        """m: flattened patch length."""
        return self.patch_size * self.patch_size * self.channels


def param_count(cfg):
    """Total learnable scalars: two (m+1) x d projection matrices."""
    return 2 * (cfg.patch_len + 1) * cfg.d


@dataclass
class AttentionParams:
    w_k: np.ndarray            # (m+1, d); last row is the bias row
    w_q: np.ndarray            # (m+1, d)

    def __post_init__(self):
        if self.w_k.shape != self.w_q.shape or self.w_k.ndim != 2:
            raise ShapeMismatch("w_k and w_q must be matrices of equal shape")
        if not (np.isfinite(self.w_k).all() and np.isfinite(self.w_q).all()):
            raise ShapeMismatch("attention parameters must be finite")


def params_to_vector(params):
    """Flatten W_k row-major, then W_q row-major."""
    return np.concatenate([params.w_k.ravel(), params.w_q.ravel()])


def vector_to_params(vec, cfg):
    vec = np.asarray(vec, dtype=np.float64)
    n = param_count(cfg)
    if vec.shape != (n,):
        raise LengthMismatch(f"expected vector of length {n}, got {vec.shape}")
    rows = cfg.patch_len + 1
    half = rows * cfg.d
    return AttentionParams(vec[:half].reshape(rows, cfg.d).copy(),
                           vec[half:].reshape(rows, cfg.d).copy())


@dataclass
class PatchGrid:
    rows: int
    cols: int
    patches: np.ndarray        # (rows*cols, m), pixel bytes scaled to [0, 1]
    centers: np.ndarray        # (rows*cols, 2), (y, x) pixel centers


def grid_shape(height, width, cfg):
    """Sliding-window grid extents; trailing pixels that don't fill a window drop."""
    if height < cfg.patch_size or width < cfg.patch_size:
        raise FrameTooSmall(
            f"{height}x{width} frame smaller than patch size {cfg.patch_size}")
    return ((height - cfg.patch_size) // cfg.patch_stride + 1,
            (width - cfg.patch_size) // cfg.patch_stride + 1)


def extract_patches(frame, cfg):
    """Cut a (H, W, channels) uint8 frame into a PatchGrid."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != cfg.channels:
        raise ShapeMismatch(f"expected (H, W, {cfg.channels}) frame, got {frame.shape}")
    rows, cols = grid_shape(frame.shape[0], frame.shape[1], cfg)
    windows = sliding_window_view(frame, (cfg.patch_size, cfg.patch_size), axis=(0, 1))
    windows = windows[:: cfg.patch_stride, :: cfg.patch_stride]
    # window layout is (rows, cols, channels, size, size); flatten per patch
    patches = (windows.transpose(0, 1, 3, 4, 2)
               .reshape(rows * cols, cfg.patch_len)
               .astype(np.float64) / 255.0)
    half = (cfg.patch_size - 1) / 2.0
    ys = np.arange(rows) * cfg.patch_stride + half
    xs = np.arange(cols) * cfg.patch_stride + half
    centers = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    return PatchGrid(rows, cols, patches, centers)


@dataclass
class ImportanceRanking:
    scores: np.ndarray         # per-patch importance; sums to patch count
    top_k: np.ndarray          # k patch indices, descending score, ties to lower index


def score_patches(grid, params, cfg):
    """Attention scoring: importance = column sums of row-softmax(K.Q^T/sqrt(d))."""
    n = grid.patches.shape[0]
    if params.w_k.shape != (cfg.patch_len + 1, cfg.d):
        raise ShapeMismatch(
            f"expected ({cfg.patch_len + 1}, {cfg.d}) matrices, got {params.w_k.shape}")
    if cfg.k > n:
        raise ShapeMismatch(f"k={cfg.k} exceeds patch count {n}")
    x = np.empty((n, cfg.patch_len + 1))
    x[:, :-1] = grid.patches
    x[:, -1] = 1.0
    logits = (x @ params.w_k) @ (x @ params.w_q).T / np.sqrt(cfg.d) if cfg.d else \
        np.zeros((n, n))
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    scores = logits.sum(axis=0)
    top_k = np.argsort(-scores, kind="stable")[: cfg.k]
    return ImportanceRanking(scores, top_k)


def patch_centers(ranking, grid, frame_dims):
    """Normalized (y, x) centers of the selected patches, in rank order.

    Returns a flat vector of length 2k with coordinates scaled into [0, 1]
    by (H-1) and (W-1).
    """
    height, width = frame_dims
    sel = grid.centers[ranking.top_k]
    out = np.empty(2 * len(ranking.top_k))
    out[0::2] = sel[:, 0] / max(height - 1, 1)
    out[1::2] = sel[:, 1] / max(width - 1, 1)
    return out


def observe(frame, params, cfg):
    """Full frame -> controller-input pipeline (extract, score, centers)."""
    grid = extract_patches(frame, cfg)
    ranking = score_patches(grid, params, cfg)
    return patch_centers(ranking, grid, frame.shape[:2])


# -- debug overlay -------------------------------------------------------------

def draw_topk_overlay(frame, ranking, grid, cfg):
    """Copy of the frame with the selected patch windows outlined in white."""
    img = np.asarray(frame).copy()
    half = (cfg.patch_size - 1) / 2.0
    for idx in ranking.top_k:
        cy, cx = grid.centers[idx]
        y0, x0 = int(round(cy - half)), int(round(cx - half))
        y1, x1 = y0 + cfg.patch_size - 1, x0 + cfg.patch_size - 1
        img[y0, x0:x1 + 1] = 255
        img[y1, x0:x1 + 1] = 255
        img[y0:y1 + 1, x0] = 255
        img[y0:y1 + 1, x1] = 255
    return img


def write_ppm(path, image):
    """Write an (H, W, 3) uint8 image as a binary P6 portable pixel map."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(image.tobytes())


def read_ppm(path):
    """Read a binary P6 file written by write_ppm (no comment support)."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P6":
            raise ShapeMismatch(f"not a P6 file: {path}")
        w, h = map(int, f.readline().split())
        f.readline()  # maxval
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3)
