"""File operations utility functions."""
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image

from ..common.errors import InputError, SchemaError
from ..common.models import RLEMask
from ..common.utils import ensure_directory_exists

PathLike = Union[str, Path]


def resolve_path(path: PathLike, base_dir: Optional[PathLike] = None) -> Path:
    """Resolve a manifest-relative path."""
    path = Path(path)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


def _require_file(path: Path) -> Path:
    if not path.exists():
        raise InputError(f"File not found: {path}", {"path": str(path)})
    return path


def load_depth(path: PathLike, scale: float = 1.0, base_dir: Optional[PathLike] = None) -> np.ndarray:
    """
    Load a depth image in meters.

    ``.npy`` files hold float meters; PNG files hold integers multiplied by
    ``scale`` (e.g. 0.001 for millimeter 16-bit depth).
    """
    path = _require_file(resolve_path(path, base_dir))
    try:
        if path.suffix.lower() == ".npy":
            depth = np.load(path, allow_pickle=False).astype(float)
        else:
            with Image.open(path) as img:
                depth = np.asarray(img, dtype=float)
    except (OSError, ValueError) as e:
        raise InputError(f"Cannot read depth image {path}: {e}", {"path": str(path)})
    if depth.ndim != 2:
        raise SchemaError(f"Depth image {path} must be single-channel", field_path="depth")
    return depth * scale


def save_depth(path: PathLike, depth: np.ndarray) -> Path:
    path = Path(path)
    ensure_directory_exists(path.parent)
    np.save(path, np.asarray(depth, dtype=np.float64))
    return path


def encode_rle(mask: np.ndarray) -> RLEMask:
    """Row-major run lengths, alternating false/true, starting with a false run."""
    mask = np.asarray(mask, dtype=bool)
    flat = mask.reshape(-1)
    changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        counts = [0] + counts
    return RLEMask(size=[mask.shape[0], mask.shape[1]], counts=[int(c) for c in counts])


def decode_rle(rle: RLEMask) -> np.ndarray:
    height, width = rle.size
    if sum(rle.counts) != height * width:
        raise SchemaError(
            f"RLE counts sum to {sum(rle.counts)}, expected {height * width}",
            field_path="counts",
        )
    values = np.arange(len(rle.counts)) % 2 == 1
    return np.repeat(values, rle.counts).reshape(height, width)


def load_mask(source: Union[PathLike, RLEMask], base_dir: Optional[PathLike] = None,
              shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """
    Load a binary mask from a PNG path (nonzero = true) or an RLE object.

    Raises:
        SchemaError: if ``shape`` is given and the mask resolution differs
    """
    if isinstance(source, RLEMask):
        mask = decode_rle(source)
    else:
        path = _require_file(resolve_path(source, base_dir))
        try:
            with Image.open(path) as img:
                mask = np.asarray(img.convert("L")) > 0
        except OSError as e:
            raise InputError(f"Cannot read mask {path}: {e}", {"path": str(path)})
    if shape is not None and mask.shape != tuple(shape):
        raise SchemaError(
            f"mask is {mask.shape[1]}x{mask.shape[0]}, camera is {shape[1]}x{shape[0]}",
            field_path="mask",
        )
    return mask


def save_mask_png(path: PathLike, mask: np.ndarray) -> Path:
    path = Path(path)
    ensure_directory_exists(path.parent)
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path)
    return path


def load_rgb(path: PathLike, base_dir: Optional[PathLike] = None) -> np.ndarray:
    path = _require_file(resolve_path(path, base_dir))
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except OSError as e:
        raise InputError(f"Cannot read image {path}: {e}", {"path": str(path)})


def save_rgb(path: PathLike, rgb: np.ndarray) -> Path:
    path = Path(path)
    ensure_directory_exists(path.parent)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)
    return path


def output_paths(out_dir: PathLike, names: List[str]) -> List[Path]:
    """Create ``out_dir`` and return the named paths inside it."""
    out_dir = Path(out_dir)
    ensure_directory_exists(out_dir)
    return [out_dir / name for name in names]
