"""Annotated overlays: tinted part masks, element glyphs, labels, planned path."""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from ..common.errors import RenderError
from ..common.models import AnnotationDocument, RunReport
from ..utils.file_ops import output_paths
from .geometry import CameraModel, Pose, project_points
from .part_model import GeometricElement, PartMask, annotate

logger = logging.getLogger(__name__)

PALETTE = [
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60),
]
LABEL_BOX = (255, 255, 255)
LABEL_TEXT = (0, 0, 0)
PATH_COLOR = (255, 215, 0)
TINT_ALPHA = 0.45


def color_for(element_id: int):
    return PALETTE[element_id % len(PALETTE)]


def base_image(camera: CameraModel, rgb: Optional[np.ndarray] = None,
               depth: Optional[np.ndarray] = None) -> Image.Image:
    """The RGB frame, else depth as grayscale, else black."""
    if rgb is not None:
        return Image.fromarray(np.asarray(rgb, dtype=np.uint8)).convert("RGB")
    if depth is not None:
        d = np.asarray(depth, dtype=float)
        valid = np.isfinite(d) & (d > 0)
        gray = np.zeros(d.shape, dtype=np.uint8)
        if valid.any():
            lo, hi = d[valid].min(), d[valid].max()
            scale = (hi - lo) or 1.0
            gray[valid] = (255 - 200 * (d[valid] - lo) / scale).astype(np.uint8)
        return Image.fromarray(gray).convert("RGB")
    return Image.new("RGB", (camera.width, camera.height))


def tint_masks(image: Image.Image, masks: Sequence[PartMask]) -> Image.Image:
    pixels = np.asarray(image, dtype=float).copy()
    for mask in masks:
        color = np.array(color_for(mask.id), dtype=float)
        pixels[mask.pixels] = (1 - TINT_ALPHA) * pixels[mask.pixels] + TINT_ALPHA * color
    return Image.fromarray(pixels.astype(np.uint8))


def draw_annotation(image: Image.Image, doc: AnnotationDocument) -> Image.Image:
    draw = ImageDraw.Draw(image)
    for entry in doc.entries:
        color = color_for(entry.id)
        if entry.segment:
            (u0, v0), (u1, v1) = entry.segment
            draw.line([(u0, v0), (u1, v1)], fill=color, width=3)
        if entry.center:
            u, v = entry.center
            draw.ellipse([u - 4, v - 4, u + 4, v + 4], outline=color, width=2)
            if entry.normal_tip:
                draw.line([(u, v), tuple(entry.normal_tip)], fill=color, width=2)
    # labels last so nothing covers them
    for entry in doc.entries:
        u, v = entry.label_anchor
        draw.rectangle([u - 3, v - 3, u + 3, v + 3], fill=LABEL_BOX)
        draw.text((u + 5, v - 6), str(entry.id), fill=LABEL_BOX)
        draw.text((u + 6, v - 5), str(entry.id), fill=LABEL_TEXT)
    return image


def draw_trajectory(image: Image.Image, poses: Sequence[Pose], camera: CameraModel) -> Image.Image:
    if not poses:
        return image
    uv, in_front = project_points(np.array([p.position for p in poses]), camera)
    visible = [tuple(p) for p, ok in zip(uv, in_front) if ok]
    draw = ImageDraw.Draw(image)
    if len(visible) > 1:
        draw.line(visible, fill=PATH_COLOR, width=2)
    for u, v in visible:
        draw.ellipse([u - 2, v - 2, u + 2, v + 2], fill=PATH_COLOR)
    return image


def render_overlay(camera: CameraModel, elements: Sequence[GeometricElement],
                   masks: Sequence[PartMask] = (), poses: Sequence[Pose] = (),
                   rgb: Optional[np.ndarray] = None, depth: Optional[np.ndarray] = None,
                   tip_length: float = 0.05) -> Image.Image:
    image = tint_masks(base_image(camera, rgb, depth), masks)
    image = draw_trajectory(image, poses, camera)
    return draw_annotation(image, annotate(elements, camera, tip_length))


def render_scene(scene, report: RunReport, out_dir, tip_length: float = 0.05) -> List[Path]:
    """
    Write ``overlay_<camera>.png`` for every camera that sees a reported element.

    Raises:
        RenderError: the report has no element table, or an image cannot be written
    """
    if not report.elements:
        raise RenderError("report has no element table to render")
    elements = [GeometricElement.from_model(m) for m in report.elements]
    poses: List[Pose] = []
    if report.trajectory is not None:
        source = report.trajectory.waypoints or [s.pose for s in report.trajectory.steps]
        poses = [Pose.from_model(p) for p in source]

    by_camera: Dict[str, List[GeometricElement]] = {}
    for element in elements:
        name = element.camera or scene.default_view.name
        by_camera.setdefault(name, []).append(element)

    written = []
    parts = {p.id: p for p in scene.observation.parts()}
    for name, group in by_camera.items():
        view = scene.observation.view(name)
        masks = [parts[e.id] for e in group if e.id in parts]
        image = render_overlay(view.camera, group, masks, poses, view.rgb, view.depth, tip_length)
        (path,) = output_paths(out_dir, [f"overlay_{name}.png"])
        try:
            image.save(path)
        except OSError as e:
            raise RenderError(f"cannot write {path}: {e}", {"path": str(path)})
        logger.info(f"Rendered {len(group)} element(s) to {path}")
        written.append(path)
    return written
