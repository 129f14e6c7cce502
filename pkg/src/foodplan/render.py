"""Top-down schematic raster of a :class:`WorldState` as binary PPM (P6)."""

from __future__ import annotations

import io
from functools import lru_cache

import numpy as np
from PIL import Image

from .world import GEOMETRY, Geometry, Position, Rect, WorldState

DEFAULT_HEIGHT = 540
DEFAULT_WIDTH = 960
MARGIN = 0.08  # meters of floor drawn around the table

PALETTE: dict[str, tuple[int, int, int]] = {
    "white": (245, 245, 245),
    "green": (40, 160, 60),
    "blue": (40, 80, 220),
    "red": (210, 40, 40),
    "purple": (130, 50, 170),
    "pink": (240, 120, 180),
    "yellow": (235, 210, 40),
    "orange": (240, 140, 30),
    "brown": (120, 75, 40),
    "black": (25, 25, 25),
    "gray": (128, 128, 128),
    "cyan": (40, 200, 210),
}
FLOOR = (60, 60, 70)
TABLE = (196, 164, 120)
HOLDER = (70, 70, 70)
SPOON = (200, 200, 210)
DUMBWAITER = (150, 150, 160)
SWEEP_OPEN = (230, 200, 160)
SPILL_MARK = (0, 0, 0)


def scale_and_origin(width: int, height: int, geo: Geometry = GEOMETRY) -> tuple[float, float, float]:
    """Pixels per meter and the pixel coordinates of table-frame (x_min-MARGIN, y_max+MARGIN)."""
    t = geo.table
    span_x = t.x_max - t.x_min + 2 * MARGIN
    span_y = t.y_max - t.y_min + 2 * MARGIN
    scale = min(width / span_x, height / span_y)
    off_c = (width - span_x * scale) / 2
    off_r = (height - span_y * scale) / 2
    return scale, off_c, off_r


def to_pixel(p: Position, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
             geo: Geometry = GEOMETRY) -> tuple[int, int]:
    """(row, col) of a table-frame point; the robot side is at the bottom of the image."""
    scale, off_c, off_r = scale_and_origin(width, height, geo)
    col = off_c + (p.x - (geo.table.x_min - MARGIN)) * scale
    row = off_r + ((geo.table.y_max + MARGIN) - p.y) * scale
    return int(round(row)), int(round(col))


def _fill_rect(img: np.ndarray, r0: int, c0: int, r1: int, c1: int, color) -> None:
    h, w, _ = img.shape
    r0, r1 = max(min(r0, r1), 0), min(max(r0, r1), h - 1)
    c0, c1 = max(min(c0, c1), 0), min(max(c0, c1), w - 1)
    if r0 <= r1 and c0 <= c1:
        img[r0:r1 + 1, c0:c1 + 1] = color


def _fill_disc(img: np.ndarray, rc: int, cc: int, radius: float, color) -> None:
    h, w, _ = img.shape
    rad = int(np.ceil(radius))
    r0, r1 = max(rc - rad, 0), min(rc + rad, h - 1)
    c0, c1 = max(cc - rad, 0), min(cc + rad, w - 1)
    if r0 > r1 or c0 > c1:
        return
    rr, cc_ = np.ogrid[r0:r1 + 1, c0:c1 + 1]
    mask = (rr - rc) ** 2 + (cc_ - cc) ** 2 <= radius * radius
    img[r0:r1 + 1, c0:c1 + 1][mask] = color


def _draw_x(img: np.ndarray, rc: int, cc: int, half: int, thickness: int = 2) -> None:
    h, w, _ = img.shape
    for d in range(-half, half + 1):
        for t in range(-thickness // 2, thickness // 2 + 1):
            for r, c in ((rc + d, cc + d + t), (rc + d, cc - d + t)):
                if 0 <= r < h and 0 <= c < w:
                    img[r, c] = SPILL_MARK


def _rect_px(rect: Rect, width: int, height: int, geo: Geometry) -> tuple[int, int, int, int]:
    r0, c0 = to_pixel(Position(rect.x_min, rect.y_max), width, height, geo)
    r1, c1 = to_pixel(Position(rect.x_max, rect.y_min), width, height, geo)
    return r0, c0, r1, c1


def bowl_radius_px(amount: float, scale: float, geo: Geometry = GEOMETRY) -> float:
    """Disc radius grows with the amount of food, saturating at 10 scoop-units."""
    frac = min(max(amount, 0.0), 10.0) / 10.0
    return geo.bowl_radius * scale * (0.5 + 0.5 * frac)


@lru_cache(maxsize=8)
def _background(width: int, height: int, geo: Geometry) -> np.ndarray:
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = FLOOR
    _fill_rect(img, *_rect_px(geo.table, width, height, geo), TABLE)
    img.flags.writeable = False
    return img


def render_array(state: WorldState, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                 geo: Geometry = GEOMETRY) -> np.ndarray:
    img = _background(width, height, geo).copy()
    scale, _, _ = scale_and_origin(width, height, geo)

    dw = state.dumbwaiter
    zone = _rect_px(dw.sweep_zone, width, height, geo)
    if dw.is_open:
        _fill_rect(img, *zone, SWEEP_OPEN)
    # cabinet sits just beyond the right table edge
    cab = Rect(geo.table.x_max, dw.sweep_zone.y_min, geo.table.x_max + MARGIN, dw.sweep_zone.y_max)
    _fill_rect(img, *_rect_px(cab, width, height, geo), DUMBWAITER)
    if not dw.is_open:
        r0, c0, r1, c1 = zone
        _fill_rect(img, r0, c1 - 2, r1, c1, DUMBWAITER)

    hr, hc = to_pixel(state.holder_position, width, height, geo)
    half = max(int(0.03 * scale), 2)
    _fill_rect(img, hr - half, hc - half, hr + half, hc + half, HOLDER)
    if not state.manipulator.holding_spoon:
        _fill_rect(img, hr - half // 2, hc - 1, hr + half // 2, hc + 1, SPOON)

    for b in sorted(state.bowls, key=lambda b: b.id):
        if not b.on_table:
            continue
        r, c = to_pixel(b.position, width, height, geo)
        _fill_disc(img, r, c, bowl_radius_px(b.amount, scale, geo), PALETTE.get(b.color, PALETTE["gray"]))
        if b.spilled:
            _draw_x(img, r, c, int(geo.bowl_radius * scale))
    return img


def render_topdown(state: WorldState, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                   geo: Geometry = GEOMETRY) -> bytes:
    """P6 bytes; the same state always renders to identical bytes."""
    img = render_array(state, width, height, geo)
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return header + img.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Decode P6 bytes written by :func:`render_topdown`."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a P6 pixmap")
    width, height = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width, 3)


def png_bytes(img: np.ndarray) -> bytes:
    """Encode an RGB uint8 array as PNG (for endpoints that reject PPM)."""
    buf = io.BytesIO()
    Image.fromarray(img, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def ppm_to_png(data: bytes) -> bytes:
    return png_bytes(read_ppm(data))
