"""Time-dependent high-contrast conductivity fields kappa(x, t).

A field is piecewise constant per fine cell and per fine time step; values are
stored as ``values[k, j, i]`` for step ``k`` (interval ``(t_k, t_{k+1})``) and
fine cell ``(i, j)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import MeshIndex, Rect

CSV_HEADER = ["cell_i", "cell_j", "time_step", "value"]


@dataclass(frozen=True)
class CoefficientField:
    values: np.ndarray
    background: float = 1.0
    contrast: float = 1.0
    first_step: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError("values must have shape (n_steps, n_cells_y, n_cells_x)")
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    def steps(self, steps) -> np.ndarray:
        """Values for absolute fine steps ``steps``."""
        idx = np.asarray(list(steps)) - self.first_step
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_steps):
            raise ValueError(f"field covers steps {self.first_step}.."
                             f"{self.first_step + self.n_steps - 1}, asked for {list(steps)}")
        return self.values[idx]

    def window(self, rect: Rect, steps) -> np.ndarray:
        """Cell values on a node rectangle for the given absolute steps."""
        return self.steps(steps)[:, rect.j0:rect.j1, rect.i0:rect.i1]

    def check_mesh(self, mesh: MeshIndex) -> None:
        if self.shape != (mesh.nfy, mesh.nfx):
            raise ValueError(f"field cell shape {self.shape} does not match mesh "
                             f"({mesh.nfy}, {mesh.nfx})")
        if self.first_step != 0 or self.n_steps != mesh.time.n_steps:
            raise ValueError(f"field has {self.n_steps} steps, mesh time partition "
                             f"has {mesh.time.n_steps}")


def _check_contrast(contrast: float) -> None:
    if not contrast > 0:
        raise ValueError(f"contrast must be positive, got {contrast}")


def _shift_series(mask: np.ndarray, n_steps: int, motion, update_period: int) -> np.ndarray:
    dx, dy = motion
    if update_period < 1:
        raise ValueError("update_period must be >= 1")
    out = np.empty((n_steps,) + mask.shape, dtype=bool)
    for k in range(n_steps):
        m = k // update_period
        out[k] = np.roll(mask, (m * dy, m * dx), axis=(0, 1))
    return out


def _to_field(mask: np.ndarray, background: float, contrast: float) -> CoefficientField:
    values = np.where(mask, background * contrast, background).astype(float)
    return CoefficientField(values, background, contrast)


def inclusion_mask(nfx: int, nfy: int, n_inclusions: int = 60, n_channels: int = 8,
                   geometry_seed: int = 7) -> np.ndarray:
    """Default step-0 geometry of field 1: scattered blocks plus thin channels.

    Sizes scale with the fine grid so that the pattern is the same physical
    picture on any resolution; with 100x100 cells blocks are 2-6 cells wide and
    channels are 1-2 cells thick and 15-45 cells long.
    """
    rng = np.random.default_rng(geometry_seed)
    mask = np.zeros((nfy, nfx), dtype=bool)
    sx, sy = nfx / 100.0, nfy / 100.0
    for _ in range(n_inclusions):
        w = max(1, round(rng.integers(2, 7) * sx))
        h = max(1, round(rng.integers(2, 7) * sy))
        i = rng.integers(0, nfx)
        j = rng.integers(0, nfy)
        mask[np.ix_(np.arange(j, j + h) % nfy, np.arange(i, i + w) % nfx)] = True
    for c in range(n_channels):
        length = rng.integers(15, 46)
        thick = rng.integers(1, 3)
        i = rng.integers(0, nfx)
        j = rng.integers(0, nfy)
        if c % 2 == 0:
            rows = np.arange(j, j + max(1, round(thick * sy))) % nfy
            cols = np.arange(i, i + max(1, round(length * sx))) % nfx
        else:
            rows = np.arange(j, j + max(1, round(length * sy))) % nfy
            cols = np.arange(i, i + max(1, round(thick * sx))) % nfx
        mask[np.ix_(rows, cols)] = True
    return mask


def field_translated_inclusions(mesh: MeshIndex, contrast: float = 1e6, motion=(1, 0),
                                update_period: int = 2, background: float = 1.0,
                                n_inclusions: int = 60, n_channels: int = 8,
                                geometry_seed: int = 7) -> CoefficientField:
    """Field 1: inclusions shifted by ``motion`` cells every ``update_period`` steps."""
    _check_contrast(contrast)
    mask = inclusion_mask(mesh.nfx, mesh.nfy, n_inclusions, n_channels, geometry_seed)
    series = _shift_series(mask, mesh.time.n_steps, motion, update_period)
    return _to_field(series, background, contrast)


def four_channel_mask(nfx: int, nfy: int, channel_width: float = 0.03,
                      x_extent=(0.1, 0.9), y_positions=(0.17, 0.39, 0.61, 0.83)) -> np.ndarray:
    mask = np.zeros((nfy, nfx), dtype=bool)
    w = max(1, round(channel_width * nfy))
    i0, i1 = round(x_extent[0] * nfx), round(x_extent[1] * nfx)
    for y in y_positions:
        j = round(y * nfy) - w // 2
        mask[j:j + w, i0:i1] = True
    return mask


def field_four_channels_translated(mesh: MeshIndex, contrast: float = 1e6, motion=(0, 1),
                                   update_period: int = 2, background: float = 1.0,
                                   channel_width: float = 0.03) -> CoefficientField:
    """Field 2: four horizontal strips translated with periodic wraparound."""
    _check_contrast(contrast)
    mask = four_channel_mask(mesh.nfx, mesh.nfy, channel_width)
    series = _shift_series(mask, mesh.time.n_steps, motion, update_period)
    return _to_field(series, background, contrast)


def pinwheel_mask(nfx: int, nfy: int, channel_width: float = 0.04, r_in: float = 0.05,
                  r_out: float = 0.42) -> np.ndarray:
    """Four channels, each the 90-degree rotation of the previous one about the centre."""
    if nfx != nfy:
        raise ValueError("the rotated four-channel pattern needs a square fine grid")
    n = nfx
    arm = np.zeros((n, n), dtype=bool)
    w = max(1, round(channel_width * n))
    c = n // 2
    arm[c + round(r_in * n):c + round(r_in * n) + w, c:c + round(r_out * n)] = True
    mask = arm.copy()
    for k in range(1, 4):
        mask |= np.rot90(arm, k)
    return mask


def rotate_pattern(pattern: np.ndarray, degrees: float, fill) -> np.ndarray:
    """Nearest-cell-centre resampling of ``pattern`` rotated anticlockwise about the centre."""
    ny, nx = pattern.shape
    theta = np.deg2rad(np.mod(degrees, 360.0))
    c, s = np.cos(theta), np.sin(theta)
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    # cell-centre offsets from the domain centre, in cell units
    x = ii + 0.5 - nx / 2.0
    y = jj + 0.5 - ny / 2.0
    # inverse rotation: sample the step-0 pattern at R(-theta) x
    xs = c * x + s * y
    ys = -s * x + c * y
    src_i = np.floor(xs + nx / 2.0).astype(int)
    src_j = np.floor(ys + ny / 2.0).astype(int)
    inside = (src_i >= 0) & (src_i < nx) & (src_j >= 0) & (src_j < ny)
    out = np.full(pattern.shape, fill, dtype=pattern.dtype)
    out[inside] = pattern[src_j[inside], src_i[inside]]
    return out


def field_four_channels_rotated(mesh: MeshIndex, contrast: float = 1e6,
                                degrees_per_step: float = 11.25, background: float = 1.0,
                                channel_width: float = 0.04) -> CoefficientField:
    """Field 3: the four-channel pinwheel rotated by ``degrees_per_step`` each fine step."""
    _check_contrast(contrast)
    mask = pinwheel_mask(mesh.nfx, mesh.nfy, channel_width)
    series = np.stack([rotate_pattern(mask, k * degrees_per_step, False)
                       for k in range(mesh.time.n_steps)])
    return _to_field(series, background, contrast)


def constant_field(mesh: MeshIndex, value: float = 1.0) -> CoefficientField:
    return CoefficientField(np.full((mesh.time.n_steps, mesh.nfy, mesh.nfx), float(value)),
                            background=float(value), contrast=1.0)


def save_field(kappa: CoefficientField, path, header_lines=()) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        n_steps, ny, nx = kappa.values.shape
        for k in range(n_steps):
            for j in range(ny):
                for i in range(nx):
                    w.writerow([i, j, k + kappa.first_step, repr(float(kappa.values[k, j, i]))])


def load_field(path, shape=None) -> CoefficientField:
    """Read a field CSV; ``shape = (n_steps, ny, nx)`` is inferred when omitted."""
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: malformed row {lineno}: {row}")
            try:
                i, j, k = int(row[0]), int(row[1]), int(row[2])
                v = float(row[3])
            except ValueError as exc:
                raise ValueError(f"{path}: malformed row {lineno}: {row}") from exc
            if not v > 0:
                raise ValueError(f"{path}: non-positive value {v} at cell ({i}, {j}), step {k}")
            rows.append((k, j, i, v))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    idx = arr[:, :3].astype(int)
    first = idx[:, 0].min()
    if shape is None:
        shape = (idx[:, 0].max() - first + 1, idx[:, 1].max() + 1, idx[:, 2].max() + 1)
    values = np.full(shape, np.nan)
    values[idx[:, 0] - first, idx[:, 1], idx[:, 2]] = arr[:, 3]
    missing = np.argwhere(np.isnan(values))
    if missing.size:
        k, j, i = missing[0]
        raise ValueError(f"{path}: missing value for cell ({i}, {j}) at step {k + first}"
                         f" ({len(missing)} missing in total)")
    vmin = values.min()
    return CoefficientField(values, background=vmin, contrast=values.max() / vmin,
                            first_step=int(first))


def weighted_kappa_tilde(kappa: CoefficientField, chis, steps=None) -> CoefficientField:
    """kappa * sum_i |grad chi_i^+|^2 per fine cell, over the steps of the chis' slab."""
    grad_sq = chis.grad_sq_sum()
    if steps is None:
        steps = chis.mesh.time.slab_steps(chis.slab)
    steps = list(steps)
    vals = kappa.steps(steps) * grad_sq[None]
    return CoefficientField(vals, background=kappa.background, contrast=kappa.contrast,
                            first_step=steps[0] if steps else 0)
