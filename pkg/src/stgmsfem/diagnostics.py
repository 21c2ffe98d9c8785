"""Relative errors, slab energy norms, the 1/Lambda* indicator and correlations."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coefficient import CoefficientField
from .fem import SpaceOperators, SpaceTimeFunction
from .grid import MeshIndex, Rect

REPORT_HEADER = ["L", "p_bf", "dim_off", "snapshot_ratio", "e1", "e2", "inv_lambda_star"]


@dataclass
class ErrorReport:
    L: int
    p_bf: int
    dim_off: int
    snapshot_ratio: float
    e1: float
    e2: float
    lambda_star: float
    seed: int | None = None
    config_hash: str = ""

    @property
    def inv_lambda_star(self) -> float:
        if np.isnan(self.lambda_star):
            return float("nan")
        return 1.0 / self.lambda_star if self.lambda_star > 0 else float("inf")

    def row(self) -> list:
        return [self.L, self.p_bf, self.dim_off, repr(float(self.snapshot_ratio)),
                repr(float(self.e1)), repr(float(self.e2)), repr(float(self.inv_lambda_star))]


class ErrorNorms:
    """Trapezoid-in-time L2 and kappa-energy integrals over the whole mesh, cached per step."""

    def __init__(self, mesh: MeshIndex, kappa: CoefficientField):
        self.mesh = mesh
        self.space = SpaceOperators(mesh.nfx, mesh.nfy, mesh.hx, mesh.hy)
        self.kappa = kappa
        self._stiff: dict[int, object] = {}

    def stiffness(self, step: int):
        if step not in self._stiff:
            self._stiff[step] = self.space.stiffness(self.kappa.steps([step])[0])
        return self._stiff[step]

    def squares(self, u: list[SpaceTimeFunction]) -> tuple[float, float]:
        """(int ||u||^2 dt, int ||kappa^1/2 grad u||^2 dt) by the trapezoid rule on fine levels."""
        l2 = en = 0.0
        M = self.space.mass
        for part in u:
            steps = self.mesh.time.slab_steps(part.slab)
            tau = self.mesh.time.tau
            v = part.values
            m = np.einsum("ln,ln->l", v, (M @ v.T).T)
            l2 += tau * (m.sum() - 0.5 * (m[0] + m[-1]))
            for k, step in enumerate(steps):
                K = self.stiffness(step)
                a, b = v[k], v[k + 1]
                en += 0.5 * tau * (a @ (K @ a) + b @ (K @ b))
        return l2, en


def compute_errors(u_h: list[SpaceTimeFunction], u_H: list[SpaceTimeFunction],
                   norms: ErrorNorms) -> tuple[float, float]:
    """(e1, e2): relative space-time L2 and energy errors of u_H against u_h."""
    if len(u_h) != len(u_H):
        raise ValueError("solutions cover different slabs")
    diff = []
    for a, b in zip(u_h, u_H):
        if a.slab != b.slab or a.values.shape != b.values.shape:
            raise ValueError(f"slab {a.slab}: solutions live on different grids")
        diff.append(SpaceTimeFunction(a.slab, b.values - a.values))
    d_l2, d_en = norms.squares(diff)
    r_l2, r_en = norms.squares(u_h)
    if r_l2 <= 0 or r_en <= 0:
        raise ZeroDivisionError("reference solution is identically zero")
    # clamp round-off below zero (e.g. differences that are constant in space)
    return float(np.sqrt(max(d_l2, 0.0) / r_l2)), float(np.sqrt(max(d_en, 0.0) / r_en))


_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def v_norm(u: SpaceTimeFunction, kappa: CoefficientField, mesh: MeshIndex,
           rect: Rect | None = None) -> float:
    """Slab energy norm by tensor Gauss quadrature directly from nodal values.

    ||u||^2 = int int kappa |grad u|^2 + (int u(T_n^-)^2 + int u(T_{n-1}^+)^2) / 2.
    ``rect`` selects a sub-rectangle (values given on its nodes); defaults to the mesh.
    """
    rect = mesh.rect if rect is None else rect
    hx, hy, tau = mesh.hx, mesh.hy, mesh.time.tau
    steps = list(mesh.time.slab_steps(u.slab))
    v = np.asarray(u.values, dtype=float).reshape(len(steps) + 1, rect.ny + 1, rect.nx + 1)
    c00, c10 = v[:, :-1, :-1], v[:, :-1, 1:]
    c01, c11 = v[:, 1:, :-1], v[:, 1:, 1:]
    kap = kappa.window(rect, steps)

    grad_sq = 0.0
    for s in _GAUSS:  # time
        w_lo, w_hi = 1 - s, s
        a00 = w_lo * c00[:-1] + w_hi * c00[1:]
        a10 = w_lo * c10[:-1] + w_hi * c10[1:]
        a01 = w_lo * c01[:-1] + w_hi * c01[1:]
        a11 = w_lo * c11[:-1] + w_hi * c11[1:]
        for xi in _GAUSS:
            for eta in _GAUSS:
                gx = ((1 - eta) * (a10 - a00) + eta * (a11 - a01)) / hx
                gy = ((1 - xi) * (a01 - a00) + xi * (a11 - a10)) / hy
                grad_sq += np.sum(kap * (gx ** 2 + gy ** 2))
    grad_sq *= 0.125 * hx * hy * tau

    def face(l: int) -> float:
        total = 0.0
        for xi in _GAUSS:
            for eta in _GAUSS:
                val = ((1 - xi) * (1 - eta) * c00[l] + xi * (1 - eta) * c10[l]
                       + (1 - xi) * eta * c01[l] + xi * eta * c11[l])
                total += np.sum(val ** 2)
        return 0.25 * hx * hy * total

    return float(np.sqrt(grad_sq + 0.5 * face(-1) + 0.5 * face(0)))


def lambda_star(bases, L: int | None = None) -> float:
    """min over local bases of the first discarded eigenvalue lambda_{L_i + 1}.

    ``bases`` is an iterable of objects with ``eigenvalues`` and ``size``.
    """
    vals = []
    for b in bases:
        k = b.size if L is None else L
        if k >= len(b.eigenvalues):
            raise ValueError(f"no eigenvalue lambda_{k + 1} at node {b.node}, slab {b.slab}: "
                             f"only {len(b.eigenvalues)} computed (needs p_bf >= 1)")
        vals.append(b.eigenvalues[k])
    if not vals:
        raise ValueError("no local bases given")
    return float(min(vals))


def corrcoef(x, y) -> float:
    """Pearson correlation; NaN with a warning when either sample is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two samples of equal length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        warnings.warn("correlation undefined for a constant sample", RuntimeWarning,
                      stacklevel=2)
        return float("nan")
    if x.size == 2:  # two points are always perfectly (anti)correlated
        return float(np.sign(dx[1] * dy[1]))
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def write_report_csv(path, reports: list[ErrorReport], header_lines=()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow(r.row())
