"""Face-sampled quadratic differentials and the Weil-Petersson pairing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import IndexMismatch, Mesh


@dataclass
class QuadDiff:
    """Per-face coefficient ``phi`` of ``phi dw^2`` in the Poincare chart."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("quadratic differential has non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    def __add__(self, other: "QuadDiff") -> "QuadDiff":
        return QuadDiff(self.values + other.values)

    def __sub__(self, other: "QuadDiff") -> "QuadDiff":
        return QuadDiff(self.values - other.values)

    def __mul__(self, c) -> "QuadDiff":
        return QuadDiff(self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "QuadDiff":
        return QuadDiff(-self.values)


def _check(phi: QuadDiff, mesh: Mesh, areas):
    if len(phi) != mesh.n_faces:
        raise IndexMismatch(f"differential has {len(phi)} faces, mesh has {mesh.n_faces}")
    if areas is not None and len(areas) != mesh.n_faces:
        raise IndexMismatch("face areas do not match the mesh")


def wp_pair(phi: QuadDiff, psi: QuadDiff, mesh: Mesh, areas: np.ndarray | None = None) -> complex:
    """``sum_f phi conj(psi) / alpha^2 * area_f``."""
    _check(phi, mesh, areas)
    _check(psi, mesh, areas)
    if areas is None:
        areas = mesh.face_areas()
    alpha = mesh.conformal_factor
    return complex(np.sum(phi.values * np.conj(psi.values) / alpha**2 * areas))


def wp_norm(phi: QuadDiff, mesh: Mesh, areas: np.ndarray | None = None) -> float:
    return float(np.sqrt(max(wp_pair(phi, phi, mesh, areas).real, 0.0)))
