"""Two-sided bounds on the minimal Lipschitz constant of equivariant maps.

The lower bound is the largest ratio of translation lengths ``l(rho(w)) /
l(j(w))`` over a ball of words; the upper bound is the largest stretch of
the discrete harmonic map between the surface of ``j`` and the target.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .harmonic import (
    EquivariantMap,
    ParabolicTarget,
    TargetSpace,
    solve_harmonic,
    solve_harmonic_line,
    stretch_factors,
)
from .surface import (
    NotFuchsian,
    ParabolicData,
    SurfaceRep,
    Word,
    euler_class,
    lengths_from_traces,
    ball_matrices,
)
from .teichmuller.mesh import Mesh

log = logging.getLogger(__name__)

DEFAULT_RADIUS = 6
# margins closer to 1 than this give no verdict
HYSTERESIS = 1e-3
# the spectral lower bound is exact up to rounding in the traces
LOWER_SLACK = 1e-9


class BracketViolation(RuntimeError):
    pass


@dataclass
class LipEstimate:
    lower: float
    upper: float
    witness_word: Word | None = None
    witness_map: EquivariantMap | None = field(default=None, repr=False)
    ball_radius: int = 0
    scale: float = 1.0
    target_edge: float | None = None

    def __post_init__(self):
        if self.lower > self.upper + LOWER_SLACK:
            raise BracketViolation(f"lower bound {self.lower!r} exceeds upper bound {self.upper!r}")


class Verdict(enum.Enum):
    STRICTLY_DOMINATED = "StrictlyDominated"
    NOT_DOMINATED = "NotDominated"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class DominationVerdict:
    kind: Verdict
    lower: float
    upper: float
    margin: float | None = None
    witness_word: Word | None = None

    @property
    def exit_code(self) -> int:
        return {Verdict.STRICTLY_DOMINATED: 0, Verdict.NOT_DOMINATED: 1, Verdict.INCONCLUSIVE: 2}[self.kind]


def verdict_from_bounds(lower: float, upper: float, witness: Word | None = None) -> DominationVerdict:
    """``upper < 1`` proves domination and ``lower >= 1`` refutes it.

    Domination needs a margin of at least ``HYSTERESIS``.  The lower bound is a
    ratio of exactly computed lengths, so it refutes domination as soon as it
    reaches 1 up to rounding.
    """
    if upper < 1.0 - HYSTERESIS:
        return DominationVerdict(Verdict.STRICTLY_DOMINATED, lower, upper, margin=1.0 - upper)
    if lower >= 1.0 - LOWER_SLACK:
        return DominationVerdict(Verdict.NOT_DOMINATED, lower, upper, margin=lower - 1.0, witness_word=witness)
    return DominationVerdict(Verdict.INCONCLUSIVE, lower, upper)


def require_fuchsian(j: SurfaceRep) -> None:
    e = euler_class(j)
    if abs(e) != 2 * j.genus - 2:
        raise NotFuchsian(f"euler class {e} is not +-{2 * j.genus - 2}")


def _ball_lengths(rep: SurfaceRep, radius: int):
    levels, mats = ball_matrices(rep, radius)
    tr = np.concatenate([m[:, 0, 0] + m[:, 1, 1] for m in mats])
    return levels, lengths_from_traces(tr)


def _word_at(levels: list[np.ndarray], idx: int) -> Word:
    for lev in levels:
        if idx < len(lev):
            return Word(tuple(int(x) for x in lev[idx]))
        idx -= len(lev)
    raise IndexError(idx)


def lip_lower(j: SurfaceRep, rho: SurfaceRep, radius: int = DEFAULT_RADIUS, check: bool = True) -> tuple[float, Word]:
    """``max l(rho(w)) / l(j(w))`` over the ball of the given radius."""
    if check:
        require_fuchsian(j)
    levels, lj = _ball_lengths(j, radius)
    _, lr = _ball_lengths(rho, radius)
    if np.any(lj <= 0):
        raise NotFuchsian("a non-trivial word has zero length under j")
    ratio = lr / lj
    k = int(np.argmax(ratio))
    return float(ratio[k]), _word_at(levels, k)


def lip_lower_parabolic(j: SurfaceRep, data: ParabolicData, radius: int = DEFAULT_RADIUS) -> tuple[float, Word]:
    """``max |m(w)| / l(j(w))`` over the ball."""
    levels, lj = _ball_lengths(j, radius)
    m_ext = np.concatenate([[0.0], data.morphism])
    vals = []
    for lev in levels:
        vals.append(np.abs((np.sign(lev) * m_ext[np.abs(lev)]).sum(axis=1)))
    ratio = np.concatenate(vals) / lj
    k = int(np.argmax(ratio))
    return float(ratio[k]), _word_at(levels, k)


def _solve_for_upper(mesh: Mesh, rho: SurfaceRep, init: EquivariantMap | None = None) -> EquivariantMap:
    try:
        emap, _ = solve_harmonic(mesh, rho, init=init)
    except ParabolicTarget as exc:
        emap, _ = solve_harmonic_line(mesh, exc.data)
    return emap


def lip_upper(j: SurfaceRep, rho: SurfaceRep, mesh: Mesh, target: TargetSpace | None = None,
              init: EquivariantMap | None = None) -> tuple[float, EquivariantMap]:
    """Largest stretch of the discrete harmonic map on the mesh of ``j``."""
    emap = _solve_for_upper(mesh, rho, init)
    s = float(stretch_factors(emap, mesh).max())
    if target is not None:
        s /= target.scale
    return s, emap


def estimate(j: SurfaceRep, rho: SurfaceRep, mesh: Mesh, radius: int = DEFAULT_RADIUS,
             target_edge: float | None = None) -> LipEstimate:
    require_fuchsian(j)
    lo, w = lip_lower(j, rho, radius, check=False)
    up, emap = lip_upper(j, rho, mesh)
    return LipEstimate(lo, up, w, emap, radius, 1.0, target_edge)


def check_domination(j: SurfaceRep, rho: SurfaceRep, radius: int = DEFAULT_RADIUS, mesh: Mesh | None = None,
                     alpha: float = 1.0, target_edge: float = 0.2) -> DominationVerdict:
    """Verdict on strict domination of ``rho`` by ``j`` (target scaled by ``alpha``)."""
    if mesh is None:
        from .teichmuller.mesh import build_mesh

        mesh = build_mesh(j, target_edge)
    est = estimate(j, rho, mesh, radius)
    if alpha != 1.0:
        est = scaled_lip(est, alpha)
    return verdict_from_bounds(est.lower, est.upper, est.witness_word)


def thurston_distance(j: SurfaceRep, j2: SurfaceRep, radius: int = DEFAULT_RADIUS, mesh: Mesh | None = None,
                      target_edge: float = 0.2) -> tuple[float, float]:
    """``(ln lower, ln upper)`` bracketing the asymmetric distance from ``j`` to ``j2``."""
    require_fuchsian(j)
    require_fuchsian(j2)
    if mesh is None:
        from .teichmuller.mesh import build_mesh

        mesh = build_mesh(j, target_edge)
    est = estimate(j, j2, mesh, radius)
    lo = math.log(est.lower) if est.lower > 0 else -math.inf
    return lo, math.log(est.upper)


def scaled_lip(est: LipEstimate, alpha: float) -> LipEstimate:
    """Bounds for the target metric divided by ``alpha^2``."""
    if not alpha >= 1.0:
        raise ValueError(f"alpha must be at least 1, got {alpha}")
    return replace(est, lower=est.lower / alpha, upper=est.upper / alpha, scale=est.scale * alpha)


def lip_parabolic(j: SurfaceRep, data: ParabolicData, mesh: Mesh, radius: int = DEFAULT_RADIUS) -> LipEstimate:
    """Bounds for a representation fixing a boundary point, through its morphism."""
    require_fuchsian(j)
    lo, w = lip_lower_parabolic(j, data, radius)
    emap, _ = solve_harmonic_line(mesh, data)
    up = float(stretch_factors(emap, mesh).max())
    return LipEstimate(lo, up, w, emap, radius)


@dataclass
class ContinuityRow:
    step: int
    lower: float
    upper: float


def lip_continuity_probe(j: SurfaceRep, path: Sequence[SurfaceRep], radius: int, mesh: Mesh) -> tuple[list[ContinuityRow], float, float]:
    """Bounds along a path of representations and the largest jump of each."""
    rows = []
    emap = None
    for k, rho in enumerate(path):
        lo, _ = lip_lower(j, rho, radius, check=k == 0)
        init = emap if emap is not None and not emap.target.is_line else None
        up, emap = lip_upper(j, rho, mesh, init=init)
        rows.append(ContinuityRow(k, lo, up))
    lows = np.array([r.lower for r in rows])
    ups = np.array([r.upper for r in rows])
    jl = float(np.abs(np.diff(lows)).max()) if len(rows) > 1 else 0.0
    ju = float(np.abs(np.diff(ups)).max()) if len(rows) > 1 else 0.0
    return rows, jl, ju


__all__ = [
    "BracketViolation",
    "ContinuityRow",
    "DominationVerdict",
    "LipEstimate",
    "Verdict",
    "check_domination",
    "estimate",
    "lip_continuity_probe",
    "lip_lower",
    "lip_lower_parabolic",
    "lip_parabolic",
    "lip_upper",
    "scaled_lip",
    "thurston_distance",
    "verdict_from_bounds",
]
