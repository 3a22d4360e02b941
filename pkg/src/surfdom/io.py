"""Text formats for representations, meshes and maps, plus CSV/JSON writers.

Every file starts with ``<magic> <version>``.  Blank lines and ``#`` comments
are ignored.  Readers raise :class:`ParseError` with the offending line
number.  Floats are written with 17 significant digits so that a round trip
is exact.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .hyperbolic import MoebiusMap, klein_to_uhp, uhp_to_klein
from .surface import (
    RelatorViolation,
    SurfaceGroup,
    SurfaceRep,
    Word,
    apply_sigma,
    axis_rep,
    elliptic_rep,
    relator_residual,
)
from .teichmuller.mesh import EdgePairing, Mesh

FORMAT_VERSION = 1
REP_MAGIC = "surfdom-rep"
MESH_MAGIC = "surfdom-mesh"
MAP_MAGIC = "surfdom-map"
RELATOR_TOL = 1e-6
OUTPUT_ENV = "SURFDOM_OUTPUT_DIR"
DEFAULT_OUTPUT = "surfdom-out"


class ParseError(ValueError):
    def __init__(self, path: str | os.PathLike, line: int, msg: str):
        self.path, self.line, self.msg = str(path), line, msg
        super().__init__(f"{path}:{line}: {msg}")


def _f(x: float) -> str:
    return repr(float(x))


def output_dir(explicit: str | os.PathLike | None = None) -> Path:
    """Explicit path, else ``$SURFDOM_OUTPUT_DIR``, else ``./surfdom-out``; created on demand."""
    p = Path(explicit or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _lines(path) -> list[tuple[int, list[str]]]:
    """Tokenised non-empty lines with 1-based line numbers."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                out.append((no, text.split()))
    return out


def _header(path, lines, magic: str) -> int:
    if not lines:
        raise ParseError(path, 1, "empty file")
    no, tok = lines[0]
    if len(tok) != 2 or tok[0] != magic:
        raise ParseError(path, no, f"expected header '{magic} {FORMAT_VERSION}'")
    try:
        version = int(tok[1])
    except ValueError:
        raise ParseError(path, no, f"bad format version {tok[1]!r}") from None
    if version != FORMAT_VERSION:
        raise ParseError(path, no, f"unsupported format version {version}")
    return version


def _floats(path, no: int, tok: Sequence[str], n: int, what: str) -> list[float]:
    if len(tok) != n:
        raise ParseError(path, no, f"{what}: expected {n} numbers, found {len(tok)}")
    try:
        vals = [float(t) for t in tok]
    except ValueError as exc:
        raise ParseError(path, no, f"{what}: {exc}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(path, no, f"{what}: non-finite value")
    return vals


def _ints(path, no: int, tok: Sequence[str], n: int, what: str) -> list[int]:
    if len(tok) != n:
        raise ParseError(path, no, f"{what}: expected {n} integers, found {len(tok)}")
    try:
        return [int(t) for t in tok]
    except ValueError as exc:
        raise ParseError(path, no, f"{what}: {exc}") from None


def _genus(path, lines) -> int:
    if len(lines) < 2 or lines[1][1][0] != "genus":
        raise ParseError(path, lines[1][0] if len(lines) > 1 else 1, "expected 'genus <g>'")
    no, tok = lines[1]
    (g,) = _ints(path, no, tok[1:], 1, "genus")
    if g < 2:
        raise ParseError(path, no, f"genus must be at least 2, got {g}")
    return g


# ---------------------------------------------------------------------------
# representations


def write_rep(path, rep: SurfaceRep, comment: str | None = None) -> None:
    out = [f"{REP_MAGIC} {FORMAT_VERSION}"]
    if comment:
        out += [f"# {c}" for c in comment.splitlines()]
    out.append(f"genus {rep.genus}")
    for k, g in enumerate(rep.images):
        m = g.m
        out.append(f"{rep.group.generator_name(k + 1)} " + " ".join(_f(x) for x in m.ravel()))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_rep(path, allow_residual: bool = False) -> SurfaceRep:
    """Read a representation; each matrix is rescaled to determinant one."""
    lines = _lines(path)
    _header(path, lines, REP_MAGIC)
    g = _genus(path, lines)
    group = SurfaceGroup(g)
    names = [group.generator_name(k + 1) for k in range(group.n_generators)]
    rows = lines[2:]
    if len(rows) != len(names):
        no = rows[-1][0] if rows else lines[-1][0]
        raise ParseError(path, no, f"expected {len(names)} generator rows, found {len(rows)}")
    mats = []
    for (no, tok), name in zip(rows, names):
        if tok[0] != name:
            raise ParseError(path, no, f"expected generator {name}, found {tok[0]!r}")
        a, b, c, d = _floats(path, no, tok[1:], 4, f"matrix row {name}")
        det = a * d - b * c
        if not det > 0:
            raise ParseError(path, no, f"matrix {name} has non-positive determinant {det:.6g}")
        s = math.sqrt(det)
        mats.append(MoebiusMap(np.array([[a, b], [c, d]]) / s))
    rep = SurfaceRep(group, mats)
    res = relator_residual(rep)
    if res > RELATOR_TOL and not allow_residual:
        raise RelatorViolation(f"{path}: relator residual {res:.3g} exceeds {RELATOR_TOL}")
    return rep


def rep_from_spec(spec: str, genus: int = 2, allow_residual: bool = False) -> SurfaceRep:
    """A representation from a file path or a named family.

    Families: ``trivial``, ``elliptic:t1,..``, ``axis:t1,..``,
    ``fn:l1,l2,l3/t1,t2,t3`` and ``sigma-fn:..`` (the sign-flipped image).
    """
    if os.path.exists(spec):
        return read_rep(spec, allow_residual)
    name, _, arg = spec.partition(":")
    vals = lambda s: [float(x) for x in s.split(",") if x.strip()]  # noqa: E731
    if name == "trivial":
        return SurfaceRep.trivial(genus)
    if name == "elliptic":
        return elliptic_rep(genus, vals(arg))
    if name == "axis":
        return axis_rep(genus, vals(arg))
    if name in ("fn", "sigma-fn"):
        from .teichmuller.fenchel_nielsen import fn_to_holonomy

        rep = fn_to_holonomy(parse_fn(arg))
        return apply_sigma(rep) if name == "sigma-fn" else rep
    raise ValueError(f"{spec!r} is neither a file nor a known family")


def parse_fn(text: str):
    """``l1,l2,l3/t1,t2,t3`` (lengths then twists) as FN coordinates."""
    from .teichmuller.fenchel_nielsen import FNCoords

    lengths, sep, twists = text.partition("/")
    if not sep:
        raise ValueError(f"FN coordinates need 'lengths/twists', got {text!r}")
    return FNCoords(np.array([float(x) for x in lengths.split(",")]), np.array([float(x) for x in twists.split(",")]))


def format_fn(X) -> str:
    return ",".join(_f(x) for x in X.lengths) + "/" + ",".join(_f(x) for x in X.twists)


# ---------------------------------------------------------------------------
# meshes


def write_mesh(path, mesh: Mesh) -> None:
    out = [f"{MESH_MAGIC} {FORMAT_VERSION}", f"genus {mesh.genus}", f"[vertices] {mesh.n_vertices}"]
    out += [f"{_f(x)} {_f(y)}" for x, y in mesh.vertices]
    out.append(f"[faces] {mesh.n_faces}")
    out += [f"{a} {b} {c}" for a, b, c in mesh.faces]
    out.append(f"[pairings] {len(mesh.pairings)}")
    out += [f"{p.a} {p.b} {p.a2} {p.b2} {p.word}" for p in mesh.pairings]
    out.append(f"[conformal] {mesh.n_faces}")
    out += [_f(a) for a in mesh.conformal_factor]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def _sections(path, lines, names: Sequence[str], start: int) -> dict[str, tuple[int, list]]:
    """Split ``[name] count`` sections; returns name -> (header line, rows)."""
    out: dict[str, tuple[int, list]] = {}
    i = start
    for name in names:
        if i >= len(lines):
            raise ParseError(path, lines[-1][0], f"missing section [{name}]")
        no, tok = lines[i]
        if tok[0] != f"[{name}]":
            raise ParseError(path, no, f"expected section [{name}], found {tok[0]!r}")
        (count,) = _ints(path, no, tok[1:], 1, f"[{name}] count")
        rows = lines[i + 1 : i + 1 + count]
        if len(rows) != count or any(t[0].startswith("[") for _, t in rows):
            raise ParseError(path, no, f"section [{name}] declares {count} rows")
        out[name] = (no, rows)
        i += 1 + count
    if i < len(lines):
        raise ParseError(path, lines[i][0], "unexpected content after the last section")
    return out


def read_mesh(path) -> Mesh:
    lines = _lines(path)
    _header(path, lines, MESH_MAGIC)
    g = _genus(path, lines)
    sec = _sections(path, lines, ["vertices", "faces", "pairings", "conformal"], 2)
    verts = [_floats(path, no, t, 2, "vertex") for no, t in sec["vertices"][1]]
    for (no, _), (x, y) in zip(sec["vertices"][1], verts):
        if not y > 0:
            raise ParseError(path, no, "vertex must lie in the upper half-plane")
    nv = len(verts)
    faces = []
    for no, t in sec["faces"][1]:
        f = _ints(path, no, t, 3, "face")
        if min(f) < 0 or max(f) >= nv:
            raise ParseError(path, no, f"face refers to a missing vertex: {f}")
        faces.append(f)
    pairings = []
    for no, t in sec["pairings"][1]:
        if len(t) != 5:
            raise ParseError(path, no, "pairing: expected 'a b a2 b2 word'")
        idx = _ints(path, no, t[:4], 4, "pairing")
        if min(idx) < 0 or max(idx) >= nv:
            raise ParseError(path, no, f"pairing refers to a missing vertex: {idx}")
        try:
            w = Word.parse(t[4])
        except ValueError as exc:
            raise ParseError(path, no, f"pairing word: {exc}") from None
        pairings.append(EdgePairing(*idx, w))
    conf = []
    for no, t in sec["conformal"][1]:
        (a,) = _floats(path, no, t, 1, "conformal factor")
        if not a > 0:
            raise ParseError(path, no, "conformal factor must be positive")
        conf.append(a)
    if len(conf) != len(faces):
        raise ParseError(path, sec["conformal"][0], "one conformal factor per face is required")
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3), pairings, np.array(conf), g)


# ---------------------------------------------------------------------------
# maps


def write_map(path, emap) -> None:
    """Per-vertex target coordinates: upper half-plane ``x y`` or a line value ``t``."""
    kind = "line" if emap.target.is_line else "plane"
    out = [f"{MAP_MAGIC} {FORMAT_VERSION}", f"target {kind} {_f(emap.target.scale)}", f"[values] {len(emap.values)}"]
    if emap.target.is_line:
        out += [_f(t) for t in emap.values]
    else:
        x, y = klein_to_uhp(emap.values)
        out += [f"{_f(a)} {_f(b)}" for a, b in zip(x, y)]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_map(path, constraint=None):
    from .harmonic import EquivariantMap, TargetKind, TargetSpace

    lines = _lines(path)
    _header(path, lines, MAP_MAGIC)
    if len(lines) < 2 or lines[1][1][0] != "target" or len(lines[1][1]) != 3 or lines[1][1][1] not in ("plane", "line"):
        raise ParseError(path, lines[1][0] if len(lines) > 1 else 1, "expected 'target plane|line <scale>'")
    no, tok = lines[1]
    (scale,) = _floats(path, no, tok[2:], 1, "target scale")
    line = tok[1] == "line"
    target = TargetSpace(TargetKind.REAL_LINE if line else TargetKind.HYPERBOLIC_PLANE, scale)
    rows = _sections(path, lines, ["values"], 2)["values"][1]
    if line:
        vals = np.array([_floats(path, n, t, 1, "value")[0] for n, t in rows])
    else:
        pts = np.array([_floats(path, n, t, 2, "value") for n, t in rows]).reshape(-1, 2)
        for (n, _), y in zip(rows, pts[:, 1]):
            if not y > 0:
                raise ParseError(path, n, "value must lie in the upper half-plane")
        vals = uhp_to_klein(pts[:, 0], pts[:, 1])
    return EquivariantMap(target, vals, constraint)


# ---------------------------------------------------------------------------
# CSV / JSON


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]], kind: str = "table") -> None:
    """CSV preceded by a ``# surfdom-<kind> <version>`` line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# surfdom-{kind} {FORMAT_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_f(x) if isinstance(x, (float, np.floating)) else x for x in r])


def write_iterations(path, history) -> None:
    write_csv(path, ["iter", "E", "gradient_norm", "step"], history, kind="iterations")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (Word, Path)):
        return str(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):
        return obj.value
    return obj


def write_json(path, kind: str, payload: dict) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, versioned header fields."""
    doc = {"format": f"surfdom-{kind}", "version": FORMAT_VERSION, **_jsonable(payload)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# experiment configs


@dataclass
class ExperimentConfig:
    """Parameters of one run, read from an INI-style file."""

    genus: int = 2
    fn_init: str | None = None
    j0: str | None = None
    rho: str = "trivial"
    radius: int = 6
    target_edge: float = 0.3
    tol: float = 1e-6
    seed: int = 0
    output: str | None = None
    path: list[str] = field(default_factory=list)

    def validate(self) -> "ExperimentConfig":
        if self.genus < 2:
            raise ValueError("genus must be at least 2")
        if not 1 <= self.radius <= 10:
            raise ValueError("radius must lie in [1, 10]")
        if not 0.02 <= self.target_edge <= 0.5:
            raise ValueError("target_edge must lie in [0.02, 0.5]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        for spec in [self.rho, self.j0, *self.path]:
            if spec and ("/" in spec or spec.endswith(".rep")) and ":" not in spec and not os.path.exists(spec):
                raise FileNotFoundError(spec)
        return self


def read_config(path) -> ExperimentConfig:
    """``[experiment]`` section with keys matching :class:`ExperimentConfig`;
    ``path`` lists one representation per line."""
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    if "experiment" not in cp:
        raise ValueError(f"{path}: missing [experiment] section")
    s = cp["experiment"]
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(s) - known
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    cfg = ExperimentConfig(
        genus=s.getint("genus", 2),
        fn_init=s.get("fn_init"),
        j0=s.get("j0"),
        rho=s.get("rho", "trivial"),
        radius=s.getint("radius", 6),
        target_edge=s.getfloat("target_edge", 0.3),
        tol=s.getfloat("tol", 1e-6),
        seed=s.getint("seed", 0),
        output=s.get("output"),
        path=[x.strip() for x in s.get("path", "").splitlines() if x.strip()],
    )
    return cfg.validate()


__all__ = [
    "ExperimentConfig",
    "FORMAT_VERSION",
    "OUTPUT_ENV",
    "ParseError",
    "format_fn",
    "output_dir",
    "parse_fn",
    "read_config",
    "read_map",
    "read_mesh",
    "read_rep",
    "rep_from_spec",
    "write_csv",
    "write_iterations",
    "write_json",
    "write_map",
    "write_mesh",
    "write_rep",
]
