"""Gaussian scene representation, activations, covariance, and serialization.

Conventions fixed here because upstream trained scenes rely on them:

* PLY stores pre-activation values (logit opacity, log scale, unnormalized
  quaternion); loading activates them.
* Quaternions are scalar-first (w, x, y, z).
* Spherical-harmonic coefficients are stored per channel: f_dc_0..2 hold the
  degree-0 terms, f_rest is channel-major ([c0 coeffs..., c1 coeffs..., c2
  coeffs...]).
* Semantic fields live in sidecar ``.sgsf`` files next to the PLY, keyed by
  Gaussian index, so RGB scenes stay readable by third-party viewers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, FormatError, IOFailure
from .formats import read_semantic_field, write_semantic_field

SH_C0 = 0.28209479177387814  # degree-0 basis constant

QUAT_NORM_TOL = 1e-6
ROT_ORTHO_TOL = 1e-5
UNIT_ROW_TOL = 1e-5

_PLY_BASE_PROPS = ("x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2")
_PLY_TAIL_PROPS = ("opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")


def logistic(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def _exact_preimage(values32: np.ndarray, forward64, inverse64) -> np.ndarray:
    """Find float32 stored values whose activation reproduces ``values32`` bitwise.

    ``inverse64(values32)`` rounded to float32 is usually, but not always, an
    exact preimage under ``float32(forward64(.))``; probing a few neighboring
    ulps closes the gap so save -> load round-trips are bit-exact.
    """
    v = np.asarray(values32, dtype=np.float32).reshape(-1)
    stored = inverse64(v.astype(np.float64)).astype(np.float32)
    bad = forward64(stored.astype(np.float64)).astype(np.float32) != v
    if bad.any():
        idx = np.where(bad)[0]
        up = stored[idx].copy()
        down = stored[idx].copy()
        for _ in range(4):
            up = np.nextafter(up, np.float32(np.inf))
            down = np.nextafter(down, np.float32(-np.inf))
            for cand in (up, down):
                hit = forward64(cand.astype(np.float64)).astype(np.float32) == v[idx]
                stored[idx[hit]] = cand[hit]
            idx_ok = forward64(stored[idx].astype(np.float64)).astype(np.float32) == v[idx]
            if idx_ok.all():
                break
    return stored.reshape(np.shape(values32))


def quats_to_rotmats(quats: np.ndarray) -> np.ndarray:
    """(N,4) scalar-first unit quaternions -> (N,3,3) rotation matrices."""
    q = np.asarray(quats, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R[0] if single else R


@dataclass(frozen=True)
class Gaussian:
    """A single activated Gaussian point."""

    position: np.ndarray  # (3,)
    rotation: np.ndarray  # (4,) unit quaternion, scalar-first
    scale: np.ndarray     # (3,) strictly positive
    opacity: float        # in [0, 1]
    sh: np.ndarray        # (3, (deg+1)^2)


@dataclass(frozen=True)
class SemanticField:
    """Per-Gaussian embedding matrix with per-row observation counts."""

    embeddings: np.ndarray  # (N, C) float32
    counts: np.ndarray      # (N,) uint32; 0 = never observed
    normalized: bool = False

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        cnt = np.ascontiguousarray(self.counts, dtype=np.uint32)
        if emb.ndim != 2 or cnt.shape != (emb.shape[0],):
            raise ContractError(
                f"semantic field shape mismatch: embeddings {emb.shape}, counts {cnt.shape}"
            )
        if not np.isfinite(emb).all():
            raise DataError("semantic field contains non-finite embeddings")
        unobserved = cnt == 0
        if unobserved.any() and emb[unobserved].any():
            raise DataError("rows with count 0 must be exactly zero")
        if self.normalized:
            obs = ~unobserved
            norms = np.linalg.norm(emb[obs].astype(np.float64), axis=1)
            if norms.size and np.abs(norms - 1.0).max() > UNIT_ROW_TOL:
                raise DataError("normalized field has non-unit observed rows")
        object.__setattr__(self, "embeddings", _readonly(emb))
        object.__setattr__(self, "counts", _readonly(cnt))

    @property
    def num_points(self) -> int:
        return self.embeddings.shape[0]

    @property
    def channels(self) -> int:
        return self.embeddings.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.counts > 0


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics plus a world-to-camera rigid transform."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray  # (4, 4) row-major

    def __post_init__(self):
        E = np.ascontiguousarray(self.world_to_camera, dtype=np.float64)
        if E.shape != (4, 4):
            raise ContractError(f"world_to_camera must be 4x4, got {E.shape}")
        if self.fx <= 0 or self.fy <= 0:
            raise DataError(f"focal lengths must be positive: fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise DataError(f"principal point ({self.cx}, {self.cy}) outside image")
        R = E[:3, :3]
        dev = np.abs(R @ R.T - np.eye(3)).max()
        if dev > ROT_ORTHO_TOL:
            raise DataError(f"rotation block not orthonormal (max deviation {dev:.3g})")
        if np.abs(E[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-9:
            raise DataError("world_to_camera last row must be (0, 0, 0, 1)")
        object.__setattr__(self, "world_to_camera", _readonly(E))

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        R = self.rotation
        return -R.T @ self.translation

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """World points (N,3) -> camera-space points (N,3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


class GaussianScene:
    """Immutable ordered collection of Gaussians with optional semantic fields.

    Arrays are float32 and read-only after construction; edits return new
    scenes. Semantic-field row i always refers to ``gaussians[i]``.
    """

    def __init__(
        self,
        positions: np.ndarray,
        rotations: np.ndarray,
        scales: np.ndarray,
        opacities: np.ndarray,
        sh: np.ndarray,
        semantic2d: SemanticField | None = None,
        semantic3d: SemanticField | None = None,
    ):
        positions = np.ascontiguousarray(positions, dtype=np.float32)
        rotations = np.ascontiguousarray(rotations, dtype=np.float32)
        scales = np.ascontiguousarray(scales, dtype=np.float32)
        opacities = np.ascontiguousarray(opacities, dtype=np.float32)
        sh = np.ascontiguousarray(sh, dtype=np.float32)
        n = positions.shape[0]
        if positions.shape != (n, 3) or rotations.shape != (n, 4) or scales.shape != (n, 3):
            raise ContractError("scene arrays have inconsistent shapes")
        if opacities.shape != (n,) or sh.ndim != 3 or sh.shape[:2] != (n, 3):
            raise ContractError("scene arrays have inconsistent shapes")
        deg = math.isqrt(sh.shape[2]) - 1
        if (deg + 1) ** 2 != sh.shape[2] or not 0 <= deg <= 3:
            raise ContractError(f"sh coefficient count {sh.shape[2]} is not a degree 0-3 layout")
        for name, arr in (("positions", positions), ("rotations", rotations),
                          ("scales", scales), ("opacities", opacities), ("sh", sh)):
            if not np.isfinite(arr).all():
                bad = int(np.argwhere(~np.isfinite(arr.reshape(n, -1)).all(axis=1))[0][0]) if n else 0
                raise DataError(f"non-finite {name} at element {bad}")
        if n:
            qn = np.linalg.norm(rotations.astype(np.float64), axis=1)
            if np.abs(qn - 1.0).max() > QUAT_NORM_TOL:
                bad = int(np.argmax(np.abs(qn - 1.0)))
                raise DataError(f"quaternion {bad} not unit (norm {qn[bad]:.8f})")
            if scales.min() <= 0:
                bad = int(np.argwhere((scales <= 0).any(axis=1))[0][0])
                raise DataError(f"non-positive scale at element {bad}")
            if opacities.min() < 0 or opacities.max() > 1:
                bad = int(np.argmax((opacities < 0) | (opacities > 1)))
                raise DataError(f"opacity out of [0,1] at element {bad}")
        for field, label in ((semantic2d, "semantic2d"), (semantic3d, "semantic3d")):
            if field is not None and field.num_points != n:
                raise ContractError(
                    f"{label} has {field.num_points} rows for {n} gaussians"
                )
        self.positions = _readonly(positions)
        self.rotations = _readonly(rotations)
        self.scales = _readonly(scales)
        self.opacities = _readonly(opacities)
        self.sh = _readonly(sh)
        self.semantic2d = semantic2d
        self.semantic3d = semantic3d

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def sh_degree(self) -> int:
        return math.isqrt(self.sh.shape[2]) - 1

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(
            position=self.positions[i],
            rotation=self.rotations[i],
            scale=self.scales[i],
            opacity=float(self.opacities[i]),
            sh=self.sh[i],
        )

    def with_fields(
        self,
        semantic2d: SemanticField | None = None,
        semantic3d: SemanticField | None = None,
    ) -> "GaussianScene":
        """New scene sharing geometry, with the given fields attached."""
        return GaussianScene(
            self.positions, self.rotations, self.scales, self.opacities, self.sh,
            semantic2d=semantic2d if semantic2d is not None else self.semantic2d,
            semantic3d=semantic3d if semantic3d is not None else self.semantic3d,
        )

    def field(self, source: str) -> SemanticField | None:
        if source == "2d":
            return self.semantic2d
        if source == "3d":
            return self.semantic3d
        raise ContractError(f"unknown field source {source!r}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def covariance(g: Gaussian) -> np.ndarray:
    """3x3 world-space covariance of one Gaussian: rotate a diagonal of squared scales."""
    R = quats_to_rotmats(g.rotation.astype(np.float64))
    M = R * g.scale.astype(np.float64)  # columns scaled: R @ diag(s)
    return M @ M.T


def covariances(scene: GaussianScene) -> np.ndarray:
    """(N,3,3) world-space covariances for the whole scene."""
    R = quats_to_rotmats(scene.rotations)
    M = R * scene.scales[:, None, :].astype(np.float64)
    return M @ np.swapaxes(M, 1, 2)


# ---------------------------------------------------------------------------
# PLY serialization


def _sh_rest_count(deg: int) -> int:
    return 3 * ((deg + 1) ** 2 - 1)


def _parse_ply_header(f) -> tuple[int, list[str]]:
    line = f.readline()
    if line.strip() != b"ply":
        raise FormatError("not a PLY file (missing 'ply' magic)")
    fmt = f.readline().strip()
    if fmt != b"format binary_little_endian 1.0":
        raise FormatError(f"unsupported PLY format line: {fmt.decode(errors='replace')}")
    count = None
    props: list[str] = []
    while True:
        raw = f.readline()
        if not raw:
            raise FormatError("unexpected end of file inside PLY header")
        line = raw.strip().decode("ascii", errors="replace")
        if line == "end_header":
            break
        if line.startswith("comment"):
            continue
        if line.startswith("element"):
            parts = line.split()
            if parts[1] != "vertex":
                raise FormatError(f"unsupported PLY element {parts[1]!r}")
            count = int(parts[2])
        elif line.startswith("property"):
            parts = line.split()
            if parts[1] != "float":
                raise FormatError(f"property {parts[-1]!r} is {parts[1]}, expected float")
            props.append(parts[2])
    if count is None:
        raise FormatError("PLY header declares no vertex element")
    return count, props


def load_ply(path) -> GaussianScene:
    """Load a splat scene from binary PLY, activating stored parameters.

    Opacity passes through the logistic function, scales through exp, and
    quaternions are normalized (already-unit rows are kept bit-identical).
    Sidecar ``<stem>.semantic2d.sgsf`` / ``<stem>.semantic3d.sgsf`` files are
    attached when present.
    """
    path = Path(path)
    with open(path, "rb") as f:
        count, props = _parse_ply_header(f)
        data = np.fromfile(f, dtype="<f4", count=count * len(props))
    if data.size != count * len(props):
        raise FormatError(
            f"PLY truncated: expected {count * len(props) * 4} data bytes, "
            f"got {data.size * 4}"
        )
    data = data.reshape(count, len(props))
    col = {name: i for i, name in enumerate(props)}

    rest = sorted(
        (int(p.split("_")[-1]) for p in props if p.startswith("f_rest_")),
    )
    n_rest = len(rest)
    if rest != list(range(n_rest)):
        raise FormatError("f_rest properties are not contiguous from f_rest_0")
    basis = n_rest // 3 + 1
    deg = math.isqrt(basis) - 1
    if n_rest % 3 != 0 or (deg + 1) ** 2 != basis or not 0 <= deg <= 3:
        raise FormatError(f"f_rest count {n_rest} does not match an SH degree in 0-3")

    needed = list(_PLY_BASE_PROPS) + [f"f_rest_{i}" for i in range(n_rest)] + list(_PLY_TAIL_PROPS)
    for name in needed:
        if name not in col:
            raise FormatError(f"missing PLY property {name!r}")

    def grab(names):
        return data[:, [col[n] for n in names]]

    raw = grab(needed)
    if not np.isfinite(raw).all():
        bad = int(np.argwhere(~np.isfinite(raw).all(axis=1))[0][0])
        raise DataError(f"non-finite stored value at element {bad}")

    positions = grab(["x", "y", "z"])
    sh = np.zeros((count, 3, basis), dtype=np.float32)
    sh[:, 0, 0] = data[:, col["f_dc_0"]]
    sh[:, 1, 0] = data[:, col["f_dc_1"]]
    sh[:, 2, 0] = data[:, col["f_dc_2"]]
    if n_rest:
        rest_vals = grab([f"f_rest_{i}" for i in range(n_rest)])
        sh[:, :, 1:] = rest_vals.reshape(count, 3, basis - 1)

    opacities = logistic(data[:, col["opacity"]]).astype(np.float32)
    scales = np.exp(grab(["scale_0", "scale_1", "scale_2"]).astype(np.float64)).astype(np.float32)
    quats = grab(["rot_0", "rot_1", "rot_2", "rot_3"])
    norms = np.linalg.norm(quats.astype(np.float64), axis=1)
    off_unit = np.abs(norms - 1.0) > QUAT_NORM_TOL
    if off_unit.any():
        zero = norms[off_unit] < 1e-12
        if zero.any():
            bad = int(np.where(off_unit)[0][np.argmax(zero)])
            raise DataError(f"zero-norm quaternion at element {bad}")
        quats = quats.copy()
        quats[off_unit] = (
            quats[off_unit].astype(np.float64) / norms[off_unit, None]
        ).astype(np.float32)

    scene = GaussianScene(positions, quats, scales, opacities, sh)

    sem2d = _sidecar_path(path, "semantic2d")
    sem3d = _sidecar_path(path, "semantic3d")
    f2d = read_semantic_field(sem2d) if sem2d.exists() else None
    f3d = read_semantic_field(sem3d) if sem3d.exists() else None
    if f2d is not None or f3d is not None:
        scene = scene.with_fields(
            semantic2d=_as_field(f2d), semantic3d=_as_field(f3d)
        )
    return scene


def _as_field(raw) -> SemanticField | None:
    if raw is None:
        return None
    emb, counts, normalized = raw
    return SemanticField(embeddings=emb, counts=counts, normalized=normalized)


def _sidecar_path(ply_path: Path, tag: str) -> Path:
    return ply_path.with_name(ply_path.stem + f".{tag}.sgsf")


def save_scene(scene: GaussianScene, path) -> None:
    """Write the scene as binary PLY plus semantic-field sidecars.

    Stored values are deactivated so external 3DGS tooling loads the file
    unchanged. For parameters in the activation's float32 image (every scene
    that came from load_ply or the synthetic generator), the stored
    pre-activations are chosen so a following load reproduces the activated
    float32 parameters bit-exactly; other values quantize to the nearest
    representable activation on first save and are stable afterwards.
    """
    path = Path(path)
    n = len(scene)
    deg = scene.sh_degree
    n_rest = _sh_rest_count(deg)
    props = list(_PLY_BASE_PROPS) + [f"f_rest_{i}" for i in range(n_rest)] + list(_PLY_TAIL_PROPS)

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")

    out = np.zeros((n, len(props)), dtype="<f4")
    ci = {name: i for i, name in enumerate(props)}
    out[:, [ci["x"], ci["y"], ci["z"]]] = scene.positions
    out[:, ci["f_dc_0"]] = scene.sh[:, 0, 0]
    out[:, ci["f_dc_1"]] = scene.sh[:, 1, 0]
    out[:, ci["f_dc_2"]] = scene.sh[:, 2, 0]
    if n_rest:
        out[:, ci["f_rest_0"]: ci["f_rest_0"] + n_rest] = scene.sh[:, :, 1:].reshape(n, n_rest)
    with np.errstate(divide="ignore"):
        logits = _exact_preimage(scene.opacities, logistic, logit)
    # opacities of exactly 0 or 1 have no finite logit; +-200 activates back
    # to the same float32 values
    logits[np.isposinf(logits)] = 200.0
    logits[np.isneginf(logits)] = -200.0
    out[:, ci["opacity"]] = logits
    stored_scales = _exact_preimage(scene.scales.reshape(-1), np.exp, np.log).reshape(n, 3)
    out[:, [ci["scale_0"], ci["scale_1"], ci["scale_2"]]] = stored_scales
    out[:, ci["rot_0"]: ci["rot_0"] + 4] = scene.rotations

    try:
        with open(path, "wb") as f:
            f.write(("\n".join(header) + "\n").encode("ascii"))
            f.write(out.tobytes())
    except OSError as e:
        raise IOFailure(f"cannot write scene to {path}: {e}") from e

    for tag, field in (("semantic2d", scene.semantic2d), ("semantic3d", scene.semantic3d)):
        side = _sidecar_path(path, tag)
        if field is not None:
            write_semantic_field(side, field.embeddings, field.counts, field.normalized)
        elif side.exists():
            side.unlink()


# ---------------------------------------------------------------------------
# Camera serialization


def load_cameras(path) -> list[Camera]:
    """Load an ordered camera list from JSON (see format docs in README)."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"camera file {path} is not valid JSON: {e}") from e
    if not isinstance(entries, list):
        raise FormatError("camera file must contain a JSON array")
    cams = []
    for i, entry in enumerate(entries):
        try:
            E = np.array(entry["world_to_camera"], dtype=np.float64).reshape(4, 4)
            cam = Camera(
                width=int(entry["width"]), height=int(entry["height"]),
                fx=float(entry["fx"]), fy=float(entry["fy"]),
                cx=float(entry["cx"]), cy=float(entry["cy"]),
                world_to_camera=E,
            )
        except (KeyError, ValueError, TypeError) as e:
            raise FormatError(f"camera {i}: missing or malformed field ({e})") from e
        except DataError as e:
            raise FormatError(f"camera {i}: {e}") from e
        cams.append(cam)
    return cams


def save_cameras(cams: list[Camera], path) -> None:
    entries = [
        {
            "width": c.width, "height": c.height,
            "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
            "world_to_camera": [float(v) for v in np.asarray(c.world_to_camera).reshape(16)],
        }
        for c in cams
    ]
    Path(path).write_text(json.dumps(entries, indent=1))
