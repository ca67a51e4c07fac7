"""Pinhole camera with photogrammetric exterior orientation.

Rotation convention, used uniformly by every routine in this module:

    R = R_kappa(kappa) @ R_phi(phi) @ R_omega(omega)

applied to (P - C), where omega/phi/kappa rotate about the world x/y/z
axes and C is the projection center.  The camera frame is u-right,
v-down, w-forward, so image y grows downward like PNG storage:

    px = cx + f * u / w,   py = cy + f * v / w

Identity rotation therefore looks straight up the world +z axis; a level
camera pointing South (-y) with +z up is (omega, phi, kappa) =
(-pi/2, 0, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

_MIN_FORWARD = 1e-9  # w below this counts as "at or behind the projection plane"


class ResectionError(RuntimeError):
    """Resection could not produce a pose."""


class RankDeficientError(ResectionError):
    """Degenerate control-point configuration (e.g. all points collinear)."""


class DivergenceError(ResectionError):
    """Residuals kept growing even at maximum damping."""


class BehindCameraError(ValueError):
    """World point at or behind the projection plane."""


@dataclass(frozen=True)
class CameraPose:
    """Exterior orientation plus focal length.

    Positions in meters (HeightGrid frame), angles in radians, focal
    length and principal point in pixels.
    """

    x0: float
    y0: float
    z0: float
    omega_rot: float
    phi_rot: float
    kappa_rot: float
    f: float
    cx: float
    cy: float

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError("focal length must be positive")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.z0], dtype=np.float64)

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.omega_rot, self.phi_rot, self.kappa_rot)


@dataclass(frozen=True)
class GroundControlPoint:
    """One world point with its observed pixel location."""

    id: str
    X: float
    Y: float
    Z: float
    px: float
    py: float


@dataclass(frozen=True)
class GcpSet:
    points: tuple[GroundControlPoint, ...]

    def __post_init__(self):
        ids = [p.id for p in self.points]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate GCP ids")

    def __len__(self) -> int:
        return len(self.points)

    def world(self) -> np.ndarray:
        return np.array([[p.X, p.Y, p.Z] for p in self.points], dtype=np.float64)

    def pixels(self) -> np.ndarray:
        return np.array([[p.px, p.py] for p in self.points], dtype=np.float64)


@dataclass
class ResectOptions:
    estimate_f: bool = True
    max_iters: int = 100
    tol: float = 1e-12
    init_damping: float = 1e-3
    max_damping: float = 1e12


@dataclass
class ResectionResult:
    pose: CameraPose
    rmse: float
    iterations: int
    rmse_history: list[float]


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------


def rotation_matrix(omega: float, phi: float, kappa: float) -> np.ndarray:
    """World-to-camera rotation R = R_kappa @ R_phi @ R_omega."""
    co, so = math.cos(omega), math.sin(omega)
    cp, sp = math.cos(phi), math.sin(phi)
    ck, sk = math.cos(kappa), math.sin(kappa)
    r_omega = np.array([[1, 0, 0], [0, co, -so], [0, so, co]])
    r_phi = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    r_kappa = np.array([[ck, -sk, 0], [sk, ck, 0], [0, 0, 1]])
    return r_kappa @ r_phi @ r_omega


def angles_from_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Invert rotation_matrix: recover (omega, phi, kappa) from R."""
    phi = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    if abs(math.cos(phi)) < 1e-12:
        # gimbal degeneracy: fold kappa into omega
        omega = math.atan2(-R[0, 1], R[1, 1])
        kappa = 0.0
    else:
        omega = math.atan2(R[2, 1], R[2, 2])
        kappa = math.atan2(R[1, 0], R[0, 0])
    return omega, phi, kappa


def look_at_pose(
    position, target, f: float, cx: float, cy: float, up=(0.0, 0.0, 1.0)
) -> CameraPose:
    """Pose whose forward axis points from position to target.

    The image u-axis is horizontal (perpendicular to ``up``) and v points
    as far down as the geometry allows.
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ValueError("target coincides with camera position")
    w = forward / norm
    u = np.cross(w, np.asarray(up, dtype=np.float64))
    unorm = np.linalg.norm(u)
    if unorm < 1e-12:
        raise ValueError("viewing direction parallel to the up vector")
    u /= unorm
    v = np.cross(w, u)
    R = np.vstack([u, v, w])
    omega, phi, kappa = angles_from_rotation(R)
    return CameraPose(
        x0=float(position[0]),
        y0=float(position[1]),
        z0=float(position[2]),
        omega_rot=omega,
        phi_rot=phi,
        kappa_rot=kappa,
        f=f,
        cx=cx,
        cy=cy,
    )


# ---------------------------------------------------------------------------
# Projection and rays
# ---------------------------------------------------------------------------


def project(pose: CameraPose, world_point) -> tuple[float, float]:
    """Project one world point to pixel coordinates.

    Raises BehindCameraError when the point is at or behind the
    projection plane.
    """
    p = np.asarray(world_point, dtype=np.float64)
    u, v, w = pose.rotation @ (p - pose.center)
    if w <= _MIN_FORWARD:
        raise BehindCameraError(f"point {tuple(p)} has forward coordinate {w:.3g}")
    return (pose.cx + pose.f * u / w, pose.cy + pose.f * v / w)


def project_many(pose: CameraPose, world_points: np.ndarray) -> np.ndarray:
    """Project (N, 3) world points to (N, 2) pixels; behind-camera raises."""
    cam = (np.asarray(world_points, dtype=np.float64) - pose.center) @ pose.rotation.T
    if np.any(cam[:, 2] <= _MIN_FORWARD):
        raise BehindCameraError("point at or behind the projection plane")
    out = np.empty((cam.shape[0], 2), dtype=np.float64)
    out[:, 0] = pose.cx + pose.f * cam[:, 0] / cam[:, 2]
    out[:, 1] = pose.cy + pose.f * cam[:, 1] / cam[:, 2]
    return out


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray  # (3,)
    direction: np.ndarray  # (3,), unit length


def pixel_ray(pose: CameraPose, px: float, py: float) -> Ray:
    """Line of sight through a pixel: origin at the projection center."""
    return Ray(
        origin=pose.center,
        direction=pixel_rays(pose, np.array([px]), np.array([py]))[0],
    )


def pixel_rays(pose: CameraPose, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Unit directions for arrays of pixel coordinates, shape (N, 3).

    Written with fixed-order elementwise arithmetic (no BLAS dispatch) so
    scalar and batch callers are bit-identical whatever the batch size.
    """
    px = np.asarray(px, dtype=np.float64).ravel()
    py = np.asarray(py, dtype=np.float64).ravel()
    dx = px - pose.cx
    dy = py - pose.cy
    dz = np.full(px.shape, float(pose.f))
    inv_norm = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
    dx, dy, dz = dx * inv_norm, dy * inv_norm, dz * inv_norm
    R = pose.rotation
    # direction = R^T d, accumulated row by row in a fixed order
    return dx[:, None] * R[0] + dy[:, None] * R[1] + dz[:, None] * R[2]


# ---------------------------------------------------------------------------
# Resection (pose + focal length from ground control points)
# ---------------------------------------------------------------------------

_RMSE_FLOOR = 1e-12  # px; below this the fit is as exact as doubles allow
_RANK_TOL = 1e-9  # singular-value ratio of the column-normalized Jacobian


def _params_from_pose(pose: CameraPose, estimate_f: bool) -> np.ndarray:
    p = [pose.x0, pose.y0, pose.z0, pose.omega_rot, pose.phi_rot, pose.kappa_rot]
    if estimate_f:
        p.append(pose.f)
    return np.array(p, dtype=np.float64)


def _pose_from_params(p: np.ndarray, template: CameraPose, estimate_f: bool) -> CameraPose:
    return replace(
        template,
        x0=float(p[0]),
        y0=float(p[1]),
        z0=float(p[2]),
        omega_rot=float(p[3]),
        phi_rot=float(p[4]),
        kappa_rot=float(p[5]),
        f=float(p[6]) if estimate_f else template.f,
    )


def _residuals(pose: CameraPose, world: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Stacked (2N,) reprojection residuals (px then py per point)."""
    return (project_many(pose, world) - pixels).ravel()


def collinearity_jacobian(
    pose: CameraPose, world: np.ndarray, estimate_f: bool
) -> np.ndarray:
    """Closed-form Jacobian of the stacked residuals, shape (2N, 6 or 7).

    Parameter order: x0, y0, z0, omega, phi, kappa[, f].  Derived by
    differentiating px = cx + f*u/w, py = cy + f*v/w with (u, v, w) =
    R (P - C); rotation factors are differentiated term by term.
    """
    co, so = math.cos(pose.omega_rot), math.sin(pose.omega_rot)
    cp, sp = math.cos(pose.phi_rot), math.sin(pose.phi_rot)
    ck, sk = math.cos(pose.kappa_rot), math.sin(pose.kappa_rot)
    r_omega = np.array([[1, 0, 0], [0, co, -so], [0, so, co]])
    r_phi = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    r_kappa = np.array([[ck, -sk, 0], [sk, ck, 0], [0, 0, 1]])
    d_omega = np.array([[0, 0, 0], [0, -so, -co], [0, co, -so]])
    d_phi = np.array([[-sp, 0, cp], [0, 0, 0], [-cp, 0, -sp]])
    d_kappa = np.array([[-sk, -ck, 0], [ck, -sk, 0], [0, 0, 0]])

    R = r_kappa @ r_phi @ r_omega
    dR_omega = r_kappa @ r_phi @ d_omega
    dR_phi = r_kappa @ d_phi @ r_omega
    dR_kappa = d_kappa @ r_phi @ r_omega

    q = np.asarray(world, dtype=np.float64) - pose.center  # (N, 3)
    cam = q @ R.T
    u, v, w = cam[:, 0], cam[:, 1], cam[:, 2]
    if np.any(w <= _MIN_FORWARD):
        raise BehindCameraError("point at or behind the projection plane")

    n = q.shape[0]
    nparams = 7 if estimate_f else 6
    J = np.empty((2 * n, nparams), dtype=np.float64)
    f_over_w = pose.f / w

    # translations: d(cam)/dC = -R, a constant column per coordinate
    for i in range(3):
        du, dv, dw = -R[0, i], -R[1, i], -R[2, i]
        J[0::2, i] = f_over_w * (du - u / w * dw)
        J[1::2, i] = f_over_w * (dv - v / w * dw)
    # rotation angles
    for i, dR in enumerate((dR_omega, dR_phi, dR_kappa)):
        dcam = q @ dR.T
        du, dv, dw = dcam[:, 0], dcam[:, 1], dcam[:, 2]
        J[0::2, 3 + i] = f_over_w * (du - u / w * dw)
        J[1::2, 3 + i] = f_over_w * (dv - v / w * dw)
    if estimate_f:
        J[0::2, 6] = u / w
        J[1::2, 6] = v / w
    return J


def _check_rank(J: np.ndarray) -> None:
    norms = np.linalg.norm(J, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("a parameter has no influence on the residuals")
    s = np.linalg.svd(J / norms, compute_uv=False)
    if s[-1] <= _RANK_TOL * s[0]:
        raise RankDeficientError(
            f"degenerate control-point configuration (conditioning {s[0] / s[-1]:.2e})"
        )


def resect(
    gcps: GcpSet, initial: CameraPose, options: ResectOptions | None = None
) -> ResectionResult:
    """Estimate pose (and optionally focal length) from control points.

    Gauss-Newton on the stacked reprojection residuals with
    Levenberg-style damping: the factor grows 10x when a trial step
    increases the RMSE and shrinks 10x on acceptance.  Stops when the
    relative RMSE change drops below options.tol or max_iters is hit.
    """
    options = options or ResectOptions()
    need = 5 if options.estimate_f else 4
    if len(gcps) < need:
        raise ValueError(
            f"insufficient control points: {len(gcps)} given, {need} required"
            f" ({'with' if options.estimate_f else 'without'} focal estimation)"
        )

    world = gcps.world()
    pixels = gcps.pixels()
    nobs = 2 * len(gcps)

    params = _params_from_pose(initial, options.estimate_f)
    res = _residuals(initial, world, pixels)  # precondition: all in front
    rmse = float(np.sqrt(res @ res / nobs))
    history = [rmse]

    damping = options.init_damping
    iterations = 0
    for iterations in range(1, options.max_iters + 1):
        pose = _pose_from_params(params, initial, options.estimate_f)
        J = collinearity_jacobian(pose, world, options.estimate_f)
        _check_rank(J)
        jtj = J.T @ J
        grad = J.T @ res
        scale = np.diag(np.diag(jtj))

        last_failure: Exception | None = None
        while True:
            try:
                delta = np.linalg.solve(jtj + damping * scale, -grad)
                trial_pose = _pose_from_params(
                    params + delta, initial, options.estimate_f
                )
                trial_res = _residuals(trial_pose, world, pixels)
            except (np.linalg.LinAlgError, BehindCameraError) as exc:
                last_failure = exc
                damping *= 10.0
                if damping > options.max_damping:
                    if isinstance(exc, BehindCameraError):
                        raise BehindCameraError(
                            "control point moved behind the camera during iteration"
                        ) from exc
                    raise RankDeficientError("normal equations are singular") from exc
                continue
            trial_rmse = float(np.sqrt(trial_res @ trial_res / nobs))
            if trial_rmse <= rmse:
                break
            damping *= 10.0
            if damping > options.max_damping:
                if isinstance(last_failure, BehindCameraError):
                    raise BehindCameraError(
                        "control point moved behind the camera during iteration"
                    ) from last_failure
                raise DivergenceError(
                    f"residuals kept growing at maximum damping (rmse {rmse:.4g} px)"
                )

        damping = max(damping / 10.0, 1e-15)
        params = params + delta
        prev_rmse, rmse, res = rmse, trial_rmse, trial_res
        history.append(rmse)
        if abs(prev_rmse - rmse) <= options.tol * max(prev_rmse, 1e-30):
            break
        if rmse <= _RMSE_FLOOR:
            break

    final = _pose_from_params(params, initial, options.estimate_f)
    return ResectionResult(pose=final, rmse=rmse, iterations=iterations, rmse_history=history)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_gcps(path) -> GcpSet:
    """Parse a GCP file: one `id X Y Z px py` per line, `#` comments."""
    points = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 6:
                raise ValueError(
                    f"{path}:{lineno}: expected 'id X Y Z px py', got {len(parts)} fields"
                )
            try:
                nums = [float(tok) for tok in parts[1:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric coordinate") from None
            points.append(GroundControlPoint(parts[0], *nums))
    return GcpSet(tuple(points))


def save_pose_file(path, pose: CameraPose, rmse: float | None = None) -> None:
    """Write a pose as key=value text (angles in radians, full precision)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"x0={pose.x0!r}\n")
        fh.write(f"y0={pose.y0!r}\n")
        fh.write(f"z0={pose.z0!r}\n")
        fh.write(f"omega={pose.omega_rot!r}\n")
        fh.write(f"phi={pose.phi_rot!r}\n")
        fh.write(f"kappa={pose.kappa_rot!r}\n")
        fh.write(f"f={pose.f!r}\n")
        fh.write(f"cx={pose.cx!r}\n")
        fh.write(f"cy={pose.cy!r}\n")
        if rmse is not None:
            fh.write(f"rmse={rmse!r}\n")


def load_pose_file(path) -> tuple[CameraPose, float | None]:
    """Read a pose file written by save_pose_file; returns (pose, rmse)."""
    entries: dict[str, float] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = body.split("=", 1)
            try:
                entries[key.strip()] = float(val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value {val!r}") from None
    required = ("x0", "y0", "z0", "omega", "phi", "kappa", "f", "cx", "cy")
    missing = [k for k in required if k not in entries]
    if missing:
        raise ValueError(f"{path}: missing pose keys {missing}")
    pose = CameraPose(
        x0=entries["x0"],
        y0=entries["y0"],
        z0=entries["z0"],
        omega_rot=entries["omega"],
        phi_rot=entries["phi"],
        kappa_rot=entries["kappa"],
        f=entries["f"],
        cx=entries["cx"],
        cy=entries["cy"],
    )
    return pose, entries.get("rmse")
