"""Procedural synthetic sequences with exact ground-truth depth.

Rendering is nearest-hit ray casting with flat albedo, so a static surface
point has the same intensity in every frame it is visible in.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyScene, InvalidSpec
from .geometry import CameraIntrinsics, EulerPose, Pose, euler_to_pose, pixel_grid

BACKGROUND = 0.0
_HIT_EPS = 1e-9


@dataclass(frozen=True)
class Texture:
    kind: str = "uniform"  # uniform | checker | value_noise
    value: float = 0.5
    cell_size: float = 0.5
    scale: float = 0.5
    octaves: int = 3
    contrast: float = 0.6

    def __post_init__(self):
        if self.kind not in ("uniform", "checker", "value_noise"):
            raise InvalidSpec(f"unknown texture kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class Primitive:
    """A textured plane (rectangle), box or sphere placed by ``pose`` (world from local).

    ``size`` is (width, height) for planes in the local xy plane, (sx, sy, sz)
    for boxes and (radius,) for spheres. ``velocity`` is in metres per frame
    and only used for the dynamic primitive.
    """

    kind: str
    pose: Pose
    size: tuple
    texture: Texture = field(default_factory=Texture)
    velocity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        expected = {"plane": 2, "box": 3, "sphere": 1}
        if self.kind not in expected:
            raise InvalidSpec(f"unknown primitive kind {self.kind!r}")
        if len(self.size) != expected[self.kind] or min(self.size) <= 0:
            raise InvalidSpec(f"{self.kind} needs {expected[self.kind]} positive sizes")

    def at_frame(self, f: int) -> Pose:
        shift = np.asarray(self.velocity, dtype=np.float64) * f
        return Pose(self.pose.rotation, self.pose.translation + shift)


@dataclass(eq=False)
class SceneSpec:
    primitives: list
    trajectory: list
    intrinsics: CameraIntrinsics
    frames: int
    seed: int = 0
    dynamic: Primitive | None = None
    name: str = "custom"

    def validate(self) -> None:
        if len(self.trajectory) != self.frames:
            raise InvalidSpec(
                f"trajectory has {len(self.trajectory)} poses but frames = {self.frames}"
            )
        if self.frames < 1:
            raise InvalidSpec("frames must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must fit in 64 bits")
        prims = list(self.primitives) + ([self.dynamic] if self.dynamic else [])
        for f, cam in enumerate(self.trajectory):
            cam_from_world = cam.inverse()
            for i, p in enumerate(prims):
                centre = cam_from_world.apply(p.at_frame(f).translation)
                if p.kind == "plane" or centre[2] > 0:
                    continue
                raise InvalidSpec(f"primitive {i} is behind the camera in frame {f}")


@dataclass(eq=False)
class Frame:
    image: np.ndarray
    gt_depth: np.ndarray | None
    cam_to_world: Pose
    dynamic_mask: np.ndarray | None = None
    prior_depth: np.ndarray | None = None


@dataclass(eq=False)
class Sequence:
    frames: list
    intrinsics: CameraIntrinsics
    name: str = ""

    def __len__(self):
        return len(self.frames)


# --- gradient noise -------------------------------------------------------

_GRADIENTS = np.array(
    [
        [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
        [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
        [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
    ],
    dtype=np.float64,
)


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


class GradientNoise:
    """Seeded 3-D lattice gradient noise (Perlin style), roughly in [-1, 1]."""

    def __init__(self, seed: int):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(256)
        self._perm = np.concatenate([perm, perm]).astype(np.intp)
        self._grad = rng.integers(0, 12, size=256).astype(np.intp)

    def __call__(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        cell = np.floor(p)
        frac = p - cell
        c = cell.astype(np.int64) & 255
        w = _fade(frac)
        perm = self._perm
        out = 0.0
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    h = perm[perm[perm[c[..., 0] + dx] + c[..., 1] + dy] + c[..., 2] + dz]
                    g = _GRADIENTS[self._grad[h]]
                    off = frac - np.array([dx, dy, dz], dtype=np.float64)
                    dot = np.einsum("...i,...i->...", g, off)
                    wx = w[..., 0] if dx else 1 - w[..., 0]
                    wy = w[..., 1] if dy else 1 - w[..., 1]
                    wz = w[..., 2] if dz else 1 - w[..., 2]
                    out = out + wx * wy * wz * dot
        return out


def sub_seed(seed: int, *tags) -> int:
    """Stable 64-bit child seed for a parent seed and a tuple of tags."""
    h = hashlib.sha256(repr((seed,) + tags).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _albedo(tex: Texture, local: np.ndarray, seed: int) -> np.ndarray:
    if tex.kind == "uniform":
        return np.full(local.shape[:-1], float(tex.value))
    if tex.kind == "checker":
        idx = np.floor(local / tex.cell_size).astype(np.int64).sum(axis=-1)
        lo, hi = tex.value - tex.contrast / 2, tex.value + tex.contrast / 2
        return np.clip(np.where(idx % 2 == 0, lo, hi), 0.0, 1.0)
    noise = GradientNoise(seed)
    total = np.zeros(local.shape[:-1])
    amp, norm = 1.0, 0.0
    for o in range(tex.octaves):
        # per-octave offset decorrelates lattice alignment between octaves
        total += amp * noise(local * (2.0**o / tex.scale) + 17.31 * o)
        norm += amp
        amp *= 0.5
    return np.clip(tex.value + tex.contrast * total / norm, 0.0, 1.0)


# --- ray casting ----------------------------------------------------------


def _intersect(kind: str, size, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Ray parameter of the first hit (inf on miss); rays are o + t*d, o is (3,)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "plane":
            t = -o[2] / d[..., 2]
            hit = t[..., None] * d + o
            inside = (np.abs(hit[..., 0]) <= size[0] / 2) & (np.abs(hit[..., 1]) <= size[1] / 2)
            return np.where(inside & (t > _HIT_EPS), t, np.inf)
        if kind == "box":
            half = np.asarray(size, dtype=np.float64) / 2
            t1 = (-half - o) / d
            t2 = (half - o) / d
            tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
            tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
            t = np.where(tmin > _HIT_EPS, tmin, tmax)
            return np.where((tmin <= tmax) & (t > _HIT_EPS), t, np.inf)
        r = size[0]
        a = np.einsum("...i,...i->...", d, d)
        b = 2 * d @ o
        c = o @ o - r * r
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = np.where(t0 > _HIT_EPS, t0, t1)
        return np.where((disc >= 0) & (t > _HIT_EPS), t, np.inf)


def render_frame(spec: SceneSpec, f: int):
    """Ray-cast frame ``f``: returns (image, depth, hit_id) with hit_id -1 on miss.

    The dynamic primitive, when present, has id ``len(spec.primitives)``.
    """
    k = spec.intrinsics
    cam = spec.trajectory[f]
    u, v = pixel_grid(k)
    dirs_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    # t along these rays is z-depth in the camera frame
    dirs = dirs_cam @ cam.rotation.T
    origin = cam.translation

    prims = list(spec.primitives) + ([spec.dynamic] if spec.dynamic else [])
    best = np.full(k.shape, np.inf)
    hit_id = np.full(k.shape, -1, dtype=np.int64)
    poses = []
    for i, p in enumerate(prims):
        pose = p.at_frame(f)
        poses.append(pose)
        rt = pose.rotation.T
        o_l = rt @ (origin - pose.translation)
        d_l = dirs @ rt.T
        t = _intersect(p.kind, p.size, o_l, d_l)
        closer = t < best
        best = np.where(closer, t, best)
        hit_id = np.where(closer, i, hit_id)

    image = np.full(k.shape, BACKGROUND)
    for i, p in enumerate(prims):
        sel = hit_id == i
        if not sel.any():
            continue
        pts = origin + best[sel][:, None] * dirs[sel]
        local = (pts - poses[i].translation) @ poses[i].rotation
        image[sel] = _albedo(p.texture, local, sub_seed(spec.seed, "texture", i))

    depth = np.where(hit_id >= 0, best, 0.0)
    return image, depth, hit_id


def generate(spec: SceneSpec) -> Sequence:
    spec.validate()
    dyn_id = len(spec.primitives) if spec.dynamic is not None else None
    frames = []
    for f in range(spec.frames):
        image, depth, hit_id = render_frame(spec, f)
        if not (hit_id >= 0).any():
            raise EmptyScene(f"frame {f} sees no geometry")
        mask = (hit_id == dyn_id) if dyn_id is not None else np.zeros(hit_id.shape, bool)
        frames.append(
            Frame(
                image=image,
                gt_depth=depth.astype(np.float32),
                cam_to_world=spec.trajectory[f],
                dynamic_mask=mask,
            )
        )
    return Sequence(frames=frames, intrinsics=spec.intrinsics, name=spec.name)


# --- standard suite -------------------------------------------------------

SUITE_INTRINSICS = CameraIntrinsics(fx=320.0, fy=320.0, cx=160.0, cy=120.0, width=320, height=240)
BASELINE = 0.3
ROOM_FLOOR = 2.5  # floor height below the camera path (image y points down)


def _place(x, y, z, yaw=0.0, pitch=0.0, roll=0.0) -> Pose:
    return euler_to_pose(EulerPose([yaw, pitch, roll], [x, y, z]))


def _noise(scale: float, value: float = 0.5, contrast: float = 1.0, octaves: int = 3) -> Texture:
    return Texture("value_noise", value=value, scale=scale, octaves=octaves, contrast=contrast)


def _linear_trajectory(frames: int, step: np.ndarray, start: np.ndarray) -> list:
    return [Pose(np.eye(3), start + f * step) for f in range(frames)]


def _room(texture_fn, poster: Texture | None = None) -> list:
    # The camera path lies inside the box, so every view sees a closed shell of
    # walls, floor and ceiling without free-standing occluders. The poster sits
    # 0.1 m proud of the back wall and is textureless on purpose: matching is
    # ambiguous there while the single-view prior is not.
    return [
        Primitive("box", _place(0.0, ROOM_FLOOR - 2.5, 2.0), (7.0, 5.0, 10.0), texture_fn(0.35)),
        Primitive("box", _place(0.5, 0.3, 6.95), (1.2, 0.9, 0.2), poster or Texture("uniform", value=0.8)),
    ]


def _textured_translate(seed: int) -> SceneSpec:
    frames = 10
    direction = np.array([0.96, 0.0, 0.28])
    step = BASELINE * direction / np.linalg.norm(direction)
    start = -step * (frames - 1) / 2
    return SceneSpec(
        primitives=_room(_noise),
        trajectory=_linear_trajectory(frames, step, start),
        intrinsics=SUITE_INTRINSICS,
        frames=frames,
        seed=seed,
        name="textured_translate",
    )


def _low_texture(seed: int) -> SceneSpec:
    spec = _textured_translate(seed)
    flat = lambda scale, value=0.5, **_: Texture("uniform", value=value)  # noqa: E731
    return replace(spec, primitives=_room(flat), name="low_texture")


def _dynamic_car(seed: int) -> SceneSpec:
    frames = 8
    step = np.array([BASELINE, 0.0, 0.0])
    start = -step * (frames - 1) / 2
    # the car overtakes the camera: its motion is not explainable by any static depth
    car = Primitive(
        "box",
        _place(-1.4, ROOM_FLOOR - 0.6, 5.0),
        (2.0, 1.2, 1.4),
        _noise(0.15),
        velocity=(2.0 * BASELINE, 0.0, 0.0),
    )
    # a parked box of the same class stays put
    statics = _room(_noise)[:1] + [
        Primitive("box", _place(2.2, ROOM_FLOOR - 0.9, 6.3, pitch=-0.2), (1.0, 1.8, 1.0), _noise(0.25, 0.4)),
    ]
    return SceneSpec(
        primitives=statics,
        trajectory=_linear_trajectory(frames, step, start),
        intrinsics=SUITE_INTRINSICS,
        frames=frames,
        seed=seed,
        dynamic=car,
        name="dynamic_car",
    )


def _stopped(seed: int) -> SceneSpec:
    spec = _textured_translate(seed)
    still = [spec.trajectory[0]] * spec.frames
    return replace(spec, trajectory=still, name="stopped")


_SUITE = {
    "textured_translate": _textured_translate,
    "low_texture": _low_texture,
    "dynamic_car": _dynamic_car,
    "stopped": _stopped,
}


def standard_suite(seed: int = 0) -> dict:
    """Named scene specs: textured_translate, low_texture, dynamic_car, stopped."""
    return {name: build(seed) for name, build in _SUITE.items()}


def suite_spec(name: str, seed: int = 0) -> SceneSpec:
    try:
        return _SUITE[name](seed)
    except KeyError:
        raise InvalidSpec(f"unknown suite scene {name!r}; choose from {sorted(_SUITE)}") from None


# --- declarative specs ----------------------------------------------------


def _pose_from_dict(d: dict) -> Pose:
    if "rotation" in d:
        return Pose(np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3), d["translation"])
    return euler_to_pose(EulerPose(d.get("angles", [0.0, 0.0, 0.0]), d.get("translation", [0, 0, 0])))


def _primitive_from_dict(d: dict) -> Primitive:
    return Primitive(
        kind=d["kind"],
        pose=_pose_from_dict(d.get("pose", {})),
        size=tuple(d["size"]),
        texture=Texture(**d.get("texture", {})),
        velocity=tuple(d.get("velocity", (0.0, 0.0, 0.0))),
    )


def spec_from_dict(d: dict) -> SceneSpec:
    """Build a SceneSpec from a JSON-style document.

    Either ``{"suite": name, "seed": s}`` or an explicit description with
    ``intrinsics``, ``primitives``, optional ``dynamic`` and a ``trajectory``
    list of poses (``{"angles", "translation"}`` or ``{"rotation", "translation"}``).
    """
    try:
        if "suite" in d:
            return suite_spec(d["suite"], int(d.get("seed", 0)))
        traj = [_pose_from_dict(p) for p in d["trajectory"]]
        spec = SceneSpec(
            primitives=[_primitive_from_dict(p) for p in d["primitives"]],
            trajectory=traj,
            intrinsics=CameraIntrinsics(**d["intrinsics"]),
            frames=int(d.get("frames", len(traj))),
            seed=int(d.get("seed", 0)),
            dynamic=_primitive_from_dict(d["dynamic"]) if d.get("dynamic") else None,
            name=d.get("name", "custom"),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidSpec(f"malformed scene spec: {exc}") from exc
    spec.validate()
    return spec
