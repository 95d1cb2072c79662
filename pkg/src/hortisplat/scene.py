"""Procedural crop-row scenes and an exact ray-casting RGBD + label sensor."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .classes import SemanticClass
from .geometry import CameraModel, ConfigError, invert_pose, is_rigid

SCENE_FORMAT_VERSION = 1

SHAPES = ("sphere", "ellipsoid", "cylinder", "disc")

PALETTE = {
    SemanticClass.FRUIT: (0.80, 0.12, 0.08),
    SemanticClass.LEAF: (0.20, 0.55, 0.16),
    SemanticClass.BACKGROUND: (0.46, 0.37, 0.26),
}
MISS_COLOR = (0.0, 0.0, 0.0)
STEM_RADIUS = 0.008


@dataclass(frozen=True)
class SceneConfig:
    n_rows: int = 1
    plants_per_row: int = 5
    row_spacing: float = 1.5
    plant_spacing: float = 0.5
    fruit_radius_range: tuple[float, float] = (0.028, 0.038)
    fruits_per_plant_range: tuple[int, int] = (2, 2)
    leaf_count_range: tuple[int, int] = (12, 18)
    plant_height_range: tuple[float, float] = (0.55, 0.75)
    leaf_radius_range: tuple[float, float] = (0.04, 0.07)
    fruit_gap: float = 0.03
    stem_class: int = int(SemanticClass.LEAF)
    ground: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("fruit_radius_range", "fruits_per_plant_range", "leaf_count_range",
                     "plant_height_range", "leaf_radius_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: low > high")
            object.__setattr__(self, name, (lo, hi))
        if self.row_spacing <= 0 or self.plant_spacing <= 0:
            raise ConfigError("spacings must be positive")
        if self.n_rows < 1 or self.plants_per_row < 1:
            raise ConfigError("need at least one row and one plant per row")
        if self.fruits_per_plant_range[0] < 0 or self.leaf_count_range[0] < 0:
            raise ConfigError("counts must be non-negative")
        if self.fruit_radius_range[0] <= 0 or self.plant_height_range[0] <= 0:
            raise ConfigError("sizes must be positive")
        if self.stem_class not in (int(c) for c in SemanticClass):
            raise ConfigError("unknown stem class")


@dataclass(frozen=True)
class Primitive:
    """One analytic solid or surface.

    ``rotation`` is the local frame (columns are local axes) flattened row-major.
    ``size`` depends on ``shape``: sphere ``(r,)``, ellipsoid ``(a, b, c)``,
    cylinder ``(r, h)`` with ``center`` at the base and the axis along local z,
    disc ``(r,)`` with normal along local z.
    """

    shape: str
    center: tuple[float, float, float]
    size: tuple[float, ...]
    rotation: tuple[float, ...]
    class_id: int
    instance_id: int
    color: tuple[float, float, float]
    plant_id: int = -1

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=float).reshape(3, 3)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class RowGeometry:
    row_id: int
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    height_extent: tuple[float, float]

    @property
    def axis(self) -> np.ndarray:
        d = np.subtract(self.end, self.start)
        return d / np.linalg.norm(d)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))


@dataclass(frozen=True)
class Scene:
    primitives: tuple[Primitive, ...]
    rows: tuple[RowGeometry, ...]
    config: SceneConfig = field(default_factory=SceneConfig)

    @property
    def fruits(self) -> list[Primitive]:
        return [p for p in self.primitives if p.class_id == SemanticClass.FRUIT]

    def fruits_in_row(self, row_id: int) -> list[Primitive]:
        y = self.rows[row_id].start[1]
        half = self.config.row_spacing / 2
        return [p for p in self.fruits if abs(p.center[1] - y) < half]

    def plant_count(self) -> int:
        return len({p.plant_id for p in self.primitives if p.plant_id >= 0})

    def bounds(self, margin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([0.0, -self.config.row_spacing / 2, 0.0])
        hi = np.array([
            self.config.plant_spacing * self.config.plants_per_row,
            (self.config.n_rows - 0.5) * self.config.row_spacing,
            max(r.height_extent[1] for r in self.rows),
        ])
        return lo - margin, hi + margin


@dataclass
class GroundTruthFrame:
    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W), far plane where nothing was hit
    true_labels: np.ndarray  # (H, W) int
    instance_ids: np.ndarray  # (H, W) int, 0 = not a fruit
    w2c: np.ndarray
    camera: CameraModel

    @property
    def valid(self) -> np.ndarray:
        return self.depth < self.camera.far


def _rot_from_z(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    z = z / np.linalg.norm(z)
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def _jitter(rng, base) -> tuple[float, float, float]:
    k = rng.uniform(0.9, 1.1)
    return tuple(float(v) for v in np.clip(np.asarray(base) * k, 0.0, 1.0))


def _point_disc_distance(p, center, normal, radius) -> float:
    d = p - center
    h = float(d @ normal)
    inplane = d - h * normal
    r = np.linalg.norm(inplane)
    if r <= radius:
        return abs(h)
    return math.hypot(h, r - radius)


def generate_scene(config: SceneConfig) -> Scene:
    """Build ``n_rows x plants_per_row`` plants from stems, leaves and fruits.

    Rows run along +x at ``y = row * row_spacing``. Everything is driven by
    ``config.rng_seed``, so the same config yields an identical primitive list.
    """
    rng = np.random.default_rng(config.rng_seed)
    prims: list[Primitive] = []
    rows: list[RowGeometry] = []
    next_fruit_id = 1
    plant_id = 0
    hmax_global = 0.0
    for row in range(config.n_rows):
        y0 = row * config.row_spacing
        hmax = 0.0
        for k in range(config.plants_per_row):
            x0 = (k + 0.5) * config.plant_spacing
            h = float(rng.uniform(*config.plant_height_range))
            hmax = max(hmax, h)
            yaw = float(rng.uniform(0.0, 2 * math.pi))
            prims.append(Primitive(
                "cylinder", (x0, y0, 0.0), (STEM_RADIUS, h), tuple(np.eye(3).ravel()),
                config.stem_class, 0, _jitter(rng, PALETTE[SemanticClass(config.stem_class)]),
                plant_id,
            ))

            leaves = []
            n_leaves = int(rng.integers(config.leaf_count_range[0], config.leaf_count_range[1] + 1))
            for i in range(n_leaves):
                az = yaw + 2 * math.pi * i / max(n_leaves, 1) + rng.uniform(-0.4, 0.4)
                radius = float(rng.uniform(*config.leaf_radius_range))
                dist = STEM_RADIUS + radius * rng.uniform(0.6, 1.0)
                zl = float(rng.uniform(0.3 * h, 0.98 * h))
                c = np.array([x0 + dist * math.cos(az), y0 + dist * math.sin(az), zl])
                tilt = rng.uniform(math.radians(15), math.radians(60))
                normal = np.array([math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az), math.cos(tilt)])
                R = _rot_from_z(normal)
                color = _jitter(rng, PALETTE[SemanticClass.LEAF])
                if i % 3 == 2:
                    prims.append(Primitive("ellipsoid", tuple(c), (radius, 0.6 * radius, 0.004),
                                           tuple(R.ravel()), int(SemanticClass.LEAF), 0, color, plant_id))
                else:
                    prims.append(Primitive("disc", tuple(c), (radius,), tuple(R.ravel()),
                                           int(SemanticClass.LEAF), 0, color, plant_id))
                leaves.append((c, normal, radius))

            n_fruits = int(rng.integers(config.fruits_per_plant_range[0], config.fruits_per_plant_range[1] + 1))
            placed: list[tuple[np.ndarray, float]] = [
                (p.c, p.size[0]) for p in prims if p.class_id == SemanticClass.FRUIT
            ]
            for _ in range(n_fruits):
                for _attempt in range(200):
                    fr = float(rng.uniform(*config.fruit_radius_range))
                    az = float(rng.uniform(0.0, 2 * math.pi))
                    dist = STEM_RADIUS + fr + float(rng.uniform(0.005, 0.03))
                    zf = float(rng.uniform(max(0.3 * h, fr + 0.05), max(0.85 * h, fr + 0.06)))
                    c = np.array([x0 + dist * math.cos(az), y0 + dist * math.sin(az), zf])
                    if any(np.linalg.norm(c - pc) < fr + pr + config.fruit_gap for pc, pr in placed):
                        continue
                    if any(_point_disc_distance(c, lc, ln, lr) < fr + 0.004 for lc, ln, lr in leaves):
                        continue
                    break
                else:
                    continue
                prims.append(Primitive("sphere", tuple(c), (fr,), tuple(np.eye(3).ravel()),
                                       int(SemanticClass.FRUIT), next_fruit_id,
                                       _jitter(rng, PALETTE[SemanticClass.FRUIT]), plant_id))
                placed.append((c, fr))
                next_fruit_id += 1
            plant_id += 1
        hmax_global = max(hmax_global, hmax)
        rows.append(RowGeometry(row, (0.0, y0, 0.0),
                                (config.plants_per_row * config.plant_spacing, y0, 0.0), (0.0, hmax)))
    if config.ground:
        prims.append(Primitive("disc", (config.plants_per_row * config.plant_spacing / 2,
                                        (config.n_rows - 1) * config.row_spacing / 2, 0.0),
                               (config.plants_per_row * config.plant_spacing + config.n_rows * config.row_spacing + 10.0,),
                               tuple(np.eye(3).ravel()), int(SemanticClass.BACKGROUND), 0,
                               PALETTE[SemanticClass.BACKGROUND], -1))
    return Scene(tuple(prims), tuple(rows), config)


# --- ray intersection -----------------------------------------------------------

def _first_root(a, b, c, tmin):
    """Smallest root of a t^2 + b t + c >= tmin, inf where none."""
    disc = b * b - 4 * a * c
    out = np.full(a.shape, np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = (-b - sq) / (2 * a)
    t2 = (-b + sq) / (2 * a)
    out = np.where(ok & (t1 >= tmin), t1, out)
    out = np.where(ok & (t1 < tmin) & (t2 >= tmin), t2, out)
    return out


def intersect(prim: Primitive, origin: np.ndarray, dirs: np.ndarray, tmin: float) -> np.ndarray:
    """Ray parameter of the first hit ``>= tmin`` for rays ``origin + t * dirs``."""
    R = prim.R
    o = (origin - prim.c) @ R
    d = dirs @ R
    if prim.shape in ("sphere", "ellipsoid"):
        s = np.array(prim.size * 3 if prim.shape == "sphere" else prim.size, dtype=float)[:3]
        o = o / s
        d = d / s
        a = np.einsum("ij,ij->i", d, d)
        b = 2 * (d @ o)
        c = np.full(a.shape, o @ o - 1.0)
        return _first_root(a, b, c, tmin)
    if prim.shape == "disc":
        r = prim.size[0]
        dz = d[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -o[2] / dz
        p = o[None, :2] + t[:, None] * d[:, :2]
        hit = np.isfinite(t) & (t >= tmin) & (np.einsum("ij,ij->i", p, p) <= r * r)
        return np.where(hit, t, np.inf)
    if prim.shape == "cylinder":
        r, h = prim.size
        a = d[:, 0] ** 2 + d[:, 1] ** 2
        b = 2 * (o[0] * d[:, 0] + o[1] * d[:, 1])
        c = np.full(a.shape, o[0] ** 2 + o[1] ** 2 - r * r)
        best = np.full(a.shape, np.inf)
        disc = b * b - 4 * a * c
        good = (a > 1e-18) & (disc >= 0)
        sq = np.sqrt(np.where(good, disc, 0.0))
        aa = np.where(good, a, 1.0)
        for t in ((-b - sq) / (2 * aa), (-b + sq) / (2 * aa)):
            z = o[2] + t * d[:, 2]
            ok = good & (t >= tmin) & (z >= 0) & (z <= h)
            best = np.where(ok & (t < best), t, best)
        dz = d[:, 2]
        for zc in (0.0, h):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (zc - o[2]) / dz
            px = o[0] + t * d[:, 0]
            py = o[1] + t * d[:, 1]
            ok = np.isfinite(t) & (t >= tmin) & (px * px + py * py <= r * r)
            best = np.where(ok & (t < best), t, best)
        return best
    raise ValueError(f"unknown shape {prim.shape!r}")


def surface_residual(prim: Primitive, pts: np.ndarray) -> np.ndarray:
    """Distance-like residual of points to the primitive's surface (0 on it)."""
    p = (np.asarray(pts, dtype=float) - prim.c) @ prim.R
    if prim.shape == "sphere":
        return np.abs(np.linalg.norm(p, axis=-1) - prim.size[0])
    if prim.shape == "ellipsoid":
        q = p / np.asarray(prim.size)
        return np.abs(np.linalg.norm(q, axis=-1) - 1.0) * min(prim.size)
    if prim.shape == "disc":
        r = np.linalg.norm(p[..., :2], axis=-1)
        return np.abs(p[..., 2]) + np.maximum(r - prim.size[0], 0.0)
    if prim.shape == "cylinder":
        r, h = prim.size
        rad = np.linalg.norm(p[..., :2], axis=-1)
        side = np.abs(rad - r) + np.maximum(-p[..., 2], 0) + np.maximum(p[..., 2] - h, 0)
        cap = np.minimum(np.abs(p[..., 2]), np.abs(p[..., 2] - h)) + np.maximum(rad - r, 0)
        return np.minimum(side, cap)
    raise ValueError(prim.shape)


def _cast(scene: Scene, w2c: np.ndarray, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    c2w = invert_pose(w2c)
    origin = c2w[:3, 3]
    rays = cam.camera_rays().reshape(-1, 3) @ c2w[:3, :3].T
    depth = np.full(rays.shape[0], np.inf)
    owner = np.full(rays.shape[0], -1, dtype=np.int64)
    for i, prim in enumerate(scene.primitives):
        t = intersect(prim, origin, rays, cam.near)
        closer = t < depth
        depth[closer] = t[closer]
        owner[closer] = i
    miss = depth > cam.far
    owner[miss] = -1
    depth[miss] = cam.far
    return depth, owner


def render_ground_truth(scene: Scene, w2c: np.ndarray, cam: CameraModel) -> GroundTruthFrame:
    """Ray-cast every pixel against every primitive; keep the nearest hit in [near, far]."""
    if not is_rigid(w2c):
        raise ValueError("camera pose is not a rigid transform")
    depth, owner = _cast(scene, w2c, cam)
    palette = np.array([p.color for p in scene.primitives] + [MISS_COLOR], dtype=float)
    cls = np.array([p.class_id for p in scene.primitives] + [int(SemanticClass.BACKGROUND)], dtype=np.int64)
    inst = np.array([p.instance_id for p in scene.primitives] + [0], dtype=np.int64)
    H, W = cam.shape
    return GroundTruthFrame(
        color=palette[owner].reshape(H, W, 3),
        depth=depth.reshape(H, W),
        true_labels=cls[owner].reshape(H, W),
        instance_ids=inst[owner].reshape(H, W),
        w2c=np.array(w2c, dtype=float),
        camera=cam,
    )


def pixel_owners(scene: Scene, w2c: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Index of the primitive seen by each pixel (-1 for misses)."""
    return _cast(scene, w2c, cam)[1].reshape(cam.shape)


# --- ground truth fruit cloud ---------------------------------------------------

def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (3 - math.sqrt(5)) * i
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass
class FruitCloud:
    points: np.ndarray
    instance_ids: np.ndarray
    volumes: np.ndarray
    count: int

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())


def fruit_volume(prim: Primitive) -> float:
    if prim.shape == "sphere":
        return 4.0 / 3.0 * math.pi * prim.size[0] ** 3
    if prim.shape == "ellipsoid":
        a, b, c = prim.size
        return 4.0 / 3.0 * math.pi * a * b * c
    raise ValueError(f"{prim.shape} is not a fruit shape")


def ground_truth_fruit_cloud(scene: Scene, surface_density: float = 1e5,
                             row_id: int | None = None) -> FruitCloud:
    """Fibonacci-lattice samples on fruit surfaces plus analytic volumes."""
    if surface_density <= 0:
        raise ValueError("surface density must be positive")
    fruits = scene.fruits if row_id is None else scene.fruits_in_row(row_id)
    pts, ids, vols = [], [], []
    for f in fruits:
        r = f.size[0]
        n = max(4, int(math.ceil(surface_density * 4 * math.pi * r * r)))
        pts.append(f.c + r * fibonacci_sphere(n))
        ids.append(np.full(n, f.instance_id, dtype=np.int64))
        vols.append(fruit_volume(f))
    if not fruits:
        return FruitCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros(0), 0)
    return FruitCloud(np.concatenate(pts), np.concatenate(ids), np.array(vols), len(fruits))


# --- serialization --------------------------------------------------------------

def scene_to_dict(scene: Scene) -> dict:
    return {
        "format": "hortisplat.scene",
        "version": SCENE_FORMAT_VERSION,
        "config": asdict(scene.config),
        "rows": [asdict(r) for r in scene.rows],
        "primitives": [asdict(p) for p in scene.primitives],
    }


def scene_from_dict(doc: dict) -> Scene:
    if doc.get("version") != SCENE_FORMAT_VERSION:
        raise ValueError(f"unsupported scene version {doc.get('version')}")
    cfg = doc["config"]
    cfg = SceneConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()})
    rows = tuple(RowGeometry(r["row_id"], tuple(r["start"]), tuple(r["end"]), tuple(r["height_extent"]))
                 for r in doc["rows"])
    prims = tuple(
        Primitive(p["shape"], tuple(p["center"]), tuple(p["size"]), tuple(p["rotation"]),
                  p["class_id"], p["instance_id"], tuple(p["color"]), p.get("plant_id", -1))
        for p in doc["primitives"]
    )
    return Scene(prims, rows, cfg)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh, indent=1)


def load_scene(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))
