"""Synthetic grasp-sequence renderer.

Each run shows one colored parametric object against a textured gray
background, seen from the five fingertip cameras while the hand closes.
Object image coverage grows strictly with grasp progress; the growth rate
per camera comes from the fingertip-to-object distance of the actual
finger kinematics.  An optional gain-distortion stage washes out colors
once coverage passes 75%, imitating a camera losing color fidelity at
close range.  Everything derives from one seed, so identical parameters
reproduce the dataset byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import hand
from .. import imageio

IMAGE_WIDTH, IMAGE_HEIGHT = 88, 72
MEAN_FRAMES = 6.47  # average frames per run in generated data
DISTORTION_COVERAGE_ONSET = 0.75
COVERAGE_CAP = 0.93  # keeps some background visible in every sub-image

# class name -> (fill RGB, superellipse exponent, aspect ratio)
OBJECT_CLASSES = {
    "bowl": ((62, 105, 208), 2.0, 1.25),
    "lemon": ((232, 206, 46), 2.2, 1.45),
    "pitcher": ((164, 72, 198), 1.6, 0.80),
    "strawberry": ((222, 48, 58), 2.6, 0.90),
    "cup": ((58, 178, 84), 3.5, 1.10),
}

_GRASP_CENTER = np.array([0.0, -45.0, 38.0])  # palm-frame point the hand closes onto
_CAMERA_ORDER = hand.FINGERS  # camera_id k is the camera in finger FINGERS[k]


class GraspError(ValueError):
    pass


@dataclass
class GraspFrame:
    """One time step of a run: five camera views plus shared progress."""

    images: list[np.ndarray]  # 5 x (72, 88, 3) uint8
    masks: list[np.ndarray]  # 5 x (72, 88) bool
    progress: float
    coverages: list[float] = field(default_factory=list)


@dataclass
class GraspRun:
    object_class: str
    run_id: str
    frames: list[GraspFrame]


def _camera_distances(progress: float) -> np.ndarray:
    """Fingertip distance to the grasp center for the five cameras."""
    displacement = progress * hand.FULL_CLOSE_STEPS
    dists = np.empty(5)
    for k, finger in enumerate(_CAMERA_ORDER):
        state = hand.finger_state_from_displacement(displacement)
        tip, _ = hand.fingertip_camera_pose(state, finger)
        dists[k] = np.linalg.norm(tip - _GRASP_CENTER)
    return dists


_APPROACH_GRID = 33
_approach_cache: tuple | None = None


def _approach_curves():
    """Distance curves and the per-camera contact point (closest approach).

    Each finger stops closing where its fingertip is nearest the grasp
    center, so run progress 1 means contact rather than a full fist.
    """
    global _approach_cache
    if _approach_cache is None:
        grid = np.linspace(0.0, 1.0, _APPROACH_GRID)
        dists = np.stack([_camera_distances(p) for p in grid])  # (N, 5)
        stops = grid[np.argmin(dists, axis=0)]
        _approach_cache = (grid, dists, np.maximum(stops, 0.05))
    return _approach_cache


def _camera_growth(progresses: np.ndarray) -> np.ndarray:
    """(n_frames, 5) apparent-size growth in [0, 1], monotone per camera."""
    grid, dists, stops = _approach_curves()
    out = np.empty((len(progresses), 5))
    for k in range(5):
        d = np.interp(progresses * stops[k], grid, dists[:, k])
        size = np.maximum.accumulate(1.0 / d)
        span = size[-1] - size[0]
        out[:, k] = (size - size[0]) / (span if span > 1e-12 else 1.0)
    return out


def _camera_image_offsets(progress: float, stops: np.ndarray) -> np.ndarray:
    """Per-camera (dx, dy) pixel drift of the object center from pose parallax."""
    offs = np.empty((5, 2))
    for k, finger in enumerate(_CAMERA_ORDER):
        displacement = progress * stops[k] * hand.FULL_CLOSE_STEPS
        state = hand.finger_state_from_displacement(displacement)
        tip, rot = hand.fingertip_camera_pose(state, finger)
        local = rot.T @ (_GRASP_CENTER - tip)  # camera frame, z = optical axis
        depth = max(abs(local[2]), 20.0)
        offs[k, 0] = np.clip(60.0 * local[0] / depth, -9.0, 9.0)
        offs[k, 1] = np.clip(60.0 * local[1] / depth, -7.0, 7.0)
    return offs


def _superellipse_area_factor(exponent: float) -> float:
    g = math.gamma
    return 4.0 * g(1.0 + 1.0 / exponent) ** 2 / g(1.0 + 2.0 / exponent)


def _box_blur(img: np.ndarray, radius: int) -> np.ndarray:
    for axis in (0, 1):
        pad = np.concatenate(
            [np.flip(img.take(range(radius), axis=axis), axis=axis), img,
             np.flip(img.take(range(img.shape[axis] - radius, img.shape[axis]), axis=axis), axis=axis)],
            axis=axis,
        )
        csum = np.cumsum(pad, axis=axis, dtype=np.float64)
        width = 2 * radius + 1
        img = (csum.take(range(width - 1, pad.shape[axis]), axis=axis)
               - np.concatenate([np.zeros_like(csum.take([0], axis=axis)),
                                 csum.take(range(pad.shape[axis] - width), axis=axis)], axis=axis)) / width
    return img


def _render_background(rng: np.random.Generator) -> np.ndarray:
    base = np.array([124.0, 119.0, 113.0]) + rng.uniform(-9.0, 9.0, 3)
    noise = rng.normal(0.0, 26.0, (IMAGE_HEIGHT, IMAGE_WIDTH))
    texture = _box_blur(noise, 3)
    img = base[None, None, :] + texture[:, :, None] + rng.normal(0.0, 5.0, (IMAGE_HEIGHT, IMAGE_WIDTH, 3))
    return img


def _object_mask(
    coverage: float,
    exponent: float,
    aspect: float,
    center: tuple[float, float],
    angle: float,
) -> tuple[np.ndarray, float]:
    """Superellipse footprint hitting ``coverage`` of the visible image."""
    yy, xx = np.mgrid[0:IMAGE_HEIGHT, 0:IMAGE_WIDTH].astype(np.float64)
    xx -= IMAGE_WIDTH / 2.0 + center[0]
    yy -= IMAGE_HEIGHT / 2.0 + center[1]
    c, s = math.cos(angle), math.sin(angle)
    xr = c * xx + s * yy
    yr = -s * xx + c * yy
    factor = _superellipse_area_factor(exponent)
    r = math.sqrt(max(coverage, 1e-4) * IMAGE_WIDTH * IMAGE_HEIGHT / (factor * aspect))
    a, b = aspect * r, r
    mask = (np.abs(xr / a) ** exponent + np.abs(yr / b) ** exponent) <= 1.0
    return mask, float(mask.mean())


def _render_object(img: np.ndarray, mask: np.ndarray, fill, rng: np.random.Generator) -> None:
    h, w = mask.shape
    yy, xx = np.nonzero(mask)
    if yy.size == 0:
        return
    cy, cx = yy.mean(), xx.mean()
    radial = 1.0 - 0.25 * np.sqrt(((yy - cy) / h) ** 2 + ((xx - cx) / w) ** 2)
    color = np.asarray(fill, dtype=np.float64)
    img[yy, xx, :] = color[None, :] * radial[:, None] + rng.normal(0.0, 9.0, (yy.size, 3))


def _apply_gain_distortion(
    img: np.ndarray, coverage: float, rng: np.random.Generator
) -> np.ndarray:
    """Desaturate and randomly skew channel gains once the object fills the view.

    Models a camera losing color fidelity at close range: the gain error is
    drawn per frame, so late-grasp appearance is erratic rather than a
    second learnable regime.
    """
    if coverage <= DISTORTION_COVERAGE_ONSET:
        return img
    strength = min((coverage - DISTORTION_COVERAGE_ONSET) / 0.15, 1.0)
    desat = strength * rng.uniform(0.6, 0.95)
    gains = 1.0 + strength * rng.uniform(-0.45, 0.45, 3)
    offsets = strength * rng.uniform(-28.0, 28.0, 3)
    gray = img.mean(axis=2, keepdims=True)
    mixed = img * (1.0 - desat) + gray * desat
    mixed = mixed * gains[None, None, :] + offsets[None, None, :]
    # raised analog gain raises sensor noise with it
    return mixed + rng.normal(0.0, 16.0 * strength, img.shape)


def _frame_count(rng: np.random.Generator) -> int:
    # mean 6.47 frames per run
    return 6 + int(rng.random() < MEAN_FRAMES - 6.0)


def generate_run(
    object_class: str,
    run_index: int,
    seed: int,
    class_index: int,
    distortion: bool = True,
) -> GraspRun:
    """Render one grasp run; fully determined by (seed, class, run_index)."""
    if object_class not in OBJECT_CLASSES:
        raise GraspError(f"unknown object class {object_class!r}")
    fill, exponent, aspect = OBJECT_CLASSES[object_class]
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(class_index, run_index))
    rng = np.random.default_rng(ss)
    # separate stream: toggling distortion must not change the base imagery
    rng_distort = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(class_index, run_index, 7))
    )

    n_frames = _frame_count(rng)
    progresses = np.linspace(0.0, 1.0, n_frames)
    c_min = rng.uniform(0.02, 0.07, 5)
    c_max = rng.uniform(0.76, 0.92, 5)
    angle = rng.uniform(0.0, math.pi)
    center_jitter = rng.uniform(-5.0, 5.0, (5, 2))

    growth = _camera_growth(progresses)
    _, _, stops = _approach_curves()

    frames: list[GraspFrame] = []
    prev_area = [-1.0] * 5
    for i, progress in enumerate(progresses):
        offsets = _camera_image_offsets(progress, stops)
        images, masks, coverages = [], [], []
        for cam in range(5):
            target = c_min[cam] + (c_max[cam] - c_min[cam]) * growth[i, cam]
            # parallax fades as the object fills the view; a frozen center
            # keeps clipped footprints growing monotonically near the cap
            parallax = min(max(1.0 - (target - 0.55) / 0.25, 0.0), 1.0)
            center = (
                center_jitter[cam, 0] + parallax * offsets[cam, 0],
                center_jitter[cam, 1] + parallax * offsets[cam, 1],
            )
            goal = min(target, COVERAGE_CAP)
            scale = goal
            mask, area = _object_mask(scale, exponent, aspect, center, angle)
            # edge clipping shrinks the footprint below the analytic goal;
            # grow the scale until the goal and monotone growth hold
            bumps = 0
            while (area < 0.97 * goal or area < prev_area[cam]) and bumps < 40:
                scale *= 1.05
                mask, area = _object_mask(scale, exponent, aspect, center, angle)
                bumps += 1
            prev_area[cam] = area
            img = _render_background(rng)
            _render_object(img, mask, fill, rng)
            if distortion:
                img = _apply_gain_distortion(img, area, rng_distort)
            images.append(np.clip(img, 0.0, 255.0).astype(np.uint8))
            masks.append(mask)
            coverages.append(area)
        frames.append(
            GraspFrame(images=images, masks=masks, progress=float(progress), coverages=coverages)
        )
    return GraspRun(
        object_class=object_class,
        run_id=f"{object_class}-{run_index:02d}",
        frames=frames,
    )


@dataclass
class LiveScene:
    """Endless-run variant of the generator for the serve session.

    Scene parameters are drawn once from the seed; each published frame
    renders the current closing fractions with a per-frame noise stream.
    """

    object_class: str
    seed: int = 0
    distortion: bool = True

    def __post_init__(self) -> None:
        if self.object_class not in OBJECT_CLASSES:
            raise GraspError(f"unknown object class {self.object_class!r}")
        rng = np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(31,)))
        self._c_min = rng.uniform(0.02, 0.07, 5)
        self._c_max = rng.uniform(0.76, 0.92, 5)
        self._angle = rng.uniform(0.0, math.pi)
        self._jitter = rng.uniform(-5.0, 5.0, (5, 2))
        grid = np.linspace(0.0, 1.0, 25)
        self._growth_grid = grid
        self._growth = _camera_growth(grid)

    def render(self, closing_fractions: np.ndarray, frame_index: int):
        """Render 5 views at the given per-camera closing fractions.

        Returns (images, masks, coverages); deterministic per
        (seed, frame_index, fractions).
        """
        fill, exponent, aspect = OBJECT_CLASSES[self.object_class]
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(32, frame_index))
        )
        _, _, stops = _approach_curves()
        images, masks, coverages = [], [], []
        for cam in range(5):
            f = float(np.clip(closing_fractions[cam], 0.0, 1.0))
            growth = float(np.interp(f, self._growth_grid, self._growth[:, cam]))
            target = self._c_min[cam] + (self._c_max[cam] - self._c_min[cam]) * growth
            offsets = _camera_image_offsets(f, stops)
            parallax = min(max(1.0 - (target - 0.55) / 0.25, 0.0), 1.0)
            center = (
                self._jitter[cam, 0] + parallax * offsets[cam, 0],
                self._jitter[cam, 1] + parallax * offsets[cam, 1],
            )
            mask, area = _object_mask(min(target, COVERAGE_CAP), exponent, aspect, center, self._angle)
            img = _render_background(rng)
            _render_object(img, mask, fill, rng)
            if self.distortion:
                img = _apply_gain_distortion(img, area, rng)
            images.append(np.clip(img, 0.0, 255.0).astype(np.uint8))
            masks.append(mask)
            coverages.append(area)
        return images, masks, coverages


def generate_dataset(
    object_classes=None,
    runs_per_class: int = 11,
    seed: int = 0,
    distortion: bool = True,
) -> list[GraspRun]:
    """Full dataset: ``runs_per_class`` runs for each class, one shared seed."""
    classes = list(object_classes) if object_classes is not None else list(OBJECT_CLASSES)
    if not classes:
        raise GraspError("need at least one object class")
    runs = []
    for class_index, name in enumerate(classes):
        for run_index in range(runs_per_class):
            runs.append(generate_run(name, run_index, seed, class_index, distortion))
    return runs


def count_subimages(runs: list[GraspRun]) -> int:
    return sum(len(run.frames) * 5 for run in runs)


# --- disk format ------------------------------------------------------------
#
# <root>/manifest.txt                dataset-level key=value lines
# <root>/<class>/run_XX/manifest.txt one line per sub-image (key=value pairs)
# <root>/<class>/run_XX/fNNN_camK.ppm / fNNN_camK_mask.pgm


def save_dataset(runs: list[GraspRun], root: str | Path, meta: dict | None = None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    classes = sorted({r.object_class for r in runs})
    lines = [f"classes={','.join(classes)}", f"runs={len(runs)}"]
    for key, value in (meta or {}).items():
        lines.append(f"{key}={value}")
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")

    for run in runs:
        index = int(run.run_id.rsplit("-", 1)[1])
        run_dir = root / run.object_class / f"run_{index:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for fi, frame in enumerate(run.frames):
            for cam in range(5):
                stem = f"f{fi:03d}_cam{cam}"
                imageio.write_ppm(run_dir / f"{stem}.ppm", frame.images[cam])
                imageio.write_pgm(run_dir / f"{stem}_mask.pgm", frame.masks[cam])
                entries.append(
                    f"file={stem}.ppm camera_id={cam} progress={frame.progress:.6f} "
                    f"class={run.object_class} run_id={run.run_id}"
                )
        (run_dir / "manifest.txt").write_text("\n".join(entries) + "\n")


def load_class_runs(root: str | Path, object_class: str) -> list[GraspRun]:
    class_dir = Path(root) / object_class
    if not class_dir.is_dir():
        raise GraspError(f"no runs for class {object_class!r} under {root}")
    runs = []
    for run_dir in sorted(class_dir.iterdir()):
        if not run_dir.is_dir():
            continue
        per_frame: dict[int, GraspFrame] = {}
        for line in (run_dir / "manifest.txt").read_text().splitlines():
            kv = dict(part.split("=", 1) for part in line.split())
            stem = kv["file"].rsplit(".", 1)[0]
            fi = int(stem.split("_")[0][1:])
            cam = int(kv["camera_id"])
            frame = per_frame.setdefault(
                fi,
                GraspFrame(images=[None] * 5, masks=[None] * 5, progress=float(kv["progress"])),
            )
            frame.images[cam] = imageio.read_ppm(run_dir / kv["file"])
            frame.masks[cam] = imageio.read_pgm(run_dir / f"{stem}_mask.pgm") > 127
        run_id = f"{object_class}-{int(run_dir.name.split('_')[1]):02d}"
        frames = [per_frame[i] for i in sorted(per_frame)]
        runs.append(GraspRun(object_class=object_class, run_id=run_id, frames=frames))
    return runs


def load_dataset(root: str | Path) -> list[GraspRun]:
    manifest = Path(root) / "manifest.txt"
    if not manifest.is_file():
        raise GraspError(f"{root}: missing dataset manifest")
    kv = dict(line.split("=", 1) for line in manifest.read_text().splitlines() if "=" in line)
    runs: list[GraspRun] = []
    for name in kv["classes"].split(","):
        runs.extend(load_class_runs(root, name))
    return runs
