"""Synthetic palmprint-like images with known ground truth.

Images are built from the same ideal dark-line profile the filter bank is
tuned to: long smooth principal curves plus short straight wrinkles, each
rendered as a Gaussian dip across a polyline path.  Orientation ground
truth and a line mask are recorded at render time, which makes these
samples usable as oracles for coding and matching tests.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, InvalidParameterError
from .filterbank import LineModel

NO_ORIENTATION = 255
MAX_TRANSLATE = 8
# paths are sampled at least this far from the border so that any
# translation up to MAX_TRANSLATE keeps them in bounds
PATH_MARGIN = MAX_TRANSLATE + 1
# perpendicular distance (pixels) under which a pixel counts as a line
# center; the full ground-truth mask extends to max(1, sigma_l)
CENTER_RADIUS = 0.6
# beyond cutoff * sigma_l the dip is < 0.04% of the amplitude; the profile
# is not applied there
PROFILE_CUTOFF_SIGMAS = 4.0

_GEOMETRY_STREAM = 0
_BASE_NOISE_STREAM = 1
_PAIR_NOISE_STREAM = 2
_SET_STREAM = 3


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the palm-image generator; a pure function of these + seed."""

    image_size: int = 128
    n_principal_lines: int = 3
    n_wrinkles: int = 14
    amplitude_range: tuple[float, float] = (50.0, 100.0)
    sigma_l_range: tuple[float, float] = (1.6, 2.8)
    brightness_range: tuple[float, float] = (110.0, 150.0)
    wrinkle_length_range: tuple[float, float] = (14.0, 34.0)
    noise_std: float = 6.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.image_size < 32:
            raise InvalidParameterError("image_size must be >= 32")
        if self.n_principal_lines < 0 or self.n_wrinkles < 0:
            raise InvalidParameterError("line counts must be >= 0")
        for name in ("amplitude_range", "sigma_l_range", "brightness_range",
                     "wrinkle_length_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise InvalidParameterError(f"{name} must satisfy 0 < lo <= hi")
        if self.noise_std < 0:
            raise InvalidParameterError("noise_std must be >= 0")


@dataclass(frozen=True)
class PairJitter:
    """Intra-class variation between two samples of one palm."""

    translate_px: tuple[int, int] = (2, 0)
    noise_std: float = 6.0

    def __post_init__(self) -> None:
        tx, ty = self.translate_px
        if abs(tx) > MAX_TRANSLATE or abs(ty) > MAX_TRANSLATE:
            raise InvalidParameterError(
                f"|translate_px| must be <= {MAX_TRANSLATE} per axis"
            )
        if self.noise_std < 0:
            raise InvalidParameterError("noise_std must be >= 0")


@dataclass(frozen=True)
class LinePath:
    """One rendered line: polyline vertices (x, y) and its dip profile."""

    points: np.ndarray
    model: LineModel
    principal: bool


@dataclass(frozen=True)
class PalmGeometry:
    """Identity-defining line layout; rendering adds jitter and noise."""

    image_size: int
    background: float
    lines: tuple[LinePath, ...]


@dataclass(frozen=True)
class SynthSample:
    """Rendered image plus render-time ground truth.

    orientation_gt holds the quantized tangent index 0..5 on line pixels
    and NO_ORIENTATION (255) elsewhere; line_mask_gt is true exactly where
    an orientation is recorded; center_mask_gt restricts that to pixels
    within CENTER_RADIUS of a path.
    """

    image: np.ndarray
    orientation_gt: np.ndarray
    line_mask_gt: np.ndarray
    center_mask_gt: np.ndarray


def quantize_orientation(angle: np.ndarray | float, n_orientations: int = 6) -> np.ndarray:
    """Nearest orientation index for a tangent angle, cyclic over pi."""
    a = np.mod(np.asarray(angle, dtype=np.float64), math.pi)
    step = math.pi / n_orientations
    return (np.rint(a / step).astype(np.int64)) % n_orientations


def _polyline_distance(shape: tuple[int, int], points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel distance to a polyline and tangent angle of the nearest segment."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    best_d2 = np.full(shape, np.inf)
    best_ang = np.zeros(shape)
    pts = np.asarray(points, dtype=np.float64)
    for p, q in zip(pts[:-1], pts[1:]):
        vx, vy = q[0] - p[0], q[1] - p[1]
        seg2 = vx * vx + vy * vy
        if seg2 == 0.0:
            continue
        t = np.clip(((xs - p[0]) * vx + (ys - p[1]) * vy) / seg2, 0.0, 1.0)
        dx = xs - (p[0] + t * vx)
        dy = ys - (p[1] + t * vy)
        d2 = dx * dx + dy * dy
        closer = d2 < best_d2
        best_d2[closer] = d2[closer]
        best_ang[closer] = math.atan2(vy, vx)
    return np.sqrt(best_d2), best_ang


def _check_path(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise InvalidParameterError("path must be an (M, 2) array with M >= 2")
    h, w = shape
    if (pts[:, 0].min() < 0 or pts[:, 0].max() > w - 1
            or pts[:, 1].min() < 0 or pts[:, 1].max() > h - 1):
        raise InvalidParameterError("path leaves the canvas bounds")
    return pts


def render_line(canvas: np.ndarray, path: np.ndarray, line: LineModel) -> np.ndarray:
    """Darken ``canvas`` with the line profile along ``path`` (min-composition)."""
    canvas = np.asarray(canvas, dtype=np.float64)
    pts = _check_path(path, canvas.shape)
    dist, _ = _polyline_distance(canvas.shape, pts)
    band = dist <= PROFILE_CUTOFF_SIGMAS * line.sigma_l
    out = canvas.copy()
    profile = line.profile(dist[band])
    out[band] = np.minimum(out[band], profile)
    return out


def _bezier_points(control: np.ndarray, n_samples: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n_samples)[:, None]
    p0, p1, p2, p3 = control
    s = 1.0 - t
    return (s**3 * p0 + 3 * s**2 * t * p1 + 3 * s * t**2 * p2 + t**3 * p3)


def _principal_path(rng: np.random.Generator, lo: float, hi: float) -> np.ndarray:
    """Random gentle cubic curve spanning the inner box [lo, hi]^2."""
    span = hi - lo
    phi = rng.uniform(0.0, math.pi)
    cx = rng.uniform(lo + 0.25 * span, hi - 0.25 * span)
    cy = rng.uniform(lo + 0.25 * span, hi - 0.25 * span)
    d = np.array([math.cos(phi), math.sin(phi)])
    # chord through (cx, cy): clip the line to the inner box
    ts = []
    for comp, c in ((0, cx), (1, cy)):
        if abs(d[comp]) > 1e-12:
            ts.extend([(lo - c) / d[comp], (hi - c) / d[comp]])
    ts = sorted(t for t in ts
                if lo - 1e-9 <= cx + t * d[0] <= hi + 1e-9
                and lo - 1e-9 <= cy + t * d[1] <= hi + 1e-9)
    t0, t1 = ts[0], ts[-1]
    p0 = np.array([cx + t0 * d[0], cy + t0 * d[1]])
    p3 = np.array([cx + t1 * d[0], cy + t1 * d[1]])
    chord = float(np.linalg.norm(p3 - p0))
    perp = np.array([-d[1], d[0]])
    bend = 0.12 * chord
    p1 = p0 + (p3 - p0) / 3.0 + perp * rng.uniform(-bend, bend)
    p2 = p0 + 2.0 * (p3 - p0) / 3.0 + perp * rng.uniform(-bend, bend)
    control = np.clip(np.stack([p0, p1, p2, p3]), lo, hi)
    n_samples = max(12, int(1.5 * chord))
    return _bezier_points(control, n_samples)


def _wrinkle_path(rng: np.random.Generator, lo: float, hi: float,
                  length_range: tuple[float, float]) -> np.ndarray:
    """Short straight segment near a quantized orientation (jitter < pi/12)."""
    k = int(rng.integers(0, 6))
    angle = k * math.pi / 6.0 + rng.uniform(-0.75, 0.75) * math.pi / 12.0
    length = rng.uniform(*length_range)
    half = length / 2.0
    dx, dy = abs(math.cos(angle)) * half, abs(math.sin(angle)) * half
    # shrink until a valid center region exists, then place the center so
    # the segment stays inside the inner box without changing its angle
    max_dx, max_dy = (hi - lo) / 2.0, (hi - lo) / 2.0
    scale = min(1.0, max_dx / dx if dx > 0 else 1.0, max_dy / dy if dy > 0 else 1.0)
    half *= scale * 0.999
    dx, dy = abs(math.cos(angle)) * half, abs(math.sin(angle)) * half
    cx = rng.uniform(lo + dx, hi - dx)
    cy = rng.uniform(lo + dy, hi - dy)
    p0 = np.array([cx - half * math.cos(angle), cy - half * math.sin(angle)])
    p1 = np.array([cx + half * math.cos(angle), cy + half * math.sin(angle)])
    return np.stack([p0, p1])


def sample_geometry(config: SynthConfig) -> PalmGeometry:
    """Draw the identity-defining line layout for ``config``."""
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _GEOMETRY_STREAM])
    )
    n = config.image_size
    lo, hi = float(PATH_MARGIN), float(n - 1 - PATH_MARGIN)
    base_a = rng.uniform(*config.amplitude_range)
    base_b = rng.uniform(*config.brightness_range)
    background = base_a + base_b
    lines = []
    for _ in range(config.n_principal_lines):
        amp = rng.uniform(*config.amplitude_range)
        model = LineModel(amplitude=amp,
                          sigma_l=rng.uniform(*config.sigma_l_range),
                          brightness=background - amp)
        lines.append(LinePath(points=_principal_path(rng, lo, hi),
                              model=model, principal=True))
    for _ in range(config.n_wrinkles):
        amp = rng.uniform(*config.amplitude_range)
        model = LineModel(amplitude=amp,
                          sigma_l=rng.uniform(*config.sigma_l_range),
                          brightness=background - amp)
        lines.append(LinePath(
            points=_wrinkle_path(rng, lo, hi, config.wrinkle_length_range),
            model=model, principal=False))
    return PalmGeometry(image_size=n, background=background, lines=tuple(lines))


def render_geometry(
    geometry: PalmGeometry,
    noise_std: float = 0.0,
    noise_seed: int | np.random.SeedSequence = 0,
    translate: tuple[int, int] = (0, 0),
) -> SynthSample:
    """Render a geometry into a sample; ownership of overlaps goes to the darker line."""
    n = geometry.image_size
    shape = (n, n)
    tx, ty = translate
    if abs(tx) > MAX_TRANSLATE or abs(ty) > MAX_TRANSLATE:
        raise InvalidParameterError(f"|translate| must be <= {MAX_TRANSLATE}")
    canvas = np.full(shape, geometry.background)
    orientation = np.full(shape, NO_ORIENTATION, dtype=np.uint8)
    owner_value = np.full(shape, np.inf)
    center_mask = np.zeros(shape, dtype=bool)
    offset = np.array([float(tx), float(ty)])
    for lp in geometry.lines:
        pts = _check_path(lp.points + offset, shape)
        dist, ang = _polyline_distance(shape, pts)
        model = lp.model
        band = dist <= PROFILE_CUTOFF_SIGMAS * model.sigma_l
        profile = np.where(band, model.profile(dist), np.inf)
        np.minimum(canvas, profile, out=canvas)
        core = dist <= max(1.0, model.sigma_l)
        takes = core & (profile < owner_value)
        orientation[takes] = quantize_orientation(ang[takes]).astype(np.uint8)
        owner_value[takes] = profile[takes]
        center_mask |= dist <= CENTER_RADIUS
    if noise_std > 0:
        rng = np.random.default_rng(noise_seed)
        canvas = canvas + rng.normal(0.0, noise_std, shape)
    image = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    line_mask = orientation != NO_ORIENTATION
    return SynthSample(image=image, orientation_gt=orientation,
                       line_mask_gt=line_mask,
                       center_mask_gt=center_mask & line_mask)


def generate_palm(config: SynthConfig) -> SynthSample:
    """Deterministic sample for ``config`` (geometry and noise both seeded)."""
    geometry = sample_geometry(config)
    return render_geometry(
        geometry,
        noise_std=config.noise_std,
        noise_seed=np.random.SeedSequence([config.seed, _BASE_NOISE_STREAM]),
    )


def generate_genuine_pair(
    config: SynthConfig, jitter: PairJitter
) -> tuple[SynthSample, SynthSample]:
    """A sample and its translated, independently re-noised sibling."""
    geometry = sample_geometry(config)
    first = render_geometry(
        geometry,
        noise_std=config.noise_std,
        noise_seed=np.random.SeedSequence([config.seed, _BASE_NOISE_STREAM]),
    )
    second = render_geometry(
        geometry,
        noise_std=jitter.noise_std,
        noise_seed=np.random.SeedSequence([config.seed, _PAIR_NOISE_STREAM]),
        translate=jitter.translate_px,
    )
    return first, second


def generate_sample_set(
    config: SynthConfig,
    n_samples: int,
    max_translate: int = 2,
    noise_std: float | tuple[float, float] | None = None,
) -> list[SynthSample]:
    """n_samples of one identity: the base render plus jittered re-renders.

    ``noise_std`` may be a (lo, hi) range, in which case each sample draws
    its own noise level: capture quality varies between acquisitions.
    """
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be >= 1")
    if not (0 <= max_translate <= MAX_TRANSLATE):
        raise InvalidParameterError(f"max_translate must be in [0, {MAX_TRANSLATE}]")
    noise = config.noise_std if noise_std is None else noise_std

    def draw_noise(rng: np.random.Generator | None) -> float:
        if isinstance(noise, tuple):
            lo, hi = noise
            if rng is None:
                rng = np.random.default_rng(
                    np.random.SeedSequence([config.seed, _SET_STREAM, 0]))
            return float(rng.uniform(lo, hi))
        return float(noise)

    geometry = sample_geometry(config)
    samples = [render_geometry(
        geometry, noise_std=draw_noise(None),
        noise_seed=np.random.SeedSequence([config.seed, _BASE_NOISE_STREAM]))]
    for i in range(1, n_samples):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, _SET_STREAM, i]))
        t = (int(rng.integers(-max_translate, max_translate + 1)),
             int(rng.integers(-max_translate, max_translate + 1)))
        samples.append(render_geometry(
            geometry, noise_std=draw_noise(rng),
            noise_seed=np.random.SeedSequence([config.seed, _SET_STREAM, i, 1]),
            translate=t))
    return samples


def impostor_config(config: SynthConfig, index: int) -> SynthConfig:
    """Config of the index-th independent identity derived from a base config."""
    sub = int(np.random.SeedSequence([config.seed, 0x1D, index]).generate_state(1, np.uint64)[0])
    return replace(config, seed=sub)


_SIDECAR_MAGIC = b"PGTH"


def write_ground_truth(path, orientation_gt: np.ndarray) -> None:
    """Binary orientation sidecar: magic, u32 LE width/height, one byte/pixel."""
    arr = np.asarray(orientation_gt, dtype=np.uint8)
    if arr.ndim != 2:
        raise InvalidParameterError("orientation map must be 2-D")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(_SIDECAR_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(arr.tobytes())


def read_ground_truth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != _SIDECAR_MAGIC:
        raise FormatError(f"{path}: not an orientation sidecar")
    w, h = struct.unpack("<II", data[4:12])
    payload = data[12:]
    if len(payload) != w * h:
        raise FormatError(f"{path}: payload size {len(payload)} != {w}x{h}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    bad = (arr > 5) & (arr != NO_ORIENTATION)
    if bad.any():
        raise FormatError(f"{path}: invalid orientation byte {int(arr[bad][0])}")
    return arr.copy()
