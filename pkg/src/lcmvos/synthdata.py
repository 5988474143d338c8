"""Deterministic synthetic videos with analytic ground truth.

Scenes are lists of moving rectangles or disks over a flat background.  The
only randomness (optional background noise) comes from a SplitMix64 stream
seeded with a single 64-bit integer, so output bytes are reproducible on any
platform.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import SceneError
from .pnm import write_pgm, write_ppm

MASK64 = (1 << 64) - 1


class SplitMix64:
    """The SplitMix64 generator (Steele, Lea & Flood); 64-bit outputs."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Integer in [0, n) from the top bits (bias is negligible for small n)."""
        return (self.next_u64() >> 32) * n >> 32


@dataclass(frozen=True)
class Sprite:
    shape: str                      # "rectangle" | "disk"
    size: tuple[int, int]           # (width, height); a disk uses width as diameter
    color: tuple[int, int, int]
    position: tuple[float, float]   # top-left (x, y) at frame 0
    velocity: tuple[float, float] = (0.0, 0.0)  # pixels per frame (x, y)
    annotated: bool = True          # annotated sprites get object labels 1..M
    hue_drift: float = 0.0          # hue turns per frame
    visible: tuple[int, int] | None = None  # [start, stop) frames, None = always

    def origin(self, t: int) -> tuple[int, int]:
        x = self.position[0] + self.velocity[0] * t
        y = self.position[1] + self.velocity[1] * t
        return int(np.floor(x + 0.5)), int(np.floor(y + 0.5))

    def shown(self, t: int) -> bool:
        return self.visible is None or self.visible[0] <= t < self.visible[1]

    def color_at(self, t: int) -> tuple[int, int, int]:
        if not self.hue_drift:
            return self.color
        h, s, v = colorsys.rgb_to_hsv(*(c / 255.0 for c in self.color))
        rgb = colorsys.hsv_to_rgb((h + self.hue_drift * t) % 1.0, s, v)
        return tuple(int(np.floor(c * 255.0 + 0.5)) for c in rgb)

    def footprint(self, t: int, height: int, width: int) -> np.ndarray:
        x0, y0 = self.origin(t)
        w, h = self.size
        ys, xs = np.mgrid[0:height, 0:width]
        if self.shape == "rectangle":
            return (xs >= x0) & (xs < x0 + w) & (ys >= y0) & (ys < y0 + h)
        r = w / 2.0
        return (xs + 0.5 - (x0 + r)) ** 2 + (ys + 0.5 - (y0 + r)) ** 2 <= r * r


@dataclass(frozen=True)
class SceneSpec:
    canvas: tuple[int, int]                   # (height, width)
    background: tuple[int, int, int]
    sprites: tuple[Sprite, ...]
    frames: int
    seed: int = 0
    noise: int = 0                            # +/- amplitude of background noise (0..255 units)
    name: str = "custom"

    def validate(self) -> None:
        h, w = self.canvas
        if self.frames < 1:
            raise SceneError(f"frame count must be >= 1, got {self.frames}")
        if not self.sprites:
            raise SceneError("a scene needs at least one sprite")
        if not any(s.annotated for s in self.sprites):
            raise SceneError("at least one sprite must be annotated")
        for k, s in enumerate(self.sprites):
            if s.shape not in ("rectangle", "disk"):
                raise SceneError(f"sprite {k}: unknown shape {s.shape!r}")
            sw, sh = s.size if s.shape == "rectangle" else (s.size[0], s.size[0])
            for t in (0, self.frames - 1):
                x0, y0 = s.origin(t)
                if x0 < 0 or y0 < 0 or x0 + sw > w or y0 + sh > h:
                    raise SceneError(f"sprite {k} leaves the {w}x{h} canvas at frame {t}")
            if not all(0 <= c <= 255 for c in s.color):
                raise SceneError(f"sprite {k}: colour components must lie in [0, 255]")

    def labels(self) -> list[int]:
        """Object label of each sprite (0 for unannotated ones)."""
        out, nxt = [], 1
        for s in self.sprites:
            out.append(nxt if s.annotated else 0)
            nxt += s.annotated
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        d = json.loads(text)
        sprites = tuple(
            Sprite(**{**s, "size": tuple(s["size"]), "color": tuple(s["color"]),
                      "position": tuple(s["position"]), "velocity": tuple(s["velocity"]),
                      "visible": tuple(s["visible"]) if s["visible"] is not None else None})
            for s in d.pop("sprites")
        )
        return cls(sprites=sprites, canvas=tuple(d.pop("canvas")),
                   background=tuple(d.pop("background")), **d)


def generate(spec: SceneSpec):
    """Render ``(frames, gt_masks)``: uint8 H x W x 3 images and int64 H x W label maps."""
    spec.validate()
    h, w = spec.canvas
    rng = SplitMix64(spec.seed)
    labels = spec.labels()
    frames, masks = [], []
    for t in range(spec.frames):
        img = np.empty((h, w, 3), dtype=np.int64)
        img[:] = spec.background
        if spec.noise:
            span = 2 * spec.noise + 1
            jitter = np.array([rng.below(span) for _ in range(h * w * 3)], dtype=np.int64)
            img += jitter.reshape(h, w, 3) - spec.noise
        mask = np.zeros((h, w), dtype=np.int64)
        for sprite, label in zip(spec.sprites, labels):
            if not sprite.shown(t):
                continue
            fp = sprite.footprint(t, h, w)
            img[fp] = sprite.color_at(t)
            mask[fp] = label
        frames.append(np.clip(img, 0, 255).astype(np.uint8))
        masks.append(mask)
    return frames, masks


SCENARIOS = ("static", "translate", "twin_squares", "occlusion", "color_drift")

TARGET_COLOR = (235, 235, 235)
BACKGROUND = (0, 0, 0)


def scenario(name: str, seed: int = 0) -> SceneSpec:
    """Named scene used by the tests and the command-line ``synth`` command."""
    if name == "static":
        sprites = (Sprite("rectangle", (16, 16), TARGET_COLOR, (24, 24)),)
        return SceneSpec((64, 64), BACKGROUND, sprites, frames=8, seed=seed, name=name)
    if name == "translate":
        sprites = (Sprite("rectangle", (16, 16), TARGET_COLOR, (4, 24), (4.0, 0.0)),)
        return SceneSpec((64, 128), BACKGROUND, sprites, frames=24, seed=seed, name=name)
    if name == "twin_squares":
        sprites = (
            Sprite("rectangle", (12, 12), TARGET_COLOR, (44, 8), (0.0, 1.0)),
            Sprite("rectangle", (12, 12), TARGET_COLOR, (8, 8), (0.0, 1.0), annotated=False),
        )
        return SceneSpec((64, 64), BACKGROUND, sprites, frames=24, seed=seed, name=name)
    if name == "occlusion":
        sprites = (
            Sprite("rectangle", (16, 16), TARGET_COLOR, (24, 24)),
            Sprite("rectangle", (8, 24), (40, 90, 200), (4, 20), (4.0, 0.0), annotated=False,
                   visible=None),
        )
        return SceneSpec((64, 64), BACKGROUND, sprites, frames=12, seed=seed, noise=2, name=name)
    if name == "color_drift":
        sprites = (Sprite("rectangle", (16, 16), (220, 60, 60), (8, 24), (2.0, 0.0), hue_drift=0.02),)
        return SceneSpec((64, 64), BACKGROUND, sprites, frames=16, seed=seed, noise=2, name=name)
    raise SceneError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def write_scene(spec: SceneSpec, out_dir) -> int:
    """Write frames, masks and ``scene.json``; returns the frame count."""
    frames, masks = generate(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, (img, mask) in enumerate(zip(frames, masks)):
        write_ppm(out / f"frame_{t:04d}.ppm", img)
        write_pgm(out / f"gt_{t:04d}.pgm", mask)
    (out / "scene.json").write_text(spec.to_json() + "\n")
    return len(frames)
