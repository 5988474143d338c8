"""Sequential mask propagation: encode, read (GRM / PGM / ORM), fuse, update state."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from dataclasses import dataclass, field

import numpy as np

from . import fusion, grm, orm, pgm
from .encoding import (
    EncoderConfig,
    FrameEmbedding,
    ProjectionWeights,
    encode_query,
    encode_memory_soft,
    patch_mean,
    sinusoidal_pos_2d,
)
from .errors import ObjectAbsentError, ParameterError, ShapeDriftError
from .fusion import ReadoutConfig


REFERENCE_FN_SCALE = 0.5
REFERENCE_EXCITE_BIAS = -6.0


def reference_weights_dir():
    """Directory of the shipped reference weight files (default width only)."""
    return resources.files("lcmvos") / "weights" / "reference"


@dataclass(frozen=True)
class PropagationConfig:
    memory_stride: int = 5
    topk: int = pgm.DEFAULT_TOPK
    temperature: float = 1.0
    enable_pgm: bool = True
    enable_orm: bool = True
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    downscale: int = 4
    width: int = 256
    fg_threshold: float = 0.5
    orm_reduction: int = 4
    orm_normalize: str = "hw"
    merge_mode: str = "mean"
    aggregation: str = "odds"
    upsample: str = "bilinear"
    threads: int = 1

    def __post_init__(self):
        if self.memory_stride < 1:
            raise ParameterError(f"memory_stride must be >= 1, got {self.memory_stride}")
        if self.topk < 1:
            raise ParameterError(f"topk must be >= 1, got {self.topk}")
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature}")
        if self.upsample not in ("nearest", "bilinear"):
            raise ParameterError(f"upsample must be 'nearest' or 'bilinear', got {self.upsample!r}")
        if self.threads < 1:
            raise ParameterError(f"threads must be >= 1, got {self.threads}")
        self.encoder  # validates downscale / width

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.downscale, self.width)


@dataclass
class Weights:
    projections: ProjectionWeights
    orm: orm.OrmWeights

    @classmethod
    def default(cls, cfg: PropagationConfig) -> "Weights":
        enc = cfg.encoder
        return cls(ProjectionWeights.default(enc), orm.OrmWeights.default(enc.value_channels, cfg.orm_reduction))

    @classmethod
    def reference(cls, cfg: PropagationConfig) -> "Weights":
        """Hand-set weights shipped in ``lcmvos/weights/reference``.

        Three changes from :meth:`default`: the local-key projection is zero,
        so position guidance compares positions only; ``f_n`` is ``0.5 * I``,
        which widens the positional softmax enough to follow a target moving
        about one cell every four frames; and every ORM excite bias is -6,
        which closes the channel gate (sigmoid(-6) ~ 0.0025) so the relation
        branch stops adding appearance evidence that is identical on look-alike
        objects.
        """
        w = cls.default(cfg)
        ck = cfg.encoder.key_channels
        kw, kb = w.projections.key_local
        w.projections.key_local = (np.zeros_like(kw), np.zeros_like(kb))
        w.projections.fn = (REFERENCE_FN_SCALE * np.eye(ck), np.zeros(ck))
        w.orm.fc2_b = np.full_like(w.orm.fc2_b, REFERENCE_EXCITE_BIAS)
        return w

    def save(self, directory) -> None:
        self.projections.save(directory)
        self.orm.save(directory)

    @classmethod
    def load(cls, directory, cfg: PropagationConfig) -> "Weights":
        enc = cfg.encoder
        return cls(ProjectionWeights.load(directory, enc),
                   orm.OrmWeights.load(directory, enc.value_channels, cfg.orm_reduction))


@dataclass
class ObjectState:
    label: int
    pool: grm.MemoryPool
    foreground: orm.ForegroundSet
    prev_mask: np.ndarray  # grid-scale soft mask in [0, 1]


@dataclass
class SequenceState:
    cfg: PropagationConfig
    weights: Weights
    frame_shape: tuple[int, int]
    objects: list[ObjectState]
    prev_embedding: FrameEmbedding
    frame_counter: int = 0
    pos: np.ndarray = None

    @property
    def num_objects(self) -> int:
        return len(self.objects)


def _check_labels(first_mask) -> list[int]:
    labels = sorted(int(v) for v in np.unique(first_mask))
    objects = [v for v in labels if v != 0]
    if not objects:
        raise ObjectAbsentError("first-frame mask contains no object", labels=())
    expected = list(range(1, max(objects) + 1))
    missing = sorted(set(expected) - set(objects))
    if missing or objects[0] < 1:
        raise ObjectAbsentError(
            f"object labels must be contiguous 1..M; labels {missing} are absent "
            f"from the first-frame mask (found {objects})",
            labels=missing,
        )
    return objects


def init(first_frame, first_mask, cfg: PropagationConfig = PropagationConfig(),
         weights: Weights | None = None) -> SequenceState:
    """Seed one memory pool and foreground set per annotated object."""
    first_frame = np.asarray(first_frame, dtype=np.float64)
    first_mask = np.asarray(first_mask)
    if first_mask.shape != first_frame.shape[:2]:
        raise ShapeDriftError(f"mask {first_mask.shape} does not match frame {first_frame.shape[:2]}")
    labels = _check_labels(first_mask)
    weights = weights or Weights.default(cfg)
    enc = cfg.encoder
    weights.projections.validate(enc)
    weights.orm.validate(enc.value_channels)
    objects, emb = [], None
    for label in labels:
        soft = (first_mask == label).astype(np.float64)
        emb = encode_memory_soft(first_frame, soft, weights.projections, enc)
        mask_ds = patch_mean(soft, enc.downscale)
        try:
            fg = orm.build_foreground_set(emb.value, mask_ds, cfg.fg_threshold)
        except ObjectAbsentError:
            raise ObjectAbsentError(
                f"object {label} covers no grid cell above the foreground threshold", labels=[label]
            ) from None
        pool = grm.pool_write(grm.MemoryPool(), emb, 0)
        objects.append(ObjectState(label, pool, fg, mask_ds))
    h, w = emb.grid
    query_like = FrameEmbedding(emb.global_key, emb.local_key, emb.value.copy())
    query_like.value[..., -1] = 0.0
    return SequenceState(
        cfg=cfg, weights=weights, frame_shape=first_frame.shape[:2], objects=objects,
        prev_embedding=query_like, frame_counter=0,
        pos=sinusoidal_pos_2d(h, w, enc.key_channels),
    )


def object_logit(state: SequenceState, obj: ObjectState, query: FrameEmbedding) -> np.ndarray:
    """Grid-scale logit for one object against the shared query embedding."""
    cfg, w = state.cfg, state.weights
    y_grm, _ = grm.global_read(obj.pool, query.global_key, cfg.temperature, attention_cap=0)
    y_pgm = y_orm = None
    if cfg.enable_pgm:
        inputs = pgm.PgmInputs(state.prev_embedding.local_key, query.local_key, obj.prev_mask, query.value)
        S = pgm.position_correlation(inputs, state.pos, w.projections.fn)
        y_pgm = pgm.pgm_apply(pgm.position_map(S, query.grid, cfg.topk), query.value)
    if cfg.enable_orm:
        y_orm = orm.object_relation(obj.foreground, query.value, w.orm, cfg.orm_normalize)
    merged = fusion.merge_branches(y_pgm, y_orm, cfg.enable_pgm, cfg.enable_orm, query.value, cfg.merge_mode)
    return fusion.readout(y_grm, merged, query.value, cfg.readout)


def step(state: SequenceState, frame):
    """Segment one frame; returns ``(state, labels, probs)`` with full-resolution outputs.

    ``state`` is updated in place (and also returned).
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[:2] != tuple(state.frame_shape) or frame.ndim != 3:
        raise ShapeDriftError(f"frame {frame.shape} does not match sequence extents {state.frame_shape}")
    cfg = state.cfg
    enc = cfg.encoder
    state.frame_counter += 1
    t = state.frame_counter
    query = encode_query(frame, state.weights.projections, enc)

    if cfg.threads > 1 and len(state.objects) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            logits = list(ex.map(lambda o: object_logit(state, o, query), state.objects))
    else:
        logits = [object_logit(state, o, query) for o in state.objects]

    grid_probs = fusion.soft_aggregate(logits, cfg.readout.epsilon, cfg.aggregation)
    write = t % cfg.memory_stride == 0
    for m, obj in enumerate(state.objects, start=1):
        obj.prev_mask = np.clip(grid_probs[m], 0.0, 1.0)
        if write:
            value = query.value.copy()
            value[..., -1] = obj.prev_mask
            obj.pool = grm.pool_write(obj.pool, FrameEmbedding(query.global_key, query.local_key, value), t)
    state.prev_embedding = query

    probs = fusion.upsample(grid_probs, enc.downscale, cfg.upsample)
    labels = fusion.argmax_mask(probs)
    return state, labels, probs


def run(frames, first_mask, cfg: PropagationConfig = PropagationConfig(), weights: Weights | None = None):
    """Propagate ``first_mask`` through ``frames``; element 0 of the result is ``first_mask``."""
    if len(frames) == 0:
        raise ParameterError("run needs at least one frame")
    first_mask = np.asarray(first_mask)
    state = init(frames[0], first_mask, cfg, weights)
    out = [first_mask.astype(np.int64).copy()]
    for frame in frames[1:]:
        state, labels, _ = step(state, frame)
        out.append(labels)
    return out
