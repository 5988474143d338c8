"""Command-line entry point: ``lcmvos synth|run|eval|bench``.

Exit codes: 0 success, 2 bad parameters or missing inputs, 3 I/O failure,
4 frame extents changing mid-sequence, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, grm, metrics, orm, pgm, pipeline, synthdata
from .encoding import EncoderConfig, ProjectionWeights, encode_query, sinusoidal_pos_2d
from .errors import LcmError, ParameterError, SceneError, ShapeDriftError
from .pnm import read_frame, read_labels, write_pgm

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO, EXIT_SHAPE = 0, 1, 2, 3, 4

MANIFEST_NAME = "manifest.json"
REFERENCE = "reference"

# config-file keys that live on ReadoutConfig rather than PropagationConfig
READOUT_KEYS = ("alpha", "gamma", "tau", "epsilon", "evidence_norm")


class UsageError(Exception):
    """Bad arguments or missing inputs (exit 2)."""


# ---------------------------------------------------------------- config


def _coerce(text: str, like):
    if isinstance(like, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {text!r}")
    try:
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
    except ValueError:
        raise UsageError(f"expected a number, got {text!r}") from None
    return text.strip()


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(values: dict) -> pipeline.PropagationConfig:
    """Make a PropagationConfig from string or typed values (unknown keys are an error)."""
    base = pipeline.PropagationConfig()
    prop, ro = {}, {}
    known = {f.name for f in dataclasses.fields(base)} - {"readout"}
    for key, value in values.items():
        if key in READOUT_KEYS:
            like = getattr(base.readout, key)
            ro[key] = _coerce(value, like) if isinstance(value, str) else value
        elif key in known:
            like = getattr(base, key)
            prop[key] = _coerce(value, like) if isinstance(value, str) else value
        else:
            raise UsageError(f"unknown config key {key!r}")
    return dataclasses.replace(base, readout=dataclasses.replace(base.readout, **ro), **prop)


def config_dict(cfg: pipeline.PropagationConfig) -> dict:
    out = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg) if f.name != "readout"}
    for key in READOUT_KEYS:
        out[key] = getattr(cfg.readout, key)
    return out


def resolve_weights_dir(name: str | None) -> Path | None:
    if name is None:
        return None
    if name == REFERENCE:
        return Path(str(pipeline.reference_weights_dir()))
    path = Path(name)
    if not path.is_dir():
        raise UsageError(f"weights directory {name!r} does not exist")
    return path


def load_weights(cfg: pipeline.PropagationConfig, weights_dir: Path | None):
    if weights_dir is None:
        return cfg, pipeline.Weights.default(cfg)
    cfg = dataclasses.replace(cfg, readout=cfg.readout.with_linear(weights_dir))
    return cfg, pipeline.Weights.load(weights_dir, cfg)


# ---------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    config: dict
    frames_dir: str
    first_mask: str
    out_dir: str
    weights: str | None = None
    seed: int | None = None
    enable_pgm: bool = True
    enable_orm: bool = True
    frame_count: int = 0
    timings: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"manifest has unknown fields {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    spec = dataclasses.replace(synthdata.scenario(args.scenario, args.seed), seed=args.seed)
    n = synthdata.write_scene(spec, args.out_dir)
    print(f"wrote {n} frames to {args.out_dir}")
    return EXIT_OK


def _list_frames(in_dir: Path) -> list[Path]:
    if not in_dir.is_dir():
        raise UsageError(f"input directory {str(in_dir)!r} does not exist")
    paths = sorted(in_dir.glob("frame_*.ppm"))
    if not paths:
        raise UsageError(f"no frame_*.ppm files in {str(in_dir)!r}")
    return paths


def _scene_seed(in_dir: Path):
    scene = in_dir / "scene.json"
    if scene.exists():
        try:
            return int(json.loads(scene.read_text())["seed"])
        except (ValueError, KeyError):
            return None
    return None


def _threads_default() -> int:
    env = os.environ.get("LCM_THREADS")
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"LCM_THREADS must be an integer, got {env!r}") from None


def run_from_manifest(man: RunManifest, out_dir: Path) -> RunManifest:
    """Propagate using everything recorded in ``man``; writes predictions and a new manifest."""
    timings = {}
    t0 = time.perf_counter()
    cfg = build_config(man.config)
    cfg, weights = load_weights(cfg, resolve_weights_dir(man.weights))
    in_dir = Path(man.frames_dir)
    paths = _list_frames(in_dir)
    if not Path(man.first_mask).exists():
        raise UsageError(f"first mask {man.first_mask!r} does not exist")
    frames = [read_frame(p) for p in paths]
    first = read_labels(man.first_mask)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    preds = pipeline.run(frames, first, cfg, weights)
    timings["propagate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, labels in enumerate(preds):
        write_pgm(out_dir / f"pred_{t:04d}.pgm", labels)
    timings["write"] = time.perf_counter() - t0
    result = dataclasses.replace(man, config=config_dict(cfg), out_dir=str(out_dir),
                                 enable_pgm=cfg.enable_pgm, enable_orm=cfg.enable_orm,
                                 frame_count=len(preds), timings=timings)
    (out_dir / MANIFEST_NAME).write_text(result.to_json() + "\n")
    return result


def cmd_run(args) -> int:
    if args.from_manifest:
        path = Path(args.from_manifest)
        if not path.exists():
            raise UsageError(f"manifest {args.from_manifest!r} does not exist")
        man = RunManifest.from_json(path.read_text())
        out_dir = Path(args.out_dir or args.in_dir or man.out_dir)
        result = run_from_manifest(man, out_dir)
        print(f"wrote {result.frame_count} predictions to {out_dir}")
        return EXIT_OK

    if not (args.in_dir and args.first_mask and args.out_dir):
        raise UsageError("run needs IN_DIR FIRST_MASK OUT_DIR (or --from-manifest)")
    values = {"threads": _threads_default()}
    if args.config:
        try:
            values.update(parse_config(Path(args.config).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise UsageError(f"config file {args.config!r} does not exist") from None
    weights = values.pop("weights", None)
    flags = {
        "memory_stride": args.memory_stride, "topk": args.topk, "temperature": args.temperature,
        "threads": args.threads,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.no_pgm:
        values["enable_pgm"] = False
    if args.no_orm:
        values["enable_orm"] = False
    if args.weights is not None:
        weights = args.weights
    cfg = build_config(values)  # validates before any work
    in_dir = Path(args.in_dir)
    man = RunManifest(config=config_dict(cfg), frames_dir=str(in_dir), first_mask=str(args.first_mask),
                      out_dir=str(args.out_dir), weights=weights, seed=_scene_seed(in_dir))
    result = run_from_manifest(man, Path(args.out_dir))
    print(f"wrote {result.frame_count} predictions to {args.out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    preds = sorted(Path(args.pred_dir).glob("pred_*.pgm"))
    gts = sorted(Path(args.gt_dir).glob("gt_*.pgm"))
    if not preds or not gts:
        raise UsageError(f"no predictions in {args.pred_dir!r} or no ground truth in {args.gt_dir!r}")
    if len(preds) != len(gts):
        raise UsageError(f"{len(preds)} predictions but {len(gts)} ground-truth masks")
    for p, g in zip(preds, gts):
        if p.name[5:] != g.name[3:]:
            raise UsageError(f"prediction {p.name} has no matching ground truth (found {g.name})")
    res = metrics.evaluate([read_labels(p) for p in preds], [read_labels(g) for g in gts], args.tolerance)
    Path(args.csv_path).write_text(res.to_csv())
    print(f"{res.overall:.4f}")
    return EXIT_OK


def _digest(a) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()[:16]


def bench_rows(grid: int, pool_frames: int, reps: int, width: int = 256, seed: int = 0):
    """Time the three read kernels on a seeded random frame; returns CSV-ready dicts."""
    if grid < 1 or pool_frames < 1 or reps < 1:
        raise UsageError("grid, pool and reps must all be positive")
    enc = EncoderConfig(downscale=4, width=width)
    rng = np.random.default_rng(seed)
    weights = ProjectionWeights.default(enc)
    frames = [rng.random((grid * 4, grid * 4, 3)) for _ in range(pool_frames + 1)]
    embs = [encode_query(f, weights, enc) for f in frames]
    pool = grm.MemoryPool()
    for t, e in enumerate(embs[:-1]):
        pool = grm.pool_write(pool, e, t)
    query = embs[-1]
    ck, cv = enc.key_channels, enc.value_channels
    pos = sinusoidal_pos_2d(grid, grid, ck)
    prev = embs[-2]
    inputs = pgm.PgmInputs(prev.local_key, query.local_key, rng.random((grid, grid)), query.value)
    fg_mask = np.zeros((grid, grid))
    fg_mask[: max(1, grid // 4), : max(1, grid // 4)] = 1.0
    fg = orm.build_foreground_set(prev.value, fg_mask)
    ow = orm.OrmWeights.default(cv)

    kernels = [
        ("global_read", lambda: grm.global_read(pool, query.global_key, 1.0, attention_cap=0)[0],
         grm.read_flops(pool_frames, grid, grid, ck, cv)),
        ("position_correlation", lambda: pgm.position_correlation(inputs, pos, weights.fn),
         pgm.correlation_flops(grid, grid, ck)),
        ("cross_relation", lambda: np.concatenate(
            [a.reshape(-1) for a in orm.cross_relation(fg, query.value, ow)]),
         orm.relation_flops(len(fg), grid, grid, cv)),
    ]
    rows = []
    for name, fn, flops in kernels:
        times, out = [], None
        for _ in range(reps):
            t0 = time.perf_counter()
            out = fn()
            times.append(time.perf_counter() - t0)
        med = float(np.median(times))
        rows.append(dict(kernel=name, grid=grid, pool=pool_frames, reps=reps, median_s=med,
                         flops=flops, gflops=flops / med / 1e9 if med > 0 else float("inf"),
                         checksum=_digest(out)))
    return rows


BENCH_COLUMNS = ("kernel", "grid", "pool", "reps", "median_s", "flops", "gflops", "checksum")


def cmd_bench(args) -> int:
    rows = bench_rows(args.grid, args.pool, args.reps, args.width)
    print(",".join(BENCH_COLUMNS))
    for r in rows:
        print(f"{r['kernel']},{r['grid']},{r['pool']},{r['reps']},{r['median_s']:.6e},"
              f"{r['flops']},{r['gflops']:.4f},{r['checksum']}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


RUN_EPILOG = """\
Settings are resolved in this order, later entries winning:
  1. built-in defaults
  2. LCM_THREADS (threads only)
  3. --config FILE: flat 'key = value' lines, '#' comments. Keys are the
     PropagationConfig fields (memory_stride, topk, temperature, enable_pgm,
     enable_orm, downscale, width, fg_threshold, orm_reduction, orm_normalize,
     merge_mode, aggregation, threads), the readout fields (alpha, gamma, tau,
     epsilon, evidence_norm) and 'weights'.
  4. command-line flags
--weights reference selects the weight set shipped with the package.
"""


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lcmvos", description="Toy semi-supervised video object segmentation.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a named synthetic scenario")
    p.add_argument("scenario", help=f"one of: {', '.join(synthdata.SCENARIOS)}")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="propagate the first-frame mask",
                       epilog=RUN_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("in_dir", nargs="?")
    p.add_argument("first_mask", nargs="?")
    p.add_argument("out_dir", nargs="?")
    p.add_argument("--no-pgm", action="store_true", help="disable position guidance")
    p.add_argument("--no-orm", action="store_true", help="disable object relation")
    p.add_argument("--memory-stride", type=int)
    p.add_argument("--topk", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--weights", metavar="DIR", help="weight directory, or 'reference'")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--threads", type=int, help="per-object worker threads (fallback: LCM_THREADS)")
    p.add_argument("--from-manifest", metavar="FILE",
                   help="repeat a recorded run; the single positional, if given, is the output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("csv_path")
    p.add_argument("--tolerance", type=int, default=None, help="boundary tolerance in pixels")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time the three read kernels")
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--pool", type=int, default=4)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--width", type=int, default=256)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParameterError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeDriftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except LcmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:  # unreadable or malformed files
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
