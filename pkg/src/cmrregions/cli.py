"""Command-line entry point: phantom, index, import, train, eval."""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ALL_ARMS, RunConfig, load_run_config
from .core import FOREGROUND_LABELS, CmrError, DatasetIndex, Phase, Split
from .dataio import (
    INDEX_FILE,
    LabelRemap,
    build_index,
    dump_json,
    import_volume,
    load_dataset_stack,
    load_index,
    save_index,
)
from .metrics.classification import ConfusionMatrix, classifier_metrics
from .metrics.dice import dsc_table
from .metrics.regional import delta_table, table_profiles
from .models.checkpoint import Scope, load_checkpoint, save_checkpoint
from .models.training import predict_regions, train_classifier, train_segmenter
from .phantom import PhantomParams, generate_dataset
from .pipeline import ModelBundle, run_dataset
from .report import (
    classifier_metrics_csv,
    delta_table_csv,
    plot_profiles,
    profiles_csv,
    region_stats_csv,
)
from .sampler import SamplerConfig, build_weights

log = logging.getLogger("cmrregions")

TRAIN_KINDS = ("baseline", "sampler", "classifier", "region-base", "region-middle", "region-apex")
RUN_MANIFEST = "run_manifest.json"


class CliError(CmrError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dataset_index(cfg: RunConfig) -> DatasetIndex:
    cfg.check_paths("data")
    path = Path(cfg.data) / INDEX_FILE
    if path.is_file():
        return load_index(path)
    return build_index(cfg.data, cfg.split_seed, cfg.fractions)


# --- phantom -----------------------------------------------------------------

def cmd_phantom(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(f"output directory {out} is not empty (use --force to overwrite)")
    index = generate_dataset(args.n, PhantomParams(), args.seed, out)
    manifest = {
        "command": "phantom",
        "n_stacks": args.n,
        "seed": args.seed,
        "phantom_params": PhantomParams().__dict__,
        "index_sha256": _sha256(out / INDEX_FILE),
    }
    dump_json(manifest, out / RUN_MANIFEST)
    counts = {s.value: len(index.stack_ids(s)) for s in Split}
    print(f"wrote {args.n} stacks ({len(index.records)} slices) to {out}; "
          f"split stacks train/val/test = {counts['train']}/{counts['val']}/{counts['test']}")
    return 0


# --- index / import ------------------------------------------------------------

def cmd_index(args, cfg: RunConfig) -> int:
    cfg.check_paths("data")
    index = build_index(cfg.data, cfg.split_seed, cfg.fractions)
    save_index(index, Path(cfg.data) / INDEX_FILE)
    print(f"indexed {len(index.stack_ids())} stacks, {len(index.records)} slices")
    return 0


def _parse_remap(text: str) -> LabelRemap:
    mapping = {}
    for item in filter(None, text.split(",")):
        src, _, dst = item.partition(":")
        mapping[int(src)] = int(dst)
    return LabelRemap(mapping)


def cmd_import(args, cfg: RunConfig) -> int:
    manifest = import_volume(args.image, _parse_remap(args.remap), args.orientation, args.out,
                             labels=args.labels, phase=args.phase, stack_id=args.stack_id)
    print(f"imported {manifest.stack_id} {manifest.phase}: {manifest.n_slices} slices "
          f"{manifest.height}x{manifest.width}")
    return 0


# --- train ---------------------------------------------------------------------

def cmd_train(args, cfg: RunConfig) -> int:
    cfg.check_paths("data")
    if cfg.models is None:
        raise CliError("--out is required")
    index = _dataset_index(cfg)
    kind = args.kind
    seg_cfg = cfg.segmenter_config()
    sampler_cfg = None
    if kind == "classifier":
        ckpt = train_classifier(index, cfg.classifier_config())
    elif kind == "sampler":
        sampler_cfg = SamplerConfig(cfg.sampler_ratio, seg_cfg.batch_size, cfg.seed)
        ckpt = train_segmenter(index, Scope.ALL, build_weights(index, sampler_cfg), seg_cfg)
    elif kind == "baseline":
        ckpt = train_segmenter(index, Scope.ALL, None, seg_cfg)
    else:
        ckpt = train_segmenter(index, Scope(kind.split("-", 1)[1]), None, seg_cfg)

    name = kind if not args.name else f"{kind}-{args.name}"
    target = Path(cfg.models) / name
    save_checkpoint(ckpt, target)
    manifest = {
        "command": "train",
        "kind": kind,
        "config_hash": cfg.hash(),
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "split_seed": cfg.split_seed,
        "sampler": None if sampler_cfg is None else sampler_cfg.__dict__,
        "checkpoint_hash": ckpt.hash,
    }
    dump_json(manifest, Path(cfg.models) / f"{name}.{RUN_MANIFEST}")
    print(f"trained {name}: {len(ckpt.log)} epochs, hash {ckpt.hash[:12]} -> {target}")
    return 0


# --- eval ----------------------------------------------------------------------

def _load_bundle(models: Path, arms: Sequence[str]) -> tuple[ModelBundle, dict]:
    def get(name: str, required: bool):
        # only the checkpoints the requested arms use are loaded and recorded
        if not required:
            return None
        path = models / name
        if not path.is_dir():
            raise CliError(f"missing checkpoint {path} (train it with `train {name}`)")
        return load_checkpoint(path)

    routed = any(a in ("classified", "oracle") for a in arms)
    bundle = ModelBundle(
        baseline=get("baseline", True),
        base_model=get("region-base", routed),
        middle_model=get("region-middle", routed),
        apex_model=get("region-apex", routed),
        classifier=get("classifier", "classified" in arms),
        sampler_model=get("sampler", "sampled" in arms),
    )
    hashes = {
        name: ck.hash
        for name, ck in (
            ("baseline", bundle.baseline), ("region-base", bundle.base_model),
            ("region-middle", bundle.middle_model), ("region-apex", bundle.apex_model),
            ("classifier", bundle.classifier), ("sampler", bundle.sampler_model),
        )
        if ck is not None
    }
    return bundle, hashes


def _classifier_checkpoints(models: Path) -> dict:
    out = {}
    for path in sorted(models.glob("classifier*")):
        if path.is_dir():
            out[path.name] = load_checkpoint(path)
    return out


def cmd_eval(args, cfg: RunConfig) -> int:
    cfg.check_paths("data", "models")
    if cfg.out is None:
        raise CliError("--out is required")
    arms = list(dict.fromkeys(cfg.arms))
    if len(arms) >= 2 and "baseline" not in arms:
        raise CliError("comparing arms needs the baseline arm as reference")
    index = _dataset_index(cfg)
    models = Path(cfg.models)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle, hashes = _load_bundle(models, arms)

    test_keys = index.stack_keys(Split.TEST)
    gt_stacks = [load_dataset_stack(index, sid, ph) for sid, ph in test_keys]
    written: list[Path] = []
    tables, profiles = {}, {}
    for arm in arms:
        arm_dir = out / arm
        store = run_dataset(arm, bundle, index, arm_dir / "predictions")
        table = dsc_table(gt_stacks, store)
        tables[arm] = table
        profiles[arm] = table_profiles(table)
        for fname, text in (
            ("dsc_table.csv", table.to_csv()),
            ("region_stats.csv", region_stats_csv(table, cfg.dataset_name)),
        ):
            (arm_dir / fname).write_text(text, encoding="utf-8")
            written.append(arm_dir / fname)
        log.info("arm %s: %d DSC rows", arm, len(table.rows))

    if "classified" in arms:
        results = {}
        slices = [s for st in gt_stacks for s in st.slices]
        truth = [r for st in gt_stacks for r in st.gt_regions]
        for name, ckpt in _classifier_checkpoints(models).items():
            preds = [r for r, _ in predict_regions(ckpt, slices)]
            results[name] = classifier_metrics(ConfusionMatrix.from_labels(truth, preds))
        path = out / "classifier_metrics.csv"
        path.write_text(classifier_metrics_csv(results), encoding="utf-8")
        written.append(path)

    if len(arms) >= 2:
        deltas = {arm: delta_table(tables["baseline"], tables[arm])
                  for arm in arms if arm != "baseline"}
        path = out / "delta_table.csv"
        path.write_text(delta_table_csv(deltas, cfg.dataset_name), encoding="utf-8")
        written.append(path)

    path = out / "profiles.csv"
    path.write_text(profiles_csv(profiles), encoding="utf-8")
    written.append(path)
    for label in FOREGROUND_LABELS:
        plot_profiles(profiles, label, out / f"profile_{label.name}.png")

    manifest = {
        "command": "eval",
        "arms": arms,
        "config_hash": cfg.hash(),
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "split_seed": cfg.split_seed,
        "checkpoint_hashes": hashes,
        "test_stacks": [f"{sid}_{ph.value}" for sid, ph in test_keys],
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in sorted(written)},
    }
    dump_json(manifest, out / RUN_MANIFEST)
    print(f"evaluated arms {', '.join(arms)} on {len(gt_stacks)} test stacks -> {out}")
    return 0


# --- parser ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--profile", choices=["desk", "paper"], help="named training profile")
    p.add_argument("--seed", type=int, help="global training seed")
    p.add_argument("--split-seed", type=int, dest="split_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmrregions", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True, help="number of subjects (ED+ES stacks each)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("index", help="(re)build index.json for a dataset directory")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--fractions", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("import", help="convert an external volume to the internal format")
    p.add_argument("--image", required=True)
    p.add_argument("--labels")
    p.add_argument("--remap", default="1:1,2:2,3:3", help="external:internal pairs, e.g. 3:1,2:2,1:3")
    p.add_argument("--orientation", choices=["base_first", "apex_first"], required=True)
    p.add_argument("--phase", choices=[p.value for p in Phase], default="ED")
    p.add_argument("--stack-id", dest="stack_id")
    p.add_argument("--out", required=True, help="target stack directory")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("kind", choices=TRAIN_KINDS)
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, dest="models", help="models directory")
    p.add_argument("--ratio", type=float, dest="sampler_ratio", help="sampler max/min ratio (4 low, 20 high)")
    p.add_argument("--name", help="suffix for the checkpoint directory (classifier comparisons)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run inference arms and write reports")
    _common(p)
    p.add_argument("--arms", help=f"comma-separated subset of {','.join(ALL_ARMS)}")
    p.add_argument("--models", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-name", dest="dataset_name")
    p.set_defaults(func=cmd_eval)
    return parser


CONFIG_KEYS = ("data", "out", "models", "split_seed", "sampler_ratio", "profile", "seed",
               "dataset_name", "fractions")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k, None) for k in CONFIG_KEYS}
        if getattr(args, "arms", None):
            overrides["arms"] = [a.strip() for a in args.arms.split(",") if a.strip()]
        if args.command in ("phantom", "import"):
            cfg = RunConfig()
        else:
            cfg = load_run_config(getattr(args, "config", None), overrides)
        return args.func(args, cfg)
    except CmrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
