"""Command-line pipeline driver.

Subcommands mirror the pipeline stages and each stage writes files, so
every stage can be re-run and tested on its own:

    blightpipe preprocess --config cfg.toml     resize + equalize images
    blightpipe concat     --config cfg.toml     join per-backbone features
    blightpipe select     --config cfg.toml     EO feature selection per k
    blightpipe run        --config cfg.toml     selection + CV evaluation
    blightpipe report     --config cfg.toml     re-render saved reports

Managed outputs live under {out}/{config-hash}/ and every artifact
carries that hash, so runs from different configurations never mix.
Existing mask files with a matching hash are reused instead of being
recomputed.
"""

import argparse
import json
import sys
from pathlib import Path

from . import config as cfgmod
from . import evaluation, imaging, selector, svm
from .errors import ConfigurationError, PipelineError
from .featstore import (
    concat,
    load_dataset,
    load_featmat,
    make_folds,
    subset,
    write_featmat,
)
from .rng import substream_seed

OUTER_FOLD_STREAM = 2**33  # outer CV fold assignment
SINGLE_RUN_FOLD = 2**20  # pseudo fold index for the single-run shortcut


def _parser():
    parser = argparse.ArgumentParser(
        prog="blightpipe",
        description="Leaf-image classification pipeline: preprocessing, "
        "feature selection, and SVM evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("preprocess", "resize and equalize the raw image tree"),
        ("concat", "concatenate per-backbone feature matrices"),
        ("select", "run feature selection for every configured k"),
        ("run", "feature selection plus cross-validated evaluation"),
        ("report", "re-render reports from saved report.json files"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="TOML configuration file")
        cmd.add_argument("--threads", type=int, help="worker thread bound")
        cmd.add_argument("--seed", type=int, help="override the configured seed")
        cmd.add_argument("--out", help="override the managed output root")
    return parser


def _effective(args):
    cfg = cfgmod.load_config(args.config)
    cfg = cfgmod.apply_overrides(
        cfg, threads=args.threads, seed=args.seed, out=args.out
    )
    return cfg, cfgmod.config_hash(cfg)


def _managed_dir(cfg, cfg_hash) -> Path:
    out = Path(cfg.out) / cfg_hash
    out.mkdir(parents=True, exist_ok=True)
    snapshot = out / "config.json"
    if not snapshot.exists():
        payload = {"config_hash": cfg_hash, "config": cfgmod.canonical_dict(cfg)}
        snapshot.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return out


def cmd_preprocess(cfg, cfg_hash) -> int:
    if not cfg.image_root or not cfg.preprocessed:
        raise ConfigurationError("preprocess needs paths.image_root and paths.preprocessed")
    written, failed = imaging.preprocess_tree(
        cfg.image_root,
        cfg.preprocessed,
        size=tuple(cfg.size),
        do_equalize=cfg.equalize,
        metadata={"config_hash": cfg_hash},
    )
    for rel in failed:
        print(f"warning: could not process {rel}", file=sys.stderr)
    print(f"preprocessed {len(written)} images into {cfg.preprocessed}")
    return 0 if written else 2


def cmd_concat(cfg, cfg_hash) -> int:
    if not cfg.features or not cfg.features_out:
        raise ConfigurationError("concat needs paths.features and paths.features_out")
    parts = [load_featmat(path) for path in cfg.features]
    merged = concat(parts)
    out_path = Path(cfg.features_out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_featmat(merged, out_path)
    meta = {
        "config_hash": cfg_hash,
        "rows": merged.rows,
        "cols": merged.cols,
        "source_tag": merged.source_tag,
    }
    Path(str(out_path) + ".meta").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {merged.rows}x{merged.cols} features to {out_path}")
    return 0


def _search_spec(cfg, k):
    return dict(svm.classifier_suite(k, cfg.box_constraint))[cfg.search_kernel]


def _svm_options(cfg):
    return {
        "tol": cfg.tol,
        "max_passes": cfg.max_passes,
        "cache_rows": cfg.cache_rows,
    }


def _select_one(ds, cfg, cfg_hash, k, fold, rows, k_dir):
    """Compute or reuse the mask for one (k, fold) cell."""
    tag = "full" if fold == SINGLE_RUN_FOLD else f"fold{fold}"
    mask_path = k_dir / f"mask_{tag}.csv"
    if mask_path.exists():
        mask, _, stored_hash = selector.load_mask(mask_path)
        if stored_hash == cfg_hash and len(mask) == k:
            return mask, True
    eo_cfg = selector.EoConfig(
        population=cfg.population,
        max_iter=cfg.max_iter,
        a1=cfg.a1,
        a2=cfg.a2,
        generation_prob=cfg.generation_prob,
        target_k=k,
        penalty_weight=cfg.penalty_weight,
        seed=substream_seed(substream_seed(cfg.seed, k), fold),
        fitness_folds=cfg.fitness_folds,
    )
    search_ds = ds if rows is None else subset(ds, rows=rows)
    mask, trace = selector.eo_select(
        search_ds,
        _search_spec(cfg, k),
        eo_cfg,
        standardize=cfg.standardize,
        **_svm_options(cfg),
    )
    selector.write_mask(mask_path, mask, eo_cfg.seed, cfg_hash)
    selector.write_trace(k_dir / f"trace_{tag}.csv", trace, cfg_hash)
    return mask, False


def _ensure_masks(cfg, cfg_hash, out_dir, ds, folds):
    """Masks for every configured k, per outer fold or single-run."""
    masks_by_k = {}
    for k in cfg.k_list:
        if k > ds.features.cols:
            raise ConfigurationError(
                f"k={k} exceeds the {ds.features.cols} available columns"
            )
        k_dir = out_dir / f"k{k}"
        k_dir.mkdir(parents=True, exist_ok=True)
        if cfg.per_fold:
            masks = []
            for fold in range(folds.k):
                mask, reused = _select_one(
                    ds, cfg, cfg_hash, k, fold, folds.train_indices(fold), k_dir
                )
                masks.append(mask)
                print(
                    f"k={k} fold {fold}: mask "
                    + ("reused" if reused else "computed")
                )
            masks_by_k[k] = masks
        else:
            mask, reused = _select_one(
                ds, cfg, cfg_hash, k, SINGLE_RUN_FOLD, None, k_dir
            )
            print(f"k={k}: mask " + ("reused" if reused else "computed"))
            masks_by_k[k] = mask
    return masks_by_k


def _load_run_inputs(cfg):
    if not cfg.features_out or not cfg.labels:
        raise ConfigurationError("need paths.features_out and paths.labels")
    ds = load_dataset(cfg.features_out, cfg.labels)
    folds = make_folds(
        ds.labels, cfg.folds, substream_seed(cfg.seed, OUTER_FOLD_STREAM)
    )
    return ds, folds


def cmd_select(cfg, cfg_hash) -> int:
    out_dir = _managed_dir(cfg, cfg_hash)
    ds, folds = _load_run_inputs(cfg)
    _ensure_masks(cfg, cfg_hash, out_dir, ds, folds)
    return 0


def cmd_run(cfg, cfg_hash) -> int:
    out_dir = _managed_dir(cfg, cfg_hash)
    ds, folds = _load_run_inputs(cfg)
    masks_by_k = _ensure_masks(cfg, cfg_hash, out_dir, ds, folds)
    any_failed = False
    for k in cfg.k_list:
        suite = dict(svm.classifier_suite(k, cfg.box_constraint))
        variants = [(name, suite[name]) for name in cfg.variants]
        report = evaluation.run_experiment(
            ds,
            masks_by_k[k],
            variants,
            folds,
            tol=cfg.tol,
            max_passes=cfg.max_passes,
            standardize=cfg.standardize,
            cache_rows=cfg.cache_rows,
            threads=cfg.threads,
        )
        report.config = {"config_hash": cfg_hash, "k": k, "seed": cfg.seed}
        k_dir = out_dir / f"k{k}"
        for fmt, suffix in (("text", "txt"), ("csv", "csv"), ("json", "json")):
            (k_dir / f"report.{suffix}").write_text(
                evaluation.render_report(report, fmt), encoding="utf-8"
            )
        failed = report.failed
        if failed:
            any_failed = True
            print(f"k={k}: FAILED variants: {', '.join(failed)}", file=sys.stderr)
        else:
            print(f"k={k}: report written to {k_dir}")
    return 1 if any_failed else 0


def cmd_report(cfg, cfg_hash) -> int:
    out_dir = Path(cfg.out) / cfg_hash
    found = sorted(out_dir.glob("k*/report.json"))
    if not found:
        print(f"no report.json under {out_dir}", file=sys.stderr)
        return 2
    for path in found:
        report = evaluation.report_from_json(path.read_text(encoding="utf-8"))
        for fmt, suffix in (("text", "txt"), ("csv", "csv")):
            path.with_suffix("." + suffix).write_text(
                evaluation.render_report(report, fmt), encoding="utf-8"
            )
        print(evaluation.render_report(report, "text"), end="")
    return 0


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "concat": cmd_concat,
    "select": cmd_select,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg, cfg_hash = _effective(args)
        return _COMMANDS[args.command](cfg, cfg_hash)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
