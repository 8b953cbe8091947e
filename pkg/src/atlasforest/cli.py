"""Command-line pipeline: synth, label, normalize, train-eval, boruta, run.

Every stage exchanges data through CSV/JSON files and writes its artifacts
atomically (temp file + rename). Exit codes: 0 success, 2 config error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import boruta as boruta_mod
from . import evaluation, normalize as normalize_mod
from .atlas import REGION_FEATURES
from .cohort import Group, assign_group
from .errors import ConfigError, DataError, PipelineError
from .features import (FeatureSet, SubjectRecord, assemble_matrix,
                       apply_imputer, fit_imputer, parse_subject_table,
                       write_subject_table)
from .forest import GRID_MAX_DEPTHS, GRID_N_TREES, HyperParams
from .synth import (SynthConfig, contrast_key, default_cohort_config,
                    generate_cohort)

log = logging.getLogger("atlasforest")

FINDINGS_SCHEMA_VERSION = 1


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path: Path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


@dataclass
class PipelineConfig:
    input_csv: Optional[str] = None  # None -> synthesize the default cohort
    out_dir: str = "out"
    seed: int = 0
    feature_set: str = "mri+clinical"
    contrast: str = "atAD:nonAD"
    sign: str = "atrophy"
    threads: Optional[int] = None
    grid_max_depths: list[int] = field(default_factory=lambda: list(GRID_MAX_DEPTHS))
    grid_n_trees: list[int] = field(default_factory=lambda: list(GRID_N_TREES))
    boruta_alpha: float = 0.05
    boruta_percentile: float = 100.0
    boruta_max_iter: int = 100
    boruta_max_depth: int = 5
    boruta_n_trees: Optional[int] = None
    boruta_columns: str = "mri"

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - set(cls().__dict__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def parse_contrast(text: str) -> tuple[Group, Group]:
    parts = text.split(":")
    by_value = {g.value: g for g in Group}
    if len(parts) != 2 or parts[0] not in by_value or parts[1] not in by_value:
        raise ConfigError(
            f"contrast must be <A>:<B> with groups in "
            f"{sorted(by_value)}: got {text!r}")
    return by_value[parts[0]], by_value[parts[1]]


def parse_feature_set(name: str) -> FeatureSet:
    for fs in FeatureSet:
        if fs.value == name:
            return fs
    raise ConfigError(f"unknown feature_set {name!r}; valid: "
                      f"{[fs.value for fs in FeatureSet]}")


def default_grid(config: PipelineConfig) -> list[HyperParams]:
    return [HyperParams(max_depth=d, n_trees=t)
            for d in config.grid_max_depths for t in config.grid_n_trees]


# ---------------------------------------------------------------------------
# stage implementations


def stage_synth(out_dir: Path, seed: int, boundary: bool = False) -> Path:
    config = default_cohort_config(seed=seed)
    if boundary:
        config.boundary = True
    records, truth = generate_cohort(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort_csv = out_dir / "cohort.csv"
    tmp = cohort_csv.with_name("cohort.csv.tmp")
    write_subject_table(records, tmp)
    os.replace(tmp, cohort_csv)
    write_json(out_dir / "truth.json", {"contrasts": truth.contrasts})
    log.info("synth: wrote %d subjects to %s", len(records), cohort_csv)
    return cohort_csv


def stage_label(input_csv: Path, out_dir: Path) -> Path:
    records = parse_subject_table(input_csv)
    assignments = [assign_group(r) for r in records]
    out_dir.mkdir(parents=True, exist_ok=True)
    groups_csv = out_dir / "groups.csv"
    rows = []
    audit = []
    for r, a in zip(records, assignments):
        fired = ";".join(f"{name}:{'pass' if ok else 'fail'}"
                         for name, ok in a.fired_rules)
        group = a.group.value
        rows.append((r.subject_id, group, fired))
        audit.append({
            "subject_id": r.subject_id,
            "group": group,
            "exclusion_reason": a.exclusion_reason,
            "fired_rules": [{"rule": name, "passed": ok} for name, ok in a.fired_rules],
        })
    text = "subject_id,group,fired_rules\n" + "".join(
        f"{sid},{grp},{fired}\n" for sid, grp, fired in rows)
    atomic_write_text(groups_csv, text)
    write_json(out_dir / "audit.json", {"assignments": audit})
    log.info("label: assigned %d subjects", len(records))
    return groups_csv


def read_groups(path: Path) -> dict[str, Group]:
    by_value = {g.value: g for g in Group}
    out: dict[str, Group] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "subject_id" not in reader.fieldnames \
                or "group" not in reader.fieldnames:
            raise DataError(f"{path}: expected subject_id and group columns")
        for row in reader:
            if row["group"] not in by_value:
                raise DataError(f"{path}: unknown group {row['group']!r}")
            out[row["subject_id"]] = by_value[row["group"]]
    return out


def _records_matrix(records: Sequence[SubjectRecord]):
    """All-MRI-column matrix plus the covariate grid, for normalization."""
    from .atlas import MRI_FEATURES
    present = set()
    for r in records:
        present.update(r.mri)
    names = tuple(n for n in MRI_FEATURES if n in present)
    n = len(records)
    values = np.full((n, len(names)), np.nan)
    covs = np.empty((n, 3))
    for i, r in enumerate(records):
        if r.etiv is None:
            raise DataError(f"subject {r.subject_id}: etiv required for normalization")
        covs[i] = (r.age, 1 if r.sex == "F" else 0, r.etiv)
        for j, name in enumerate(names):
            v = r.mri.get(name)
            if v is not None:
                values[i, j] = v
    from .features import FeatureMatrix
    m = FeatureMatrix(column_names=names, values=values,
                      missing_mask=np.isnan(values),
                      row_ids=tuple(r.subject_id for r in records))
    return m, covs


def stage_normalize(input_csv: Path, groups_csv: Path, out_dir: Path,
                    sign: str = "atrophy") -> Path:
    records = parse_subject_table(input_csv)
    groups = read_groups(groups_csv)
    missing = [r.subject_id for r in records if r.subject_id not in groups]
    if missing:
        raise DataError(f"subjects without group assignment: {missing[:5]}")
    m, covs = _records_matrix(records)
    cn_mask = np.array([groups[r.subject_id] is Group.CN for r in records])
    z, models = normalize_mod.normalize_matrix(m, cn_mask, covs, sign=sign)

    zscored = []
    for i, r in enumerate(records):
        mri = {name: float(z.values[i, j])
               for j, name in enumerate(z.column_names)
               if not z.missing_mask[i, j]}
        zscored.append(SubjectRecord(**{**r.__dict__, "mri": mri}))
    out_dir.mkdir(parents=True, exist_ok=True)
    z_csv = out_dir / "zscored.csv"
    tmp = z_csv.with_name("zscored.csv.tmp")
    write_subject_table(zscored, tmp)
    os.replace(tmp, z_csv)
    write_json(out_dir / "glm_models.json", {
        "sign": sign,
        "models": {name: normalize_mod.model_to_dict(mod)
                   for name, mod in models.items()},
    })
    log.info("normalize: fitted %d feature models on %d CN rows",
             len(models), int(cn_mask.sum()))
    return z_csv


def _contrast_records(records, groups, contrast):
    sel = [r for r in records if groups.get(r.subject_id) in contrast]
    if not sel:
        raise DataError(f"no subjects in contrast {contrast[0].value}:{contrast[1].value}")
    y = np.array([1 if groups[r.subject_id] is contrast[0] else 0 for r in sel])
    return sel, y


def stage_train_eval(input_csv: Path, groups_csv: Path, out_dir: Path,
                     feature_set: FeatureSet, contrast: tuple[Group, Group],
                     grid: list[HyperParams], seed: int) -> dict:
    records = parse_subject_table(input_csv)
    groups = read_groups(groups_csv)
    sel, y = _contrast_records(records, groups, contrast)
    X = assemble_matrix(sel, feature_set)
    # cohorts recorded with a subset atlas leave absent features all-missing
    observed = [n for j, n in enumerate(X.column_names)
                if not X.missing_mask[:, j].all()]
    if len(observed) < len(X.column_names):
        log.info("train-eval: dropping %d all-missing columns",
                 len(X.column_names) - len(observed))
        X = X.select(observed)
    report = evaluation.nested_cv(X, y, grid, seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "seed": seed,
        "feature_set": feature_set.value,
        "contrast": f"{contrast[0].value}:{contrast[1].value}",
        "positive_group": contrast[0].value,
        "folds": [{
            "fold": fr.fold,
            "best_params": {"max_depth": fr.best_params.max_depth,
                            "n_trees": fr.best_params.n_trees},
            "confusion": {"tp": fr.confusion.tp, "fp": fr.confusion.fp,
                          "tn": fr.confusion.tn, "fn": fr.confusion.fn},
            "precision": fr.precision, "recall": fr.recall, "f1": fr.f1,
            "auc": fr.auc,
        } for fr in report.folds],
        "pooled": {
            "confusion": {"tp": report.pooled_confusion.tp,
                          "fp": report.pooled_confusion.fp,
                          "tn": report.pooled_confusion.tn,
                          "fn": report.pooled_confusion.fn},
            "precision": report.pooled_precision,
            "recall": report.pooled_recall,
            "f1": report.pooled_f1,
            "auc": report.pooled_auc,
        },
        "rows": [{"subject_id": sid, "label": int(lab), "score": float(score),
                  "prediction": int(pred)}
                 for sid, lab, score, pred in zip(
                     X.row_ids, y, report.row_scores, report.row_predictions)],
    }
    write_json(out_dir / "cv_report.json", doc)

    for fr in report.folds:
        lines = ["threshold,fpr,tpr"]
        for thr, (fpr, tpr) in zip(fr.roc_thresholds, fr.roc_points):
            lines.append(f"{repr(float(thr))},{repr(float(fpr))},{repr(float(tpr))}")
        atomic_write_text(out_dir / f"roc_fold{fr.fold + 1}.csv", "\n".join(lines) + "\n")
    log.info("train-eval: pooled F1 %s, AUC %.4f", report.pooled_f1, report.pooled_auc)
    return doc


def emit_findings_report(findings, path: Path, contrast: tuple[Group, Group],
                         alpha: float) -> None:
    doc = {
        "schema_version": FINDINGS_SCHEMA_VERSION,
        "contrast": f"{contrast[0].value}:{contrast[1].value}",
        "alpha": alpha,
        "findings": [{
            "feature_name": f.feature_name,
            "region": f.region,
            "hemisphere": f.hemisphere,
            "measure": f.measure,
            "mean_z": f.mean_z,
            "direction": f.direction,
        } for f in sorted(findings, key=lambda f: f.feature_name)],
    }
    write_json(path, doc)


def stage_boruta(input_csv: Path, groups_csv: Path, out_dir: Path,
                 contrast: tuple[Group, Group], config: boruta_mod.BorutaConfig,
                 columns: str = "mri") -> dict:
    records = parse_subject_table(input_csv)
    groups = read_groups(groups_csv)
    sel, y = _contrast_records(records, groups, contrast)
    if columns == "mri":
        # region-level z columns only; hippocampus included for findings
        present = set()
        for r in sel:
            present.update(r.mri)
        names = tuple(n for n in REGION_FEATURES if n in present)
        if not names:
            raise DataError("no region-level MRI columns in input")
        from .features import FeatureMatrix
        values = np.full((len(sel), len(names)), np.nan)
        for i, r in enumerate(sel):
            for j, name in enumerate(names):
                v = r.mri.get(name)
                if v is not None:
                    values[i, j] = v
        m = FeatureMatrix(column_names=names, values=values,
                          missing_mask=np.isnan(values),
                          row_ids=tuple(r.subject_id for r in sel))
    elif columns == "mri+clinical":
        m = assemble_matrix(sel, FeatureSet.MRI_PLUS_CLINICAL)
    else:
        raise ConfigError(f"unknown boruta column set {columns!r}; "
                          "valid: mri, mri+clinical")
    m = apply_imputer(fit_imputer(m), m)
    result = boruta_mod.boruta_run(m.values, y, config)
    sel_groups = [groups[r.subject_id] for r in sel]
    findings = boruta_mod.significant_regions(result, m, sel_groups, contrast)

    out_dir.mkdir(parents=True, exist_ok=True)
    emit_findings_report(findings, out_dir / "findings.json", contrast, config.alpha)
    lines = ["iteration," + ",".join(m.column_names)]
    for it, row in enumerate(result.importance_history):
        cells = ",".join("" if np.isnan(v) else repr(float(v)) for v in row)
        lines.append(f"{it},{cells}")
    atomic_write_text(out_dir / "boruta_trace.csv", "\n".join(lines) + "\n")
    log.info("boruta: %d confirmed of %d features in %d iterations",
             sum(d is boruta_mod.Decision.CONFIRMED for d in result.decisions),
             len(result.decisions), result.iterations_run)
    return {"findings": [f.feature_name for f in findings],
            "iterations": result.iterations_run}


def run_pipeline(config: PipelineConfig) -> None:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.input_csv is None:
        input_csv = stage_synth(out_dir, config.seed)
    else:
        input_csv = Path(config.input_csv)
        if not input_csv.exists():
            raise DataError(f"input file not found: {input_csv}")
    groups_csv = stage_label(input_csv, out_dir)
    z_csv = stage_normalize(input_csv, groups_csv, out_dir, sign=config.sign)
    contrast = parse_contrast(config.contrast)
    feature_set = parse_feature_set(config.feature_set)
    stage_train_eval(z_csv, groups_csv, out_dir, feature_set, contrast,
                     default_grid(config), config.seed)
    bconf = boruta_mod.BorutaConfig(
        alpha=config.boruta_alpha,
        percentile=config.boruta_percentile,
        max_iter=config.boruta_max_iter,
        max_depth=config.boruta_max_depth,
        n_trees=config.boruta_n_trees,
        seed=config.seed,
    )
    stage_boruta(z_csv, groups_csv, out_dir, contrast, bconf,
                 columns=config.boruta_columns)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atlasforest")
    p.add_argument("--threads", type=int, default=None,
                   help="worker hint; results are identical for any value")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic cohort with ground truth")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--boundary", action="store_true",
                   help="place biomarker values exactly at the cutoffs")

    s = sub.add_parser("label", help="assign diagnostic groups")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("normalize", help="z-score MRI features against CN")
    s.add_argument("--input", required=True)
    s.add_argument("--groups", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sign", choices=["atrophy", "conventional"], default="atrophy")

    s = sub.add_parser("train-eval", help="5x2 nested CV classification")
    s.add_argument("--input", required=True)
    s.add_argument("--groups", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--feature-set", default="mri+clinical",
                   choices=[fs.value for fs in FeatureSet])
    s.add_argument("--contrast", default="atAD:nonAD")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("boruta", help="all-relevant brain-region selection")
    s.add_argument("--input", required=True)
    s.add_argument("--groups", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--contrast", default="atAD:nonAD")
    s.add_argument("--columns", default="mri", choices=["mri", "mri+clinical"])
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("run", help="full pipeline")
    s.add_argument("--config", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--feature-set", default=None,
                   choices=[fs.value for fs in FeatureSet])
    s.add_argument("--contrast", default=None)
    s.add_argument("--sign", choices=["atrophy", "conventional"], default=None)
    s.add_argument("--dump-config", action="store_true",
                   help="print the effective config as JSON and exit")
    return p


def _configure_logging() -> None:
    level = os.environ.get("ATLASFOREST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            stage_synth(Path(args.out), args.seed, boundary=args.boundary)
        elif args.command == "label":
            stage_label(Path(args.input), Path(args.out))
        elif args.command == "normalize":
            stage_normalize(Path(args.input), Path(args.groups), Path(args.out),
                            sign=args.sign)
        elif args.command == "train-eval":
            fs = parse_feature_set(args.feature_set)
            contrast = parse_contrast(args.contrast)
            stage_train_eval(Path(args.input), Path(args.groups), Path(args.out),
                             fs, contrast, default_grid(PipelineConfig()), args.seed)
        elif args.command == "boruta":
            contrast = parse_contrast(args.contrast)
            bconf = boruta_mod.BorutaConfig(alpha=args.alpha,
                                            max_iter=args.max_iter,
                                            seed=args.seed)
            stage_boruta(Path(args.input), Path(args.groups), Path(args.out),
                         contrast, bconf, columns=args.columns)
        elif args.command == "run":
            config = PipelineConfig()
            if args.config is not None:
                path = Path(args.config)
                if not path.exists():
                    raise DataError(f"config file not found: {path}")
                try:
                    config = PipelineConfig.from_dict(json.loads(path.read_text()))
                except json.JSONDecodeError as e:
                    raise ConfigError(f"config is not valid JSON: {e}") from e
            for key in ("out", "seed", "feature_set", "contrast", "sign"):
                v = getattr(args, key if key != "out" else "out")
                if v is not None:
                    setattr(config, "out_dir" if key == "out" else key, v)
            if args.dump_config:
                print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
                return 0
            run_pipeline(config)
        return 0
    except PipelineError as e:
        error = {"error": type(e).__name__, "message": str(e),
                 "exit_code": e.exit_code}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
