"""Single command-line entry point.

Subcommands: curate, seg-eval, zeroshot, frd, probe, correlate, split,
fewshot, synth, report. A TOML config file can mirror any flag (section
named after the subcommand); explicit flags win over the config, which
wins over built-in defaults. Every JSON report embeds the resolved config
and tool version, never timestamps, so reruns are byte-identical.

Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BenchError, ValidationError
from .frd import FrdConfig, frd_between_sets
from .ingest import NormalizationMode, export_slices, parse_dicom_series, validate_continuity
from .interchange import Manifest, load_mask_png
from .metrics import MetricReport, NsdConfig, evaluate_case
from .probe import ProbeConfig, probe_task
from .protocol import fewshot_sample, patient_split
from .stats import CorrelationRecord, correlate, scatter_rows
from .svgplot import bar_chart_svg, line_chart_svg, scatter_svg
from .synth import SynthSpec, make_dataset, make_dicom_series, make_features
from .zeroshot import ZeroShotConfig, zeroshot_eval


# ---------------------------------------------------------------- config

def parse_toml_subset(text: str) -> dict:
    """Parse the TOML subset used for flag mirroring.

    Supports [section] headers and key = value lines where value is a
    quoted string, integer, float, boolean, or a flat [list] of those.
    """
    data: dict = {}
    section = data

    def scalar(tok: str):
        tok = tok.strip()
        if tok.startswith('"') and tok.endswith('"') and len(tok) >= 2:
            return tok[1:-1]
        if tok in ("true", "false"):
            return tok == "true"
        try:
            return int(tok)
        except ValueError:
            pass
        try:
            return float(tok)
        except ValueError as exc:
            raise ValidationError(f"cannot parse TOML value {tok!r}") from exc

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            section = data.setdefault(name, {})
            continue
        if "=" not in line:
            raise ValidationError(f"malformed TOML line {raw!r}")
        key, _, value = line.partition("=")
        value = value.strip()
        if value.startswith("[") and value.endswith("]"):
            inner = value[1:-1].strip()
            section[key.strip()] = [scalar(t) for t in inner.split(",")] if inner else []
        else:
            section[key.strip()] = scalar(value)
    return data


def resolve_config(args: argparse.Namespace, subcommand: str, defaults: dict) -> dict:
    """flag > config-file section > default, for every known option."""
    file_cfg = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"config file {path} does not exist")
        file_cfg = parse_toml_subset(path.read_text()).get(subcommand, {})
    resolved = {}
    for key, default in defaults.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _write_report(path: Path, payload: dict, subcommand: str, cfg: dict) -> None:
    payload = {"tool": "mribench", "version": __version__,
               "subcommand": subcommand, "config": cfg, **payload}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list[dict], fields: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# ------------------------------------------------------------ subcommands

def cmd_curate(args) -> int:
    cfg = resolve_config(args, "curate", {
        "in_dir": None, "out": None, "norm": "slice", "rel_tol": 0.01,
    })
    if not cfg["in_dir"] or not cfg["out"]:
        raise ValidationError("curate needs --in and --out")
    in_dir = Path(cfg["in_dir"])
    out_dir = Path(cfg["out"])
    if not in_dir.is_dir():
        raise ValidationError(f"{in_dir} is not a directory")
    series_dirs = sorted(d for d in in_dir.iterdir() if d.is_dir()) or [in_dir]
    mode = NormalizationMode("slice_wise" if cfg["norm"] == "slice" else "volume_wise")

    accepted, rejected, entries = [], [], []
    for sdir in series_dirs:
        vol = parse_dicom_series(sdir)
        check = validate_continuity(vol, rel_tol=cfg["rel_tol"])
        if not check.ok:
            rejected.append({"series_dir": sdir.name, "reason": check.reason,
                             "gap_index": check.index})
            continue
        manifest = export_slices(vol, mode, out_dir / "slices")
        entries.extend(manifest.entries)
        accepted.append({"series_dir": sdir.name, "series_id": vol.series_id,
                         "n_slices": int(vol.voxels.shape[0])})
    combined = Manifest(entries=entries, dataset_name=in_dir.name)
    combined.save(out_dir / "manifest.jsonl")
    _write_report(out_dir / "curate_report.json",
                  {"accepted": accepted, "rejected": rejected,
                   "manifest": str(out_dir / "manifest.jsonl")},
                  "curate", cfg)
    return 0


def _join_on_keys(a: Manifest, b: Manifest) -> list[tuple]:
    bmap = {e.key: e for e in b.entries}
    joined = [(e, bmap[e.key]) for e in a.entries if e.key in bmap]
    if not joined:
        raise ValidationError("manifests share no (patient, series, slice) keys")
    return joined


def cmd_seg_eval(args) -> int:
    cfg = resolve_config(args, "seg-eval", {
        "pred": None, "gt": None, "tol": 1.0, "out": "seg_report.json", "jobs": 1,
    })
    if not cfg["pred"] or not cfg["gt"]:
        raise ValidationError("seg-eval needs --pred and --gt")
    if cfg["jobs"] < 1:
        raise ValidationError("--jobs must be >= 1")
    pred_m = Manifest.load(cfg["pred"])
    gt_m = Manifest.load(cfg["gt"])
    joined = _join_on_keys(pred_m, gt_m)
    cases: dict[tuple[str, str], list] = {}
    for pe, ge in joined:
        cases.setdefault((pe.patient_id, pe.series_id), []).append((pe, ge))

    def one_case(item):
        (pid, sid), pairs = item
        pairs = sorted(pairs, key=lambda pg: pg[0].slice_index)
        pred_vol = np.stack([load_mask_png(p.mask_path).labels for p, _ in pairs])
        gt_vol = np.stack([load_mask_png(g.mask_path).labels for _, g in pairs])
        return evaluate_case(f"{pid}/{sid}", pred_vol, gt_vol, NsdConfig(cfg["tol"]))

    ordered = sorted(cases.items())          # deterministic case order
    report = MetricReport(nsd_tolerance=cfg["tol"])
    if cfg["jobs"] > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
            report.per_case = list(pool.map(one_case, ordered))
    else:
        report.per_case = [one_case(item) for item in ordered]
    out = Path(cfg["out"])
    _write_report(out, {"report": report.to_json()}, "seg-eval", cfg)
    _write_csv(out.with_suffix(".csv"),
               [vars(c) for c in report.per_case],
               ["case_id", "dsc2d_mean", "dsc3d", "nsd3d"])
    return 0


def cmd_zeroshot(args) -> int:
    cfg = resolve_config(args, "zeroshot", {
        "features": None, "gt": None, "k": "4,8,16,32,64,128", "seed": 0,
        "source": "features", "assign": "best_overlap", "out": "zeroshot.csv",
        "max_iters": 100, "jobs": 1,
    })
    if not cfg["gt"] or (cfg["source"] == "features" and not cfg["features"]):
        raise ValidationError("zeroshot needs --gt (and --features unless --source raw)")
    gt_m = Manifest.load(cfg["gt"])
    if cfg["source"] == "features":
        feat_m = Manifest.load(cfg["features"])
        joined = _join_on_keys(feat_m, gt_m)
        entries = []
        for fe, ge in joined:
            merged = fe
            merged.mask_path = ge.mask_path
            entries.append(merged)
        manifest = Manifest(entries=entries, dataset_name=gt_m.dataset_name)
    else:
        manifest = gt_m
    if cfg["jobs"] < 1:
        raise ValidationError("--jobs must be >= 1")
    ks = [int(v) for v in str(cfg["k"]).split(",") if v]
    zcfg = ZeroShotConfig(seed=cfg["seed"], source="features" if cfg["source"] == "features" else "raw_pixels",
                          assign=cfg["assign"], max_iters=cfg["max_iters"])
    rows = zeroshot_eval(manifest, ks, zcfg, jobs=cfg["jobs"])
    out = Path(cfg["out"])
    _write_csv(out, rows, ["k", "mean_dsc2d", "n_slices"])
    _write_report(out.with_suffix(".json"), {"rows": rows}, "zeroshot", cfg)
    return 0


def cmd_frd(args) -> int:
    cfg = resolve_config(args, "frd", {
        "set_a": None, "set_b": None, "bins": 32, "eps": 1e-6, "out": "frd.json",
        "resize": None, "jobs": 1,
    })
    if not cfg["set_a"] or not cfg["set_b"]:
        raise ValidationError("frd needs --set-a and --set-b")
    if cfg["jobs"] < 1:
        raise ValidationError("--jobs must be >= 1")
    fcfg = FrdConfig(n_bins=cfg["bins"], eps=cfg["eps"])
    value = frd_between_sets(Manifest.load(cfg["set_a"]), Manifest.load(cfg["set_b"]),
                             fcfg, resize=cfg["resize"], jobs=cfg["jobs"])
    _write_report(Path(cfg["out"]), {"frd": value}, "frd", cfg)
    return 0


def cmd_probe(args) -> int:
    cfg = resolve_config(args, "probe", {
        "features": None, "label_key": "class_label", "ratio": 0.6, "seed": 0,
        "lr": 1e-4, "epochs": 100, "l2": 1e-4, "batch": 64, "out": "probe.json",
    })
    if not cfg["features"]:
        raise ValidationError("probe needs --features")
    if cfg["label_key"] != "class_label":
        raise ValidationError("only the class_label manifest field is supported")
    manifest = Manifest.load(cfg["features"])
    split = patient_split(manifest, (cfg["ratio"], 1.0 - cfg["ratio"]),
                          seed=cfg["seed"], stratify_key=True)
    pcfg = ProbeConfig(lr=cfg["lr"], epochs=cfg["epochs"], l2=cfg["l2"],
                       batch=cfg["batch"], seed=cfg["seed"])
    result = probe_task(manifest, split, pcfg)
    _write_report(Path(cfg["out"]), {
        "best_val_accuracy": result.best_val_accuracy,
        "best_epoch": result.best_epoch,
        "confusion_at_best": result.confusion_at_best.tolist(),
        "label_names": result.label_names,
        "history": [{"epoch": i, "train_loss": tl, "val_accuracy": va}
                    for i, (tl, va) in enumerate(result.history)],
    }, "probe", cfg)
    return 0


def cmd_correlate(args) -> int:
    cfg = resolve_config(args, "correlate", {
        "records": None, "frd_field": "frd_fsl", "out": "corr.json",
    })
    if not cfg["records"]:
        raise ValidationError("correlate needs --records")
    records = []
    with open(cfg["records"]) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                records.append(CorrelationRecord(
                    dataset=rec["dataset"], delta=float(rec["delta"]),
                    frd_fsl=float(rec["frd_fsl"]), frd_test=float(rec["frd_test"])))
    result = correlate(records, cfg["frd_field"])
    rows = scatter_rows(records, cfg["frd_field"])
    out = Path(cfg["out"])
    _write_report(out, {"result": result.to_json(), "scatter": rows}, "correlate", cfg)
    _write_csv(out.with_name(out.stem + "_scatter.csv"), rows, ["dataset", "delta", "frd"])
    return 0


def cmd_split(args) -> int:
    cfg = resolve_config(args, "split", {
        "manifest": None, "ratios": "0.6,0.4", "seed": 0, "stratify": False,
        "out": "split.json",
    })
    if not cfg["manifest"]:
        raise ValidationError("split needs --manifest")
    manifest = Manifest.load(cfg["manifest"])
    ratios = tuple(float(v) for v in str(cfg["ratios"]).split(","))
    plan = patient_split(manifest, ratios, seed=cfg["seed"], stratify_key=cfg["stratify"])
    _write_report(Path(cfg["out"]), {
        "ratios": list(plan.ratios),
        "train": sorted(list(k) for k in plan.train),
        "val": sorted(list(k) for k in plan.val),
        "test": sorted(list(k) for k in plan.test),
    }, "split", cfg)
    return 0


def cmd_fewshot(args) -> int:
    cfg = resolve_config(args, "fewshot", {
        "pool": None, "seed": 0, "out": "sample.json",
    })
    if not cfg["pool"]:
        raise ValidationError("fewshot needs --pool")
    sample = fewshot_sample(Manifest.load(cfg["pool"]), seed=cfg["seed"])
    _write_report(Path(cfg["out"]), {"sample": sample.to_json()}, "fewshot", cfg)
    return 0


def cmd_synth(args) -> int:
    cfg = resolve_config(args, "synth", {
        "spec": None, "out": None, "features": False, "dicom": False,
    })
    if not cfg["out"]:
        raise ValidationError("synth needs --out")
    spec_dict = json.loads(Path(cfg["spec"]).read_text()) if cfg["spec"] else {}
    spec = SynthSpec.from_json(spec_dict)
    out_dir = Path(cfg["out"])
    manifest, _, _ = make_dataset(spec, out_dir / "slices")
    manifest.save(out_dir / "manifest.jsonl")
    report: dict = {"manifest": str(out_dir / "manifest.jsonl"),
                    "n_slices": len(manifest.entries)}
    if cfg["features"]:
        patch = 1 if spec.feature_mode == "onehot_oracle" else spec.patch_size
        feat = make_features(manifest, spec.feature_mode, out_dir / "features",
                             seed=spec.seed, patch_size=patch)
        feat.save(out_dir / "features.jsonl")
        report["features_manifest"] = str(out_dir / "features.jsonl")
    if cfg["dicom"]:
        make_dicom_series(spec, out_dir / "dicom")
        report["dicom_dir"] = str(out_dir / "dicom")
    _write_report(out_dir / "synth_report.json", report, "synth", cfg)
    return 0


def cmd_report(args) -> int:
    cfg = resolve_config(args, "report", {
        "inputs": None, "out_dir": "figures",
    })
    if not cfg["inputs"]:
        raise ValidationError("report needs --in result.json[,...]")
    paths = [Path(p) for p in str(cfg["inputs"]).split(",") if p]
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    produced = []
    for path in paths:
        if not path.exists():
            raise ValidationError(f"{path} does not exist")
        payload = json.loads(path.read_text())
        sub = payload.get("subcommand", "")
        if sub == "correlate":
            res = payload["result"]
            pts = [(row["frd"], row["delta"]) for row in payload["scatter"]]
            names = [row["dataset"] for row in payload["scatter"]]
            svg = scatter_svg(
                pts, "few-shot improvement vs radiomic distance", "FRD", "delta",
                annotation=f'r={res["r_pearson"]:.3f} p={res["p_pearson"]:.3g}',
                labels=names)
        elif sub == "zeroshot":
            series = {"mean 2D DSC": [(row["k"], row["mean_dsc2d"]) for row in payload["rows"]]}
            svg = line_chart_svg(series, "zero-shot segmentation by cluster count",
                                 "k", "mean 2D DSC")
        elif sub == "seg-eval":
            agg = payload["report"]["aggregate"]
            bars = [(name, agg[name]["mean"]) for name in ("dsc2d_mean", "dsc3d", "nsd3d")]
            svg = bar_chart_svg(bars, "segmentation metrics", "score")
        else:
            raise ValidationError(f"{path}: no renderer for subcommand {sub!r}")
        target = out_dir / (path.stem + ".svg")
        target.write_text(svg)
        produced.append(str(target))
    _write_report(out_dir / "report_index.json", {"figures": produced}, "report", cfg)
    return 0


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mribench",
        description="workbench for slice-based MRI encoder evaluation")
    parser.add_argument("--version", action="version", version=f"mribench {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, configure, fn):
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML file mirroring the flags")
        configure(p)
        p.set_defaults(fn=fn)

    add("curate", lambda p: [
        p.add_argument("--in", dest="in_dir"),
        p.add_argument("--out"),
        p.add_argument("--norm", choices=("slice", "volume")),
        p.add_argument("--rel-tol", dest="rel_tol", type=float),
    ], cmd_curate)
    add("seg-eval", lambda p: [
        p.add_argument("--pred"), p.add_argument("--gt"),
        p.add_argument("--tol", type=float), p.add_argument("--out"),
        p.add_argument("--jobs", type=int),
    ], cmd_seg_eval)
    add("zeroshot", lambda p: [
        p.add_argument("--features"), p.add_argument("--gt"),
        p.add_argument("--k"), p.add_argument("--seed", type=int),
        p.add_argument("--source", choices=("features", "raw")),
        p.add_argument("--assign", choices=("best_overlap", "majority")),
        p.add_argument("--max-iters", dest="max_iters", type=int),
        p.add_argument("--out"), p.add_argument("--jobs", type=int),
    ], cmd_zeroshot)
    add("frd", lambda p: [
        p.add_argument("--set-a", dest="set_a"), p.add_argument("--set-b", dest="set_b"),
        p.add_argument("--bins", type=int), p.add_argument("--eps", type=float),
        p.add_argument("--out"), p.add_argument("--resize", type=int),
        p.add_argument("--jobs", type=int),
    ], cmd_frd)
    add("probe", lambda p: [
        p.add_argument("--features"), p.add_argument("--label-key", dest="label_key"),
        p.add_argument("--ratio", type=float), p.add_argument("--seed", type=int),
        p.add_argument("--lr", type=float), p.add_argument("--epochs", type=int),
        p.add_argument("--l2", type=float), p.add_argument("--batch", type=int),
        p.add_argument("--out"),
    ], cmd_probe)
    add("correlate", lambda p: [
        p.add_argument("--records"),
        p.add_argument("--frd-field", dest="frd_field", choices=("frd_fsl", "frd_test")),
        p.add_argument("--out"),
    ], cmd_correlate)
    add("split", lambda p: [
        p.add_argument("--manifest"), p.add_argument("--ratios"),
        p.add_argument("--seed", type=int),
        p.add_argument("--stratify", action="store_const", const=True),
        p.add_argument("--out"),
    ], cmd_split)
    add("fewshot", lambda p: [
        p.add_argument("--pool"), p.add_argument("--seed", type=int),
        p.add_argument("--out"),
    ], cmd_fewshot)
    add("synth", lambda p: [
        p.add_argument("--spec"), p.add_argument("--out"),
        p.add_argument("--features", action="store_const", const=True),
        p.add_argument("--dicom", action="store_const", const=True),
    ], cmd_synth)
    add("report", lambda p: [
        p.add_argument("--in", dest="inputs"),
        p.add_argument("--out-dir", dest="out_dir"),
    ], cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.fn(args)
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
