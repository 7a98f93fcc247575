"""Command-line front end.

Subcommands::

    generate        phantoms, wedge sinograms and fan labels -> <out>/dataset
    train           two-phase training on the generated dataset -> <out>/train
    evaluate        network vs ground truth (and geometric rebinning) -> <out>/eval
    rebin-baseline  geometric rebinning only -> <out>/baseline
    export-filter   checkpoint filter -> CSV + raw tensor

Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import geometric_rebin
from .config import DESK_GEOMETRY, ConfigError, ExperimentConfig
from .errors import CoverageError, InvalidArgument, InvalidGeometry, TrainingDiverged
from .geometry import ParallelGeometry
from .phantoms import canonical_training_set, shepp_logan
from .projectors import FanProjection, ParallelSinogram, fan_forward, parallel_forward
from .rawio import (CorruptFile, atomic_write_json, atomic_write_text, read_tensor,
                    sha256_file, write_tensor)
from .rebin_net import RebinModel, TrainingSample, load_checkpoint, save_checkpoint
from .training import build_dataset, projection_metrics, train_two_phase, validate

log = logging.getLogger("fanrebin")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

GEOMETRY_FLAGS = {
    "sdd_mm": float, "sid_mm": float, "detector_px": int, "detector_spacing_mm": float,
    "image_px": int, "image_spacing_mm": float,
}
TRAINING_FLAGS = {
    "lr_scale": float, "lr_filter": float, "epochs_scale": int, "epochs_filter": int,
    "smoothing_sigma_bins": float, "batch_size": int, "power_iterations": int,
}


class UsageError(Exception):
    pass


def _n_projections(text):
    if text.lower() in ("full", "none"):
        return None
    return int(text)


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--preset", choices=["paper", "desk"], default=None,
                   help="desk: 128^2 image and 256-pixel detectors")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int, help="overrides phantom_seed and training.seed")
    p.add_argument("--phantom-seed", type=int)
    p.add_argument("--filter-mode", choices=["projection_independent", "projection_dependent"])
    p.add_argument("--trajectory-deg", type=float, nargs="+")
    p.add_argument("--n-projections", type=_n_projections, default=argparse.SUPPRESS,
                   help="wedge projections, or 'full'")
    for key, typ in {**GEOMETRY_FLAGS, **TRAINING_FLAGS}.items():
        p.add_argument("--" + key.replace("_", "-"), type=typ)


def resolve_config(args):
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{args.config}: top level must be an object")
    geometry = dict(raw.get("geometry", {})) if isinstance(raw.get("geometry"), dict) else raw.get("geometry")
    training = dict(raw.get("training", {})) if isinstance(raw.get("training"), dict) else raw.get("training")
    if args.preset == "desk" and isinstance(geometry, dict):
        for key, value in DESK_GEOMETRY.items():
            geometry.setdefault(key, value)
    if isinstance(geometry, dict):
        for key in GEOMETRY_FLAGS:
            if getattr(args, key, None) is not None:
                geometry[key] = getattr(args, key)
        if args.trajectory_deg is not None:
            geometry["trajectory_deg"] = args.trajectory_deg
        if hasattr(args, "n_projections"):
            geometry["n_projections"] = args.n_projections
    if isinstance(training, dict):
        for key in TRAINING_FLAGS:
            if getattr(args, key, None) is not None:
                training[key] = getattr(args, key)
        if args.seed is not None:
            training["seed"] = args.seed
    raw = dict(raw)
    if geometry:
        raw["geometry"] = geometry
    if training:
        raw["training"] = training
    if args.seed is not None:
        raw["phantom_seed"] = args.seed
    if args.phantom_seed is not None:
        raw["phantom_seed"] = args.phantom_seed
    if args.filter_mode is not None:
        raw["filter_mode"] = args.filter_mode
    if args.output_dir is not None:
        raw["output_dir"] = args.output_dir
    try:
        return ExperimentConfig.from_dict(raw)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _beta_label(beta_deg):
    return f"beta{beta_deg:07.3f}"


def _csv(header, rows):
    buf = io.StringIO()
    np.savetxt(buf, rows, delimiter=",", fmt="%.17g", header=",".join(header), comments="")
    return buf.getvalue()


def _write_profiles(out_dir, prefix, beta_deg, reference, profile):
    rows = np.column_stack([np.arange(reference.shape[0], dtype=np.float64),
                            reference, profile, profile - reference])
    path = Path(out_dir) / f"{prefix}_{_beta_label(beta_deg)}.csv"
    atomic_write_text(path, _csv(["pixel", "reference", "profile", "difference"], rows))
    return path


def _write_config(cfg, out):
    atomic_write_json(Path(out) / "config.json", cfg.to_dict())


# ---------------------------------------------------------------------------
# generate

def cmd_generate(cfg):
    out = Path(cfg.output_dir)
    root = out / "dataset"
    grid, fan = cfg.grid(), cfg.fan_template()
    train_cfg = cfg.train_config()
    phantoms = canonical_training_set(grid, cfg.data["phantom_seed"])
    samples = build_dataset(phantoms, train_cfg, grid, fan)
    geom_block = cfg.model_geometry()
    files = {}

    def record(paths):
        for p in paths:
            files[str(p.relative_to(root))] = sha256_file(p)

    for ph in phantoms.phantoms:
        record(write_tensor(root / "phantoms" / ph.name, ph.image, "image",
                            geometry=geom_block, seed=phantoms.seed))
    entries = []
    for s in samples:
        beta_deg = math.degrees(s.beta)
        stem = f"{s.phantom_name}__{_beta_label(beta_deg)}"
        extra = {"beta_rad": s.beta, "angles_rad": list(s.p_p.geometry.angles_rad)}
        record(write_tensor(root / "samples" / (stem + "_pp"), s.p_p.data, "sinogram",
                            geometry=geom_block, seed=phantoms.seed, extra=extra))
        record(write_tensor(root / "samples" / (stem + "_pf"), s.p_f.data, "fanprojection",
                            geometry=geom_block, seed=phantoms.seed, extra={"beta_rad": s.beta}))
        entries.append({"phantom": s.phantom_name, "beta_rad": s.beta,
                        "pp": f"samples/{stem}_pp", "pf": f"samples/{stem}_pf"})
    manifest = {
        "creator": f"fanrebin {__version__}",
        "geometry": cfg.geometry,
        "geometry_digest": cfg.digest("geometry"),
        "phantom_seed": phantoms.seed,
        "phantom_set": phantoms.manifest(),
        "n_phantoms": len(phantoms),
        "n_samples": len(samples),
        "samples": entries,
        "files": files,
    }
    atomic_write_json(root / "manifest.json", manifest)
    _write_config(cfg, out)
    log.info("wrote %d phantoms and %d samples to %s", len(phantoms), len(samples), root)
    return manifest


# ---------------------------------------------------------------------------
# train

def load_dataset(cfg):
    root = Path(cfg.output_dir) / "dataset"
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise UsageError(f"no dataset at {root}; run 'generate' first")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("geometry_digest") != cfg.digest("geometry"):
        raise UsageError("dataset was generated with a different geometry")
    fan = cfg.fan_template()
    samples = []
    try:
        for e in manifest["samples"]:
            pp, pp_meta = read_tensor(root / e["pp"])
            pf, _ = read_tensor(root / e["pf"])
            geom = ParallelGeometry(pp.shape[1], fan.detector_spacing_mm, pp_meta["angles_rad"])
            beta = e["beta_rad"]
            samples.append(TrainingSample(ParallelSinogram(pp, geom), FanProjection(pf, fan.at(beta)),
                                          beta, e["phantom"]))
    except (FileNotFoundError, CorruptFile) as exc:
        raise UsageError(f"dataset is incomplete or corrupt: {exc}") from None
    return samples


def _write_report(train_dir, report):
    atomic_write_json(train_dir / "report.json", report.to_dict())
    rows = "\n".join(f"{i},{ph},{v!r}" for i, (ph, v) in enumerate(zip(report.phases, report.losses)))
    atomic_write_text(train_dir / "loss.csv", "epoch,phase,loss\n" + (rows + "\n" if rows else ""))
    atomic_write_json(train_dir / "timing.json", {"wall_clock_s": report.wall_clock_s})


def cmd_train(cfg):
    samples = load_dataset(cfg)
    train_cfg = cfg.train_config()
    model = RebinModel.initial(cfg.fan_template(), cfg.grid(), train_cfg.filter_mode,
                               train_cfg.subsampling_level)
    train_dir = Path(cfg.output_dir) / "train"
    try:
        report = train_two_phase(model, samples, train_cfg)
    except TrainingDiverged as exc:
        if exc.model is not None:
            save_checkpoint(exc.model, train_dir / "checkpoint_partial")
        if exc.report is not None:
            _write_report(train_dir, exc.report)
        raise
    save_checkpoint(report.model, train_dir / "checkpoint")
    _write_report(train_dir, report)
    log.info("trained: S = %.6g, final loss %.6g", report.final_scale, report.final_loss)
    return report


# ---------------------------------------------------------------------------
# evaluate / baseline

def _load_phantom(spec, cfg):
    grid = cfg.grid()
    if spec in (None, "shepp-logan"):
        return "shepp-logan", shepp_logan(grid)
    try:
        image, _ = read_tensor(spec)
    except (FileNotFoundError, CorruptFile) as exc:
        raise UsageError(f"cannot read phantom {spec}: {exc}") from None
    if image.shape != grid.shape:
        raise UsageError(f"phantom shape {image.shape} does not match the grid {grid.shape}")
    return Path(spec).name, image


def _baseline_results(cfg, image, n_projections):
    grid, fan = cfg.grid(), cfg.fan_template()
    model = RebinModel.initial(fan, grid, "projection_independent", n_projections)
    out = []
    for beta_deg in cfg.geometry["trajectory_deg"]:
        beta = math.radians(beta_deg)
        f = fan.at(beta)
        sino = parallel_forward(image, model.parallel_geometry(beta), grid)
        reference = fan_forward(image, f, grid).data
        rebinned = geometric_rebin(sino, f).data
        out.append((beta_deg, reference, rebinned))
    return out


def cmd_rebin_baseline(cfg, phantom=None):
    name, image = _load_phantom(phantom, cfg)
    out_dir = Path(cfg.output_dir) / "baseline"
    metrics = []
    for beta_deg, reference, rebinned in _baseline_results(cfg, image, cfg.geometry["n_projections"]):
        _write_profiles(out_dir, "baseline_profile", beta_deg, reference, rebinned)
        rel, mx, corr = projection_metrics(rebinned, reference)
        metrics.append({"beta_deg": beta_deg, "rel_l2": rel, "max_abs": mx, "correlation": corr})
    atomic_write_json(out_dir / "metrics.json", {"phantom": name, "method": "geometric_rebin",
                                                 "n_projections": cfg.geometry["n_projections"],
                                                 "per_beta": metrics})
    return metrics


def cmd_evaluate(cfg, checkpoint=None, phantom=None):
    stem = Path(checkpoint) if checkpoint else Path(cfg.output_dir) / "train" / "checkpoint"
    try:
        model = load_checkpoint(stem)
    except (FileNotFoundError, CorruptFile, KeyError) as exc:
        raise UsageError(f"cannot load checkpoint {stem}: {exc}") from None
    expected = cfg.model_geometry()
    stored = json.loads(Path(str(stem) + ".json").read_text())["checkpoint"]["geometry"]
    if any(stored.get(k) != v for k, v in expected.items()):
        raise UsageError("checkpoint geometry does not match the config")
    name, image = _load_phantom(phantom, cfg)
    out_dir = Path(cfg.output_dir) / "eval"
    results = validate(model, image, trajectory_deg=cfg.geometry["trajectory_deg"])
    baseline = _baseline_results(cfg, image, model.n_projections)
    per_beta = []
    for res, (beta_deg, reference, rebinned) in zip(results, baseline):
        _write_profiles(out_dir, "profile", res.beta_deg, res.reference, res.prediction)
        _write_profiles(out_dir, "baseline_profile", beta_deg, reference, rebinned)
        rel, mx, corr = projection_metrics(rebinned, reference)
        per_beta.append({**res.metrics(), "baseline": {"rel_l2": rel, "max_abs": mx,
                                                       "correlation": corr}})
    summary = {
        "phantom": name,
        "checkpoint": str(stem),
        "filter_mode": model.filter.mode,
        "n_projections": model.n_projections,
        "per_beta": per_beta,
        "mean_rel_l2": float(np.mean([m["rel_l2"] for m in per_beta])),
        "baseline_mean_rel_l2": float(np.mean([m["baseline"]["rel_l2"] for m in per_beta])),
    }
    atomic_write_json(out_dir / "metrics.json", summary)
    return summary


def cmd_export_filter(checkpoint, out):
    try:
        model = load_checkpoint(checkpoint)
    except (FileNotFoundError, CorruptFile, KeyError) as exc:
        raise UsageError(f"cannot load checkpoint {checkpoint}: {exc}") from None
    w = model.filter.weights
    header = ["row"] + [f"k{k}" for k in range(w.shape[1])]
    rows = np.column_stack([np.arange(w.shape[0], dtype=np.float64), w])
    atomic_write_text(Path(str(out) + ".csv"), _csv(header, rows))
    write_tensor(out, w, "filter", extra={"mode": model.filter.mode})
    return w


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="fanrebin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"fanrebin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "train", "evaluate", "rebin-baseline"):
        p = sub.add_parser(name)
        _add_config_flags(p)
        if name in ("evaluate", "rebin-baseline"):
            p.add_argument("--phantom", default="shepp-logan",
                           help="'shepp-logan' or the stem of a raw image file")
        if name == "evaluate":
            p.add_argument("--checkpoint", help="checkpoint stem (default <out>/train/checkpoint)")
    p = sub.add_parser("export-filter")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output stem; writes <out>.csv/.bin/.json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "export-filter":
            cmd_export_filter(args.checkpoint, args.out)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.checkpoint, args.phantom)
        elif args.command == "rebin-baseline":
            cmd_rebin_baseline(cfg, args.phantom)
    except (UsageError, InvalidArgument, InvalidGeometry, CoverageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
