"""Pipeline stages. Each reads its predecessors' files and writes its own.

Run directory layout::

    composites/<scene>_{depth,color,labels}.png   preprocess
    model/cnn.bin, model/loss.csv                 train-cnn
    likelihood/<scene>.lhm                        infer
    model/svm.txt                                 train-svm
    labels/<scene>_{svm,refined}.png, *_energy.csv refine
    reports/...                                   evaluate
    reconstruct/<scene>.obj                       reconstruct
    manifest.json, summary.txt                    every stage / run-all
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from .. import classifier, evaluation, synth
from ..cnn import Network, infer_dense, load_weights, save_weights, train, write_loss_csv
from ..composite import build_composite, load_composite, sample_patches, save_composite
from ..errors import StageOrderError
from ..mrf import alpha_expansion, write_trace_csv
from ..raster import UNKNOWN, load_label_grid, load_raster, save_label_grid, save_png, save_raster
from ..reconstruct import export_obj, is_closed_manifold, reconstruct_scene

log = logging.getLogger(__name__)

STAGES = (
    "synth",
    "preprocess",
    "train-cnn",
    "infer",
    "train-svm",
    "refine",
    "evaluate",
    "reconstruct",
)


def _paths(directory, name):
    d = Path(directory)
    return d / f"{name}_depth.png", d / f"{name}_color.png", d / f"{name}_labels.png"


def _require(stage, *files):
    for f in files:
        if not Path(f).exists():
            raise StageOrderError(stage, f)


def _header(cfg):
    return [f"config_hash: {cfg.hash}"]


def _text(cfg):
    return {"config_hash": cfg.hash}


def _record(cfg, stage, outputs):
    """Add the stage's outputs to the run manifest."""
    path = cfg.run_dir / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {"stages": {}}
    manifest["config_hash"] = cfg.hash
    names = []
    for o in outputs:
        o = Path(o).resolve()
        names.append(str(o.relative_to(cfg.run_dir)) if o.is_relative_to(cfg.run_dir) else str(o))
    manifest["stages"][stage] = {"config_hash": cfg.hash, "outputs": sorted(names)}
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _dir(cfg, name):
    d = cfg.run_dir / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def run_synth(cfg):
    """Generate the configured number of synthetic scenes into the data directory."""
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, name in enumerate(cfg.scenes):
        raster = synth.generate(cfg.scene_spec(i))
        paths = _paths(cfg.data_dir, name)
        save_raster(raster, *paths, text=_text(cfg))
        outputs += list(paths)
    _record(cfg, "synth", outputs)
    return outputs


def load_scene(cfg, name, stage="preprocess"):
    paths = _paths(cfg.data_dir, name)
    _require(stage, *paths)
    return load_raster(*paths)


def run_preprocess(cfg):
    """Build the five-scale composite for every scene."""
    out_dir = _dir(cfg, "composites")
    outputs = []
    for name in cfg.scenes:
        raster = load_scene(cfg, name, "preprocess")
        comp = build_composite(raster, cfg.patch_size)
        paths = _paths(out_dir, name)
        save_composite(comp, *paths, text=_text(cfg))
        outputs += list(paths)
    _record(cfg, "preprocess", outputs)
    return outputs


def _load_composite(cfg, name, stage, labels=True):
    depth, color, lab = _paths(cfg.run_dir / "composites", name)
    _require(stage, depth, color)
    return load_composite(depth, color, lab if labels and lab.exists() else None)


def run_train_cnn(cfg, on_epoch=None):
    """Sample patches from the training composites and fit the network."""
    t = cfg["train"]
    comps = [_load_composite(cfg, n, "train-cnn") for n in cfg.train_scenes]
    patches = sample_patches(comps, t["samples"], cfg.patch_size, seed=t["seed"])
    net = Network(cfg.patch_size, cfg.kernel_size, seed=t["seed"])
    t0 = time.perf_counter()
    result = train(
        net,
        patches,
        t["epochs"],
        learning_rate=t["learning_rate"],
        batch_size=t["batch_size"],
        seed=t["seed"],
        on_epoch=on_epoch,
    )
    log.info("training took %.1fs", time.perf_counter() - t0)
    d = _dir(cfg, "model")
    save_weights(result.network, d / "cnn.bin", cfg.hash)
    write_loss_csv(d / "loss.csv", result.losses, _header(cfg))
    _record(cfg, "train-cnn", [d / "cnn.bin", d / "loss.csv"])
    return result


def run_infer(cfg, stride=None):
    """Dense multi-scale likelihoods, fused at the original resolution."""
    stride = cfg["infer"]["stride"] if stride is None else stride
    weights = cfg.run_dir / "model" / "cnn.bin"
    _require("infer", weights)
    net = load_weights(weights)
    d = _dir(cfg, "likelihood")
    outputs = []
    for name in cfg.scenes:
        comp = _load_composite(cfg, name, "infer", labels=False)
        grids = infer_dense(net, comp, stride)
        lhm = classifier.fuse_scales(grids, comp.source_width, comp.source_height)
        path = d / f"{name}.lhm"
        classifier.save_likelihood_map(lhm, path, cfg.hash)
        outputs.append(path)
    _record(cfg, "infer", outputs)
    return outputs


def _lhm_path(cfg, name, stage):
    path = cfg.run_dir / "likelihood" / f"{name}.lhm"
    _require(stage, path)
    return path


def run_train_svm(cfg):
    """Fit the one-vs-all SVM on fused likelihoods of the training scenes."""
    s = cfg["svm"]
    lhms = [classifier.load_likelihood_map(_lhm_path(cfg, n, "train-svm")) for n in cfg.train_scenes]
    refs = [load_scene(cfg, n, "train-svm").labels for n in cfg.train_scenes]
    x, y = classifier.sample_pixels(lhms, refs, s["samples"], seed=s["seed"])
    model = classifier.train_svm(x, y, s["epochs"], s["rate"], s["regularization"], s["seed"])
    path = _dir(cfg, "model") / "svm.txt"
    classifier.save_svm(model, path, cfg.hash)
    _record(cfg, "train-svm", [path])
    return model


def run_refine(cfg):
    """SVM labels per pixel, then MRF refinement that also fills the unknown margin."""
    svm_path = cfg.run_dir / "model" / "svm.txt"
    _require("refine", svm_path)
    model = classifier.load_svm(svm_path)
    params = cfg.energy_params()
    d = _dir(cfg, "labels")
    outputs = []
    for name in cfg.scenes:
        lhm = classifier.load_likelihood_map(_lhm_path(cfg, name, "refine"))
        raw = classifier.predict_label(model, lhm)
        result = alpha_expansion(raw, params, cfg["mrf"]["max_sweeps"])
        save_label_grid(d / f"{name}_svm.png", raw, _text(cfg))
        save_label_grid(d / f"{name}_refined.png", result.labels, _text(cfg))
        write_trace_csv(d / f"{name}_energy.csv", result.trace, _header(cfg))
        outputs += [d / f"{name}_svm.png", d / f"{name}_refined.png", d / f"{name}_energy.csv"]
    _record(cfg, "refine", outputs)
    return outputs


def _labels(cfg, name, kind, stage):
    path = cfg.run_dir / "labels" / f"{name}_{kind}.png"
    _require(stage, path)
    return load_label_grid(path)


def run_evaluate(cfg):
    """Scores on the test scenes for the SVM output and the refined output.

    The SVM output leaves the margin unknown; its confusion matrix covers the
    pixels it labeled. Full-image accuracies count unknown pixels as errors.
    """
    d = _dir(cfg, "reports")
    cm_ref = cm_svm = cm_ref_in = None
    correct_svm = total = 0
    outputs = []
    for name in cfg.test_scenes:
        ref = load_scene(cfg, name, "evaluate").labels
        refined = _labels(cfg, name, "refined", "evaluate")
        raw = _labels(cfg, name, "svm", "evaluate")
        interior = raw != UNKNOWN
        parts = (
            evaluation.confusion(ref, refined),
            evaluation.confusion(ref, raw),
            evaluation.confusion(ref, refined, interior),
        )
        cm_ref = parts[0] if cm_ref is None else cm_ref + parts[0]
        cm_svm = parts[1] if cm_svm is None else cm_svm + parts[1]
        cm_ref_in = parts[2] if cm_ref_in is None else cm_ref_in + parts[2]
        correct_svm += int(np.count_nonzero(raw == ref))
        total += ref.size
        diff = d / f"{name}_diff.png"
        save_png(diff, evaluation.diff_image(ref, refined), _text(cfg))
        outputs.append(diff)
    if cm_ref is None:
        raise StageOrderError("evaluate", "a non-empty test scene list")
    evaluation.report_csv(cm_ref, d / "metrics.csv", _header(cfg))
    evaluation.report_csv(cm_svm, d / "metrics_svm.csv", _header(cfg))
    s_ref = evaluation.scores(cm_ref)
    s_svm_in = evaluation.scores(cm_svm)
    s_ref_in = evaluation.scores(cm_ref_in)
    svm_full = correct_svm / total
    text = [f"# config_hash: {cfg.hash}", "", "refined (MRF):", evaluation.report_text(cm_ref)]
    text += ["SVM only, labeled pixels:", evaluation.report_text(cm_svm)]
    text.append(f"SVM accuracy, full image: {100 * svm_full:.2f}")
    text.append(f"refinement delta, full image: {100 * (s_ref.accuracy - svm_full):+.2f} points")
    text.append(
        f"refinement delta, interior: {100 * (s_ref_in.accuracy - s_svm_in.accuracy):+.2f} points"
    )
    (d / "report.txt").write_text("\n".join(text) + "\n")
    outputs += [d / "metrics.csv", d / "metrics_svm.csv", d / "report.txt"]
    _record(cfg, "evaluate", outputs)
    return {
        "refined": s_ref,
        "svm_interior": s_svm_in,
        "refined_interior": s_ref_in,
        "svm_full_accuracy": svm_full,
        "confusion": cm_ref,
    }


def run_reconstruct(cfg):
    """OBJ models for the test scenes from their refined labels."""
    r = cfg["reconstruct"]
    d = _dir(cfg, "reconstruct")
    outputs = []
    stats = {}
    for name in cfg.test_scenes:
        raster = load_scene(cfg, name, "reconstruct")
        labels = _labels(cfg, name, "refined", "reconstruct")
        meshes, footprints = reconstruct_scene(
            labels, raster.elevation(), r["min_area"], r["epsilon"], r["ground_step"]
        )
        path = d / f"{name}.obj"
        export_obj(meshes, path, _header(cfg))
        outputs.append(path)
        prisms = [m for m in meshes if m.name.startswith("building_")]
        stats[name] = {
            "buildings": len(prisms),
            "closed": all(is_closed_manifold(m) for m in prisms),
            "meshes": len(meshes),
        }
    _record(cfg, "reconstruct", outputs)
    return stats


STAGE_FUNCS = {
    "synth": run_synth,
    "preprocess": run_preprocess,
    "train-cnn": run_train_cnn,
    "infer": run_infer,
    "train-svm": run_train_svm,
    "refine": run_refine,
    "evaluate": run_evaluate,
    "reconstruct": run_reconstruct,
}


def run_all(cfg, stride=None, with_synth=None):
    """Every stage in order, then a summary report.

    Scenes are generated when the data directory lacks them (or when
    ``with_synth`` is True).
    """
    timings = {}

    def timed(stage, fn, *args):
        t0 = time.perf_counter()
        out = fn(*args)
        timings[stage] = time.perf_counter() - t0
        log.info("stage %s done in %.1fs", stage, timings[stage])
        return out

    if with_synth is None:
        with_synth = not all(p.exists() for n in cfg.scenes for p in _paths(cfg.data_dir, n))
    if with_synth:
        timed("synth", run_synth, cfg)
    timed("preprocess", run_preprocess, cfg)
    train_result = timed("train-cnn", run_train_cnn, cfg)
    timed("infer", run_infer, cfg, stride)
    timed("train-svm", run_train_svm, cfg)
    timed("refine", run_refine, cfg)
    metrics = timed("evaluate", run_evaluate, cfg)
    recon = timed("reconstruct", run_reconstruct, cfg)

    s = metrics["refined"]
    lines = [
        f"config_hash: {cfg.hash}",
        f"patch_size: {cfg.patch_size}",
        f"kernel_size: {cfg.kernel_size}",
        f"train_scenes: {' '.join(cfg.train_scenes)}",
        f"test_scenes: {' '.join(cfg.test_scenes)}",
        f"final_train_loss: {train_result.losses[-1]:.6f}",
        f"overall_accuracy: {100 * s.accuracy:.2f}",
        f"building_f1: {100 * s.f1[0]:.2f}",
        f"svm_overall_accuracy: {100 * metrics['svm_full_accuracy']:.2f}",
        f"interior_accuracy_refined: {100 * metrics['refined_interior'].accuracy:.2f}",
        f"interior_accuracy_svm: {100 * metrics['svm_interior'].accuracy:.2f}",
    ]
    for name, st in recon.items():
        lines.append(f"reconstruct.{name}: {st['buildings']} prisms, closed={st['closed']}")
    summary = cfg.run_dir / "summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    timing_lines = [f"{k}: {v:.1f}s" for k, v in timings.items()]
    (cfg.run_dir / "timings.txt").write_text("\n".join(timing_lines) + "\n")
    _record(cfg, "run-all", [summary])
    return {"metrics": metrics, "reconstruct": recon, "train": train_result, "timings": timings}
