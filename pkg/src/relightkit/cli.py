"""Command-line surface: thin adapters from files to the library calls.

Every subcommand writes its declared outputs, prints exactly one JSON result
line on stdout, and exits 0 on success, 1 on validation errors, 2 on I/O or
file-format errors.  No numeric logic lives here.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import envmap as envmap_mod
from . import fileio
from . import figures
from . import inod as inod_mod
from . import latents as latents_mod
from . import metrics as metrics_mod
from . import sampling as sampling_mod
from . import shapes as shapes_mod
from .errors import FileFormatError, RelightKitError, ValidationError


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# shared loaders

def _load_depth(args) -> inod_mod.DepthMap:
    values = fileio.read_pfm(args.depth)
    if values.ndim != 2:
        raise ValidationError(f"{args.depth}: depth map must be single-channel")
    if getattr(args, "mask", None):
        mask = fileio.read_pgm_mask(args.mask)
    else:
        mask = np.isfinite(values) & (values > 0)
    return inod_mod.DepthMap(values=values, mask=mask)


def _load_inod(path_map, path_mask) -> inod_mod.INodMap:
    values = fileio.read_pfm(path_map)
    if values.ndim != 2:
        raise ValidationError(f"{path_map}: map must be single-channel")
    mask = fileio.read_pgm_mask(path_mask)
    return inod_mod.cutoff(values, mask)


def _load_env(path) -> envmap_mod.HdrEnvMap:
    return envmap_mod.HdrEnvMap(radiance=fileio.read_hdr(path))


def _load_cloud(path) -> inod_mod.PointCloud:
    points, pixel_index = fileio.read_ply(path)
    return inod_mod.PointCloud(points=points, pixel_index=pixel_index)


def _parse_size(text: str) -> tuple:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ValidationError(f"--size expects WxH, got {text!r}") from None


# ---------------------------------------------------------------------------
# inod subcommands

def _cmd_inod_encode(args):
    depth = _load_depth(args)
    k = inod_mod.IntrinsicsMatrix.from_dict(fileio.read_json(args.intrinsics))
    inod_map, record = inod_mod.encode(depth, k, dilate_radius=args.dilate)
    fileio.write_pfm(args.out, inod_map.values)
    outputs = [args.out]
    if args.mask_out:
        fileio.write_pgm_mask(args.mask_out, inod_map.mask)
        outputs.append(args.mask_out)
    if args.dilated_mask_out:
        dm = inod_map.dilated_mask if inod_map.dilated_mask is not None else np.zeros_like(inod_map.mask)
        fileio.write_pgm_mask(args.dilated_mask_out, dm)
        outputs.append(args.dilated_mask_out)
    if args.record:
        fileio.write_json(args.record, record.to_dict())
        outputs.append(args.record)
    return {"outputs": outputs, "foreground_pixels": int(inod_map.mask.sum())}


def _cmd_inod_decode(args):
    inod_map = _load_inod(args.inod, args.mask)
    if args.cutoff_mask:
        inod_map = inod_mod.cutoff(inod_map, fileio.read_pgm_mask(args.cutoff_mask))
    cloud = inod_mod.unproject_orthographic(inod_map)
    fileio.write_ply(args.out, cloud.points, cloud.pixel_index)
    return {"outputs": [args.out], "num_points": len(cloud)}


def _cmd_inod_roundtrip(args):
    depth = _load_depth(args)
    k = inod_mod.IntrinsicsMatrix.from_dict(fileio.read_json(args.intrinsics))
    report = inod_mod.roundtrip_report(depth, k, dilate_radius=args.dilate)
    fileio.validate_against_schema(report, "roundtrip_report")
    fileio.write_json(args.out, report)
    return {"outputs": [args.out], "max_error": report["max_error"]}


def _cmd_inod_dilate(args):
    inod_map = _load_inod(args.inod, args.mask)
    dilated = inod_mod.dilate_foreground(inod_map, args.radius)
    fileio.write_pfm(args.out, dilated.values)
    outputs = [args.out]
    if args.dilated_mask_out:
        fileio.write_pgm_mask(args.dilated_mask_out, dilated.dilated_mask)
        outputs.append(args.dilated_mask_out)
    return {"outputs": outputs, "added_pixels": int(dilated.dilated_mask.sum())}


# ---------------------------------------------------------------------------
# envmap subcommands

def _cmd_envmap_decompose(args):
    triple = envmap_mod.decompose(_load_env(args.hdr))
    prefix = args.out_prefix
    outputs = []
    for name, data in (("ldr", triple.tonemapped), ("log", triple.log_intensity),
                       ("dir", triple.direction)):
        pfm_path, png_path = f"{prefix}_{name}.pfm", f"{prefix}_{name}.png"
        fileio.write_pfm(pfm_path, data)
        fileio.write_png(png_path, data)
        outputs += [pfm_path, png_path]
    return {"outputs": outputs}


def _cmd_envmap_rotate(args):
    rotated = envmap_mod.rotate(_load_env(args.hdr), args.yaw)
    fileio.write_hdr(args.out, rotated.radiance)
    return {"outputs": [args.out]}


def _cmd_envmap_scale(args):
    scaled = envmap_mod.scale_intensity(_load_env(args.hdr), args.factor)
    fileio.write_hdr(args.out, scaled.radiance)
    return {"outputs": [args.out]}


def _cmd_envmap_from_leds(args):
    leds = envmap_mod.LedArray.from_list(fileio.read_json(args.leds))
    w, h = _parse_size(args.size)
    env = envmap_mod.leds_to_equirect(leds, w, h, splat_radius=args.splat_radius)
    fileio.write_hdr(args.out, env.radiance)
    return {"outputs": [args.out], "num_leds": len(leds)}


# ---------------------------------------------------------------------------
# latent stack subcommands

def _cmd_assemble(args):
    table = (latents_mod.ModalityTypeTable(rows=fileio.read_grlt(args.table))
             if args.table else latents_mod.ModalityTypeTable.default())
    modality = sorted(latents_mod.parse_modalities(args.modality))
    if len(modality) != 1:
        raise ValidationError("--modality expects exactly one name")
    slice_ = latents_mod.assemble(
        noisy=fileio.read_grlt(args.noisy),
        global_cond=fileio.read_grlt(args.global_cond) if args.global_cond else None,
        illum=fileio.read_grlt(args.illum) if args.illum else None,
        modality=modality[0],
        switch=args.switch,
        table=table,
    )
    fileio.write_grlt(args.out, slice_)
    return {"outputs": [args.out], "channels": slice_.shape[-1]}


def _parse_clear_latents(entries):
    out = {}
    for entry in entries or []:
        if "=" not in entry:
            raise ValidationError(f"--latent expects MODALITY=PATH, got {entry!r}")
        name, path = entry.split("=", 1)
        mods = sorted(latents_mod.parse_modalities(name))
        if len(mods) != 1:
            raise ValidationError(f"--latent expects one modality, got {name!r}")
        out[mods[0]] = fileio.read_grlt(path)
    return out


def _cmd_sample(args):
    if args.schedule:
        schedule = sampling_mod.NoiseSchedule.from_list(fileio.read_json(args.schedule))
    else:
        schedule = sampling_mod.NoiseSchedule.karras(steps=args.steps)
    mode = None
    if args.mode:
        dataset = args.dataset
        if dataset is None:
            dataset = sorted(d.value for d in latents_mod.mode_spec(args.mode).allowed_datasets)[0]
        mode = latents_mod.dispatch_mode(args.mode, dataset)
    if args.clear is not None:
        clear_set = latents_mod.parse_modalities(args.clear)
    elif mode is not None:
        clear_set = mode.clear_set
    else:
        clear_set = frozenset()
    clear_latents = _parse_clear_latents(args.latent)
    missing = clear_set - set(clear_latents)
    if missing:
        names = ", ".join(sorted(m.name.lower() for m in missing))
        raise ValidationError(f"clear modalities missing --latent files: {names}")
    use_global = mode.use_global_image if mode else args.global_cond is not None
    use_illum = mode.use_illumination if mode else args.illum is not None
    global_cond = fileio.read_grlt(args.global_cond) if (use_global and args.global_cond) else None
    illum = fileio.read_grlt(args.illum) if (use_illum and args.illum) else None
    if args.latent_size:
        h, w = args.latent_size
    elif clear_latents:
        h, w = next(iter(clear_latents.values())).shape[:2]
    elif global_cond is not None:
        h, w = global_cond.shape[:2]
    else:
        raise ValidationError("latent size unknown; pass --latent-size H W")
    conditions = sampling_mod.ConditionSet(global_cond=global_cond, illumination=illum)
    initial = sampling_mod.initial_latents((h, w), schedule, args.seed,
                                           {m: clear_latents[m] for m in clear_set})
    clear_flags = np.array([m in clear_set for m in latents_mod.ModalityId])
    denoiser = _make_denoiser(args)
    final = sampling_mod.sample(initial, clear_flags, conditions, schedule, denoiser)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for m in latents_mod.ModalityId:
        path = str(out_dir / f"{m.name.lower()}.grlt")
        fileio.write_grlt(path, final[int(m)])
        outputs.append(path)
    return {"outputs": outputs, "steps": len(schedule) - 1,
            "clear": sorted(m.name.lower() for m in clear_set)}


def _make_denoiser(args):
    name = args.denoiser
    if name == "identity":
        return sampling_mod.identity_denoiser
    if name == "zero":
        return sampling_mod.zero_denoiser
    if name == "blur":
        return sampling_mod.blur_denoiser()
    if name == "target":
        if not args.target:
            raise ValidationError("--denoiser target requires --target TENSOR")
        return sampling_mod.constant_denoiser(fileio.read_grlt(args.target))
    raise ValidationError(f"unknown denoiser {name!r}")


# ---------------------------------------------------------------------------
# eval subcommands

def _cmd_eval_geometry(args):
    pred = _load_cloud(args.pred)
    gt = _load_cloud(args.gt)
    report_obj, _, history = metrics_mod.evaluate_geometry(
        pred, gt, threshold=args.threshold, max_iters=args.max_iters, tol=args.tol)
    report = report_obj.to_report_dict()
    report["icp_rms_history"] = history
    fileio.validate_against_schema(report, "geometry_report")
    outputs = []
    if args.out:
        fileio.write_json(args.out, report)
        outputs.append(args.out)
    if args.figure:
        pred_n, gt_n = metrics_mod.normalize_shared_cube(pred, gt)
        _, aligned, _ = metrics_mod.icp_align(pred_n, gt_n, max_iters=args.max_iters, tol=args.tol)
        d_pg, d_gp = metrics_mod.nn_distances(aligned, gt_n)
        figures.save_nn_distance_figure(d_pg, d_gp, args.figure, args.threshold)
        outputs.append(args.figure)
    summary = {k: report[k] for k in ("accuracy", "completeness", "chamfer",
                                      "precision", "recall", "f_score")}
    return {"outputs": outputs, **summary}


def _cmd_eval_relight(args):
    pred = fileio.read_pfm(args.pred)
    gt = fileio.read_pfm(args.gt)
    mask = fileio.read_pgm_mask(args.mask)
    pair = metrics_mod.chromatic_align(pred, gt, mask)
    report = {
        "psnr": metrics_mod.psnr(pair),
        "rmse": metrics_mod.rmse(pair),
        "ssim": metrics_mod.ssim(pair),
        "scale": [float(s) for s in pair.scale],
        "degenerate_channels": [int(i) for i in np.nonzero(pair.degenerate)[0]],
        "params": {"peak": 1.0, "ssim_window": 11, "ssim_sigma": 1.5},
    }
    fileio.validate_against_schema(report, "relight_report")
    outputs = []
    if args.out:
        fileio.write_json(args.out, report)
        outputs.append(args.out)
    if args.figure:
        figures.save_alignment_error_figure(pair, args.figure)
        outputs.append(args.figure)
    return {"outputs": outputs, "psnr": report["psnr"], "rmse": report["rmse"],
            "ssim": report["ssim"]}


def _cmd_eval_normal(args):
    pred = fileio.read_pfm(args.pred)
    gt = fileio.read_pfm(args.gt)
    mask = fileio.read_pgm_mask(args.mask)
    mean_deg, comp_rmse = metrics_mod.normal_error(pred, gt, mask)
    report = {"angular_error_deg": mean_deg, "rmse": comp_rmse,
              "num_pixels": int(mask.sum())}
    fileio.validate_against_schema(report, "normal_report")
    outputs = []
    if args.out:
        fileio.write_json(args.out, report)
        outputs.append(args.out)
    if args.figure:
        angles = metrics_mod.per_pixel_angular_error(pred, gt, mask)
        figures.save_histogram_figure(angles, args.figure,
                                      "Per-pixel normal angular error", "degrees")
        outputs.append(args.figure)
    return {"outputs": outputs, "angular_error_deg": mean_deg, "rmse": comp_rmse}


# ---------------------------------------------------------------------------
# bench

def _read_corpus(corpus_dir: Path):
    corpus = []
    for pfm_path in sorted(corpus_dir.glob("*.pfm")):
        if pfm_path.stem.endswith("_mask"):
            continue
        mask_path = corpus_dir / f"{pfm_path.stem}_mask.pgm"
        if not mask_path.exists():
            raise FileFormatError(f"{pfm_path}: missing sibling mask {mask_path.name}")
        values = fileio.read_pfm(pfm_path)
        mask = fileio.read_pgm_mask(mask_path)
        corpus.append((pfm_path.stem, inod_mod.cutoff(values, mask)))
    if not corpus:
        raise ValidationError(f"no .pfm shapes found in {corpus_dir}")
    return corpus


def _cmd_bench_dilation(args):
    corpus_dir = Path(args.corpus)
    outputs = []
    if args.generate:
        corpus_dir.mkdir(parents=True, exist_ok=True)
        for name, inod_map in shapes_mod.silhouette_corpus(args.generate, size=args.size,
                                                           seed=args.seed):
            fileio.write_pfm(corpus_dir / f"{name}.pfm", inod_map.values)
            fileio.write_pgm_mask(corpus_dir / f"{name}_mask.pgm", inod_map.mask)
    report = bench_mod.dilation_benchmark(_read_corpus(corpus_dir),
                                          radius=args.radius, band=args.band)
    fileio.validate_against_schema(report, "bench_dilation_report")
    fileio.write_json(args.out, report)
    outputs.append(args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["name", "plain_error",
                                                   "dilated_error", "improvement"])
            writer.writeheader()
            writer.writerows(report["shapes"])
        outputs.append(args.csv)
    if args.figure:
        figures.save_dilation_figure(report, args.figure)
        outputs.append(args.figure)
    return {"outputs": outputs,
            "median_improvement": report["median_improvement"],
            "all_improved": report["all_improved"]}


# ---------------------------------------------------------------------------
# manifest replay

def _cmd_run_manifest(args):
    manifest = fileio.load_manifest(args.manifest)
    results = []
    for job in manifest["jobs"]:
        payload = _run(fileio.job_to_argv(job))
        results.append({"command": payload["command"], "outputs": payload.get("outputs", [])})
    return {"outputs": [o for r in results for o in r["outputs"]],
            "jobs": len(results)}


# ---------------------------------------------------------------------------
# parser wiring

def build_parser() -> _Parser:
    parser = _Parser(prog="relightkit",
                     description="Depth codec, illumination conditioning, latent "
                                 "assembly, sampling and evaluation pipelines.")
    top = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    inod_p = top.add_parser("inod", help="normalized orthographic depth codec")
    inod_sub = inod_p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = inod_sub.add_parser("encode")
    p.add_argument("--depth", required=True)
    p.add_argument("--mask")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--dilate", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out")
    p.add_argument("--dilated-mask-out")
    p.add_argument("--record")
    p.set_defaults(handler=_cmd_inod_encode, name="inod.encode")

    p = inod_sub.add_parser("decode")
    p.add_argument("--inod", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--cutoff-mask")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_inod_decode, name="inod.decode")

    p = inod_sub.add_parser("roundtrip")
    p.add_argument("--depth", required=True)
    p.add_argument("--mask")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--dilate", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_inod_roundtrip, name="inod.roundtrip")

    p = inod_sub.add_parser("dilate")
    p.add_argument("--inod", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dilated-mask-out")
    p.set_defaults(handler=_cmd_inod_dilate, name="inod.dilate")

    env_p = top.add_parser("envmap", help="HDR environment map operations")
    env_sub = env_p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = env_sub.add_parser("decompose")
    p.add_argument("--hdr", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(handler=_cmd_envmap_decompose, name="envmap.decompose")

    p = env_sub.add_parser("rotate")
    p.add_argument("--hdr", required=True)
    p.add_argument("--yaw", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_envmap_rotate, name="envmap.rotate")

    p = env_sub.add_parser("scale")
    p.add_argument("--hdr", required=True)
    p.add_argument("--factor", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_envmap_scale, name="envmap.scale")

    p = env_sub.add_parser("from-leds")
    p.add_argument("--leds", required=True)
    p.add_argument("--size", required=True, help="WxH, e.g. 128x64")
    p.add_argument("--splat-radius", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_envmap_from_leds, name="envmap.from-leds")

    p = top.add_parser("assemble", help="build one 84-channel modality slice")
    p.add_argument("--noisy", required=True)
    p.add_argument("--modality", required=True)
    p.add_argument("--switch", type=int, required=True, choices=(0, 1))
    p.add_argument("--global", dest="global_cond")
    p.add_argument("--illum")
    p.add_argument("--table")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_assemble, name="assemble")

    p = top.add_parser("sample", help="reverse sampling over the modality stack")
    p.add_argument("--steps", type=int, default=35)
    p.add_argument("--schedule", help="JSON array of noise levels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", help="training-mode row governing conditions")
    p.add_argument("--dataset", help="dataset the mode runs on (synth|dome|itw)")
    p.add_argument("--clear", help="comma-separated clear modalities, e.g. a,n,g,s")
    p.add_argument("--latent", action="append", metavar="MODALITY=PATH",
                   help="clear latent tensor (repeatable)")
    p.add_argument("--global", dest="global_cond")
    p.add_argument("--illum")
    p.add_argument("--latent-size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--denoiser", default="identity",
                   choices=("identity", "zero", "blur", "target"))
    p.add_argument("--target", help="tensor for the target denoiser")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_sample, name="sample")

    eval_p = top.add_parser("eval", help="evaluation metrics")
    eval_sub = eval_p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = eval_sub.add_parser("geometry")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out")
    p.add_argument("--figure")
    p.set_defaults(handler=_cmd_eval_geometry, name="eval.geometry")

    p = eval_sub.add_parser("relight")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out")
    p.add_argument("--figure")
    p.set_defaults(handler=_cmd_eval_relight, name="eval.relight")

    p = eval_sub.add_parser("normal")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out")
    p.add_argument("--figure")
    p.set_defaults(handler=_cmd_eval_normal, name="eval.normal")

    bench_p = top.add_parser("bench", help="reproducible experiments")
    bench_sub = bench_p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = bench_sub.add_parser("dilation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--generate", type=int, default=0,
                   help="generate N silhouettes into the corpus directory first")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--band", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--figure")
    p.set_defaults(handler=_cmd_bench_dilation, name="bench.dilation")

    p = top.add_parser("run-manifest", help="replay a reproducible job manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(handler=_cmd_run_manifest, name="run-manifest")

    return parser


def _run(argv) -> dict:
    args = build_parser().parse_args(argv)
    payload = args.handler(args)
    payload.setdefault("outputs", [])
    payload["outputs"] = [str(o) for o in payload["outputs"]]
    return {"ok": True, "command": args.name, **payload}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        payload = _run(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except (FileFormatError, OSError) as e:
        print(fileio.dumps_result_line({"ok": False, "command": " ".join(argv[:2]),
                                        "error": str(e), "kind": "io"}))
        return 2
    except (RelightKitError, ValueError) as e:
        print(fileio.dumps_result_line({"ok": False, "command": " ".join(argv[:2]),
                                        "error": str(e), "kind": "validation"}))
        return 1
    print(fileio.dumps_result_line(payload))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
