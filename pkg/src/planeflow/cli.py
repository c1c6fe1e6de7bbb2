"""Command-line pipeline driver.

Verbs: ``flow`` (full pipeline), ``nnf`` (correspondence search only),
``eval`` (metrics only), ``compare`` (two flows against ground truth),
``synth`` (synthetic fixture generation).  Exit codes: 0 success, 1 usage,
2 I/O, 3 numeric failure.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import densify, occlusion, synth
from .config import build_config, manifest_text
from .homography import DegenerateGeometryError, PointAtInfinityError
from .imgcore import (ImageIOError, OcclusionMask, compute_epe,
                      epe_difference_map, flow_to_color, hsv_histogram_equalize,
                      load_image, occlusion_scores, read_flo, read_mask_png,
                      write_flo, write_image_png, write_mask_png)
from .multiscale import initial_nnf_seeds, run_multiscale_match
from .patchmatch import compute_nnf, load_nnf, save_nnf, write_cost_raster

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _epe_table(rows):
    """Rows of (name, EpeReport) in the benchmark column layout."""
    lines = [f"{'Method':<24}{'EPE nocc.':>12}{'EPE occ.':>12}{'EPE all':>12}"]
    for name, rep in rows:
        def _fmt(x):
            return "   n/a" if x is None or np.isnan(x) else f"{x:.3f}"
        lines.append(f"{name:<24}{_fmt(rep.epe_nocc):>12}{_fmt(rep.epe_occ):>12}"
                     f"{_fmt(rep.epe_all):>12}")
    return "\n".join(lines)


def _load_gt(args):
    gt = read_flo(args.gt_flow) if args.gt_flow else None
    if gt is not None and not gt.valid.all():
        raise ImageIOError(f"ground-truth flow {args.gt_flow} has invalid pixels")
    occ = read_mask_png(args.gt_occ) if args.gt_occ else None
    return gt, occ


def _nnf_cache_key(image_a, image_b, pm_cfg):
    h = hashlib.sha256()
    h.update(image_a.data.tobytes())
    h.update(image_b.data.tobytes())
    h.update(repr((pm_cfg.patch_radius, pm_cfg.iterations, pm_cfg.search_decay,
                   pm_cfg.rng_seed)).encode())
    return h.hexdigest()[:24]


def _cached_nnf(cache_dir, image_a, image_b, pm_cfg):
    if not cache_dir:
        return compute_nnf(image_a, image_b, pm_cfg)
    os.makedirs(cache_dir, exist_ok=True)
    key = _nnf_cache_key(image_a, image_b, pm_cfg)
    flo = os.path.join(cache_dir, f"nnf_{key}.flo")
    cost = os.path.join(cache_dir, f"nnf_{key}.f32")
    if os.path.exists(flo) and os.path.exists(cost):
        return load_nnf(flo, cost)
    nnf = compute_nnf(image_a, image_b, pm_cfg)
    save_nnf(nnf, flo, cost)
    return nnf


def _dump_levels(dump_dir, artifacts):
    os.makedirs(dump_dir, exist_ok=True)
    from PIL import Image as PILImage

    for art in artifacts:
        tag = f"l{art.level}"
        # model ids as a 32-bit PNG: int32 little-endian packed into RGBA
        ids = art.assignment.model_id.astype("<i4")
        rgba = ids.view(np.uint8).reshape(ids.shape + (4,))
        PILImage.fromarray(rgba, mode="RGBA").save(
            os.path.join(dump_dir, f"assignment_{tag}.png"))
        loss = np.where(np.isfinite(art.assignment.loss), art.assignment.loss, -1.0)
        write_cost_raster(loss, os.path.join(dump_dir, f"loss_{tag}.f32"))
        save_nnf(art.nnf_fwd, os.path.join(dump_dir, f"nnf_fwd_{tag}.flo"),
                 os.path.join(dump_dir, f"nnf_fwd_{tag}.f32"))
        save_nnf(art.nnf_bwd, os.path.join(dump_dir, f"nnf_bwd_{tag}.flo"),
                 os.path.join(dump_dir, f"nnf_bwd_{tag}.f32"))
        with open(os.path.join(dump_dir, f"models_{tag}.txt"), "w") as fh:
            for m in art.models:
                win = f"w{m.window.cy}_{m.window.cx}"
                fwd = " ".join(f"{v:.17g}" for v in m.h_fwd.m.ravel())
                bwd = (" ".join(f"{v:.17g}" for v in m.h_bwd.m.ravel())
                       if m.h_bwd is not None else "-")
                fh.write(f"{win} id={m.id} stage={m.stage} "
                         f"sym={m.symmetry_overlap:.6f} agree={m.agreement:.6f} "
                         f"accepted={int(m.accepted)} "
                         f"reason={m.reject_reason or '-'} "
                         f"h_fwd {fwd} h_bwd {bwd}\n")


def run_pipeline(image_a, image_b, cfg, external_interp=None, cache_dir=None):
    """The full flow/occlusion pipeline on loaded images.

    Returns a dict with the final flow, occlusion mask, merged (pre-fill)
    flow, per-level artifacts, and summary statistics.
    """
    if cfg.hsv_equalize:
        image_a, image_b = hsv_histogram_equalize(image_a, image_b)

    pyramid = cfg.pyramid_config()
    seed_f, seed_b = initial_nnf_seeds(pyramid)
    if cfg.jobs > 1:
        # the two search directions are independent; the kernel releases the
        # GIL, so threads give real overlap
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_f = pool.submit(_cached_nnf, cache_dir, image_a, image_b,
                                cfg.pm_config(seed_f))
            fut_b = pool.submit(_cached_nnf, cache_dir, image_b, image_a,
                                cfg.pm_config(seed_b))
            nnf_fwd = fut_f.result()
            nnf_bwd = fut_b.result()
    else:
        nnf_fwd = _cached_nnf(cache_dir, image_a, image_b, cfg.pm_config(seed_f))
        nnf_bwd = _cached_nnf(cache_dir, image_b, image_a, cfg.pm_config(seed_b))

    merged, artifacts = run_multiscale_match(image_a, image_b, pyramid,
                                  cfg.pm_config(), jobs=cfg.jobs,
                                  nnf_fwd=nnf_fwd, nnf_bwd=nnf_bwd)
    assigned_merged = int(merged.flow.valid.sum())

    filled = densify.propagate_models(merged, image_a, image_b, cfg.epsilon)
    forced = ~filled.flow.valid
    assigned_filled = int(filled.flow.valid.sum())

    if external_interp is not None:
        interp = read_flo(external_interp)
        if interp.u.shape != filled.flow.u.shape:
            raise ImageIOError("external interpolation dimensions do not match")
    elif int(filled.flow.valid.sum()) < 4:
        # degenerate run with (almost) no reliable matches: fall back to a
        # zero field so the pipeline still emits a dense, scoreable flow
        from .imgcore import FlowField

        interp = FlowField.zeros(image_a.height, image_a.width)
    else:
        interp = densify.edge_aware_interpolate(
            filled.flow, image_a, k=cfg.interp_k, lam=cfg.interp_lambda,
            sigma=cfg.interp_sigma)
    final = densify.merge_by_consistency(filled.flow, interp, image_a, image_b)
    occ = occlusion.final_occlusion_map(final, image_a, image_b,
                                        theta_occ=cfg.theta_occ,
                                        forced_occluded=forced)
    return {
        "flow": final,
        "occlusion": occ,
        "merged": merged,
        "filled": filled,
        "artifacts": artifacts,
        "stats": {
            "assigned_merged": assigned_merged,
            "assigned_after_propagation": assigned_filled,
            "forced_occluded": int(forced.sum()),
            "models_per_level": [len(a.models) for a in artifacts],
            "demoted_per_level": [a.demoted for a in artifacts],
        },
    }


def cmd_flow(args):
    cfg = build_config(args.config, args.set or [])
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.hsv_equalize:
        cfg.hsv_equalize = True

    image_a = load_image(args.image1)
    image_b = load_image(args.image2)
    gt, gt_occ = _load_gt(args)

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write(manifest_text(cfg))

    result = run_pipeline(image_a, image_b, cfg,
                          external_interp=args.external_interp,
                          cache_dir=args.cache_dir)

    write_flo(result["flow"], os.path.join(out_dir, "flow.flo"))
    write_mask_png(result["occlusion"], os.path.join(out_dir, "occlusion.png"))
    write_image_png(flow_to_color(result["flow"]),
                    os.path.join(out_dir, "flow_color.png"))
    write_flo(result["merged"].flow, os.path.join(out_dir, "merged.flo"))

    report = {"stats": result["stats"]}
    if gt is not None:
        occ_for_epe = gt_occ if gt_occ is not None else \
            OcclusionMask(np.zeros(gt.u.shape, dtype=bool))
        rep = compute_epe(result["flow"], gt, occ_for_epe)
        report["epe"] = rep.as_dict()
        if gt_occ is not None:
            report["occlusion"] = occlusion_scores(result["occlusion"], gt_occ)
        print(_epe_table([("flow", rep)]))
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if args.dump_levels:
        _dump_levels(args.dump_levels, result["artifacts"])
    print(f"wrote {out_dir}/flow.flo")
    return EXIT_OK


def cmd_nnf(args):
    cfg = build_config(args.config, args.set or [])
    if args.seed is not None:
        cfg.seed = args.seed
    image_a = load_image(args.image1)
    image_b = load_image(args.image2)
    if args.backward:
        image_a, image_b = image_b, image_a
    pyramid = cfg.pyramid_config()
    seed_f, seed_b = initial_nnf_seeds(pyramid)
    pm = cfg.pm_config(seed_b if args.backward else seed_f)
    nnf = _cached_nnf(args.cache_dir, image_a, image_b, pm)
    os.makedirs(args.out, exist_ok=True)
    name = "nnf_bwd" if args.backward else "nnf_fwd"
    save_nnf(nnf, os.path.join(args.out, f"{name}.flo"),
             os.path.join(args.out, f"{name}.f32"))
    print(f"wrote {args.out}/{name}.flo (total cost {nnf.cost.sum():.4f})")
    return EXIT_OK


def _eval_one(path, gt, gt_occ):
    flow = read_flo(path)
    if gt_occ is None:
        gt_occ = OcclusionMask(np.zeros(gt.u.shape, dtype=bool))
    return compute_epe(flow, gt, gt_occ), flow


def cmd_eval(args):
    gt = read_flo(args.gt)
    gt_occ = read_mask_png(args.occ) if args.occ else None
    rep, _ = _eval_one(args.flow, gt, gt_occ)
    print(_epe_table([(os.path.basename(args.flow), rep)]))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w") as fh:
            json.dump({"epe": rep.as_dict()}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_compare(args):
    gt = read_flo(args.gt)
    gt_occ = read_mask_png(args.occ) if args.occ else None
    rep_a, flow_a = _eval_one(args.flow_a, gt, gt_occ)
    rep_b, flow_b = _eval_one(args.flow_b, gt, gt_occ)
    print(_epe_table([(os.path.basename(args.flow_a), rep_a),
                      (os.path.basename(args.flow_b), rep_b)]))
    os.makedirs(args.out, exist_ok=True)
    diff = epe_difference_map(flow_a, flow_b, gt)
    write_image_png(diff, os.path.join(args.out, "epe_difference.png"))
    with open(os.path.join(args.out, "compare.json"), "w") as fh:
        json.dump({"a": rep_a.as_dict(), "b": rep_b.as_dict()}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out}/epe_difference.png")
    return EXIT_OK


def cmd_synth(args):
    maker = synth.SCENE_PRESETS[args.scene]
    out = maker(args.seed, size=args.size)
    image_a, image_b, gt_flow, gt_occ = out[:4]
    os.makedirs(args.out, exist_ok=True)
    write_image_png(image_a, os.path.join(args.out, "frame1.png"))
    write_image_png(image_b, os.path.join(args.out, "frame2.png"))
    write_flo(gt_flow, os.path.join(args.out, "gt_flow.flo"))
    write_mask_png(gt_occ, os.path.join(args.out, "gt_occ.png"))
    meta = {"scene": args.scene, "seed": args.seed, "size": args.size}
    with open(os.path.join(args.out, "scene.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out}/frame1.png frame2.png gt_flow.flo gt_occ.png")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="planeflow",
                     description="Optical flow by multi-scale robust plane matching")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--cache-dir", default=None,
                       help="cache correspondence fields by content hash")

    p = sub.add_parser("flow", help="run the full pipeline")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("--out", default="out")
    p.add_argument("--gt-flow")
    p.add_argument("--gt-occ")
    p.add_argument("--hsv-equalize", action="store_true")
    p.add_argument("--dump-levels", metavar="DIR")
    p.add_argument("--external-interp", metavar="FILE",
                   help="dense .flo standing in for the built-in interpolator")
    p.add_argument("--jobs", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("nnf", help="correspondence search only")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("--out", default="out")
    p.add_argument("--backward", action="store_true")
    common(p)
    p.set_defaults(func=cmd_nnf)

    p = sub.add_parser("eval", help="endpoint-error metrics for a flow file")
    p.add_argument("flow")
    p.add_argument("gt")
    p.add_argument("--occ")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare two flows against ground truth")
    p.add_argument("flow_a")
    p.add_argument("flow_b")
    p.add_argument("gt")
    p.add_argument("--occ")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="generate synthetic fixtures")
    p.add_argument("scene", choices=sorted(synth.SCENE_PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ImageIOError as exc:
        print(f"planeflow: I/O error [{type(exc).__name__}]: {exc}",
              file=sys.stderr)
        return EXIT_IO
    except (DegenerateGeometryError, PointAtInfinityError, FloatingPointError) as exc:
        print(f"planeflow: numeric failure [{type(exc).__name__}]: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"planeflow: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
