"""Command-line interface.

Exit codes: 0 success, 1 validation failure (bad values, dimensions, formats),
2 I/O failure. File formats are documented in docs/formats.md.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import assets as assets_mod
from . import pipeline, raster, texsteal
from .camera import ImageSpec
from .errors import ValidationError
from .headmodel import evaluate
from .shading import albedo_from_appearance


def _load_png(path) -> np.ndarray:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def _save_png(img: np.ndarray, path) -> None:
    from PIL import Image as PILImage

    PILImage.fromarray(pipeline.to_uint8(img)).save(path)


def cmd_gen_assets(args) -> int:
    a = assets_mod.gen_synthetic_assets(args.seed, v_target=args.vertices,
                                        tex_res=args.tex_res)
    assets_mod.save_assets(a, args.out)
    print(f"wrote {args.out}: {a.num_vertices} vertices, {a.num_faces} faces, "
          f"{a.texture_resolution}x{a.texture_resolution} texture")
    return 0


def cmd_sample_params(args) -> int:
    a = assets_mod.load_assets(args.assets)
    fp = pipeline.sample_params(args.seed, a, ImageSpec(args.res),
                                interocular_px=args.interocular, center_px=None)
    pipeline.save_params(fp, args.res, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_render(args) -> int:
    a = assets_mod.load_assets(args.assets)
    fp, res = pipeline.load_params(args.params)
    image = ImageSpec(res)
    mesh = evaluate(a, fp.head)
    albedo = albedo_from_appearance(a, fp.appearance)
    buffers, stack = raster.render_condition(a, mesh, fp.cam, image, albedo,
                                             fp.lighting, levels=args.levels,
                                             workers=args.workers)
    raster.save_stack(stack, args.out)
    print(f"wrote {args.out}: {stack.resolution}x{stack.resolution}, "
          f"{stack.levels} levels")
    if args.png:
        _save_png(buffers.normal_img, _with_suffix(args.png, "normals"))
        _save_png(buffers.color_img, _with_suffix(args.png, "texture"))
        print(f"wrote previews next to {args.png}")
    return 0


def _with_suffix(path: str, tag: str) -> str:
    if path.lower().endswith(".png"):
        return f"{path[:-4]}_{tag}.png"
    return f"{path}_{tag}.png"


def cmd_steal(args) -> int:
    a = assets_mod.load_assets(args.assets)
    fp, res = pipeline.load_params(args.params)
    img = _load_png(args.image)
    if img.shape[0] != res or img.shape[1] != res:
        raise ValidationError(
            f"image is {img.shape[1]}x{img.shape[0]}, params expect {res}x{res}")
    corr = pipeline.record_correspondences(a, fp, res, t_s=args.tex_res)
    mesh = evaluate(a, fp.head)
    buffers = raster.rasterize(mesh, fp.cam, ImageSpec(res))
    tex = texsteal.steal_texture(img, corr, pixel_mask=buffers.mask)
    texsteal.save_partial_texture(tex, args.out)
    print(f"wrote {args.out}: {int(tex.visible.sum())} visible texels "
          f"of {tex.resolution * tex.resolution}")
    if args.corr_out:
        texsteal.save_correspondences(corr, args.corr_out)
        print(f"wrote {args.corr_out}")
    return 0


def cmd_consistency(args) -> int:
    a = texsteal.load_partial_texture(args.a)
    b = texsteal.load_partial_texture(args.b)
    loss, overlap = texsteal.consistency_loss(a, b)
    print(f"loss {loss:.8f} overlap {overlap}")
    return 0


def cmd_dataset(args) -> int:
    if args.assets:
        a = assets_mod.load_assets(args.assets)
    else:
        a = assets_mod.gen_synthetic_assets(args.seed, v_target=args.vertices,
                                            tex_res=args.tex_res)
    manifest = pipeline.make_dataset(a, args.n, args.out, args.seed,
                                     ImageSpec(args.res), levels=args.levels,
                                     force=args.force)
    print(f"wrote {len(manifest.records)} records under {args.out}")
    return 0


def cmd_preview(args) -> int:
    wrote = []
    if args.stack:
        stack = raster.load_stack(args.stack)
        _save_png(stack.channels[..., 0:3].astype(np.float64),
                  f"{args.out_prefix}_normals.png")
        _save_png(stack.channels[..., 3:6].astype(np.float64),
                  f"{args.out_prefix}_texture.png")
        wrote += [f"{args.out_prefix}_normals.png", f"{args.out_prefix}_texture.png"]
    if args.ptex:
        tex = texsteal.load_partial_texture(args.ptex)
        _save_png(tex.texels, f"{args.out_prefix}_stolen.png")
        _save_png(tex.visible[..., None].repeat(3, axis=-1).astype(np.float64),
                  f"{args.out_prefix}_visibility.png")
        wrote += [f"{args.out_prefix}_stolen.png", f"{args.out_prefix}_visibility.png"]
    if not wrote:
        raise ValidationError("preview needs --stack and/or --ptex")
    print("wrote " + ", ".join(wrote))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; bad args are validation
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="headcond",
                description="Parametric head renderer: assets, condition stacks, "
                            "texture stealing, datasets.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-assets", help="generate synthetic head-model assets")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--vertices", type=int, default=1000)
    g.add_argument("--tex-res", type=int, default=64)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_assets)

    s = sub.add_parser("sample-params", help="draw one parameter tuple")
    s.add_argument("--assets", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--res", type=int, default=64)
    s.add_argument("--interocular", type=float, default=None,
                   help="projected inter-eye distance in pixels (default 0.22 * res)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample_params)

    r = sub.add_parser("render", help="render the 6-channel conditioning stack")
    r.add_argument("--params", required=True)
    r.add_argument("--assets", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--png", default=None, help="also write preview PNGs")
    r.add_argument("--levels", type=int, default=None)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_render)

    st = sub.add_parser("steal", help="project an image back onto the UV atlas")
    st.add_argument("--image", required=True)
    st.add_argument("--params", required=True)
    st.add_argument("--assets", required=True)
    st.add_argument("--out", required=True)
    st.add_argument("--tex-res", type=int, default=128)
    st.add_argument("--corr-out", default=None,
                    help="also write the correspondence map")
    st.set_defaults(func=cmd_steal)

    c = sub.add_parser("consistency", help="masked L2 between two partial textures")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.set_defaults(func=cmd_consistency)

    d = sub.add_parser("dataset", help="emit a training-ready dataset")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--res", type=int, default=64)
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--assets", default=None,
                   help="asset file (default: synthetic assets from --seed)")
    d.add_argument("--vertices", type=int, default=1000)
    d.add_argument("--tex-res", type=int, default=64)
    d.add_argument("--levels", type=int, default=None)
    d.add_argument("--force", action="store_true",
                   help="allow writing into a non-empty directory")
    d.set_defaults(func=cmd_dataset)

    v = sub.add_parser("preview", help="write PNG previews of binary artifacts")
    v.add_argument("--stack", default=None)
    v.add_argument("--ptex", default=None)
    v.add_argument("--out-prefix", required=True)
    v.set_defaults(func=cmd_preview)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, FileExistsError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
