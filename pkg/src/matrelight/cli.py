"""Command-line front end.

Exit status is 0 on success, 2 for bad arguments or incompatible inputs and
1 when a pipeline stage fails. Diagnostics and stage timings go to stderr;
stdout carries only the paths of written files.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from matrelight.core import ImageIOError, MaterialError, RelightError, SizingError, luminance
from matrelight.imgio import load_image, save_image, save_plane
from matrelight.materials import default_palette, load_material_map, load_palette, recolor
from matrelight.patchmatch import PatchMatchParams, check_sizes, compute_nnf, save_nnf, warp
from matrelight.relight import PipelineConfig, run
from matrelight.wls import WlsParams, decompose, lambda_map

log = logging.getLogger("matrelight")

PM_DEFAULTS = PatchMatchParams()
WLS_DEFAULTS = WlsParams()


class UsageError(Exception):
    """Bad arguments or inputs detected before any computation (exit 2)."""


def _radius(text: str):
    if text == "auto":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or an integer, got {text!r}") from None
    return value


def _add_pm_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("PatchMatch")
    g.add_argument("--seed", type=int, default=PM_DEFAULTS.seed, help="RNG seed (default: %(default)s)")
    g.add_argument("--patch-size", type=int, default=PM_DEFAULTS.patch_size, help="patch side in pixels (default: %(default)s)")
    g.add_argument("--pm-iters", type=int, default=PM_DEFAULTS.iterations, help="propagation/search rounds (default: %(default)s)")
    g.add_argument("--pm-w", type=_radius, default="auto",
                   help="max search radius in pixels, 'auto' = max(reference width, height) (default: %(default)s)")
    g.add_argument("--pm-alpha", type=float, default=PM_DEFAULTS.alpha_search, help="search radius decay (default: %(default)s)")


def _add_wls_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("WLS")
    g.add_argument("--wls-alpha", type=float, default=WLS_DEFAULTS.alpha_wls, help="gradient exponent (default: %(default)s)")
    g.add_argument("--wls-eps", type=float, default=WLS_DEFAULTS.epsilon, help="gradient denominator guard (default: %(default)s)")
    g.add_argument("--lambda-scale", type=float, default=WLS_DEFAULTS.lambda_scale, help="global smoothness multiplier (default: %(default)s)")
    g.add_argument("--solver-tol", type=float, default=WLS_DEFAULTS.solver_tol, help="CG relative residual target (default: %(default)s)")
    g.add_argument("--solver-max-iter", type=int, default=None, help="CG iteration cap (default: 10 x pixel count)")
    g.add_argument("--eps-div", type=float, default=WLS_DEFAULTS.epsilon_div, help="detail-layer division guard (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matrelight", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--config", type=Path, help="key=value file of flag defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("relight", help="relight an input image to match a reference")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--materials", type=Path, required=True, help="material label map of the input")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--palette", type=Path, help="palette file (default: bundled 9-material palette)")
    p.add_argument("--emit-intermediates", action="store_true",
                   help="also write warped reference, material preview, lambda map and s/d layers")
    _add_pm_flags(p)
    _add_wls_flags(p)

    p = sub.add_parser("warp", help="warp a reference onto the input's structure")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--dump-nnf", type=Path, help="write the nearest-neighbor field sidecar here")
    _add_pm_flags(p)

    p = sub.add_parser("decompose", help="write large-scale, detail and lambda layers")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--materials", type=Path, required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--palette", type=Path)
    _add_wls_flags(p)

    p = sub.add_parser("materials", help="recolor a material label map for preview")
    p.add_argument("--map", type=Path, required=True)
    p.add_argument("--palette", type=Path)
    p.add_argument("--output", type=Path, required=True)
    return parser


def _read_config(path: Path) -> dict[str, str]:
    values = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return
    values = _read_config(known.config)
    for action in parser._subparsers._group_actions:  # noqa: SLF001 - argparse exposes no public accessor
        for sub in action.choices.values():
            dests = {a.dest: a for a in sub._actions}
            defaults = {}
            for key, value in values.items():
                if key not in dests:
                    continue
                if isinstance(dests[key], argparse._StoreTrueAction):
                    defaults[key] = value.lower() in ("1", "true", "yes", "on")
                else:
                    defaults[key] = value
            sub.set_defaults(**defaults)


def _pm_params(args) -> PatchMatchParams:
    return PatchMatchParams(patch_size=args.patch_size, iterations=args.pm_iters, w=args.pm_w,
                            alpha_search=args.pm_alpha, seed=args.seed)


def _wls_params(args) -> WlsParams:
    return WlsParams(alpha_wls=args.wls_alpha, epsilon=args.wls_eps, lambda_scale=args.lambda_scale,
                     solver_tol=args.solver_tol, solver_max_iter=args.solver_max_iter,
                     epsilon_div=args.eps_div)


def _require_files(*paths: Path) -> None:
    for path in paths:
        if not path.is_file():
            raise UsageError(f"no such file: {path}")


def _require_dirs(*paths: Path) -> None:
    for path in paths:
        parent = path.parent
        if not parent.is_dir():
            raise UsageError(f"output directory does not exist: {parent}")


def _palette(args):
    if args.palette is None:
        return default_palette()
    _require_files(args.palette)
    try:
        return load_palette(args.palette)
    except MaterialError as exc:
        raise UsageError(str(exc)) from exc


class _Outputs:
    """Tracks written files so a failure can remove them all."""

    def __init__(self):
        self.written: list[Path] = []

    def image(self, img, path: Path) -> None:
        save_image(img, path)
        self.written.append(path)

    def plane(self, plane, path: Path) -> None:
        save_plane(plane, path)
        self.written.append(path)

    def text(self, text: str, path: Path) -> None:
        try:
            path.write_text(text)
        except OSError as exc:
            raise ImageIOError(f"cannot write {path}: {exc}") from exc
        self.written.append(path)

    def nnf(self, nnf, path: Path) -> None:
        save_nnf(nnf, path)
        self.written.append(path)

    def rollback(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)
        self.written.clear()


def _scaled(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Divide by the maximum so values fit in [0, 1]; returns (scaled, factor)."""
    factor = float(values.max())
    if not factor > 0:
        factor = 1.0
    return values / factor, factor


def _suffixed(path: Path, suffix: str, ext: str = ".png") -> Path:
    return path.with_name(f"{path.stem}_{suffix}{ext}")


def _report_timings(timings: dict) -> None:
    for stage, seconds in timings.items():
        print(f"stage {stage}: {seconds:.3f} s", file=sys.stderr)


def _do_relight(args, out: _Outputs) -> None:
    _require_files(args.input, args.reference, args.materials)
    _require_dirs(args.output)
    pm, wls = _pm_params(args), _wls_params(args)
    palette = _palette(args)
    inp = load_image(args.input).image
    ref = load_image(args.reference).image
    try:
        check_sizes(inp.shape, ref.shape, pm.patch_size)
    except SizingError as exc:
        raise UsageError(str(exc)) from exc
    mmap = load_material_map(args.materials, palette)
    if mmap.shape != inp.shape[:2]:
        raise UsageError(f"material map is {mmap.shape[1]}x{mmap.shape[0]} "
                         f"but the input is {inp.shape[1]}x{inp.shape[0]}")
    config = PipelineConfig(pm=pm, wls=wls, palette=palette, emit_intermediates=args.emit_intermediates)
    result = run(inp, ref, mmap, config)
    _report_timings(result.timings)
    if args.emit_intermediates:
        im = result.intermediates
        out.image(im["warped"], _suffixed(args.output, "warped"))
        out.image(recolor(mmap, palette), _suffixed(args.output, "materials"))
        lam, factor = _scaled(im["lambda"])
        out.plane(lam, _suffixed(args.output, "lambda"))
        out.text(f"{factor!r}\n", _suffixed(args.output, "lambda", ".scale.txt"))
        for src in ("input", "warped"):
            out.image(np.clip(im[f"{src}_s"], 0.0, 1.0), _suffixed(args.output, f"{src}_s"))
            d, factor = _scaled(im[f"{src}_d"])
            out.image(d, _suffixed(args.output, f"{src}_d"))
            out.text(f"{factor!r}\n", _suffixed(args.output, f"{src}_d", ".scale.txt"))
    out.image(result.image, args.output)


def _do_warp(args, out: _Outputs) -> None:
    _require_files(args.input, args.reference)
    _require_dirs(args.output, *([args.dump_nnf] if args.dump_nnf else []))
    pm = _pm_params(args)
    inp = load_image(args.input).image
    ref = load_image(args.reference).image
    try:
        check_sizes(inp.shape, ref.shape, pm.patch_size)
    except SizingError as exc:
        raise UsageError(str(exc)) from exc
    t0 = time.perf_counter()
    nnf = compute_nnf(inp, ref, pm)
    warped = warp(ref, nnf)
    _report_timings({"warp": time.perf_counter() - t0})
    if args.dump_nnf:
        out.nnf(nnf, args.dump_nnf)
    out.image(warped, args.output)


def _do_decompose(args, out: _Outputs) -> None:
    _require_files(args.input, args.materials)
    prefix = Path(args.out_prefix)
    _require_dirs(prefix)
    wls = _wls_params(args)
    palette = _palette(args)
    inp = load_image(args.input).image
    mmap = load_material_map(args.materials, palette)
    if mmap.shape != inp.shape[:2]:
        raise UsageError(f"material map is {mmap.shape[1]}x{mmap.shape[0]} "
                         f"but the input is {inp.shape[1]}x{inp.shape[0]}")
    t0 = time.perf_counter()
    lam = lambda_map(luminance(inp), mmap, palette)
    s = np.empty_like(inp)
    d = np.empty_like(inp)
    for c in range(3):
        s[..., c], d[..., c] = decompose(inp[..., c], lam, wls)
    _report_timings({"decompose": time.perf_counter() - t0})
    base = prefix.parent
    stem = prefix.name
    out.image(np.clip(s, 0.0, 1.0), base / f"{stem}_s.png")
    d_scaled, d_factor = _scaled(d)
    out.image(d_scaled, base / f"{stem}_d.png")
    out.text(f"{d_factor!r}\n", base / f"{stem}_d.scale.txt")
    lam_scaled, lam_factor = _scaled(lam)
    out.plane(lam_scaled, base / f"{stem}_lambda.png")
    out.text(f"{lam_factor!r}\n", base / f"{stem}_lambda.scale.txt")


def _do_materials(args, out: _Outputs) -> None:
    _require_files(args.map)
    _require_dirs(args.output)
    palette = _palette(args)
    mmap = load_material_map(args.map, palette)
    out.image(recolor(mmap, palette), args.output)


COMMANDS = {
    "relight": _do_relight,
    "warp": _do_warp,
    "decompose": _do_decompose,
    "materials": _do_materials,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"matrelight: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse reports its own errors (exit 2) and --help (exit 0)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)

    out = _Outputs()
    try:
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        out.rollback()
        print(f"matrelight {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RelightError as exc:
        out.rollback()
        stage = getattr(exc, "stage", args.command)
        print(f"matrelight {args.command}: {stage} failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # parameter range checks
        out.rollback()
        print(f"matrelight {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        out.rollback()
        raise
    for path in out.written:
        print(path)
    return 0


def cmd_relight(argv) -> int:
    return main(["relight", *argv])


def cmd_warp(argv) -> int:
    return main(["warp", *argv])


def cmd_decompose(argv) -> int:
    return main(["decompose", *argv])


def cmd_materials(argv) -> int:
    return main(["materials", *argv])


if __name__ == "__main__":
    sys.exit(main())
