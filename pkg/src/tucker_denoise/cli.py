"""Command-line entry point ``tucker-denoise``.

Exit codes: 0 success, 2 configuration or usage error, 3 file or format
error, 4 numerical failure, 5 any other invalid input. Failures print a
single ``error: ...`` line on stderr.
"""

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .admm import denoise_single_image
from .config import PROFILES, RunConfig, load_config, parse_config, profile, serialize_config
from .errors import ConfigError, DenoiseError, NumericError, ParseError
from .imageio import atomic_write, denormalize, load_image, normalize, save_image
from .inference import patchwise_infer, network_fn
from .metrics import default_peak, psnr, ssim
from .nn import checkpoint
from .noise import add_gaussian, add_poisson_gaussian, estimate_sigma, vst_forward, vst_inverse

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_INPUT = 2, 3, 4, 5


def _csv_text(rows, header):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _write_text(path, text):
    atomic_write(str(path), text.encode("utf-8"))


def _center_crop(x, size):
    if not size:
        return x
    h, w = x.shape[:2]
    if h < size or w < size:
        raise DenoiseError(f"cannot crop {size}x{size} from a {h}x{w} image")
    r, c = (h - size) // 2, (w - size) // 2
    return x[r:r + size, c:c + size]


def _resolve_config(args):
    cfg = profile(args.profile) if getattr(args, "profile", None) else RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    sets = list(getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        sets.append(f"seed = {args.seed}")
    if sets:
        cfg = parse_config("\n".join(sets), cfg)
    return cfg


def _load(path):
    img = load_image(path)
    if img.from_color:
        print(f"warning: {path} is colour; converted to luminance", file=sys.stderr)
    return img


def cmd_synth_noise(args):
    img = _load(args.input)
    x = _center_crop(img.pixels, args.crop)
    if args.gain is not None:
        y = add_poisson_gaussian(x, args.gain, args.variance, args.seed)
    else:
        y = add_gaussian(x, args.sigma, args.seed)
    if str(args.output).endswith(".npy"):
        np.save(args.output, y)
    else:
        save_image(args.output, y, img.bit_depth)
    if args.clean_output:
        save_image(args.clean_output, x, img.bit_depth)


def _read_pixels(path):
    if str(path).endswith(".npy"):
        arr = np.load(path)
        return (arr if arr.ndim == 3 else arr[..., None]).astype(np.float64), 8
    img = _load(path)
    return img.pixels, img.bit_depth


def cmd_train(args):
    cfg = _resolve_config(args)
    y, depth = _read_pixels(args.input)
    y = _center_crop(y, cfg.crop)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "config.txt", serialize_config(cfg))

    sigma = cfg.sigma
    clamped = 0
    if cfg.vst:
        a, b = cfg.noise_gain, cfg.noise_variance
        y_work, clamped = vst_forward(y, a, b, return_clamped=True)
        if sigma is None:
            sigma = estimate_sigma(y_work)
    else:
        y_work = y
    result = denoise_single_image(y_work, cfg.admm(), cfg.structure(), cfg.denoiser_spec(),
                                  cfg.seed, sigma)
    est = result.output
    if cfg.vst:
        est = vst_inverse(est, cfg.noise_gain, cfg.noise_variance, method="unbiased")

    np.save(out / "denoised.npy", est)
    save_image(str(out / "denoised.png"), est, depth)
    checkpoint.save(result.params, str(out / "model.tdck"))
    _write_run_reports(out, result, clamped)
    if args.clean:
        clean, cdepth = _read_pixels(args.clean)
        clean = _center_crop(clean, cfg.crop)
        peak = default_peak(clean, cdepth)
        rows = [_quality_row("noisy", cfg.noise_sigma, clean, y, peak),
                _quality_row("ours", cfg.noise_sigma, clean, est, peak)]
        _write_text(out / "quality.csv", _csv_text(rows, list(rows[0])))
    timing = {"wall_clock_s": result.wall_clock}
    _write_text(out / "timing.json", json.dumps(timing) + "\n")


def _write_run_reports(out, result, clamped):
    it_header = ["iteration", "epoch", "loss", "distorted", "heldout_before", "heldout_after"]
    _write_text(out / "iterations.csv", _csv_text(result.iterations, it_header))
    _write_text(out / "epochs.csv", _csv_text(result.epochs, list(result.epochs[0])))
    log = {
        "sigma": result.sigma,
        "sigma2_normalized": result.sigma2_normalized,
        "vst_clamped_pixels": clamped,
        "events": [asdict(e) for e in result.distortions],
    }
    _write_text(out / "distortions.json", json.dumps(log, indent=1) + "\n")


def _quality_row(method, sigma, clean, est, peak):
    return {"method": method, "sigma": sigma, "psnr": round(psnr(clean, est, peak), 4),
            "ssim": round(ssim(clean, est, peak), 4), "peak": peak}


def cmd_infer(args):
    params = checkpoint.load(args.checkpoint)
    y, depth = _read_pixels(args.input)
    yn, record = normalize(y)
    net = network_fn(params)
    est = denormalize(patchwise_infer(yn, net, params.structure.divisor, args.tile, args.pad),
                      record)
    if str(args.output).endswith(".npy"):
        np.save(args.output, est)
    else:
        save_image(args.output, est, depth)


def cmd_evaluate(args):
    clean, depth = _read_pixels(args.clean)
    peak = args.peak or default_peak(clean, depth)
    labels = args.labels or [Path(p).stem for p in args.images]
    if len(labels) != len(args.images):
        raise ConfigError("need one label per image")
    rows = []
    for label, path in zip(labels, args.images):
        est, _ = _read_pixels(path)
        rows.append(_quality_row(label, args.sigma, clean, est, peak))
    text = _csv_text(rows, ["method", "sigma", "psnr", "ssim", "peak"])
    if args.output:
        _write_text(args.output, text)
    sys.stdout.write(text)


def cmd_report(args):
    run = Path(args.run_dir)
    dest = Path(args.output_dir or args.run_dir)
    dest.mkdir(parents=True, exist_ok=True)
    with open(run / "iterations.csv", newline="") as fh:
        iters = list(csv.DictReader(fh))
    with open(run / "epochs.csv", newline="") as fh:
        epochs = list(csv.DictReader(fh))
    with open(run / "distortions.json") as fh:
        events = json.load(fh)["events"]

    loss = [{"iteration": r["iteration"], "epoch": r["epoch"], "loss": r["loss"]} for r in iters]
    _write_text(dest / "loss.csv", _csv_text(loss, ["iteration", "epoch", "loss"]))
    dw = [{"epoch": r["epoch"], "weight_change": r["weight_change"]} for r in epochs]
    _write_text(dest / "weight_change.csv", _csv_text(dw, ["epoch", "weight_change"]))

    by_iter = {}
    for e in events:
        by_iter.setdefault(e["iteration"], []).append(e)
    cr = []
    for it in sorted(by_iter):
        evs = by_iter[it]
        cr.append({"iteration": it, "epoch": evs[0]["epoch"], "layers": len(evs),
                   "mean_compression_ratio": float(np.mean([e["compression_ratio"] for e in evs])),
                   "mean_r3": float(np.mean([e["r3"] for e in evs])),
                   "mean_r4": float(np.mean([e["r4"] for e in evs]))})
    header = ["iteration", "epoch", "layers", "mean_compression_ratio", "mean_r3", "mean_r4"]
    _write_text(dest / "compression.csv", _csv_text(cr, header))
    print(f"distortion_events={len(cr)}")


def build_parser():
    p = argparse.ArgumentParser(prog="tucker-denoise", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-noise", help="corrupt a clean image with synthetic noise")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True, help="image file, or .npy for unquantized values")
    s.add_argument("--sigma", type=float, default=25.0)
    s.add_argument("--gain", type=float, help="Poisson gain a (switches to Poisson-Gaussian)")
    s.add_argument("--variance", type=float, default=0.0, help="Gaussian variance b")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--crop", type=int, default=0, help="centre crop size (0 keeps all)")
    s.add_argument("--clean-output", help="also write the (cropped) clean image here")
    s.set_defaults(func=cmd_synth_noise)

    t = sub.add_parser("train", help="denoise one image by training on it")
    t.add_argument("--input", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--config")
    t.add_argument("--profile", choices=sorted(PROFILES))
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.add_argument("--seed", type=int)
    t.add_argument("--clean", help="clean reference for a quality row")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="apply a trained checkpoint to another image")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--input", required=True)
    i.add_argument("--output", required=True)
    i.add_argument("--tile", type=int, default=800)
    i.add_argument("--pad", type=int, default=500)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("evaluate", help="PSNR/SSIM rows against a clean reference")
    e.add_argument("--clean", required=True)
    e.add_argument("images", nargs="+")
    e.add_argument("--labels", nargs="+")
    e.add_argument("--sigma", type=float, default=float("nan"))
    e.add_argument("--peak", type=float)
    e.add_argument("--output")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="loss, weight-change and compression curves of a run")
    r.add_argument("--run-dir", required=True)
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, exc
    except (OSError, ParseError) as exc:
        code, msg = EXIT_IO, exc
    except NumericError as exc:
        code, msg = EXIT_NUMERIC, exc
    except DenoiseError as exc:
        code, msg = EXIT_INPUT, exc
    else:
        return 0
    print(f"error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
