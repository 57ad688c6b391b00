"""Command-line entry point: ``audioface <subcommand> ...``.

Relative output paths resolve under ``$AUDIOFACE_OUT`` (default: current
directory).  ``$AUDIOFACE_THREADS`` caps torch's intra-op thread count.
Exit codes: 0 ok, 1 usage, 2 missing dependency, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("audioface")

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_LEVELS = "-60,-50,-40,-30,-20,-10"
ENV_OUT = "AUDIOFACE_OUT"
ENV_THREADS = "AUDIOFACE_THREADS"


class UsageError(Exception):
    pass


class MissingDependency(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- helpers

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def out_root() -> Path:
    return Path(os.environ.get(ENV_OUT, "."))


def resolve_out(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else out_root() / p


def require(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingDependency(f"missing {what}: {p}")
    return p


def prepare_out_dir(path, overwrite) -> Path:
    out = resolve_out(path)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise UsageError(f"output directory {out} is not empty; pass --overwrite to replace its contents")
        log.warning("overwriting contents of %s", out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def given(**values):
    """Only the options actually set on the command line, so they override a config file."""
    return {k: v for k, v in values.items() if v is not None}


def load_config_file(path):
    if path is None:
        return {}
    p = require(path, "config file")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc


def write_manifest(out: Path, command: str, config: dict, seeds: dict, inputs: dict, outputs: list):
    """Run manifest: what was run, with which settings, on which input and output bytes."""
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "time_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "python": platform.python_version(),
        "config": config,
        "seeds": seeds,
        "inputs": {k: {"path": str(v), "sha256": file_sha256(v)} for k, v in inputs.items() if v},
        "outputs": {str(Path(o).name): file_sha256(o) for o in outputs if Path(o).is_file()},
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str))
    return manifest


def parse_levels(text):
    levels = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "clean":
            levels.append("clean")
            continue
        try:
            v = float(tok)
        except ValueError as exc:
            raise UsageError(f"bad noise level {tok!r}") from exc
        if v >= 0:
            raise UsageError(f"noise levels must be negative dB, got {v}")
        levels.append(int(v) if v.is_integer() else v)
    return levels


def _load_corpus(path):
    from .synthcorpus import load_corpus

    require(Path(path) / "manifest.json", "corpus manifest")
    return load_corpus(path)


def _load_vae(path):
    from .fhvae import load_checkpoint

    return load_checkpoint(require(path, "VAE checkpoint"))[0]


def _load_gan(path):
    from .facegen import load_gan

    return load_gan(require(path, "GAN checkpoint"))


# ---------------------------------------------------------------- commands

def cmd_synth_corpus(args):
    from .synthcorpus import CorpusConfig, build_corpus, directory_digest

    cfg = load_config_file(args.config)
    for key in ("seed", "num_sequences"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    config = CorpusConfig.from_dict(cfg)
    config.validate()
    out = prepare_out_dir(args.out, args.overwrite)
    build_corpus(config, out)
    digest = directory_digest(out)
    write_manifest(out, "synth-corpus", config.to_dict(), {"corpus": config.seed}, {},
                   [out / "manifest.json"])
    print(f"corpus digest {digest}")
    return EXIT_OK


def cmd_train_vae(args):
    import dataclasses

    import torch

    from . import fhvae, trainer

    corpus = _load_corpus(args.corpus)
    out = prepare_out_dir(args.out, args.overwrite)
    file_cfg = load_config_file(args.config)
    tc = trainer.TrainConfig(**{**file_cfg.get("train", {}), "stage": args.stage, **given(
        epochs=args.epochs, seed=args.seed, batch_size=args.batch_size, learning_rate=args.lr,
        noise_augment_db=args.augment_noise_db)})
    hyper = fhvae.Hyperparams(**{**file_cfg.get("hyper", {}), **({"beta": 0.0} if args.no_margin else {})})
    data = trainer.segment_data(corpus, tc.split)
    init = _load_vae(args.init) if args.init else None
    mc = fhvae.ModelConfig(**{**file_cfg.get("model", {}), **given(hidden=args.hidden)})
    if args.stage == "content":
        model, history = trainer.pretrain_content(data, tc, mc, hyper, model=init, corpus=corpus)
    else:
        if args.init is None:
            log.warning("training the full objective without a content-pretrained --init checkpoint")
        model, history = trainer.train_full(data, tc, init, mc, hyper, corpus=corpus)
    if not all(torch.isfinite(p).all() for p in model.parameters()):
        raise trainer.NumericalError("trained parameters are not finite")
    ckpt = out / "vae.npz"
    meta = {"train": tc.to_dict(), "hyper": dataclasses.asdict(hyper),
            "sequence_ids": data.sequence_ids}
    fhvae.save_checkpoint(ckpt, model, meta)
    trainer.write_history(history, out / "history.csv")
    write_manifest(out, f"train-vae --stage {args.stage}",
                   {"train": tc.to_dict(), "hyper": dataclasses.asdict(hyper),
                    "model": dataclasses.asdict(model.config)},
                   {"train": tc.seed}, {"init": args.init, "corpus_manifest": Path(args.corpus) / "manifest.json"},
                   [ckpt, out / "history.csv"])
    print(f"wrote {ckpt}")
    return EXIT_OK


def cmd_train_gan(args):
    from . import facegen

    corpus = _load_corpus(args.corpus)
    vae = None
    if args.mode == "disentangled":
        if args.vae is None:
            raise MissingDependency("missing VAE checkpoint: --vae is required for disentangled mode")
        vae = _load_vae(args.vae)
    out = prepare_out_dir(args.out, args.overwrite)
    cfg = facegen.GanConfig.from_dict({
        **load_config_file(args.config), "conditioning_mode": args.mode,
        **given(steps=args.steps, warmup_steps=args.warmup_steps, learning_rate=args.lr,
                warmup_learning_rate=args.warmup_lr, seed=args.seed, base_channels=args.base_channels,
                augment_noise_db=args.augment_noise_db, joint_finetune=args.joint_finetune or None)})
    counters = facegen.Counters()
    model, history = facegen.train_gan(corpus, vae, cfg, counters=counters)
    ckpt = out / "gan.npz"
    meta = {"vae_sha256": file_sha256(args.vae) if args.vae else None,
            "critic_updates": counters.critic_updates, "generator_updates": counters.generator_updates}
    facegen.save_gan(ckpt, model, meta)
    facegen.write_history(history, out / "history.csv")
    write_manifest(out, f"train-gan --mode {args.mode}", cfg.to_dict(), {"gan": cfg.seed},
                   {"vae": args.vae, "corpus_manifest": Path(args.corpus) / "manifest.json"},
                   [ckpt, out / "history.csv"])
    print(f"wrote {ckpt}")
    return EXIT_OK


def cmd_eval_disentangle(args):
    from . import plotting, probes

    corpus = _load_corpus(args.corpus)
    vae = _load_vae(args.vae)
    out = prepare_out_dir(args.out, args.overwrite)
    table = probes.disentanglement_report(vae, corpus, args.split, args.seed)
    (out / "probes.csv").write_text(probes.report_csv(table))
    plotting.plot_probe_table(table, out / "probes.png")
    write_manifest(out, "eval-disentangle", {"split": args.split, "probe": probes.PROBE_DESCRIPTION},
                   {"probe": args.seed}, {"vae": args.vae}, [out / "probes.csv", out / "probes.png"])
    sys.stdout.write(probes.report_text(table))
    return EXIT_OK


def cmd_eval_noise(args):
    import csv

    from . import facegen, plotting

    levels = ["clean"] + [v for v in parse_levels(args.levels) if v != "clean"]
    corpus = _load_corpus(args.corpus)
    runs = []
    for spec in args.gan:
        label, _, path = spec.rpartition("=")
        model, meta = _load_gan(path)
        label = label or model.config.conditioning_mode
        vae = None
        if model.config.conditioning_mode == "disentangled":
            if args.vae is None:
                raise MissingDependency(f"missing VAE checkpoint: --vae is required to evaluate {path}")
            vae = _load_vae(args.vae)
        runs.append((label, model, vae, path))
    out = prepare_out_dir(args.out, args.overwrite)
    curves = {}
    rows = []
    for label, model, vae, _ in runs:
        res = facegen.evaluate_noise(model, corpus, levels, vae, args.split, args.seed)
        for r in res:
            if not np.isfinite(r["lmd"]):
                from .trainer import NumericalError
                raise NumericalError(f"non-finite LMD for {label} at {r['level_db']}")
        curves[label] = res
        rows.extend({"mode": label, **r} for r in res)
    with open(out / "noise.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["mode", "level_db", "lmd", "psnr", "ssim"])
        w.writeheader()
        w.writerows(rows)
    plotting.plot_noise_curves(curves, out / "lmd_vs_noise.png", "lmd")
    inputs = {f"gan_{label}": path for label, _, _, path in runs}
    inputs["vae"] = args.vae
    write_manifest(out, "eval-noise", {"levels": levels, "split": args.split}, {"noise": args.seed},
                   inputs, [out / "noise.csv", out / "lmd_vs_noise.png"])
    for r in rows:
        print(f"{r['mode']:<14}{str(r['level_db']):>7}  LMD {r['lmd']:.3f}  PSNR {r['psnr']:.2f}  SSIM {r['ssim']:.3f}")
    return EXIT_OK


def cmd_generate(args):
    from . import facegen, plotting

    corpus = _load_corpus(args.corpus)
    model, _ = _load_gan(args.gan)
    vae = _load_vae(args.vae) if args.vae else None
    if model.config.conditioning_mode == "disentangled" and vae is None:
        raise MissingDependency("missing VAE checkpoint: --vae is required for a disentangled GAN")
    ids = [f.sequence_id for f in corpus.factors]
    if args.sequence not in ids:
        raise UsageError(f"sequence {args.sequence} not in corpus (ids {ids[0]}..{ids[-1]})")
    index = ids.index(args.sequence)
    level = "clean" if args.noise_db is None else parse_levels(str(args.noise_db))[0]
    out = prepare_out_dir(args.out, args.overwrite)
    frames = facegen.generate_for_sequence(model, corpus, index, vae, level, args.seed)
    if not np.isfinite(frames).all():
        from .trainer import NumericalError
        raise NumericalError("generated frames are not finite")
    raw = np.ascontiguousarray(frames, dtype="<f4")
    (out / "frames.f32").write_bytes(raw.tobytes())
    (out / "video.json").write_text(json.dumps({
        "sequence_id": args.sequence, "corpus_index": index, "level_db": level,
        "shape": list(raw.shape), "dtype": "<f4", "frames": "frames.f32"}, indent=1))
    outputs = [out / "frames.f32", out / "video.json"]
    if args.png:
        plotting.save_frame_strip(frames, out / "frames.png")
        outputs.append(out / "frames.png")
    write_manifest(out, "generate", {"sequence": args.sequence, "level_db": level}, {"noise": args.seed},
                   {"gan": args.gan, "vae": args.vae}, outputs)
    print(f"wrote {len(frames)} frames to {out}")
    return EXIT_OK


def _read_video(vdir: Path):
    info = json.loads(require(vdir / "video.json", "video manifest").read_text())
    raw = require(vdir / info["frames"], "video frames").read_bytes()
    return info, np.frombuffer(raw, dtype=info["dtype"]).reshape(info["shape"])


def cmd_metrics(args):
    """One CSV row per generated video plus a row of means."""
    import csv
    import io

    from .metrics import video_report

    corpus = _load_corpus(args.corpus)
    rows, inputs = [], {}
    for k, v in enumerate(args.video):
        vdir = Path(v)
        info, fake = _read_video(vdir)
        index = info["corpus_index"]
        ident = corpus.identities[corpus.factors[index].identity]
        rows.append({"video": str(vdir), "sequence_id": info["sequence_id"], "level_db": info["level_db"],
                     **video_report(corpus.frames[index], fake, ident)})
        inputs[f"video_{k}"] = vdir / info["frames"]
    keys = ("lmd", "psnr", "ssim")
    rows.append({"video": "mean", "sequence_id": "", "level_db": "",
                 **{k: float(np.mean([r[k] for r in rows])) for k in keys}})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["video", "sequence_id", "level_db", *keys])
    w.writeheader()
    w.writerows(rows)
    if args.out:
        out = prepare_out_dir(args.out, args.overwrite)
        (out / "metrics.csv").write_text(buf.getvalue())
        write_manifest(out, "metrics", {"videos": args.video}, {}, inputs, [out / "metrics.csv"])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="audioface", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_default):
        sp.add_argument("--out", default=out_default, help="output directory (relative to $%s)" % ENV_OUT)
        sp.add_argument("--overwrite", action="store_true", help="allow writing into a non-empty output dir")
        sp.add_argument("--config", help="JSON config file")

    s = sub.add_parser("synth-corpus", help="generate the synthetic audio-visual corpus")
    common(s, "corpus")
    s.add_argument("--seed", type=int)
    s.add_argument("--num-sequences", type=int)
    s.set_defaults(func=cmd_synth_corpus)

    s = sub.add_parser("train-vae", help="train the factorized VAE")
    common(s, "vae")
    s.add_argument("--corpus", required=True)
    s.add_argument("--stage", choices=("content", "full"), required=True)
    s.add_argument("--init", help="checkpoint to start from (content-stage output for --stage full)")
    s.add_argument("--epochs", type=int, help="default 20")
    s.add_argument("--batch-size", type=int, help="default 64")
    s.add_argument("--lr", type=float, help="default 1e-3")
    s.add_argument("--hidden", type=int, help="LSTM width, default 256")
    s.add_argument("--seed", type=int, help="default 0")
    s.add_argument("--augment-noise-db", type=float)
    s.add_argument("--no-margin", action="store_true", help="ablation: drop the margin ranking terms")
    s.set_defaults(func=cmd_train_vae)

    s = sub.add_parser("train-gan", help="train the talking-head generator")
    common(s, "gan")
    s.add_argument("--corpus", required=True)
    s.add_argument("--mode", choices=("disentangled", "direct"), required=True)
    s.add_argument("--vae")
    s.add_argument("--augment-noise-db", type=float)
    s.add_argument("--steps", type=int, help="adversarial generator updates, default 1000")
    s.add_argument("--warmup-steps", type=int, help="reconstruction-only updates before the adversarial phase")
    s.add_argument("--lr", type=float, help="default 1e-4")
    s.add_argument("--warmup-lr", type=float, help="learning rate during warm-up (default: --lr)")
    s.add_argument("--base-channels", type=int, help="default 16")
    s.add_argument("--seed", type=int, help="default 0")
    s.add_argument("--joint-finetune", action="store_true")
    s.set_defaults(func=cmd_train_gan)

    s = sub.add_parser("eval-disentangle", help="probe-classifier report over frozen latents")
    common(s, "eval_disentangle")
    s.add_argument("--corpus", required=True)
    s.add_argument("--vae", required=True)
    s.add_argument("--split", default="all")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval_disentangle)

    s = sub.add_parser("eval-noise", help="LMD/PSNR/SSIM per noise level for one or more GANs")
    common(s, "eval_noise")
    s.add_argument("--corpus", required=True)
    s.add_argument("--gan", action="append", required=True, help="[label=]checkpoint, repeatable")
    s.add_argument("--vae")
    s.add_argument("--levels", default=DEFAULT_LEVELS)
    s.add_argument("--split", default="test")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval_noise)

    s = sub.add_parser("generate", help="generate one video from a corpus sequence's audio")
    common(s, "video")
    s.add_argument("--corpus", required=True)
    s.add_argument("--gan", required=True)
    s.add_argument("--vae")
    s.add_argument("--sequence", type=int, required=True)
    s.add_argument("--noise-db", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--png", action="store_true", help="also write a PNG strip of the first frames")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("metrics", help="LMD/PSNR/SSIM of a generated video against the corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--video", required=True, nargs="+", help="one or more directories written by `generate`")
    s.add_argument("--out")
    s.add_argument("--overwrite", action="store_true")
    s.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    from .trainer import NumericalError

    argv = list(sys.argv[1:] if argv is None else argv)
    # "--levels -60,-30" would otherwise read the value as an option
    for i, tok in enumerate(argv[:-1]):
        if tok == "--levels":
            argv[i:i + 2] = [f"--levels={argv[i + 1]}"]
            break
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get(ENV_THREADS)
    if threads:
        import torch

        try:
            torch.set_num_threads(int(threads))
        except ValueError:
            print(f"error: ${ENV_THREADS} must be an integer, got {threads!r}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MissingDependency, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
