"""Command-line entry point wiring the library into batch workflows:
embed -> dist -> eval, mask ablation, mining, EMA, camera analysis, t-SNE.

Exit codes: 0 success, 1 usage error, 2 data/file error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import camera as camera_mod
from . import ensemble, featurize, gallery, imaging, metrics, mining, tsne
from . import distance as distance_mod
from .errors import ReidError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; remap to the documented exit code 1
    def error(self, message):
        raise _UsageError(message)


def _emit(text: str, out_path):
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


def _json_report(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _load_images(index: gallery.GalleryIndex, root: str) -> list:
    images = []
    for rec in index.records:
        path = os.path.join(root, rec.path)
        with open(path, "rb") as fh:
            images.append(imaging.decode_image(fh.read()))
    return images


def _distance_for(args, emb_q, emb_g) -> distance_mod.DistanceMatrix:
    cfg = distance_mod.DistanceConfig(
        metric=distance_mod.Metric(args.metric),
        lam=args.lam,
        local_mode=distance_mod.LocalMode(args.local_mode),
    )
    d = distance_mod.distance_matrix(emb_q.global_, emb_g.global_, cfg.metric)
    if cfg.local_mode is not distance_mod.LocalMode.NONE:
        dl = distance_mod.local_distance_matrix(emb_q, emb_g, cfg.local_mode)
        d = distance_mod.combine_distances(d, dl, cfg.lam)
    return d


def _add_distance_flags(p):
    p.add_argument("--metric", choices=["euclidean", "cosine"], default="euclidean")
    p.add_argument("--local-mode", choices=["dp_aligned", "one_to_one", "none"], default="none")
    p.add_argument("--lam", type=float, default=1.0, help="global/local mixing weight")


def _cmd_embed(args):
    index = gallery.load_index(args.index)
    cfg = featurize.FeaturizerConfig(stripes=args.stripes, bins=args.bins)
    images = _load_images(index, args.images_root)
    emb = featurize.featurize_images(images, cfg)
    gallery.save_embeddings(emb, args.out)


def _cmd_mask(args):
    os.makedirs(args.out, exist_ok=True)
    names = sorted(n for n in os.listdir(args.images) if n.endswith(".ppm"))
    if not names:
        raise ReidError(f"no .ppm images in {args.images}")
    for name in names:
        with open(os.path.join(args.images, name), "rb") as fh:
            img = imaging.decode_image(fh.read())
        mask_path = os.path.join(args.masks, os.path.splitext(name)[0] + ".pgm")
        with open(mask_path, "rb") as fh:
            m = imaging.mask_from_image(imaging.decode_image(fh.read()))
        if (m.height, m.width) != (img.height, img.width):
            m = imaging.resize_mask_nearest(m, img.width, img.height)
        masked = imaging.apply_mask(img, m)
        with open(os.path.join(args.out, name), "wb") as fh:
            fh.write(imaging.encode_image(masked))


def _cmd_dist(args):
    emb_q = gallery.load_embeddings(args.emb_q)
    emb_g = gallery.load_embeddings(args.emb_g)
    d = _distance_for(args, emb_q, emb_g)
    with open(args.out, "wb") as fh:
        fh.write(distance_mod.encode_distance_matrix(d))


def _cmd_eval(args):
    queries = gallery.load_index(args.queries)
    gal = gallery.load_index(args.gallery)
    emb_q = gallery.load_embeddings(args.emb_q)
    emb_g = gallery.load_embeddings(args.emb_g)
    d = _distance_for(args, emb_q, emb_g)
    protocol = metrics.EvalProtocol(
        cross_camera_filter=not args.no_cross_camera_filter,
        max_rank=args.max_rank,
    )
    report = metrics.evaluate(queries, gal, d, protocol)
    doc = report.to_dict()
    doc["config"] = {
        "metric": args.metric,
        "local_mode": args.local_mode,
        "lambda": args.lam,
    }
    _emit(_json_report(doc), args.out)


def _cmd_mine(args):
    index = gallery.load_index(args.index)
    emb = gallery.load_embeddings(args.emb)
    cfg = mining.MiningConfig(p=args.p, k=args.k, margin=args.margin, seed=args.seed)
    batch = mining.pk_sample(index, cfg)
    feats = emb.global_[batch]
    labels = index.person_ids()[batch]
    d = distance_mod.distance_matrix(feats, feats, distance_mod.Metric.EUCLIDEAN)
    triplets = mining.batch_hard(d.values, labels)
    loss, grad = mining.triplet_loss_grad(feats, triplets, cfg.margin)
    doc = {
        "config": {"p": cfg.p, "k": cfg.k, "margin": cfg.margin, "seed": cfg.seed},
        "batch_rows": [int(i) for i in batch],
        "triplets": [
            {"anchor": t.anchor, "positive": t.positive, "negative": t.negative}
            for t in triplets
        ],
        "loss": float(loss),
        "grad_norm": float(np.linalg.norm(grad)),
    }
    _emit(_json_report(doc), args.out)


def _cmd_ema(args):
    if not args.init and not args.state:
        raise ReidError("--state is required unless --init is given")
    student = ensemble.load_named_tensors(args.student)
    if args.init:
        state = ensemble.EmaState(student, alpha=args.alpha, step=0, warmup=args.warmup)
    else:
        state = ensemble.load_ema_state(args.state)
        state = ensemble.ema_update(state, student)
    ensemble.save_ema_state(state, args.out)


def _cmd_camera(args):
    index = gallery.load_index(args.index)
    emb = gallery.load_embeddings(args.emb)
    camids = index.camera_ids()
    pids = index.person_ids()
    offsets = camera_mod.camera_offsets(emb.global_, camids, pids)
    if (args.residual or args.normalize) and not args.out_emb:
        raise ReidError("--out-emb is required with --normalize or --residual")
    if args.residual:
        params = camera_mod.load_residual_params(args.residual)
        transformed = camera_mod.apply_camera_residual(emb.global_, params, camids)
        gallery.save_embeddings(gallery.EmbeddingSet(transformed.astype(np.float32)), args.out_emb)
    elif args.normalize:
        normalized = camera_mod.camera_normalize(emb.global_, offsets, camids)
        gallery.save_embeddings(gallery.EmbeddingSet(normalized.astype(np.float32)), args.out_emb)
    doc = offsets.to_dict()
    doc["score_definition"] = (
        "mean over (camera, person) cells of "
        "||cell displacement - camera offset|| / (||camera offset|| + 1e-8); "
        "0 means perfectly identity-agnostic camera offsets"
    )
    _emit(_json_report(doc), args.out)


def _cmd_tsne(args):
    index = gallery.load_index(args.index)
    emb = gallery.load_embeddings(args.emb)
    if args.role == "all":
        keep = np.arange(len(index))
    else:
        role = gallery.Role(args.role)
        keep = np.array(
            [i for i, r in enumerate(index.records) if r.role == role], dtype=np.int64
        )
    if keep.size == 0:
        raise ReidError(f"no records with role {args.role!r}")
    params = tsne.TsneParams(
        perplexity=args.perplexity,
        iterations=args.iterations,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )
    coords, trace = tsne.run_tsne(emb.global_[keep], params)
    lines = ["x\ty\tperson_id\tcamera_id"]
    for row, i in zip(coords, keep):
        rec = index.records[i]
        lines.append(f"{row[0]!r}\t{row[1]!r}\t{rec.person_id}\t{rec.camera_id}")
    _emit("\n".join(lines) + "\n", args.out)
    if args.trace:
        _emit("\n".join(repr(v) for v in trace) + "\n", args.trace)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reidkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="featurize images into an embedding file")
    p.add_argument("--index", required=True)
    p.add_argument("--images-root", default=".")
    p.add_argument("--stripes", type=int, default=8)
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("mask", help="zero out image backgrounds using binary masks")
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("dist", help="compute a query x gallery distance matrix")
    p.add_argument("--emb-q", required=True)
    p.add_argument("--emb-g", required=True)
    _add_distance_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dist)

    p = sub.add_parser("eval", help="run the retrieval protocol, emit a JSON report")
    p.add_argument("--queries", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--emb-q", required=True)
    p.add_argument("--emb-g", required=True)
    _add_distance_flags(p)
    p.add_argument("--no-cross-camera-filter", action="store_true")
    p.add_argument("--max-rank", type=int, default=20)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mine", help="PK-sample a batch and mine hard triplets")
    p.add_argument("--index", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--margin", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("ema", help="initialize or advance a mean-teacher EMA state")
    p.add_argument("--state", help="existing state directory (omit with --init)")
    p.add_argument("--student", required=True, help="student tensor directory")
    p.add_argument("--out", required=True)
    p.add_argument("--init", action="store_true")
    p.add_argument("--alpha", type=float, default=0.999)
    p.add_argument("--warmup", action="store_true")
    p.set_defaults(func=_cmd_ema)

    p = sub.add_parser("camera", help="per-camera offset analysis and normalization")
    p.add_argument("--index", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--residual", help="camera residual parameter file (JSON)")
    p.add_argument("--out-emb", help="output embedding file for normalize/residual")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_camera)

    p = sub.add_parser("tsne", help="embed features into 2-D for plotting")
    p.add_argument("--index", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--role", choices=["query", "gallery", "train", "all"], default="gallery")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None, help="optional KL trace output path")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_tsne)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        args.func(args)
    except (ReidError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
