"""Command-line driver wiring the pipeline stages end to end.

Subcommands: retrieve, decode, match, synth-eval, loss-check, export.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.

Per-image feature files live in a directory as "<image_id>.<source>.feat",
each holding two records named "keypoints" (K x 3: x, y, score) and
"descriptors" (K x D) in the binary tensor format.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .adalam import AdalamConfig, adalam_filter
from .ensemble import SourceTag, merge_keypoints, merge_matches
from .feature_head import Keypoint, decode_heatmap, extract_keypoints, sample_descriptors
from .losses import batch_distance_matrix, hardneg_constant_loss, hardnet_loss, hardnet_loss_grad
from .matching import mutual_nn_match
from .retrieval import load_global_descriptors, pairwise_distances, shortlist_pairs
from .synth import evaluate_scene, make_scene

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_config_file(path) -> dict[str, str]:
    """Flat "key = value" text; blank lines and #-comments ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_ADALAM_FIELDS = {f.name: f.type for f in dataclasses.fields(AdalamConfig)}


def adalam_config_from(config: dict[str, str], overrides: dict) -> AdalamConfig:
    kwargs = {}
    for key, value in config.items():
        if key in _ADALAM_FIELDS:
            field_type = {"float": float, "int": int, "str": str}[_ADALAM_FIELDS[key]]
            kwargs[key] = field_type(value)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return AdalamConfig(**kwargs)


def print_adalam_config(cfg: AdalamConfig, file=None) -> None:
    for f in dataclasses.fields(AdalamConfig):
        print(f"{f.name} = {getattr(cfg, f.name)}", file=file or sys.stdout)


def _load_features(path):
    tensors, names = io.read_tensors(path)
    table = dict(zip(names, tensors))
    if "keypoints" not in table or "descriptors" not in table:
        raise io.FormatError(f"{path}: missing keypoints/descriptors records")
    kp = table["keypoints"]
    if kp.ndim != 2 or kp.shape[1] < 2:
        raise io.FormatError(f"{path}: keypoints must be (K, >=2)")
    kps = [Keypoint(x=float(r[0]), y=float(r[1]),
                    score=float(r[2]) if kp.shape[1] > 2 else 0.0) for r in kp]
    return kps, np.asarray(table["descriptors"], dtype=np.float64)


def cmd_retrieve(args, config) -> int:
    descriptors = load_global_descriptors(args.descriptors)
    matrix = pairwise_distances(descriptors, metric=args.metric)
    shortlist = shortlist_pairs(matrix, [d.image_id for d in descriptors],
                                n=args.n, threshold=args.threshold)
    text = shortlist.to_text()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_decode(args, config) -> int:
    tensors, names = io.read_tensors(args.input)
    table = dict(zip(names, tensors))
    if "detection" not in table:
        raise io.FormatError("missing 'detection' record")
    heatmap = decode_heatmap(table["detection"])
    kps = extract_keypoints(heatmap, threshold=args.threshold, k_max=args.k_max,
                            nms_radius=args.nms_radius)
    records = [np.array([[kp.x, kp.y, kp.score] for kp in kps],
                        dtype=np.float32).reshape(-1, 3)]
    names_out = ["keypoints"]
    if "dense_descriptors" in table:
        desc = sample_descriptors(table["dense_descriptors"], kps)
        records.append(desc.astype(np.float32).reshape(-1, table["dense_descriptors"].shape[2]))
        names_out.append("descriptors")
    io.write_tensors(args.output, records, names_out)
    print(f"{len(kps)} keypoints")
    return EXIT_OK


def _read_shortlist(path) -> list[tuple[str, str]]:
    pairs = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) < 2:
            raise ValueError(f"bad shortlist line: {line!r}")
        pairs.append((fields[0], fields[1]))
    return sorted(set(pairs))


def _discover_sources(features_dir, image_id) -> list[tuple[str, Path]]:
    found = sorted(Path(features_dir).glob(f"{image_id}.*.feat"))
    out = []
    for p in found:
        source = p.name[len(image_id) + 1:-len(".feat")]
        out.append((source, p))
    plain = Path(features_dir) / f"{image_id}.feat"
    if plain.exists():
        out.append(("default", plain))
    return out


def _process_pair(pair, features_dir, cfg, seed, dedup_radius, strict):
    id_a, id_b = pair
    src_a = dict(_discover_sources(features_dir, id_a))
    src_b = dict(_discover_sources(features_dir, id_b))
    sources = sorted(set(src_a) & set(src_b))
    if not sources:
        raise FileNotFoundError(f"no common feature files for pair {id_a} {id_b}")
    merged_tables = {}
    per_source = []
    raw_total = filtered_total = 0
    feats = {img: {s: _load_features(paths[s]) for s in sources}
             for img, paths in ((id_a, src_a), (id_b, src_b))}
    for img in (id_a, id_b):
        table = merge_keypoints([(SourceTag(s, priority=i), feats[img][s][0])
                                 for i, s in enumerate(sources)], dedup_radius=dedup_radius)
        merged_tables[img] = table
    for s in sources:
        kps_a, desc_a = feats[id_a][s]
        kps_b, desc_b = feats[id_b][s]
        raw = mutual_nn_match(desc_a, desc_b, pair=(id_a, id_b))
        filtered = adalam_filter(raw, kps_a, kps_b, cfg, rng_seed=seed)
        raw_total += len(raw)
        filtered_total += len(filtered)
        per_source.append((filtered, merged_tables[id_a].remap[s], merged_tables[id_b].remap[s]))
    merged = merge_matches(per_source, strict_one_to_one=strict)
    counts = {img: len(merged_tables[img].keypoints) for img in (id_a, id_b)}
    return merged, counts, raw_total, filtered_total


def cmd_match(args, config) -> int:
    cfg = adalam_config_from(config, {
        "seed_radius": args.seed_radius,
        "neighborhood_radius_a": args.neighborhood_radius,
        "neighborhood_radius_b": args.neighborhood_radius,
        "ransac_iters": args.ransac_iters,
        "inlier_tol": args.inlier_tol,
        "alpha": args.alpha,
        "min_inliers": args.min_inliers,
    })
    if args.print_config:
        print_adalam_config(cfg)
        return EXIT_OK
    pairs = _read_shortlist(args.shortlist)
    if not pairs:
        io.write_match_archive(args.output, [], {})
        return EXIT_OK

    results: dict[tuple[str, str], tuple] = {}
    failures: dict[tuple[str, str], Exception] = {}

    def run(pair):
        try:
            results[pair] = _process_pair(pair, args.features, cfg, args.seed,
                                          args.dedup_radius, args.strict_one_to_one)
        except (OSError, ValueError, io.FormatError) as e:
            failures[pair] = e

    if args.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(run, pairs))
    else:
        for pair in pairs:
            run(pair)

    archive_pairs = []
    keypoint_counts: dict[str, int] = {}
    for pair in pairs:  # canonical order, independent of worker schedule
        if pair not in results:
            continue
        merged, counts, raw_total, filtered_total = results[pair]
        keypoint_counts.update(counts)
        archive_pairs.append(io.ArchivePair(pair[0], pair[1], merged.index_array(),
                                            merged.confidence_array()))
        print(f"{pair[0]} {pair[1]} {raw_total} {filtered_total} {len(merged)}")
    for pair, err in sorted(failures.items(), key=str):
        print(f"warning: skipped {pair}: {err}", file=sys.stderr)
    io.write_match_archive(args.output, archive_pairs, keypoint_counts)
    if args.export:
        io.export_pair_matches_text(
            [(p.id_a, p.id_b, p.indices) for p in archive_pairs], args.export)
    if pairs and not results:
        print("error: all pairs skipped", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_synth_eval(args, config) -> int:
    if not 0.0 <= args.outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must be in [0, 1)")
    cfg = adalam_config_from(
        config, {}) if config else AdalamConfig.for_image_shape(args.image_size, args.image_size)
    reports = []
    start = time.perf_counter()
    for i in range(args.num_scenes):
        scene = make_scene(num_keypoints=args.keypoints, noise_sigma=args.noise,
                           outlier_fraction=args.outlier_fraction,
                           rng_seed=args.seed + i, image_size=args.image_size)
        reports.append(evaluate_scene(scene, cfg, rng_seed=args.seed + i))
    summary = {
        "scenes": reports,
        "mean_precision": float(np.mean([r["precision"] for r in reports])),
        "mean_recall": float(np.mean([r["recall"] for r in reports])),
        "total_seconds": time.perf_counter() - start,
        "config": {f.name: getattr(cfg, f.name) for f in dataclasses.fields(AdalamConfig)},
    }
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_loss_check(args, config) -> int:
    tensors, names = io.read_tensors(args.input)
    table = dict(zip(names, tensors))
    if "anchors" not in table or "positives" not in table:
        raise io.FormatError("file must hold 'anchors' and 'positives' records")
    anchors = np.asarray(table["anchors"], dtype=np.float64)
    positives = np.asarray(table["positives"], dtype=np.float64)
    d = batch_distance_matrix(anchors, positives)
    loss, _ = hardnet_loss(d)
    print(f"hardnet_loss {loss:.9f}")
    if "d_pos" in table and "d_neg" in table:
        print(f"hardneg_constant_loss {hardneg_constant_loss(table['d_pos'], table['d_neg']):.9f}")
    ga, gp = hardnet_loss_grad(anchors, positives)
    print(f"grad_fd_max_rel_dev {_grad_fd_deviation(anchors, positives, ga, gp):.3e}")
    return EXIT_OK


def _grad_fd_deviation(anchors, positives, ga, gp, h=1e-5) -> float:
    worst = 0.0
    scale = max(1.0, float(np.abs(ga).max()), float(np.abs(gp).max()))

    def loss_at(a, p):
        return hardnet_loss(batch_distance_matrix(a, p))[0]

    rng = np.random.default_rng(0)
    flat = [(0, i, j) for i in range(anchors.shape[0]) for j in range(anchors.shape[1])]
    flat += [(1, i, j) for i in range(anchors.shape[0]) for j in range(anchors.shape[1])]
    for which, i, j in flat:
        arr = anchors if which == 0 else positives
        grad = ga if which == 0 else gp
        orig = arr[i, j]
        arr[i, j] = orig + h
        up = loss_at(anchors, positives)
        arr[i, j] = orig - h
        down = loss_at(anchors, positives)
        arr[i, j] = orig
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - grad[i, j]) / scale)
    return worst


def cmd_export(args, config) -> int:
    pairs, _ = io.read_match_archive(args.input)
    io.export_pair_matches_text([(p.id_a, p.id_b, p.indices) for p in pairs], args.output)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="matchkit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", help="flat 'key = value' config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrieve", help="shortlist image pairs from global descriptors")
    p.add_argument("descriptors")
    p.add_argument("-n", type=int, default=45)
    p.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("decode", help="decode detection/descriptor tensors to features")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--threshold", type=float, default=0.001023349)
    p.add_argument("--k-max", type=int, default=8081)
    p.add_argument("--nms-radius", type=int, default=4)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("match", help="match, filter and merge shortlisted pairs")
    p.add_argument("features", help="directory of <id>.<source>.feat files")
    p.add_argument("shortlist")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--export", help="also write pairwise match text")
    p.add_argument("--dedup-radius", type=float, default=1.0)
    p.add_argument("--strict-one-to-one", action="store_true")
    p.add_argument("--print-config", action="store_true")
    for flag in ("seed-radius", "neighborhood-radius", "inlier-tol", "alpha"):
        p.add_argument(f"--{flag}", type=float, default=None)
    p.add_argument("--ransac-iters", type=int, default=None)
    p.add_argument("--min-inliers", type=int, default=None)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("synth-eval", help="score the filter on synthetic scenes")
    p.add_argument("--keypoints", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--outlier-fraction", type=float, default=0.5)
    p.add_argument("--num-scenes", type=int, default=20)
    p.add_argument("--image-size", type=float, default=1024.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synth_eval)

    p = sub.add_parser("loss-check", help="evaluate losses and gradient agreement")
    p.add_argument("input")
    p.set_defaults(func=cmd_loss_check)

    p = sub.add_parser("export", help="archive to pairwise match text")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = read_config_file(args.config) if args.config else {}
        return args.func(args, config)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, io.FormatError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # invariant breakage, not user error
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
