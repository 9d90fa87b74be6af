"""Command-line entry point: ``pemiu <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration or input, 3 insufficient
data, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attack import (DEFAULT_FMR_TARGETS, AttackReport, brute_force_attack,
                     identity_mappings, known_seed_attack, parse_channel,
                     record_mappings, rsr_sweep)
from .core import BlockPartition, cosine_similarity
from .data import (SynthSpec, all_pairs, generate, load_pairing, read_dataset,
                   write_dataset)
from .errors import (EmptyScoreList, MissingOriginal, PemiuError, SingleClass,
                     TooFewExamples)
from .metrics import (ScoreSet, det_to_csv, eer, non_mated_scores, score_protocol,
                      threshold_at_fmr)
from .pemiu import (PRNG_ALGORITHM, BlockPermutation, protect_rows,
                    sample_uniform, sample_with_displacement, search_space_size)
from .probe import ProbeHyper, cross_validate

EXIT_OK, EXIT_INVALID, EXIT_DATA, EXIT_IO = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed not given, using {args.seed}", file=sys.stderr)
    return args.seed


def _digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _meta(args, config: dict) -> dict:
    return {"toolkit": "pemiu_toolkit", "version": __version__, "seed": args.seed,
            "prng": PRNG_ALGORITHM, "config": config, "config_digest": _digest(config)}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, body: str, meta: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(body)
    _write_json(path.with_name(path.name + ".meta.json"), meta)


def _out(args) -> Path:
    return Path(args.out or ".")


# --- subcommands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    _resolve_seed(args)
    spec = SynthSpec(S=args.dim, n_identities=args.identities, samples_per_identity=args.samples,
                     intra_sigma=args.sigma, attribute_offset=args.offset,
                     unit_norm=not args.no_unit_norm, seed=args.seed)
    ds = generate(spec)
    ds.manifest["cli"] = _meta(args, {"command": "generate", **spec.__dict__})
    ext = ".csv" if args.format == "csv" else ".pseb"
    path = write_dataset(ds, _out(args) / (args.name + ext))
    print(f"wrote {len(ds)} records to {path} (seed {args.seed})")
    return EXIT_OK


def cmd_protect(args) -> int:
    _resolve_seed(args)
    ds = read_dataset(args.data)
    part = BlockPartition(ds.S, args.k)
    records = []
    if args.mode == "fixed":
        perm = (sample_uniform(part, args.seed) if args.p is None
                else sample_with_displacement(part, args.p, args.seed))
        maps = perm.as_array()
        seeds = [args.seed] * len(ds)
    elif args.mode == "per-identity":
        if args.p is not None:
            raise CliError("--p is only valid with --mode fixed")
        maps = identity_mappings(ds, part, args.seed)
        seeds = [args.seed + int(i) for i in ds.identities]
    else:
        if args.p is not None:
            raise CliError("--p is only valid with --mode fixed")
        maps = record_mappings(ds, part, args.seed)
        seeds = [args.seed + k for k in range(len(ds))]
    maps = np.broadcast_to(maps, (len(ds), part.N))
    xp = protect_rows(ds.embeddings, part, maps)
    config = {"command": "protect", "data": str(args.data), "K": args.k, "mode": args.mode, "P": args.p}
    meta = _meta(args, config)
    protection = {"K": args.k, "mode": args.mode, "P": args.p, "seed": args.seed}
    out = ds.with_embeddings(xp, protection=protection, cli=meta)
    path = write_dataset(out, _out(args) / (args.name + ".pseb"))
    for k, rid in enumerate(ds.ids):
        perm = BlockPermutation(part, tuple(maps[k]))
        records.append({"id": rid, "identity": int(ds.identities[k]), "seed": seeds[k],
                        "displacement": perm.displacement, "permutation": perm.to_dict()})
    log = {"meta": meta, "S": ds.S, "K": args.k, "mode": args.mode, "P": args.p, "records": records}
    _write_json(_out(args) / (args.name + ".permutations.json"), log)
    print(f"protected {len(ds)} records with K={args.k} ({args.mode}) -> {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = read_dataset(args.data)
    pairs = load_pairing(args.pairing, ds) if args.pairing else all_pairs(ds)
    scores = score_protocol(ds, pairs, config_label=str(args.data))
    if scores.mated.size == 0 or scores.non_mated.size == 0:
        raise EmptyScoreList(f"{scores.mated.size} mated and {scores.non_mated.size} non-mated scores")
    config = {"command": "evaluate", "data": str(args.data), "pairing": args.pairing,
              "targets": args.targets}
    meta = _meta(args, config)
    _write_csv(_out(args) / "det.csv", det_to_csv(scores), meta)
    rate, t_eer = eer(scores)
    points = []
    for target in args.targets:
        op = threshold_at_fmr(scores, target)
        d = op.to_dict()
        d.update(fmr_percent=op.fmr * 100, fnmr_percent=op.fnmr * 100, target_fmr_percent=target * 100)
        points.append(d)
    report = {"meta": meta, "eer": rate, "eer_percent": rate * 100, "eer_threshold": t_eer,
              "n_mated": int(scores.mated.size), "n_non_mated": int(scores.non_mated.size),
              "operating_points": points}
    _write_json(_out(args) / "operating_points.json", report)
    print(f"EER {rate * 100:.3f}% over {scores.mated.size} mated / {scores.non_mated.size} non-mated")
    for p in points:
        print(f"  FMR target {p['target_fmr_percent']:g}%: threshold {p['threshold']:.6f} "
              f"FMR {p['fmr_percent']:.3f}% FNMR {p['fnmr_percent']:.3f}%")
    return EXIT_OK


def _dataset_for_sweep(args):
    if args.data:
        return read_dataset(args.data), {"data": str(args.data)}
    spec = SynthSpec(S=args.dim, n_identities=args.identities, samples_per_identity=args.samples,
                     intra_sigma=args.sigma, attribute_offset=args.offset,
                     seed=args.data_seed if args.data_seed is not None else args.seed)
    return generate(spec), {"synthetic": dict(spec.__dict__)}


def cmd_rsr_sweep(args) -> int:
    _resolve_seed(args)
    ds, source = _dataset_for_sweep(args)
    channel = parse_channel(args.channel, args.seed, renormalize=ds.unit_norm)
    grid = rsr_sweep(ds, args.k, mode=args.mode, displacements=args.p, channel=channel,
                     fmr_targets=args.targets, seed=args.seed, calibration=args.calibration,
                     threads=args.threads)
    config = {"command": "rsr-sweep", "source": source, "K": args.k, "mode": args.mode,
              "P": args.p, "channel": args.channel, "targets": args.targets,
              "calibration": args.calibration}
    path = _out(args) / "rsr.csv"
    _write_csv(path, grid.to_csv(), _meta(args, config))
    print(f"wrote {len(grid.rows)} rows to {path}")
    for r in grid.rows:
        p = "uniform" if r.P is None else r.P
        print(f"  K={r.K:<4} P={p:<7} {r.operating_point_label:<10} RSR {r.rsr * 100:6.2f}%")
    return EXIT_OK


def _load_log_entry(path, record_id):
    log = json.loads(Path(path).read_text())
    for rec in log["records"]:
        if rec["id"] == record_id:
            return log, rec
    raise MissingOriginal(f"record {record_id!r} not in permutation log")


def cmd_attack_seed(args) -> int:
    prot = read_dataset(args.protected)
    orig = read_dataset(args.original)
    rid = args.record
    ref_id = args.reference or rid
    if rid not in prot.index:
        raise MissingOriginal(f"record {rid!r} not in protected dataset")
    if ref_id not in orig.index:
        raise MissingOriginal(f"reference record {ref_id!r} not in original dataset")
    vp, ref = prot.get(rid), orig.get(ref_id)
    if args.threshold is not None:
        thr = args.threshold
    else:
        non = ScoreSet(np.empty(0), non_mated_scores(orig.embeddings, orig.identities))
        thr = threshold_at_fmr(non, args.target_fmr).threshold
    channel = parse_channel(args.channel, args.seed or 0, renormalize=orig.unit_norm)
    config = {"command": "attack-seed", "protected": str(args.protected), "original": str(args.original),
              "record": rid, "reference": ref_id, "mode": args.mode, "budget": args.budget,
              "order": args.order, "threshold": args.threshold, "target_fmr": args.target_fmr,
              "channel": args.channel}
    if args.mode == "known-seed":
        if not args.log:
            raise CliError("--log is required for known-seed mode")
        log, entry = _load_log_entry(args.log, rid)
        part = BlockPartition(int(log["S"]), int(log["K"]))
        P = log.get("P") if log.get("mode") == "fixed" else None
        if args.seed is None:
            args.seed = int(entry["seed"])
        rec = known_seed_attack(vp, int(entry["seed"]), channel, part=part, displacement=P, record_id=rid)
        perm = (sample_uniform(part, entry["seed"]) if P is None
                else sample_with_displacement(part, P, entry["seed"]))
        score = cosine_similarity(rec, ref)
        report = AttackReport(score >= thr, score, 1, perm, search_space_size(part.N), thr,
                              "known-seed", args.seed, 1)
    else:
        _resolve_seed(args)
        K = args.k or (prot.manifest.get("protection") or {}).get("K")
        if not K:
            raise CliError("--k is required when the protected manifest lacks it")
        part = BlockPartition(prot.S, int(K))
        report = brute_force_attack(vp, ref, part, thr, args.budget, order=args.order,
                                    seed=args.seed, channel=channel, record_id=rid)
    config["seed"] = args.seed
    body = report.to_dict()
    body["meta"] = _meta(args, config)
    _write_json(_out(args) / "attack.json", body)
    print(f"{args.mode}: success={report.success} best_score={report.best_score:.6f} "
          f"tried={report.candidates_tried} search_space={report.search_space_size}")
    return EXIT_OK


def cmd_probe(args) -> int:
    _resolve_seed(args)
    train = read_dataset(args.train)
    if train.attributes is None:
        raise CliError("training set has no attribute column")
    evals = {}
    for item in args.eval or []:
        name, _, path = item.partition("=")
        if not path:
            name, path = Path(item).stem, item
        ds = read_dataset(path)
        try:
            rows = [ds.index[r] for r in train.ids]
        except KeyError as e:
            raise CliError(f"eval set {name!r} lacks record {e.args[0]!r}") from None
        evals[name] = ds.embeddings[rows]
    _, reports = cross_validate(train.embeddings, train.attributes, evals, folds=args.folds,
                                hyper=ProbeHyper(), seed=args.seed)
    config = {"command": "probe", "train": str(args.train), "eval": args.eval, "folds": args.folds}
    body = {"meta": _meta(args, config), "reports": {k: r.to_dict() for k, r in reports.items()}}
    _write_json(_out(args) / "probe.json", body)
    for name, r in reports.items():
        print(f"  {name:<20} accuracy {r.summary()} ({r.n_folds} folds)")
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="PRNG seed (drawn and recorded if omitted)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("-o", "--out", default=None, help="output directory")
    return p


def _synth_flags(p):
    p.add_argument("--identities", type=int, default=500)
    p.add_argument("--samples", type=int, default=2)
    p.add_argument("--sigma", type=float, default=0.1, help="expected norm of intra-identity noise")
    p.add_argument("--offset", type=float, default=0.1, help="attribute offset along a fixed direction")
    p.add_argument("--dim", type=int, default=512)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="pemiu", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    _synth_flags(g)
    g.add_argument("--no-unit-norm", action="store_true")
    g.add_argument("--format", choices=["binary", "csv"], default="binary")
    g.add_argument("--name", default="dataset")
    g.set_defaults(func=cmd_generate)

    p = sub.add_parser("protect", parents=[common], help="block-shuffle a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=["per-identity", "per-record", "fixed"], required=True)
    p.add_argument("--p", type=int, default=None, help="exact displacement (fixed mode)")
    p.add_argument("--name", default="protected")
    p.set_defaults(func=cmd_protect)

    e = sub.add_parser("evaluate", parents=[common], help="DET curve, EER and operating points")
    e.add_argument("--data", required=True)
    e.add_argument("--pairing", default=None, help="id_a,id_b,mated CSV (default: all pairs)")
    e.add_argument("--targets", type=float, nargs="+", default=list(DEFAULT_FMR_TARGETS))
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("rsr-sweep", parents=[common], help="RSR over K x P")
    r.add_argument("--data", default=None, help="dataset file (default: generate on the fly)")
    _synth_flags(r)
    r.add_argument("--data-seed", type=int, default=None)
    r.add_argument("--k", type=int, nargs="+", default=[32, 64, 128])
    r.add_argument("--mode", choices=["fixed", "per-identity"], default="fixed")
    r.add_argument("--p", type=int, nargs="+", default=None, help="displacements for every K")
    r.add_argument("--channel", default="identity", help="identity | gaussian:<sigma>")
    r.add_argument("--targets", type=float, nargs="+", default=list(DEFAULT_FMR_TARGETS))
    r.add_argument("--calibration", choices=["per-k", "per-cell", "unprotected"], default="per-k")
    r.set_defaults(func=cmd_rsr_sweep)

    a = sub.add_parser("attack-seed", parents=[common], help="known-seed or brute-force attack")
    a.add_argument("--protected", required=True)
    a.add_argument("--original", required=True)
    a.add_argument("--record", required=True)
    a.add_argument("--reference", default=None, help="mated original record (default: same id)")
    a.add_argument("--mode", choices=["known-seed", "brute-force"], required=True)
    a.add_argument("--log", default=None, help="permutation log written by protect")
    a.add_argument("--k", type=int, default=None)
    a.add_argument("--budget", type=int, default=10**6)
    a.add_argument("--order", choices=["exhaustive", "random"], default="exhaustive")
    a.add_argument("--threshold", type=float, default=None)
    a.add_argument("--target-fmr", type=float, default=0.001)
    a.add_argument("--channel", default="identity")
    a.set_defaults(func=cmd_attack_seed)

    q = sub.add_parser("probe", parents=[common], help="attribute leakage probe")
    q.add_argument("--train", required=True)
    q.add_argument("--eval", action="append", help="NAME=PATH of an aligned evaluation set")
    q.add_argument("--folds", type=int, default=5)
    q.set_defaults(func=cmd_probe)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (EmptyScoreList, TooFewExamples) as e:
        print(f"error: insufficient data: {e}", file=sys.stderr)
        return EXIT_DATA
    except (SingleClass, MissingOriginal, PemiuError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
