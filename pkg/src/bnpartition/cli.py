"""Command-line entry point: ``bnpartition <subcommand> [flags]``.

Exit codes: 0 success, 1 a self-check failed, 2 usage or invalid input,
3 numerical failure, 4 file I/O error. Every run writes a ``manifest.json``
next to its outputs, and every CSV/SVG/checkpoint carries the manifest hash.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import FORMAT_VERSION, __version__
from . import io
from .arrangement import generate_valid_arrangement, formula_count
from .batchnorm import freeze_batch
from .cpa import EVAL, NOBN
from .datasets import GENERATORS, WINDOWS, make_dataset, sample_reference_batch
from .diagnostics import parent_region_conditioning
from .experiments import (TABLE1_WIDTHS, TABLE2_CONFIGS, count_table, offset_trials, retained_pullbacks,
                          summarize_counts)
from .hyperplanes import VARIANTS, Window, layer_offsets, representation_centroid
from .regions import (SliceMap, decision_regions, density_profile, enumerate_arrangement, enumerate_on_slice,
                      identity_slice, pullback_check, verify_enumeration)
from .render import cells_svg, decision_svg
from .trainer import NonFiniteLoss, TrainConfig, train_from_config

log = logging.getLogger("bnpartition")


class UsageError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


# --- flag parsing helpers --------------------------------------------------------

def floats(text: str, n=None):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} numbers, got {text!r}")
    return vals


def ints(text: str):
    return [int(v) for v in floats(text)]


def parse_window(text: str) -> Window:
    x0, y0, r = floats(text, 3)
    return Window((x0, y0), r)


def parse_slice(text: str, dim: int) -> SliceMap:
    """``"p11,p12,p21,p22,...:o1,...,oD"`` with P row-major of shape (D, 2)."""
    if ":" not in text:
        raise UsageError("slice must look like 'P row-major:o'")
    p, o = text.split(":", 1)
    P = np.array(floats(p)).reshape(-1, 2) if len(floats(p)) % 2 == 0 else None
    if P is None or P.shape[0] != dim:
        raise UsageError(f"slice P must have {2 * dim} entries for input dimension {dim}")
    return SliceMap(P, floats(o, dim))


def load_mode(text: str, net):
    """``nobn``, ``eval`` or ``frozen:<batch.csv>``; returns ``(mode, input files)``."""
    if text == NOBN:
        return NOBN, []
    if text == EVAL:
        if not net.has_bn:
            raise UsageError("mode 'eval' needs a network with BN")
        return EVAL, []
    if text.startswith("frozen:"):
        path = text.split(":", 1)[1]
        if not net.has_bn:
            raise UsageError("frozen mode needs a network with BN")
        return freeze_batch(net, io.read_matrix_csv(path)), [path]
    raise UsageError(f"unknown mode {text!r}; use nobn, eval or frozen:<csv>")


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _finish(args, manifest, outputs):
    target = getattr(args, "manifest", None)
    if target is None:
        base = getattr(args, "out", None) or os.path.dirname(os.path.abspath(outputs[0]))
        target = os.path.join(base, "manifest.json")
    io.write_manifest(target, manifest, outputs)
    print(f"manifest {manifest['hash']}")


def _args_dict(args):
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


# --- subcommands -----------------------------------------------------------------

def cmd_train(args):
    data = make_dataset(args.dataset, n=args.n, seed=args.data_seed if args.data_seed is not None else args.seed)
    ckpts = sorted(set(ints(args.checkpoint_epochs))) if args.checkpoint_epochs else [0, args.epochs]
    cfg = TrainConfig(widths=tuple(ints(args.widths)), use_bn=args.bn, epochs=args.epochs, lr=args.lr,
                      batch_size=args.batch, seed=args.seed, activation=args.activation,
                      checkpoint_epochs=tuple(ckpts))
    man = io.make_manifest("train", _args_dict(args))
    res = train_from_config(data, cfg)
    outputs = []
    meta = {"seed": args.seed, "dataset": data.name, "data_seed": data.seed, "n": len(data),
            "widths": list(cfg.widths), "use_bn": cfg.use_bn, "lr": cfg.lr, "batch_size": cfg.batch_size}
    for epoch, net in sorted(res.checkpoints.items()):
        p = _out(args, f"checkpoint_epoch{epoch:03d}.json")
        io.save_checkpoint(p, net, dict(meta, epoch=epoch), man["hash"])
        outputs.append(p)
    p = _out(args, "metrics.csv")
    io.write_csv(p, ["epoch", "loss", "train_acc", "val_acc"],
                 [[m["epoch"], m["loss"], m["train_acc"], m["val_acc"]] for m in res.metrics], man["hash"])
    outputs.append(p)
    p = _out(args, "dataset.csv")
    io.write_csv(p, ["x1", "x2", "label"], [[*x, y] for x, y in zip(data.X, data.y)], man["hash"])
    outputs.append(p)
    _finish(args, man, outputs)
    last = res.metrics[-1]
    print(f"epoch {last['epoch']} loss {last['loss']:.6g} train_acc {last['train_acc']:.4f} "
          f"val_acc {last['val_acc']:.4f}")


def cmd_freeze_batch(args):
    net, meta = io.load_checkpoint(args.model)
    name = args.dataset or meta.get("dataset")
    seed = args.data_seed if args.data_seed is not None else meta.get("data_seed", meta.get("seed", 0))
    data = make_dataset(name, n=meta.get("n", 200), seed=seed)
    train, _ = data.split()
    batch = sample_reference_batch(train, args.size, args.batch_seed)
    io.write_matrix_csv(args.out, batch)
    fz = freeze_batch(net, batch)
    man = io.make_manifest("freeze-batch", _args_dict(args), [args.model])
    io.write_manifest(args.out + ".manifest.json", man, [args.out])
    print(f"batch_id {fz.batch_id}")


def _regions_rows(cells):
    rows = []
    for i, c in enumerate(cells):
        verts = ";".join(f"{io.fmt(x)} {io.fmt(y)}" for x, y in c.polygon)
        label = int(np.argmax(c.affine(c.centroid)))
        rows.append([i, verts, c.pattern_hash, label, c.area])
    return rows


def cmd_enumerate(args):
    net, _ = io.load_checkpoint(args.model)
    mode, inputs = load_mode(args.mode, net)
    win = parse_window(args.window)
    sl = parse_slice(args.slice, net.input_dim) if args.slice else identity_slice(net.input_dim)
    man = io.make_manifest("enumerate", _args_dict(args), [args.model, *inputs])
    cells = enumerate_on_slice(net, mode, sl, win, threads=args.threads)
    if args.verify:
        chk = verify_enumeration(cells, net, mode)
        print(f"area_rel_error {chk.area_rel_error:.3g} pattern_mismatches {chk.pattern_mismatches} "
              f"affine_max_error {chk.affine_max_error:.3g}")
        if not chk.ok():
            raise CheckFailed("enumeration self-consistency check failed")
    outputs = []
    if args.csv:
        io.write_csv(args.csv, ["cell_id", "vertices", "pattern_hash", "label", "area"], _regions_rows(cells),
                     man["hash"])
        outputs.append(args.csv)
    if args.svg:
        io.write_text(args.svg, cells_svg(cells, win, man["hash"]))
        outputs.append(args.svg)
    if outputs:
        _finish(args, man, outputs)
    print(f"regions {len(cells)} degenerate_splits {cells.degenerate_splits} on_boundary {cells.on_boundary}")


def cmd_offsets(args):
    net, meta = io.load_checkpoint(args.model)
    variant = args.variant
    X = _data_for(args, meta)
    layers = ints(args.layers) if args.layers else list(range(1, len(net.blocks) + 1))
    radii = floats(args.radii) if args.radii else []
    inputs = [args.model]
    frozen = None
    batch_id = ""
    if variant in ("bn_frozen", "through_centroid"):
        if not args.batch:
            raise UsageError(f"variant {variant} needs --batch <csv>")
        frozen = freeze_batch(net, io.read_matrix_csv(args.batch))
        batch_id = frozen.batch_id
        inputs.append(args.batch)
    man = io.make_manifest("offsets", _args_dict(args), inputs)
    rows = []
    for l in layers:
        if frozen is not None:
            center = representation_centroid(net, X, l, frozen)
        else:
            center = representation_centroid(net, X, l, NOBN if variant == "baseline" else EVAL)
        for r in layer_offsets(net, l, variant, center=center, frozen=frozen):
            rows.append([meta.get("seed", ""), meta.get("epoch", ""), batch_id, r.layer, r.neuron, r.breakpoint,
                         r.variant, r.delta, r.l1_norm, r.numerator] + [r.delta < rad for rad in radii])
    header = ["seed", "epoch", "batch_id", "layer", "neuron", "breakpoint", "variant", "delta", "l1_norm",
              "numerator"] + [f"cut_at_r={io.fmt(rad)}" for rad in radii]
    io.write_csv(args.csv, header, rows, man["hash"])
    _finish(args, man, [args.csv])
    print(f"offsets {len(rows)}")


def _data_for(args, meta):
    name = getattr(args, "dataset", None) or meta.get("dataset")
    if name is None:
        raise UsageError("need --dataset (checkpoint metadata has none)")
    seed = args.data_seed if getattr(args, "data_seed", None) is not None else meta.get("data_seed", meta.get("seed", 0))
    return make_dataset(name, n=meta.get("n", 200), seed=seed).split()[0].X


def cmd_diagnose(args):
    nb, meta = io.load_checkpoint(args.nobn_model)
    bn, _ = io.load_checkpoint(args.bn_model)
    name = args.dataset or meta.get("dataset")
    seed = args.seed if args.seed is not None else meta.get("seed", 0)
    data = make_dataset(name, n=meta.get("n", 200), seed=meta.get("data_seed", seed))
    train, _ = data.split()
    man = io.make_manifest("diagnose", _args_dict(args), [args.nobn_model, args.bn_model])
    rows = offset_trials(nb, bn, train, seed, meta.get("epoch", -1), args.batches)
    header = list(rows[0].keys())
    io.write_csv(args.csv, header, [[r[k] for k in header] for r in rows], man["hash"])
    outputs = [args.csv]
    if nb.input_dim == 2 and len(nb.blocks) > 1:
        depth = min(args.depth, len(nb.blocks) - 1)
        cond = []
        for label, net, mode in (("nobn", nb, NOBN), ("bn", bn, freeze_batch(bn, train.X))):
            s = parent_region_conditioning(net, mode, train.X, depth)
            cond.append([label, depth, s.n_points, s.drop_rank_ratio, float(np.min(s.sigma_min)),
                         float(np.median(s.sigma_min))])
        p = os.path.splitext(args.csv)[0] + "_conditioning.csv"
        io.write_csv(p, ["model", "depth", "n_points", "drop_rank_ratio", "sigma_min_min", "sigma_min_median"],
                     cond, man["hash"])
        outputs.append(p)
    _finish(args, man, outputs)
    dp = np.array([r["d_plus"] for r in rows])
    print(f"trials {len(rows)} d_plus_positive {np.mean(dp > 0):.3f}")


def cmd_arrangement_selftest(args):
    man = io.make_manifest("arrangement-selftest", _args_dict(args))
    win = Window((0.0, 0.0), 1.0)
    rng = np.random.default_rng(args.seed)
    rows, mismatches = [], 0
    for i in range(args.instances):
        s = int(rng.integers(0, 2 ** 31))
        if i % 2 == 0:
            kind = ("simple", int(rng.integers(1, 13)))
        else:
            kind = ("parallel", [int(m) for m in rng.integers(1, 5, size=int(rng.integers(1, 5)))])
        fams, rep = generate_valid_arrangement(kind, win, s)
        lines = [l for f in fams for l in f]
        enum = len(enumerate_arrangement(lines, win))
        form = formula_count(fams)
        mismatches += enum != form
        rows.append([i, kind[0], " ".join(str(len(f)) for f in fams), form, enum, rep.overall_valid, rep.eta])
    io.write_csv(args.csv, ["instance_id", "kind", "m_vec", "formula_count", "enumerated_count", "valid", "eta"],
                 rows, man["hash"])
    _finish(args, man, [args.csv])
    print(f"instances {len(rows)} mismatches {mismatches}")
    if mismatches:
        raise CheckFailed(f"{mismatches} formula/enumeration mismatches")


def _report_row(rep):
    return [rep.layer, rep.parent_pattern, rep.rank, rep.sigma_min, rep.input_count, rep.intrinsic_count,
            rep.counts_equal, rep.jacobian, rep.support, rep.support_threshold, rep.jaccard_min, rep.radius]


REPORT_HEADER = ["layer", "parent_pattern", "rank", "sigma_min", "input_count", "intrinsic_count", "counts_equal",
                 "jacobian", "support", "support_threshold", "jaccard_min", "radius"]


def cmd_pullback_check(args):
    net, meta = io.load_checkpoint(args.model)
    mode, inputs = load_mode(args.mode, net)
    man = io.make_manifest("pullback-check", _args_dict(args), [args.model, *inputs])
    if args.anchor:
        reps = [pullback_check(net, mode, args.layer, floats(args.anchor, 2), args.radius,
                               support_threshold=args.support)]
        extra = {"rank_deficient": 0, "skipped": 0}
    else:
        res = retained_pullbacks(net, mode, args.layer, _data_for(args, meta), n_keep=args.n, r0=args.radius,
                                 support_threshold=args.support)
        reps, extra = res["reports"], res
    io.write_csv(args.csv, REPORT_HEADER, [_report_row(r) for r in reps], man["hash"])
    _finish(args, man, [args.csv])
    eq = sum(r.counts_equal for r in reps)
    print(f"windows {len(reps)} counts_equal {eq} rank_deficient {extra['rank_deficient']}")
    if eq != len(reps):
        raise CheckFailed("pullback counts differ")


def cmd_density_profile(args):
    net, meta = io.load_checkpoint(args.model)
    mode, inputs = load_mode(args.mode, net)
    radii = floats(args.radii)
    man = io.make_manifest("density-profile", _args_dict(args), [args.model, *inputs])
    if args.class_centers:
        data = make_dataset(args.dataset or meta["dataset"], n=meta.get("n", 200),
                            seed=meta.get("data_seed", meta.get("seed", 0)))
        centers = data.class_centroids()
        weights = data.class_priors() if args.weights == "prior" else None
        prof = density_profile(net, mode, None, radii, centers, weights, threads=args.threads)
    else:
        prof = density_profile(net, mode, floats(args.center, 2), radii, threads=args.threads)
    rows = []
    for ci, c in enumerate(prof["centers"]):
        for ri, r in enumerate(prof["radii"]):
            rows.append([ci, c[0], c[1], r, int(prof["counts"][ci, ri]), prof["density"][ci, ri]])
    for ri, r in enumerate(prof["radii"]):
        rows.append(["aggregate", "", "", r, "", prof["aggregate"][ri]])
    io.write_csv(args.csv, ["center_id", "x0", "y0", "r", "count", "density"], rows, man["hash"])
    _finish(args, man, [args.csv])


def cmd_decision_map(args):
    net, _ = io.load_checkpoint(args.model)
    mode, inputs = load_mode(args.mode, net)
    win = parse_window(args.window)
    man = io.make_manifest("decision-map", _args_dict(args), [args.model, *inputs])
    cells = enumerate_on_slice(net, mode, identity_slice(net.input_dim), win, threads=args.threads)
    dmap = decision_regions(cells)
    outputs = []
    if args.csv:
        rows = [[i, ";".join(f"{io.fmt(x)} {io.fmt(y)}" for x, y in p), ci, lab, float(abs(_area(p)))]
                for i, (p, lab, ci) in enumerate(dmap.subcells)]
        io.write_csv(args.csv, ["subcell_id", "vertices", "cell_id", "label", "area"], rows, man["hash"])
        outputs.append(args.csv)
    if args.svg:
        io.write_text(args.svg, decision_svg(dmap, win, man["hash"]))
        outputs.append(args.svg)
    if outputs:
        _finish(args, man, outputs)
    print(f"cells {len(cells)} subcells {len(dmap.subcells)} boundary_edges {len(dmap.boundary)}")


def _area(p):
    from .polygon import area
    return area(p)


def _table(args, configs, sub):
    seeds = list(range(args.seed0, args.seed0 + args.seeds))
    man = io.make_manifest(sub, _args_dict(args))
    rows = count_table(configs, seeds, args.epochs, args.threads, log=print if args.verbose else None)
    p1 = _out(args, "counts.csv")
    io.write_csv(p1, ["dataset", "widths", "seed", "nobn_count", "bn_count", "batch_id"],
                 [[r["dataset"], "x".join(map(str, r["widths"])), r["seed"], r["nobn"], r["bn"], r["batch_id"]]
                  for r in rows], man["hash"])
    summ = summarize_counts(rows)
    p2 = _out(args, "summary.csv")
    io.write_csv(p2, ["dataset", "widths", "n_seeds", "nobn_mean", "nobn_std", "bn_mean", "bn_std", "ratio"],
                 [[s["dataset"], "x".join(map(str, s["widths"])), s["n_seeds"], s["nobn_mean"], s["nobn_std"],
                   s["bn_mean"], s["bn_std"], s["ratio"]] for s in summ], man["hash"])
    _finish(args, man, [p1, p2])
    for s in summ:
        print(f"{s['dataset']:16s} {'x'.join(map(str, s['widths'])):12s} non-BN {s['nobn_mean']:9.1f} "
              f"± {s['nobn_std']:6.1f}   BN {s['bn_mean']:9.1f} ± {s['bn_std']:6.1f}")


def cmd_reproduce_table1(args):
    names = [args.dataset] if args.dataset else list(WINDOWS)
    widths = [args.width] if args.width else list(TABLE1_WIDTHS)
    _table(args, [(n, (w,)) for n in names for w in widths], "reproduce-table1")


def cmd_reproduce_table2(args):
    configs = [c for c in TABLE2_CONFIGS if not args.dataset or c[0] == args.dataset]
    _table(args, configs, "reproduce-table2")


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnpartition", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"bnpartition {__version__} (checkpoint format {FORMAT_VERSION})")
    p.add_argument("--config", help="JSON file of default flag values, optionally keyed by subcommand")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    datasets = sorted(GENERATORS)

    sp = add("train", cmd_train, "train a network and write checkpoints")
    sp.add_argument("--dataset", required=True, choices=datasets)
    sp.add_argument("--widths", default="64")
    sp.add_argument("--bn", action="store_true")
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--batch", type=int, default=64)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--data-seed", type=int)
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--activation", default="relu")
    sp.add_argument("--checkpoint-epochs")
    sp.add_argument("--out", required=True)

    sp = add("freeze-batch", cmd_freeze_batch, "sample a reference batch from the training split")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", choices=datasets)
    sp.add_argument("--data-seed", type=int)
    sp.add_argument("--batch-seed", type=int, default=0)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--out", required=True, help="reference batch CSV to write")

    sp = add("enumerate", cmd_enumerate, "exact regions in a 2D window or slice")
    sp.add_argument("--model", required=True)
    sp.add_argument("--mode", default=NOBN)
    sp.add_argument("--window", required=True, help="x0,y0,r")
    sp.add_argument("--slice", help="P row-major:o, mapping slice coords into input space")
    sp.add_argument("--svg")
    sp.add_argument("--csv")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--verify", action="store_true")
    sp.add_argument("--manifest")

    sp = add("offsets", cmd_offsets, "normalized offsets per neuron and breakpoint")
    sp.add_argument("--model", required=True)
    sp.add_argument("--variant", choices=VARIANTS, default="baseline")
    sp.add_argument("--dataset", choices=datasets)
    sp.add_argument("--data-seed", type=int)
    sp.add_argument("--batch", help="reference batch CSV for bn_frozen / through_centroid")
    sp.add_argument("--layers")
    sp.add_argument("--radii")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--manifest")

    sp = add("diagnose", cmd_diagnose, "offset ECDF comparison and cut rates for a matched pair")
    sp.add_argument("--nobn-model", required=True)
    sp.add_argument("--bn-model", required=True)
    sp.add_argument("--dataset", choices=datasets)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--batches", type=int, default=30)
    sp.add_argument("--depth", type=int, default=2)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--manifest")

    sp = add("arrangement-selftest", cmd_arrangement_selftest, "formula versus enumeration on random arrangements")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--instances", type=int, default=200)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--manifest")

    sp = add("pullback-check", cmd_pullback_check, "input versus intrinsic counts in parent regions")
    sp.add_argument("--model", required=True)
    sp.add_argument("--mode", default=NOBN)
    sp.add_argument("--layer", type=int, default=2)
    sp.add_argument("--anchor", help="x,y; default: anchors from the training split")
    sp.add_argument("--dataset", choices=datasets)
    sp.add_argument("--data-seed", type=int)
    sp.add_argument("--radius", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--support", type=float, default=0.95)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--manifest")

    sp = add("density-profile", cmd_density_profile, "region counts and densities over a radius grid")
    sp.add_argument("--model", required=True)
    sp.add_argument("--mode", default=NOBN)
    sp.add_argument("--center", default="0,0")
    sp.add_argument("--radii", required=True)
    sp.add_argument("--class-centers", action="store_true")
    sp.add_argument("--dataset", choices=datasets)
    sp.add_argument("--weights", choices=("prior", "uniform"), default="uniform")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--manifest")

    sp = add("decision-map", cmd_decision_map, "decision regions and boundaries in a window")
    sp.add_argument("--model", required=True)
    sp.add_argument("--mode", default=NOBN)
    sp.add_argument("--window", required=True)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--svg")
    sp.add_argument("--csv")
    sp.add_argument("--manifest")

    for name, func, help_ in (("reproduce-table1", cmd_reproduce_table1, "single-layer window counts"),
                              ("reproduce-table2", cmd_reproduce_table2, "deep window counts")):
        sp = add(name, func, help_)
        sp.add_argument("--dataset", choices=datasets)
        if name == "reproduce-table1":
            sp.add_argument("--width", type=int)
        sp.add_argument("--seeds", type=int, default=10 if name == "reproduce-table1" else 5)
        sp.add_argument("--seed0", type=int, default=0)
        sp.add_argument("--epochs", type=int, default=100)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", required=True)
    return p


def _apply_config(parser, argv):
    """Load ``--config`` JSON and install its values as subparser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subparsers.choices.items():
        values = cfg.get(name, {}) if isinstance(cfg.get(name), dict) else {}
        flat = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        merged = {k.replace("-", "_"): v for k, v in {**flat, **values}.items()}
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in merged.items() if k in dests})
        for a in sp._actions:
            if a.dest in merged:
                a.required = False


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 4
    except (ValueError, json.JSONDecodeError) as e:
        print(f"error: bad config: {e}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except CheckFailed as e:
        print(f"check failed: {e}", file=sys.stderr)
        return 1
    except (NonFiniteLoss, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 4
    except (KeyError, ValueError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
