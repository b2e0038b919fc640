"""Command-line entry point: ``sinn {taxonomy,synth,train,eval,predict}``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
failure.  Every command is deterministic given its flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (DataError, GenerationError, SynthSpec, dumps_dataset, generate_synthetic, load_dataset,
                   save_dataset, split)
from .experiments import evaluate_model, repeated_splits
from .graph import GraphError, LabelGraph, compile_masks, hierarchy_graph, parse_graph, serialize_graph
from .metrics import RECORD_KEYS, EvalResult, format_record
from .model import VARIANTS, init_params, predict
from .observation import PAPER_FORMULA, TRUE_LOGIT, ObservationConfig, ObservationSet
from .training import TrainConfig, fit, format_log_record

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_graph(path) -> LabelGraph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _layer_indices(graph: LabelGraph, spec: str | None) -> tuple[int, ...]:
    if not spec:
        return ()
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        if tok.isdigit():
            t = int(tok)
            if t >= graph.depth:
                raise UsageError(f"--observe: no layer {t}")
        else:
            try:
                t = graph.layer_index(tok)
            except KeyError:
                raise UsageError(f"--observe: unknown layer {tok!r}") from None
        out.append(t)
    return tuple(sorted(set(out)))


def _train_config(args, observe: tuple[int, ...]) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=args.lr, momentum=args.momentum, batch_size=args.batch,
            clip_threshold=args.clip, weight_decay=args.wd, epochs=args.epochs,
            lr_step=args.lr_step, seed=args.seed, observe_layers=observe,
            observe_prob=args.observe_prob, observe_mode=args.obs_mode,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- commands ---------------------------------------------------------------

def cmd_taxonomy(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    g = hierarchy_graph(sizes, seed=args.seed, exclusive_siblings=args.exclusive_siblings)
    _write(args.out, serialize_graph(g))
    return EXIT_OK


def cmd_synth(args) -> int:
    g = _read_graph(args.graph)
    exclusive = tuple(args.exclusive.split(",")) if args.exclusive else None
    try:
        spec = SynthSpec(g, per_class=args.per_class, dim=args.dim, noise_sigma=args.noise,
                         flip_prob=args.flip, seed=args.seed, class_layer=args.class_layer,
                         exclusive=exclusive, shared=args.shared)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = generate_synthetic(spec)
    if args.out in (None, "-"):
        sys.stdout.write(dumps_dataset(ds))
    else:
        save_dataset(ds, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    g = _read_graph(args.graph)
    ds = load_dataset(args.data, g)
    cfg = _train_config(args, _layer_indices(g, args.observe))
    if args.train_frac < 1.0:
        ds, _ = split(ds, args.train_frac, seed=args.seed)
    masks = compile_masks(g)
    p = init_params(g, masks, ds.dim, args.variant, cfg.seed)
    log = open(args.out, "w", encoding="utf-8") if args.out not in (None, "-") else None
    try:
        def emit(rec):
            line = format_log_record(rec) + "\n"
            (log or sys.stderr).write(line)
        fit(ds, p, masks, cfg, on_epoch=emit)
    finally:
        if log:
            log.close()
    save_checkpoint(args.ckpt, p, g, cfg.to_dict())
    return EXIT_OK


def _observation_cfg(args) -> ObservationConfig:
    return ObservationConfig(mode=args.obs_mode)


def _fmt(mean: float, std: float | None = None) -> str:
    if np.isnan(mean):
        return "   -   "
    return f"{100 * mean:6.2f}" + ("" if std is None else f" ± {100 * std:4.2f}")


def _table(rows: list[tuple[str, EvalResult]], summary: bool) -> str:
    """Percent-scaled table per scope, optionally with a mean ± std row."""
    first = rows[0][1]
    scopes = [("all", lambda r: r)] + [(name, lambda r, n=name: r.layers[n]) for name in first.layers]
    out = []
    for scope, get in scopes:
        keys = list(get(first).to_record())
        out.append(f"[{scope}]")
        out.append(" " * 10 + "".join(f"{k:>16}" for k in keys))
        for label, r in rows:
            rec = get(r).to_record()
            out.append(f"{label:<10}" + "".join(f"{_fmt(rec[k]):>16}" for k in keys))
        if summary:
            vals = {k: np.array([get(r).to_record()[k] for _, r in rows]) for k in keys}
            out.append(f"{'mean':<10}" + "".join(
                f"{_fmt(float(np.mean(vals[k])), float(np.std(vals[k]))):>16}" for k in keys))
        out.append("")
    return "\n".join(out)


def _mean_result(results: list[EvalResult]) -> EvalResult:
    def avg(rs):
        res = EvalResult(**{k: float(np.mean([getattr(r, k) for r in rs])) for k in RECORD_KEYS})
        res.mc_acc = {k: float(np.mean([r.mc_acc[k] for r in rs])) for k in rs[0].mc_acc}
        return res
    top = avg(results)
    top.layers = {name: avg([r.layers[name] for r in results]) for name in results[0].layers}
    return top


def cmd_eval(args) -> int:
    ck = load_checkpoint(args.ckpt)
    g = _read_graph(args.graph) if args.graph else ck.graph
    if g is None:
        raise UsageError("checkpoint has no embedded graph; pass --graph")
    ds = load_dataset(args.data, g)
    observe = _layer_indices(g, args.observe)
    obs_cfg = _observation_cfg(args)
    if args.splits:
        # fresh models per seeded split, trained with the checkpoint's settings
        cfg = TrainConfig(**(ck.train or {}))
        runs = repeated_splits(ds, ck.params.variant, cfg, splits=args.splits,
                               train_fraction=args.train_frac, n=args.topn,
                               observe=observe, obs_cfg=obs_cfg)
        rows = [(f"split {i}", r) for i, r in enumerate(runs.results)]
    else:
        if ck.params.graph_digest != g.digest():
            raise DataError("checkpoint was trained on a different graph")
        rows = [("eval", evaluate_model(ck.params, ds, args.topn, observe, obs_cfg))]
    if args.machine:
        text = format_record(_mean_result([r for _, r in rows]))
    else:
        head = f"variant={ck.params.variant} n={args.topn}"
        if observe:
            head += " observed=" + ",".join(g.layers[t].name for t in observe)
        text = head + "\n\n" + _table(rows, summary=len(rows) > 1)
    _write(args.out, text)
    return EXIT_OK


def _load_observations(path, g: LabelGraph) -> dict[str | None, ObservationSet]:
    """Observation file: JSON lines ``{"id"?, "layer", "labels"}``; no id means every sample."""
    out: dict[str | None, ObservationSet] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            layer, labels = rec["layer"], rec["labels"]
            if not isinstance(labels, list):
                raise TypeError("labels must be a list")
            one = ObservationSet.from_labels(g, layer, labels)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"observation file line {lineno}: {exc}") from None
        key = rec.get("id")
        out.setdefault(key, ObservationSet()).layers.update(one.layers)
    return out


def cmd_predict(args) -> int:
    ck = load_checkpoint(args.ckpt)
    g = ck.graph if ck.graph is not None else (_read_graph(args.graph) if args.graph else None)
    if g is None:
        raise UsageError("checkpoint has no embedded graph; pass --graph")
    masks = compile_masks(g)
    if args.feature:
        try:
            feats = [("sample", np.array([float(v) for v in args.feature.split(",")]))]
        except ValueError as exc:
            raise DataError(f"--feature: {exc}") from None
        if feats[0][1].shape != (ck.params.dim,):
            raise DataError(f"--feature has {feats[0][1].size} values, model expects d={ck.params.dim}")
    elif args.data:
        ds = load_dataset(args.data, g)
        feats = [(s.id, s.feature) for s in ds.samples]
    else:
        raise UsageError("predict needs --data or --feature")
    obs = _load_observations(args.observe_file, g) if args.observe_file else {}
    obs_cfg = _observation_cfg(args)
    lines = []
    for sid, f in feats:
        o = ObservationSet({**obs.get(None, ObservationSet()).layers, **obs.get(sid, ObservationSet()).layers})
        probs = predict(ck.params, masks, f, o if o else None, obs_cfg)
        layers = {}
        for t, (layer, q) in enumerate(zip(g.layers, probs)):
            order = np.lexsort((np.arange(len(q)), -q))[: args.topn]
            layers[layer.name] = {"observed": t in o,
                                  "ranking": [[layer.labels[j], float(q[j])] for j in order]}
        if args.machine:
            lines.append(json.dumps({"id": sid, "layers": layers}, sort_keys=True))
        else:
            lines.append(f"{sid}")
            for name, info in layers.items():
                tag = " (observed)" if info["observed"] else ""
                ranked = ", ".join(f"{lab} {p:.4f}" for lab, p in info["ranking"])
                lines.append(f"  {name}{tag}: {ranked}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _train_flags(sp) -> None:
    sp.add_argument("--variant", choices=VARIANTS, default="sinn")
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--lr-step", type=int, default=None, help="epochs per x0.1 decay (default epochs//3)")
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--batch", type=int, default=50)
    sp.add_argument("--clip", type=float, default=25.0)
    sp.add_argument("--wd", type=float, default=0.0005)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--observe-prob", type=float, default=0.0,
                    help="fraction of mini-batches trained with --observe layers injected")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sinn", description="Structured inference over layered label graphs.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("taxonomy", help="write a random tree-shaped graph file")
    sp.add_argument("--sizes", required=True, help="comma-separated layer sizes, top first")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--exclusive-siblings", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_taxonomy)

    sp = sub.add_parser("synth", help="generate a synthetic dataset for a graph")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--per-class", type=int, default=40)
    sp.add_argument("--dim", type=int, default=32)
    sp.add_argument("--noise", type=float, default=0.5)
    sp.add_argument("--flip", type=float, default=0.0)
    sp.add_argument("--shared", type=float, default=0.0)
    sp.add_argument("--class-layer")
    sp.add_argument("--exclusive", help="comma-separated single-label layer names")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model and write a checkpoint")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--data", required=True)
    _train_flags(sp)
    sp.add_argument("--train-frac", type=float, default=1.0,
                    help="train on this stratified fraction only (split seeded by --seed)")
    sp.add_argument("--observe", help="layers injected during observation-aware training")
    sp.add_argument("--obs-mode", choices=(PAPER_FORMULA, TRUE_LOGIT), default=PAPER_FORMULA)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--out", help="training log (JSON lines); default stderr")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint or repeated seeded splits")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--graph")
    sp.add_argument("--topn", type=int, default=3)
    sp.add_argument("--splits", type=int, default=0,
                    help="retrain on this many seeded splits with the checkpoint's settings")
    sp.add_argument("--train-frac", type=float, default=0.6)
    sp.add_argument("--observe", help="layers whose true labels are fed in at predict time")
    sp.add_argument("--obs-mode", choices=(PAPER_FORMULA, TRUE_LOGIT), default=PAPER_FORMULA)
    sp.add_argument("--machine", action="store_true", help="key=value record instead of a table")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("predict", help="ranked per-layer labels for samples")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data")
    sp.add_argument("--feature", help="comma-separated feature vector")
    sp.add_argument("--graph")
    sp.add_argument("--observe-file", help="JSON lines {id?, layer, labels}")
    sp.add_argument("--obs-mode", choices=(PAPER_FORMULA, TRUE_LOGIT), default=PAPER_FORMULA)
    sp.add_argument("--topn", type=int, default=3)
    sp.add_argument("--machine", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_predict)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sinn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"sinn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GraphError, DataError, GenerationError, CheckpointError, OSError) as exc:
        print(f"sinn: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"sinn: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
