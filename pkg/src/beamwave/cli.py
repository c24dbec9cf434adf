"""Command-line entry point: ``beamwave <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or format error,
3 training divergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
import threading
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import latency as lat
from .array import (CODEBOOK_KINDS, ArrayGeometry, beam_pattern, load_codebook, make_codebook,
                    save_codebook)
from .dataset import BLOCKS_FILE, LABEL_FIELDS, FormatError, IQDataset, SplitSpec, iter_iqb
from .engine import EngineConfig, TupleQueue, rank_beams, run_stream
from .nn.model import VARIANTS, ModelFormatError, load_model, save_model
from .nn.train import TrainingDiverged
from .waveform import ScenarioGrid, synth_dataset
from .workflow import TARGETS, fit, make_examples, score, split_examples

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def _write_csv(path, header, rows) -> None:
    fh = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _ms(value: Fraction) -> str:
    return f"{float(value):.9f}".rstrip("0").rstrip(".")


# --- generate ----------------------------------------------------------------

def cmd_generate(args) -> int:
    grid = ScenarioGrid()
    if args.config:
        try:
            grid = ScenarioGrid.from_file(args.config)
        except ValueError as exc:
            raise FormatError(f"{args.config}: {exc}") from None
    if args.set:
        raw = grid.to_meta()
        raw = {k: ",".join(map(str, v)) if isinstance(v, list) else str(v) for k, v in raw.items()}
        for item in args.set:
            if "=" not in item:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            raw[k.strip()] = v.strip()
        grid = ScenarioGrid.from_mapping(raw)
    manifest = synth_dataset(grid, args.out)
    print(f"wrote {manifest.num_blocks} blocks in {len(manifest.cells)} cells to {args.out}")
    return EXIT_OK


# --- train / eval -------------------------------------------------------------

def cmd_train(args) -> int:
    ds = IQDataset(args.dataset)
    spec = SplitSpec(args.train_fraction, args.split_seed)

    def report(epoch, history):
        print("epoch {}: ".format(epoch) + ", ".join(
            f"{s} loss {l:.4f} acc {a:.4f}" for e, s, l, a in history.rows if e == epoch), flush=True)

    model, history, _, test_set = fit(ds, args.variant, args.target, args.L, args.epochs, args.lr,
                                      args.batch_size, args.seed, args.normalize, spec,
                                      args.train_stride, on_epoch=report)
    save_model(model, args.out)
    if args.log:
        history.write_csv(args.log)
    if args.figure:
        from .plotting import plot_training
        plot_training(history, args.figure)
    if len(test_set):
        print(f"test accuracy {history.series('test')[-1]:.4f} on {len(test_set)} examples")
    print(f"saved model to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = IQDataset(args.dataset)
    target = model.spec.target
    L = int(model.spec.input_shape[0])
    if ds.block_len != model.spec.input_shape[1]:
        raise FormatError(f"dataset block length {ds.block_len} does not match model input {model.spec.input_shape[1]}")
    if args.split == "all":
        examples = make_examples(ds, np.arange(len(ds)), target, L, model.spec.normalize)
    else:
        _, examples = split_examples(ds, target, L, model.spec.normalize,
                                     SplitSpec(args.train_fraction, args.split_seed))
    if len(examples) == 0:
        raise FormatError("no evaluation examples in this dataset")
    result = score(model, ds, examples)
    print(f"accuracy {result.accuracy:.4f} on {result.num_examples} examples")
    for name, values in result.strata.items():
        print(f"  by {name}: " + ", ".join(f"{k}={a:.3f} (n={n})" for k, (a, n) in values.items()))
    if args.json:
        result.write_json(args.json)
    if args.csv:
        result.write_csv(args.csv)
    if args.figure:
        from .plotting import plot_confusion
        plot_confusion(result.confusion, args.figure, title=f"{target} accuracy {result.accuracy:.3f}")
    return EXIT_OK


# --- infer --------------------------------------------------------------------

def _source_stream(path: str):
    if path == "-":
        return sys.stdin.buffer, False
    p = Path(path)
    if p.is_dir():
        p = p / BLOCKS_FILE
    return open(p, "rb"), True


def cmd_infer(args) -> int:
    txb_model = load_model(args.model)
    aoa_model = load_model(args.aoa_model) if args.aoa_model else None
    cfg = EngineConfig(txb_model, aoa_model, capacity=args.capacity, policy=args.policy)
    stream, owned = _source_stream(args.source)
    queue = TupleQueue(cfg.capacity, cfg.policy)
    failure = []

    def produce():
        try:
            run_stream(iter_iqb(stream, cfg.block_len), cfg, queue=queue, close=False)
        except BaseException as exc:  # re-raised on the main thread
            failure.append(exc)
        finally:
            queue.close()

    producer = threading.Thread(target=produce, daemon=True)
    producer.start()
    out = _open_out(args.out)
    tuples = []
    try:
        while (item := queue.get()) is not None:
            out.write(json.dumps(item.to_json()) + "\n")
            tuples.append(item)
    finally:
        queue.close()  # unblocks a producer waiting on a full queue
        producer.join()
        if owned:
            stream.close()
        if out is not sys.stdout:
            out.close()
    if failure:
        raise failure[0]
    if args.report:
        if not tuples:
            raise FormatError("no complete inference window in the input stream")
        rep = rank_beams(tuples)
        with open(args.report, "w") as fh:
            json.dump({"ranking": list(rep.ranking),
                       "mean_rsrp_db": {str(k): v for k, v in rep.mean_rsrp_db.items()},
                       "counts": {str(k): v for k, v in rep.counts.items()}}, fh, indent=2)
    return EXIT_OK


# --- latency ------------------------------------------------------------------

def cmd_latency(args) -> int:
    cfg = lat.NrConfig(t_sym=Fraction(args.t_sym_us) / 10 ** 6, t_slot=Fraction(args.t_slot_us) / 10 ** 6,
                       n_ss=args.n_ss, subcarriers=args.subcarriers)
    scenario = lat.SweepScenario(args.n_tx, args.m_rx)
    stage, final = Fraction(args.stage_delay_ms) / 1000, Fraction(args.final_delay_ms) / 1000
    if args.mapping == "text":
        stage, final = final, stage
    periods = [Fraction(p) for p in args.periods_ms.split(",")]
    j_values = [int(j) for j in args.j_values.split(",")]
    rows = lat.latency_table(cfg, scenario, periods, j_values, args.xi, stage, final)
    _write_csv(args.csv, ["t_ss_ms", "series", "latency_ms"],
               [[_ms(p), s, _ms(v)] for p, s, v in rows])
    if args.speedup_csv:
        sp = lat.speedup_table(cfg, scenario, periods, j_values, args.xi, stage, final)
        _write_csv(args.speedup_csv, ["t_ss_ms", "j", "speedup"], [[_ms(p), j, f"{float(v):.6f}"] for p, j, v in sp])
    if args.figure:
        from .plotting import plot_latency
        plot_latency([(float(p), s, float(v)) for p, s, v in rows], args.figure)
    return EXIT_OK


# --- pattern / inspect ----------------------------------------------------------

def cmd_pattern(args) -> int:
    if args.codebook_file:
        codebook = load_codebook(args.codebook_file)
    else:
        codebook = make_codebook(args.kind, ArrayGeometry(args.num_elements))
    if args.save_codebook:
        save_codebook(codebook, args.save_codebook)
    if args.step <= 0:
        raise UsageError("--step must be positive")
    grid = np.round(np.arange(-90.0, 90.0 + args.step / 2, args.step), 6)
    grid = grid[(grid >= -90) & (grid <= 90)]
    patterns = {b.beam_id: beam_pattern(b, codebook.geometry, grid) for b in codebook}
    _write_csv(args.csv, ["beam_id", "angle_deg", "power_db"],
               [[k, f"{a:g}", f"{p:.6f}"] for k, pat in patterns.items() for a, p in pat])
    if args.figure:
        from .plotting import plot_beam_patterns
        plot_beam_patterns(patterns, args.figure)
    return EXIT_OK


def cmd_inspect(args) -> int:
    ds = IQDataset(args.dataset)
    m = ds.manifest
    summary = {
        "path": str(args.dataset), "format_version": m.version, "block_len": m.block_len,
        "codebook": m.codebook, "aoas": list(m.aoas), "master_seed": m.master_seed,
        "num_blocks": m.num_blocks, "num_cells": len(m.cells),
        "counts": {name: {str(k): v for k, v in sorted(m.counts_by(name).items())} for name in LABEL_FIELDS},
    }
    if args.json:
        print(json.dumps(summary, indent=2))
        return EXIT_OK
    for key in ("path", "format_version", "block_len", "codebook", "aoas", "master_seed", "num_blocks", "num_cells"):
        print(f"{key:14s} {summary[key]}")
    for name, counts in summary["counts"].items():
        print(f"{name:14s} " + "  ".join(f"{k}:{v}" for k, v in counts.items()))
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="beamwave", description="Beam and angle-of-arrival inference from raw I/Q samples.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthesize a labeled I/Q dataset from a scenario file")
    g.add_argument("config", nargs="?", help="key = value scenario file (defaults apply when omitted)")
    g.add_argument("out", help="output dataset directory")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one scenario key")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a classifier on a dataset")
    t.add_argument("dataset")
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--variant", choices=VARIANTS, default="txb-small-512")
    t.add_argument("--target", choices=tuple(TARGETS), default="txb")
    t.add_argument("--L", type=int, default=1, help="blocks per example")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch-size", type=int, default=100)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--train-fraction", type=float, default=0.6)
    t.add_argument("--split-seed", type=int, default=0)
    t.add_argument("--train-stride", type=int, default=None,
                   help="start a training example every N blocks (default L, no overlap)")
    t.add_argument("--normalize", action="store_true", help="scale every example to unit power")
    t.add_argument("--log", help="per-epoch CSV log")
    t.add_argument("--figure", help="training-curve image")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="confusion matrix and stratified accuracy")
    e.add_argument("model")
    e.add_argument("dataset")
    e.add_argument("--split", choices=("test", "all"), default="test")
    e.add_argument("--train-fraction", type=float, default=0.6)
    e.add_argument("--split-seed", type=int, default=0)
    e.add_argument("--json", help="write full results as JSON")
    e.add_argument("--csv", help="write the row-normalized confusion matrix as CSV")
    e.add_argument("--figure", help="confusion heatmap image")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="stream .iqb samples through the engine, one JSON tuple per line")
    i.add_argument("model", help="TXB model file")
    i.add_argument("source", nargs="?", default="-", help=".iqb file, dataset directory, or - for stdin")
    i.add_argument("--aoa-model")
    i.add_argument("--capacity", type=int, default=64)
    i.add_argument("--policy", choices=("drop-oldest", "block"), default="block",
                   help="queue overflow policy; 'block' keeps every tuple in the output")
    i.add_argument("--out", help="JSONL output (default stdout)")
    i.add_argument("--report", help="write the beam ranking as JSON")
    i.set_defaults(func=cmd_infer)

    la = sub.add_parser("latency", help="beam-sweep latency table and speedups as CSV")
    la.add_argument("--t-sym-us", default="8.91875")
    la.add_argument("--t-slot-us", default="125")
    la.add_argument("--n-ss", type=int, default=64)
    la.add_argument("--subcarriers", type=int, default=3300)
    la.add_argument("--n-tx", type=int, default=12)
    la.add_argument("--m-rx", type=int, default=12)
    la.add_argument("--stage-delay-ms", default="0.492")
    la.add_argument("--final-delay-ms", default="0.34")
    la.add_argument("--mapping", choices=("figure", "text"), default="figure",
                    help="'text' swaps the per-stage and final delays")
    la.add_argument("--xi", type=int, default=512)
    la.add_argument("--periods-ms", default="5,10,20,40")
    la.add_argument("--j-values", default="1,4,14")
    la.add_argument("--csv", help="latency CSV (default stdout)")
    la.add_argument("--speedup-csv")
    la.add_argument("--figure")
    la.set_defaults(func=cmd_latency)

    pa = sub.add_parser("pattern", help="beam patterns of a codebook as CSV")
    src = pa.add_mutually_exclusive_group()
    src.add_argument("--kind", choices=CODEBOOK_KINDS, default="azimuth-24")
    src.add_argument("--codebook-file")
    pa.add_argument("--num-elements", type=int, default=12)
    pa.add_argument("--step", type=float, default=1.0, help="angle grid step in degrees")
    pa.add_argument("--csv", help="pattern CSV (default stdout)")
    pa.add_argument("--figure")
    pa.add_argument("--save-codebook", help="also write the codebook in text form")
    pa.set_defaults(func=cmd_pattern)

    ins = sub.add_parser("inspect", help="summarize a dataset manifest")
    ins.add_argument("dataset")
    ins.add_argument("--json", action="store_true")
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # Downstream reader (e.g. head) went away; stop quietly.
        sys.stderr.close()
        return EXIT_OK
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, ModelFormatError, configparser.Error, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
