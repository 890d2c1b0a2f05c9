"""Command-line interface: data generation, label generation, training,
grid execution, reporting and gradient checking."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import kernel as K
from . import data as D
from . import harness as H
from . import labels as L
from . import methods as M


def _add_method_flags(parser):
    parser.add_argument("--method", required=True,
                        choices=["supervised", "dnpl", "proden", "cavl", "lw", "cr", "pico"])
    parser.add_argument("--ld", action="store_true", help="enable label disambiguation")
    parser.add_argument("--lw-variant", choices=["sigmoid", "ce"], default="ce")
    parser.add_argument("--beta", type=int, choices=[0, 1, 2], default=1)
    parser.add_argument("--no-cl", action="store_true",
                        help="disable PiCO's contrastive term")


def _method_config(args) -> M.MethodConfig:
    return M.MethodConfig(method=args.method, ld=args.ld,
                          lw_variant=args.lw_variant, beta=args.beta,
                          contrastive=not args.no_cl)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pllkit",
                                     description="Partial-label-learning experiments "
                                                 "on EEG-style feature vectors")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    gen.add_argument("--subjects", type=int, default=1)
    gen.add_argument("--segments", type=int, default=30)
    gen.add_argument("--separation", type=float, default=1.0)
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--feature-len", type=int, default=310)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    lab = sub.add_parser("gen-labels", help="generate candidate labels for a dataset")
    lab.add_argument("--mode", choices=["uniform", "similarity"], required=True)
    lab.add_argument("--q", type=float, help="ambiguity for uniform mode")
    lab.add_argument("--wheel", help="wheel JSON for similarity mode (default layout otherwise)")
    lab.add_argument("--data", required=True)
    lab.add_argument("--seed", type=int, default=0)
    lab.add_argument("--out", required=True)

    train = sub.add_parser("train", help="run one training/evaluation fold")
    _add_method_flags(train)
    train.add_argument("--data", required=True)
    train.add_argument("--labels", help="candidate-label file (omit for supervised)")
    train.add_argument("--subject", type=int, default=0)
    train.add_argument("--fold", type=int, choices=[1, 2, 3], default=1)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--epochs", type=int, default=30)
    train.add_argument("--batch-size", type=int, default=8)
    train.add_argument("--lr", type=float, default=0.01)
    train.add_argument("--diag-out", help="per-iteration diagnostics CSV")
    train.add_argument("--out", required=True, help="output directory")

    grid = sub.add_parser("grid", help="run a full experiment grid")
    grid.add_argument("--config", required=True, help="flat key=value grid file")
    grid.add_argument("--data", required=True)
    grid.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="aggregate grid runs into tables")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--with-paper-reference", action="store_true",
                     help="render the stored published reference numbers alongside")

    gc = sub.add_parser("gradcheck", help="finite-difference check of a method's loss")
    _add_method_flags(gc)
    gc.add_argument("--eps", type=float, default=1e-4)
    gc.add_argument("--threshold", type=float, default=1e-4)
    gc.add_argument("--samples", type=int, default=25,
                    help="coordinates checked per parameter tensor (0 = all)")
    gc.add_argument("--epoch", type=int, default=15, help="warm-up epoch for CR")
    gc.add_argument("--seed", type=int, default=0)
    return parser


def cmd_gen_data(args) -> int:
    config = D.SynthConfig(subjects=args.subjects, segments_per_trial=args.segments,
                           separation=args.separation, noise=args.noise,
                           seed=args.seed, feature_len=args.feature_len)
    dataset = D.synth_generate(config)
    D.write_dataset(args.out, dataset)
    D.write_config_echo(args.out + ".meta", config)
    print(f"wrote {dataset.num_samples} samples to {args.out}")
    return 0


def cmd_gen_labels(args) -> int:
    dataset = D.load_dataset(args.data)
    wheel = L.EmotionWheel.from_json(args.wheel) if args.wheel else None
    if args.mode == "uniform" and args.q is None:
        print("gen-labels: uniform mode needs --q", file=sys.stderr)
        return 2
    sets = L.generate_for_labels(dataset.labels, args.mode, q=args.q,
                                 wheel=wheel, seed=args.seed)
    L.save_candidate_file(args.out, sets)
    print(f"wrote {len(sets)} candidate rows to {args.out} ({sets[0].provenance})")
    return 0


def cmd_train(args) -> int:
    dataset = D.load_dataset(args.data)
    candidates = L.load_candidate_file(args.labels) if args.labels else None
    method = _method_config(args)
    if method.method != "supervised" and candidates is None:
        print("train: non-supervised methods need --labels", file=sys.stderr)
        return 2
    q = None
    ambiguity = "none"
    if candidates is not None:
        prov = candidates[0].provenance
        ambiguity = "similarity" if prov.startswith("similarity") else "uniform"
        if prov.startswith("uniform:q="):
            q = float(prov.split("=", 1)[1])
    spec = H.RunSpec(method=method, subject=args.subject, fold=args.fold,
                     seed=args.seed, epochs=args.epochs, batch_size=args.batch_size,
                     lr=args.lr, ambiguity=ambiguity, q=q)
    result = H.train_run(spec, dataset, candidates, diag_path=args.diag_out)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "result.json")
    H.write_result(out_path, result)
    print(f"test accuracy {result.accuracy:.2f}% "
          f"(best epoch {result.best_epoch}); result in {out_path} "
          f"[{result.wall_time:.1f}s]")
    return 0


def cmd_grid(args) -> int:
    grid = H.parse_grid_config(args.config)
    dataset = D.load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    runs_csv = os.path.join(args.out, "runs.csv")
    table = H.run_grid(grid, dataset, runs_csv=runs_csv)
    H.write_report(table, args.out)
    print(f"grid complete: {sum(c.n for c in table.cells.values())} runs; "
          f"results in {args.out}")
    return 0


def cmd_report(args) -> int:
    runs_csv = os.path.join(args.in_dir, "runs.csv")
    if not os.path.exists(runs_csv):
        print(f"report: no runs.csv under {args.in_dir}", file=sys.stderr)
        return 2
    table = H.load_runs_csv(runs_csv)
    paths = H.write_report(table, args.out, with_reference=args.with_paper_reference)
    print(f"report written: {paths['txt']}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    x = rng.random((8, 310))
    truth = rng.integers(5, size=8)
    masks = L.gen_uniform_masks(truth, 0.6, 5, rng)
    onehot = np.zeros((8, 5))
    onehot[np.arange(8), truth] = 1.0
    cfg = _method_config(args)
    t = args.epoch if cfg.method == "cr" else 0
    loss_fn, params = M.make_gradcheck_loss(cfg, x, masks, onehot, t=t,
                                            total_epochs=30, model_seed=args.seed,
                                            noise_seed=args.seed)
    budget = None if args.samples == 0 else args.samples
    err = K.gradcheck(loss_fn, params, eps=args.eps,
                      max_coords_per_param=budget, rng=np.random.default_rng(args.seed))
    status = "ok" if err <= args.threshold else "FAIL"
    print(f"gradcheck {cfg.label()}{'+ld' if cfg.ld else ''}: "
          f"max relative error {err:.3e} ({status})")
    return 0 if err <= args.threshold else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "gen-labels": cmd_gen_labels,
    "train": cmd_train,
    "grid": cmd_grid,
    "report": cmd_report,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (K.KernelError, M.MethodError, L.LabelError, D.DataError,
            H.HarnessError, FileNotFoundError) as exc:
        print(f"pllkit {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
