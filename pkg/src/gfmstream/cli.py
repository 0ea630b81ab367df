"""Command-line front end: generate planted problems, train, evaluate,
run the verification suites and sweep experiment axes.

Every run is fully determined by its flags plus --seed, and writes the
formats from the io module only.  Exit codes: 0 success, 1 divergence or a
failed verification, 2 usage/validation errors.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .datagen import SpectrumSpec, open_stream, sample_ground_truth
from .diagnostics import (LEMMA_IDS, check_lemma, estimate_rip_delta,
                          fit_convergence_rate, noisy_floor_experiment,
                          plateau_epsilon)
from .model import OracleCapError, SolverConfig
from .solver import train


def _add_spectrum_flags(p):
    p.add_argument("--spectrum", help="explicit signed eigenvalues, e.g. '1,-0.5'")
    p.add_argument("--cond", type=float,
                   help="condition-number spectrum sigma_1/sigma_k")
    p.add_argument("--signs", default="positive",
                   choices=["positive", "alternating", "random"])
    p.add_argument("--residual-magnitude", type=float, default=0.0)
    p.add_argument("--residual-decay", type=float, default=0.5)


def _add_truth_flags(p):
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    _add_spectrum_flags(p)
    p.add_argument("--w-norm", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0,
                   help="label noise proxy std")


def _spectrum_from_args(args):
    if args.spectrum is not None and args.cond is not None:
        raise ValueError("--spectrum and --cond are mutually exclusive")
    if args.spectrum is not None:
        values = [float(tok) for tok in args.spectrum.split(",") if tok.strip()]
        return SpectrumSpec.explicit(values,
                                     residual_magnitude=args.residual_magnitude,
                                     residual_decay=args.residual_decay)
    cond = args.cond if args.cond is not None else 2.0
    return SpectrumSpec.condition(args.k, cond, signs=args.signs,
                                  residual_magnitude=args.residual_magnitude,
                                  residual_decay=args.residual_decay)


def _truth_from_args(args, seed):
    spectrum = _spectrum_from_args(args)
    return sample_ground_truth(args.d, args.k, spectrum, w_norm=args.w_norm,
                               noise_proxy=args.noise, seed=seed)


def _truth_params(args, seed):
    return {
        "d": args.d, "k": args.k, "seed": seed,
        "spectrum_kind": "explicit" if args.spectrum is not None else "condition",
        "spectrum_values": ([float(t) for t in args.spectrum.split(",") if t.strip()]
                            if args.spectrum is not None else None),
        "cond": args.cond if args.cond is not None else 2.0,
        "signs": args.signs,
        "residual_magnitude": args.residual_magnitude,
        "residual_decay": args.residual_decay,
        "w_norm": args.w_norm, "noise_proxy": args.noise,
    }


def _truth_from_params(params):
    if params["spectrum_kind"] == "explicit":
        spectrum = SpectrumSpec.explicit(params["spectrum_values"],
                                         residual_magnitude=params["residual_magnitude"],
                                         residual_decay=params["residual_decay"])
    else:
        spectrum = SpectrumSpec.condition(params["k"], params["cond"],
                                          signs=params["signs"],
                                          residual_magnitude=params["residual_magnitude"],
                                          residual_decay=params["residual_decay"])
    return sample_ground_truth(params["d"], params["k"], spectrum,
                               w_norm=params["w_norm"],
                               noise_proxy=params["noise_proxy"],
                               seed=params["seed"])


def cmd_gen(args):
    seed = args.seed if args.seed is not None else 0
    params = _truth_params(args, seed)
    gt = _truth_from_params(params)  # validates the recipe
    gio.write_report(params, args.out)
    print(f"wrote truth recipe to {args.out} "
          f"(d={gt.d}, k={gt.k}, scale={gt.scale:.6g})")
    if args.dump_batches:
        stream = open_stream(gt, args.n, seed)
        out_dir = Path(args.out).resolve().parent
        for t in range(args.dump_batches):
            batch = stream.next_batch()
            rows = ["y," + ",".join(f"x_{j}" for j in range(gt.d))]
            for i in range(batch.n):
                cells = [format(batch.y[i], ".17g")]
                cells += [format(v, ".17g") for v in batch.x[:, i]]
                rows.append(",".join(cells))
            dump = out_dir / f"batch_{t:04d}.csv"
            dump.write_text("\n".join(rows) + "\n")
            print(f"wrote {dump}")
    return 0


def cmd_train(args):
    cfg = SolverConfig(d=args.d, k=args.k, n=args.n, t_max=args.T,
                       seed=args.seed, init_oversampling=args.oversampling,
                       init_power_iters=args.power_iters,
                       spectral_tol=args.spectral_tol,
                       spectral_max_iters=args.spectral_max_iters)
    gt_seed = args.gt_seed if args.gt_seed is not None else args.seed
    truth = _truth_from_args(args, gt_seed)
    source = open_stream(truth, cfg.n, cfg.seed)
    outcome = train(source, cfg, truth=truth, record_timings=args.record_timings)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gio.save_checkpoint(outcome.model,
                        gio.CheckpointMeta(cfg, outcome.batches_consumed),
                        out_dir / "checkpoint.gfm")
    gio.write_trace(outcome.trace, out_dir / "trace.csv")

    final = outcome.trace.records[-1]
    print(f"status={outcome.status} batches={outcome.batches_consumed}")
    print(f"final beta={final.beta:.6e} gamma={final.gamma:.6e} "
          f"epsilon={final.epsilon:.6e}")
    try:
        rate, r2 = fit_convergence_rate(outcome.trace)
        print(f"contraction rate={rate:.4f} (r^2={r2:.4f})")
    except ValueError as exc:
        print(f"contraction rate unavailable: {exc}")
    return 1 if outcome.status == "diverged" else 0


def cmd_eval(args):
    params = gio.read_report(args.gt)
    truth = _truth_from_params(params)
    model, meta = gio.load_checkpoint(args.checkpoint)
    from .diagnostics import recovery_error

    beta, gamma, eps = recovery_error(model, truth)
    print(f"beta={beta:.6e} gamma={gamma:.6e} epsilon={eps:.6e} "
          f"(batches_consumed={meta.batches_consumed})")
    if args.test_n:
        from .model import predict

        batch = open_stream(truth, args.test_n, params["seed"] + 1).next_batch()
        preds = np.array([predict(model, batch.x[:, i]) for i in range(batch.n)])
        rmse = float(np.sqrt(np.mean((preds - batch.y) ** 2)))
        print(f"prediction rmse on {args.test_n} fresh instances: {rmse:.6e}")
    return 0


def cmd_verify(args):
    if args.all:
        targets = list(LEMMA_IDS) + ["rip"]
    elif args.lemma:
        targets = [args.lemma]
    else:
        raise ValueError("choose --all or --lemma")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    all_passed = True
    for target in targets:
        if target == "rip":
            estimates = [estimate_rip_delta(args.d, args.k, nv, args.trials, rng)
                         for nv in (args.n, 2 * args.n, 4 * args.n)]
            slope = float(np.polyfit(np.log([e.n for e in estimates]),
                                     np.log([e.delta_hat for e in estimates]),
                                     1)[0])
            passed = -0.65 <= slope <= -0.35
            report = {"check": "rip", "d": args.d, "k": args.k,
                      "trials": args.trials, "estimates": estimates,
                      "exponent": slope, "passed": passed}
        else:
            rep = check_lemma(target, args.d, args.k, args.n, args.trials, rng)
            passed = rep.passed
            report = rep
        all_passed &= passed
        path = out_dir / f"verify_{target}.json"
        gio.write_report(report, path)
        print(f"{target}: exponent within band = {passed} -> {path}")
    return 0 if all_passed else 1


def cmd_sweep(args):
    values = [float(tok) for tok in args.values.split(",") if tok.strip()]
    if not values:
        raise ValueError("sweep axis has no values")
    rows = []
    for value in values:
        plateaus, rates, r2s = [], [], []
        for j in range(args.seeds):
            run_seed = args.seed + j
            d, k, n, noise, cond = args.d, args.k, args.n, args.noise, args.cond
            if args.axis == "n":
                n = int(value)
            elif args.axis == "xi":
                noise = value
            else:
                cond = value
            spectrum = (SpectrumSpec.explicit(
                            [float(t) for t in args.spectrum.split(",")])
                        if args.spectrum is not None
                        else SpectrumSpec.condition(k, cond if cond else 2.0,
                                                    signs=args.signs))
            gt = sample_ground_truth(d, k, spectrum, w_norm=args.w_norm,
                                     noise_proxy=noise, seed=run_seed)
            cfg = SolverConfig(d=d, k=k, n=n, t_max=args.T, seed=run_seed)
            outcome = train(open_stream(gt, n, run_seed), cfg, truth=gt)
            plateaus.append(plateau_epsilon(outcome.trace))
            try:
                rate, r2 = fit_convergence_rate(outcome.trace)
            except ValueError:
                rate, r2 = float("nan"), float("nan")
            rates.append(rate)
            r2s.append(r2)
        rows.append((value, float(np.median(plateaus)), float(np.median(rates)),
                     float(np.median(r2s))))
    lines = [f"{args.axis},plateau_epsilon,rate,r_squared"]
    for value, plateau, rate, r2 in rows:
        lines.append(",".join(format(v, ".17g") for v in (value, plateau, rate, r2)))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gfmstream",
        description="streaming low-rank quadratic regression: generate, train, "
                    "evaluate, verify, sweep")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a truth recipe (and optional batch dumps)")
    _add_truth_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=128, help="batch size for dumps")
    p.add_argument("--dump-batches", type=int, default=0)
    p.add_argument("--out", default="truth.json")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="run the one-pass solver on a planted stream")
    _add_truth_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--gt-seed", type=int, default=None,
                   help="separate truth seed (defaults to --seed)")
    p.add_argument("--oversampling", type=int, default=8)
    p.add_argument("--power-iters", type=int, default=6)
    p.add_argument("--spectral-tol", type=float, default=1e-10)
    p.add_argument("--spectral-max-iters", type=int, default=1000)
    p.add_argument("--record-timings", action="store_true",
                   help="store wall-clock per step (trace no longer byte-stable)")
    p.add_argument("--out-dir", default="run")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="recovery error of a checkpoint against a recipe")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--gt", required=True, help="truth recipe from `gen`")
    p.add_argument("--test-n", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify", help="concentration and near-isometry suites")
    p.add_argument("--all", action="store_true")
    p.add_argument("--lemma", choices=list(LEMMA_IDS) + ["rip"])
    p.add_argument("--d", type=int, default=24)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", default="reports")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("sweep", help="train across one axis, emit a plateau table")
    p.add_argument("--axis", choices=["n", "xi", "cond"], required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    _add_truth_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--seeds", type=int, default=5, help="runs per axis point")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OracleCapError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
