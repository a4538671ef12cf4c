"""Command-line interface: dataset generation, training, evaluation,
representation verification, and one-step error diagnostics.

Exit codes: 0 success, 2 invalid configuration, 3 I/O or file-format failure,
4 divergence (training or flow proxy), 5 verification tolerance breach. Every
failure prints a single line starting with ``error:`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import datagen
from .datagen import generate_dataset, load_dataset, save_dataset
from .errors import ConfigError, DivergenceError, FormatError, SolverFailureError
from .fields import Field
from .integrators import StepperConfig, local_error_diagnostic
from .metrics import eval_metrics, save_metrics_csv
from .network import (
    RELU,
    RELU2,
    construct_linear,
    construct_quadratic,
    eval_net,
    leaky_relu,
    load_checkpoint,
    save_checkpoint,
)
from .stencils import advection_spec, eval_rhs, fisher_spec, heat_spec
from .training import TrainConfig, init_params, save_history_csv, train_curriculum

_SCHEME_FLAG = {"euler": "euler", "norm-projected": "norm_projected_euler"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def build_pde(tag: str, alpha: float, b, dx: float):
    if tag == "advection":
        return advection_spec(b[0], b[1], dx)
    if tag == "heat":
        return heat_spec(alpha, dx)
    if tag == "fisher":
        return fisher_spec(alpha, dx)
    raise ValueError(f"unknown pde {tag!r}")


def _load_config(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("--config must contain a JSON object")
    return doc


def _pick(flag_value, config: dict, key: str, default):
    """Explicit flag > config file entry > built-in default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def _add_gen(sub):
    par = sub.add_parser("gen", help="generate a reference dataset")
    par.add_argument("--pde", required=True, choices=datagen.PDE_TAGS)
    par.add_argument("--n", type=int, default=8, help="number of sequences")
    par.add_argument("--m", type=int, default=40, help="steps per sequence")
    par.add_argument("--p", type=int, default=32, help="grid points per axis")
    par.add_argument("--dt", type=float, default=None, help="step size (default per PDE)")
    par.add_argument("--alpha", type=float, default=0.01)
    par.add_argument("--b", type=float, nargs=2, default=(1.0, 1.0), metavar=("B1", "B2"))
    par.add_argument("--seed", type=int, default=0)
    par.add_argument("--min-norm", type=float, default=None,
                     help="fisher initial-condition norm threshold override")
    par.add_argument("--oversample", action="store_true",
                     help="solve on a 2x finer grid and subsample")
    par.add_argument("--out", required=True)


def cmd_gen(args) -> int:
    ds = generate_dataset(
        args.pde,
        n_sequences=args.n,
        n_steps=args.m,
        p=args.p,
        dt=args.dt,
        seed=args.seed,
        alpha=args.alpha,
        b=tuple(args.b),
        min_norm=args.min_norm,
        oversample=args.oversample,
    )
    save_dataset(ds, args.out)
    norms = np.sqrt(np.sum(ds.frames[:, 0] ** 2, axis=(-2, -1)))
    print(
        f"wrote {args.out}: pde={ds.pde_tag} N={ds.n_sequences} M={ds.n_steps} "
        f"p={ds.p} dt={ds.dt:.6g} |U0|_F min/mean/max = "
        f"{norms.min():.4g}/{norms.mean():.4g}/{norms.max():.4g}"
    )
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _add_train(sub):
    par = sub.add_parser("train", help="train a model on a dataset")
    par.add_argument("--data", required=True)
    par.add_argument("--arch", choices=("linear-relu", "quadratic-relu2"), default=None,
                     help="default: quadratic-relu2 for fisher data, else linear-relu")
    par.add_argument("--channels", type=int, default=None,
                     help="default: 2 (linear) or 10 (quadratic)")
    par.add_argument("--ksize", type=int, default=None, help="filter size (default 5)")
    par.add_argument("--scheme", choices=tuple(_SCHEME_FLAG), default=None)
    par.add_argument("--substeps", type=int, default=None, help="default 5")
    par.add_argument("--noise-eps", type=float, default=None, help="default 0")
    par.add_argument("--seed", type=int, default=None)
    par.add_argument("--epochs-per-stage", type=int, default=None, help="default 300")
    par.add_argument("--lr0", type=float, default=None, help="default 5e-3")
    par.add_argument("--lr-drop-epochs", type=str, default=None,
                     help="comma list, default 135,270")
    par.add_argument("--stage-rollouts", type=str, default=None,
                     help="comma list, default 2,3,4")
    par.add_argument("--batch-size", type=int, default=None, help="default 32")
    par.add_argument("--checkpoint-every", type=int, default=None)
    par.add_argument("--config", default=None, help="JSON file with defaults for any flag")
    par.add_argument("--out-checkpoint", required=True)
    par.add_argument("--history-csv", default=None)


def _train_setup(args, ds):
    config = _load_config(args.config)
    arch = _pick(args.arch, config, "arch",
                 "quadratic-relu2" if ds.pde_tag == "fisher" else "linear-relu")
    if arch == "linear-relu":
        channels = int(_pick(args.channels, config, "channels", 2))
        activation = RELU
    else:
        channels = int(_pick(args.channels, config, "channels", 10))
        activation = RELU2
    ksize = int(_pick(args.ksize, config, "ksize", 5))
    scheme = _SCHEME_FLAG[_pick(args.scheme, config, "scheme", "euler")]
    substeps = int(_pick(args.substeps, config, "substeps", 5))
    noise_eps = float(_pick(args.noise_eps, config, "noise_eps", 0.0))
    seed = int(_pick(args.seed, config, "seed", 0))
    epochs = int(_pick(args.epochs_per_stage, config, "epochs_per_stage", 300))
    lr0 = float(_pick(args.lr0, config, "lr0", 5e-3))
    drops = _pick(
        _parse_int_list(args.lr_drop_epochs) if args.lr_drop_epochs is not None else None,
        config, "lr_drop_epochs", [135, 270],
    )
    rollouts = _pick(
        _parse_int_list(args.stage_rollouts) if args.stage_rollouts is not None else None,
        config, "stage_rollouts", [2, 3, 4],
    )
    batch_size = int(_pick(args.batch_size, config, "batch_size", 32))
    tcfg = TrainConfig(
        epochs_per_stage=epochs,
        lr0=lr0,
        lr_drop_epochs=tuple(int(d) for d in drops),
        stage_rollouts=tuple(int(q) for q in rollouts),
        batch_size=batch_size,
        seed=seed,
    )
    stepper = StepperConfig(dt=ds.dt, substeps=substeps, scheme=scheme)
    theta0 = init_params(channels, ksize, activation, seed=seed)
    return theta0, tcfg, stepper, noise_eps


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    theta0, tcfg, stepper, noise_eps = _train_setup(args, ds)
    extra = {
        "scheme": stepper.scheme,
        "substeps": stepper.substeps,
        "dt": stepper.dt,
        "pde_tag": ds.pde_tag,
        "noise_eps": noise_eps,
    }
    try:
        theta, history = train_curriculum(
            theta0,
            ds,
            tcfg,
            stepper,
            noise_eps=noise_eps,
            checkpoint_every=args.checkpoint_every,
            checkpoint_path=args.out_checkpoint,
        )
    except DivergenceError as exc:
        last = getattr(exc, "last_theta", None)
        if last is not None:
            save_checkpoint(last, args.out_checkpoint, extra)
            if args.history_csv:
                save_history_csv(getattr(exc, "history", []), args.history_csv)
        return _fail(f"training diverged: {exc} (last good checkpoint saved)", 4)
    save_checkpoint(theta, args.out_checkpoint, extra)
    if args.history_csv:
        save_history_csv(history, args.history_csv)
    final = history[-1].loss if history else float("nan")
    print(f"wrote {args.out_checkpoint}: final epoch loss {final:.6e}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _add_eval(sub):
    par = sub.add_parser("eval", help="rollout metrics of a checkpoint on a dataset")
    par.add_argument("--data", required=True)
    par.add_argument("--checkpoint", required=True)
    par.add_argument("--horizon", type=int, default=40)
    par.add_argument("--scheme", choices=tuple(_SCHEME_FLAG), default=None,
                     help="default: the scheme recorded in the checkpoint")
    par.add_argument("--substeps", type=int, default=None)
    par.add_argument("--out-csv", default=None, help="default: CSV to stdout")


def _checkpoint_extra(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh).get("extra", {})


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    theta = load_checkpoint(args.checkpoint)
    extra = _checkpoint_extra(args.checkpoint)
    scheme = _SCHEME_FLAG[args.scheme] if args.scheme else extra.get("scheme", "euler")
    substeps = args.substeps if args.substeps else int(extra.get("substeps", 5))
    cfg = StepperConfig(dt=ds.dt, substeps=substeps, scheme=scheme)
    series = eval_metrics(theta, cfg, ds, args.horizon)
    if args.out_csv:
        save_metrics_csv(series, args.out_csv)
        print(
            f"wrote {args.out_csv}: horizon {series.horizon}, "
            f"rE({series.horizon}) = {series.rel[-1]:.6e}"
        )
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(["m", "maxE", "mse", "rE"])
        for m in range(series.horizon):
            writer.writerow([m + 1, series.max_abs[m], series.mse[m], series.rel[m]])
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _add_verify(sub):
    par = sub.add_parser("verify", help="check the exact-representation property")
    par.add_argument("--theorem", required=True, choices=("1", "2", "leaky"))
    par.add_argument("--pde", required=True, choices=datagen.PDE_TAGS)
    par.add_argument("--trials", type=int, default=100)
    par.add_argument("--tol", type=float, default=None,
                     help="default 1e-12 (linear) / 1e-10 (quadratic)")
    par.add_argument("--p", type=int, default=32)
    par.add_argument("--ksize", type=int, default=5)
    par.add_argument("--alpha", type=float, default=0.01)
    par.add_argument("--b", type=float, nargs=2, default=(1.0, 1.0))
    par.add_argument("--slope", type=float, default=0.3, help="leaky slope")
    par.add_argument("--seed", type=int, default=0)


def cmd_verify(args) -> int:
    dx = 1.0 / args.p
    spec = build_pde(args.pde, args.alpha, args.b, dx)
    if args.theorem in ("2", "leaky"):
        if spec.n_interactions:
            raise ValueError(
                f"the linear construction does not cover {args.pde!r}; use --theorem 1"
            )
        act = RELU if args.theorem == "2" else leaky_relu(args.slope)
        theta = construct_linear(spec.linear, args.ksize, act)
        tol = 1e-12 if args.tol is None else args.tol
    else:
        theta = construct_quadratic(spec, args.ksize)
        tol = 1e-10 if args.tol is None else args.tol
    lo, hi = (0.0, 2.0) if args.pde == "fisher" else (-1.0, 1.0)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        u = Field(rng.uniform(lo, hi, size=(args.p, args.p)), dx)
        dev = float(np.max(np.abs(eval_net(theta, u).data - eval_rhs(spec, u).data)))
        worst = max(worst, dev)
    print(f"max deviation over {args.trials} random fields: {worst:.3e} (tol {tol:g})")
    if worst <= tol:
        return 0
    return _fail(f"representation check failed: {worst:.3e} > {tol:g}", 5)


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def _add_diagnose(sub):
    par = sub.add_parser("diagnose", help="one-step error split over a dt sweep")
    par.add_argument("--checkpoint", required=True)
    par.add_argument("--pde", required=True, choices=datagen.PDE_TAGS)
    par.add_argument("--dt-sweep", type=str, default=None,
                     help="comma list of step sizes; default d,d/2,d/4 from the PDE")
    par.add_argument("--p", type=int, default=32)
    par.add_argument("--alpha", type=float, default=0.01)
    par.add_argument("--b", type=float, nargs=2, default=(1.0, 1.0))
    par.add_argument("--substeps", type=int, default=None)
    par.add_argument("--scheme", choices=tuple(_SCHEME_FLAG), default=None)
    par.add_argument("--proxy-steps", type=int, default=200)
    par.add_argument("--ic", choices=("smooth", "random"), default="smooth",
                     help="probe state; the Richardson fit needs the smooth one "
                          "to stay in the asymptotic regime at CFL-scale steps")
    par.add_argument("--seed", type=int, default=0)
    par.add_argument("--out-csv", default=None)


def cmd_diagnose(args) -> int:
    theta = load_checkpoint(args.checkpoint)
    extra = _checkpoint_extra(args.checkpoint)
    scheme = _SCHEME_FLAG[args.scheme] if args.scheme else extra.get("scheme", "euler")
    substeps = args.substeps if args.substeps else int(extra.get("substeps", 5))
    dx = 1.0 / args.p
    spec = build_pde(args.pde, args.alpha, args.b, dx)
    if args.dt_sweep:
        sweep = _parse_float_list(args.dt_sweep)
    else:
        base = datagen.default_dt(args.pde, args.p, args.alpha)
        sweep = [base, base / 2.0, base / 4.0]
    if not sweep:
        raise ValueError("empty dt sweep")
    if args.ic == "random":
        rng = np.random.default_rng(args.seed)
        if args.pde == "advection":
            u0 = datagen.random_ic_advection(rng, args.p)
        else:
            u0 = datagen.random_ic_heat(rng, args.p)
    else:
        x = datagen.grid_coordinates(args.p)
        data = np.sin(2 * np.pi * x)[:, None] * np.sin(2 * np.pi * x)[None, :]
        u0 = Field(data + (1.0 if args.pde == "advection" else 0.3), dx)
    cfg = StepperConfig(dt=max(sweep), substeps=substeps, scheme=scheme)
    reports = [
        local_error_diagnostic(spec, theta, cfg, u0, args.proxy_steps, dt=dt)
        for dt in sweep
    ]
    order = ""
    if len(reports) >= 2 and all(r.flow_error > 0 and r.dt > 0 for r in reports):
        slope = np.polyfit(
            np.log([r.dt for r in reports]), np.log([r.flow_error for r in reports]), 1
        )[0]
        order = f"{slope:.4f}"
    rows = [
        [r.dt, r.flow_error, r.vf_mismatch_sup, r.lipschitz_estimate, order]
        for r in reports
    ]
    header = ["dt", "flow_error", "vf_mismatch", "lipschitz_estimate", "fitted_order"]
    if args.out_csv:
        with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"wrote {args.out_csv}: fitted temporal order {order or 'n/a'}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
        print(f"fitted temporal order: {order or 'n/a'}")
    return 0


# ---------------------------------------------------------------------------
# study
# ---------------------------------------------------------------------------


def _add_study(sub):
    par = sub.add_parser(
        "study", help="preset comparisons; 'advection' trains the four stability variants"
    )
    par.add_argument("preset", choices=("advection",))
    par.add_argument("--out-dir", required=True)
    par.add_argument("--p", type=int, default=None)
    par.add_argument("--n-train", type=int, default=None)
    par.add_argument("--n-test", type=int, default=None)
    par.add_argument("--m-train", type=int, default=None)
    par.add_argument("--horizon", type=int, default=None)
    par.add_argument("--dt", type=float, default=None)
    par.add_argument("--b", type=float, nargs=2, default=None)
    par.add_argument("--noise-eps", type=float, default=None)
    par.add_argument("--epochs-per-stage", type=int, default=None)
    par.add_argument("--batch-size", type=int, default=None)
    par.add_argument("--ksize", type=int, default=None)
    par.add_argument("--substeps", type=int, default=None)
    par.add_argument("--seed", type=int, default=None)
    par.add_argument("--config", default=None)


STUDY_VARIANTS = (
    ("plain", "euler", False),
    ("noise", "euler", True),
    ("norm_projected", "norm_projected_euler", False),
    ("norm_projected_noise", "norm_projected_euler", True),
)


def cmd_study(args) -> int:
    import os

    config = _load_config(args.config)
    p = int(_pick(args.p, config, "p", 32))
    n_train = int(_pick(args.n_train, config, "n_train", 64))
    n_test = int(_pick(args.n_test, config, "n_test", 30))
    m_train = int(_pick(args.m_train, config, "m_train", 4))
    horizon = int(_pick(args.horizon, config, "horizon", 40))
    dt = float(_pick(args.dt, config, "dt", 0.02))
    b = tuple(_pick(args.b, config, "b", (1.0, 1.0)))
    noise_eps = float(_pick(args.noise_eps, config, "noise_eps", 1e-2))
    epochs = int(_pick(args.epochs_per_stage, config, "epochs_per_stage", 40))
    batch_size = int(_pick(args.batch_size, config, "batch_size", 32))
    ksize = int(_pick(args.ksize, config, "ksize", 5))
    substeps = int(_pick(args.substeps, config, "substeps", 5))
    seed = int(_pick(args.seed, config, "seed", 0))

    os.makedirs(args.out_dir, exist_ok=True)
    train_ds = generate_dataset("advection", n_train, m_train, p, dt=dt, seed=seed, b=b)
    test_ds = generate_dataset("advection", n_test, horizon, p, dt=dt, seed=seed + 1, b=b)
    save_dataset(train_ds, os.path.join(args.out_dir, "advection_train.pxd"))
    save_dataset(test_ds, os.path.join(args.out_dir, "advection_test.pxd"))

    drop = max(1, epochs // 2)
    tcfg = TrainConfig(
        epochs_per_stage=epochs,
        lr_drop_epochs=(drop,) if epochs > 1 else (),
        batch_size=batch_size,
        seed=seed,
    )
    summary = []
    for name, scheme, with_noise in STUDY_VARIANTS:
        stepper = StepperConfig(dt=dt, substeps=substeps, scheme=scheme)
        theta0 = init_params(2, ksize, RELU, seed=seed)
        theta, history = train_curriculum(
            theta0, train_ds, tcfg, stepper, noise_eps=noise_eps if with_noise else 0.0
        )
        ckpt = os.path.join(args.out_dir, f"advection_{name}.ckpt.json")
        save_checkpoint(
            theta, ckpt,
            {"scheme": scheme, "substeps": substeps, "dt": dt, "pde_tag": "advection"},
        )
        series = eval_metrics(theta, stepper, test_ds, horizon)
        save_metrics_csv(series, os.path.join(args.out_dir, f"advection_{name}.metrics.csv"))
        summary.append((name, history[-1].loss if history else float("nan"), series.rel[-1]))
        print(f"{name}: final loss {summary[-1][1]:.4e}, rE({horizon}) = {series.rel[-1]:.4e}")

    with open(os.path.join(args.out_dir, "summary.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "final_loss", f"rE_{horizon}"])
        writer.writerows(summary)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    par = _Parser(prog="pixelpde", description=__doc__)
    sub = par.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_verify(sub)
    _add_diagnose(sub)
    _add_study(sub)
    return par


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "diagnose": cmd_diagnose,
    "study": cmd_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help; our error() raises SystemExit(2)
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, ConfigError) as exc:
        return _fail(str(exc), 2)
    except FormatError as exc:
        return _fail(f"{exc} (byte offset {exc.offset})", 3)
    except OSError as exc:
        return _fail(str(exc), 3)
    except (DivergenceError, SolverFailureError) as exc:
        return _fail(str(exc), 4)


if __name__ == "__main__":
    sys.exit(main())
