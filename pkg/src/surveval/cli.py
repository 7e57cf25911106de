"""Command-line pipeline: data generation, training, simulation, fields, plots.

Every command writes a JSON manifest with enough provenance (parameters,
seed, checkpoint hash) to re-derive its outputs with one invocation.
Primary outputs are byte-reproducible for identical inputs; manifests carry
timestamps and are exempt.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels, characteristics, closed_loop, gain_loss, mlp, svg
from .feedback import MODES, SelectionPolicy
from .game import GameParams, State

ENV_OUTDIR = "SURVEVAL_OUTDIR"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_config(path) -> dict:
    """Flat ``key = value`` file; keys use the long flag names with ``-`` or ``_``."""
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _game_params(args) -> GameParams:
    return GameParams(v_e=args.ve, v_p=args.vp, omega_e=args.we, rho=args.rho)


def _policy(args) -> SelectionPolicy:
    return SelectionPolicy(mode=args.policy, eps=args.eps)


def _write_manifest(outdir: Path, name: str, payload: dict) -> None:
    payload = dict(payload)
    payload["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    payload["kernel_backend"] = _kernels.backend_name()
    with open(outdir / name, "w") as f:
        json.dump(payload, f, indent=1, default=str)


def _params_dict(p: GameParams) -> dict:
    return {"v_e": p.v_e, "v_p": p.v_p, "omega_e": p.omega_e, "rho": p.rho}


def cmd_gen_data(args) -> int:
    p = _game_params(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    ds = characteristics.build_dataset(
        p, n_angles=args.angles, dtau=args.dtau, tau_max=args.tau_max,
        n_tributaries=args.tributaries, store_stride=args.stride,
    )
    csv_path = outdir / "dataset.csv"
    characteristics.write_dataset_csv(ds, csv_path)

    axis = (np.abs(ds.x) <= 1e-6) & (ds.y <= 0.0) & (ds.y >= -p.rho)
    axis_resid = float(np.abs(ds.v[axis] - (p.rho + ds.y[axis]) / (p.v_e - p.v_p)).max())
    ham = characteristics.hamiltonian_residual(ds.x, ds.y, ds.dvx, ds.dvy, p)
    _write_manifest(outdir, "gen_manifest.json", {
        "command": "gen-data",
        "params": _params_dict(p),
        "n_angles": args.angles,
        "n_tributaries": args.tributaries,
        "dtau": args.dtau,
        "tau_max": args.tau_max,
        "store_stride": args.stride,
        "rows": len(ds),
        "envelope_dropped": ds.n_envelope_dropped,
        "axis_oracle_max_residual": axis_resid,
        "hamiltonian_max_residual": float(np.abs(ham).max()),
        "elapsed_s": round(time.time() - t0, 2),
        "outputs": [str(csv_path)],
    })
    print(f"wrote {csv_path} ({len(ds)} rows, axis residual {axis_resid:.2e})")
    return 0


def _load_dataset(path) -> characteristics.Dataset:
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.csv"
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return characteristics.load_dataset_csv(path)


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = mlp.TrainConfig(
        seed=args.seed, learning_rate=args.lr, batch_size=args.batch,
        epochs=args.epochs, softsign_sharpness=args.beta_s,
        val_fraction=args.val_frac, patience=args.patience, lr_decay=args.lr_decay,
    )
    t0 = time.time()
    model, hist = mlp.train(ds, cfg)
    ckpt = outdir / "model.json"
    mlp.save_checkpoint(model, ckpt, seed=cfg.seed,
                        train_loss=hist["final_train_loss"],
                        val_loss=hist["best_val_loss"])
    metrics = {
        "initial_train_loss": hist["initial_train_loss"],
        "final_train_loss": hist["final_train_loss"],
        "best_val_loss": hist["best_val_loss"],
        "best_epoch": hist["best_epoch"],
        "epochs_run": hist["epochs_run"],
        "loss_ratio": hist["final_train_loss"] / hist["initial_train_loss"],
    }
    with open(outdir / "train_metrics.json", "w") as f:
        json.dump(metrics, f, indent=1)
    _write_manifest(outdir, "train_manifest.json", {
        "command": "train",
        "dataset": str(args.data),
        "config": cfg.__dict__,
        "checkpoint_sha256": _sha256(ckpt),
        "elapsed_s": round(time.time() - t0, 2),
        "outputs": [str(ckpt), str(outdir / "train_metrics.json")],
    })
    print(f"wrote {ckpt} (final/initial loss {metrics['loss_ratio']:.4f}, "
          f"{hist['epochs_run']} epochs)")
    return 0


def _load_model(path) -> mlp.MlpModel:
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return mlp.load_checkpoint(path)


def _parse_pairs(text: str) -> list[tuple[float, float]]:
    pairs = []
    for item in text.split(","):
        de, _, dp = item.partition(":")
        if not dp:
            raise ValueError(f"bad sampling pair {item!r}, expected 'de:dp'")
        pairs.append((float(de), float(dp)))
    return pairs


def cmd_simulate(args) -> int:
    p = _game_params(args)
    model = _load_model(args.checkpoint)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    pairs = _parse_pairs(args.pairs)
    s0 = State(args.x0, args.y0)
    policy = _policy(args)
    t0 = time.time()
    rows = []
    outputs = []
    for de, dp in pairs:
        cfg = closed_loop.SampleHoldConfig(delta_e=de, delta_p=dp, dt=args.dt,
                                           t_max=args.t_max, policy=policy)
        tr = closed_loop.simulate(s0, model, cfg, p)
        rows.append((de, dp, tr.T))
        traj_path = outdir / f"traj_de{de:g}_dp{dp:g}.csv"
        closed_loop.trajectory_export(tr, traj_path)
        outputs.append(str(traj_path))
    table = outdir / "game_times.csv"
    with open(table, "w") as f:
        f.write("delta_e,delta_p,T\n")
        for de, dp, T in rows:
            f.write("%.17g,%.17g,%s\n" % (de, dp, "%.17g" % T if T is not None else "nan"))
    outputs.append(str(table))
    _write_manifest(outdir, "simulate_manifest.json", {
        "command": "simulate",
        "params": _params_dict(p),
        "x0": args.x0, "y0": args.y0,
        "pairs": pairs,
        "dt": args.dt, "t_max": args.t_max,
        "policy": {"mode": policy.mode, "eps": policy.eps},
        "checkpoint_sha256": _sha256(args.checkpoint),
        "game_times": [(de, dp, T) for de, dp, T in rows],
        "elapsed_s": round(time.time() - t0, 2),
        "outputs": outputs,
    })
    for de, dp, T in rows:
        print(f"delta_e={de:g} delta_p={dp:g} -> T={T if T is not None else 'horizon exhausted'}")
    return 0


def cmd_gainloss(args) -> int:
    p = _game_params(args)
    model = _load_model(args.checkpoint)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    deltas = [float(d) for d in args.delta.split(",")]
    t0 = time.time()
    fields = gain_loss.field_sweep(deltas, args.res, model, p, policy=_policy(args))
    sha = _sha256(args.checkpoint)
    outputs = []
    for f in fields:
        path = outdir / f"gainloss_d{f.delta:g}.csv"
        gain_loss.save_field(f, path, checkpoint_hash=sha, params=p)
        outputs.extend([str(path), str(path) + ".json"])
        print(f"wrote {path}")
    _write_manifest(outdir, "gainloss_manifest.json", {
        "command": "gainloss",
        "params": _params_dict(p),
        "deltas": deltas,
        "res": args.res,
        "checkpoint_sha256": sha,
        "elapsed_s": round(time.time() - t0, 2),
        "outputs": outputs,
    })
    return 0


def cmd_render(args) -> int:
    p = _game_params(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.traj:
        trajs = []
        for path in args.traj:
            if not Path(path).exists():
                raise FileNotFoundError(f"trajectory not found: {path}")
            tr = closed_loop.trajectory_load(path)
            trajs.append((Path(path).stem, tr.x, tr.y))
        svg.trajectory_svg(trajs, out, rho=p.rho, title=args.title or "trajectories")
    elif args.gainloss:
        if not Path(args.gainloss).exists():
            raise FileNotFoundError(f"field file not found: {args.gainloss}")
        rows = gain_loss.load_field_csv(args.gainloss)
        comp = {"vmin": 2, "vmax": 3, "v": 4}[args.component]
        xs = np.unique(rows[:, 0])
        res = len(xs)
        grid = np.full((res, res), np.nan)
        xi = np.searchsorted(xs, rows[:, 0])
        yi = np.searchsorted(xs, rows[:, 1])
        grid[xi, yi] = rows[:, comp]
        svg.heatmap_svg(xs, xs, grid, out, rho=p.rho,
                        title=args.title or f"{args.component} ({Path(args.gainloss).name})")
    else:
        model = _load_model(args.checkpoint)
        coords = gain_loss.grid_coords(args.res, p)
        grid = np.full((args.res, args.res), np.nan)
        for i, x in enumerate(coords):
            for j, y in enumerate(coords):
                if x * x + y * y > p.rho * p.rho:
                    continue
                v, dv, u = mlp.forward(model, (x, y))
                grid[i, j] = {"value": v, "dvx": dv[0], "dvy": dv[1],
                              "ue": u[0], "up": u[1]}[args.field]
        lo, hi = (0.0, float(np.nanmax(grid))) if args.field == "value" else (None, None)
        svg.heatmap_svg(coords, coords, grid, out, rho=p.rho, lo=lo, hi=hi,
                        title=args.title or f"{args.field} field")
    print(f"wrote {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' config file; flags override")
    common.add_argument("--ve", type=float, default=1.5, help="evader speed")
    common.add_argument("--vp", type=float, default=1.0, help="pursuer speed")
    common.add_argument("--we", type=float, default=1.0, help="evader max turn rate")
    common.add_argument("--rho", type=float, default=1.0, help="surveillance radius")

    parser = argparse.ArgumentParser(
        prog="surveval",
        description="surveillance-evasion game pipeline: data, training, "
                    "simulation, gain/loss fields, figures",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    default_out = os.environ.get(ENV_OUTDIR, ".")

    g = sub.add_parser("gen-data", parents=[common],
                       help="generate the characteristic dataset")
    g.add_argument("--angles", type=int, default=720)
    g.add_argument("--tributaries", type=int, default=None)
    g.add_argument("--dtau", type=float, default=1e-3)
    g.add_argument("--tau-max", type=float, default=6.0)
    g.add_argument("--stride", type=int, default=20)
    g.add_argument("--out", default=os.path.join(default_out, "data"))
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train the network")
    t.add_argument("--data", required=True, help="dataset CSV or its directory")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=800)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-decay", type=float, default=0.9985)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--beta-s", type=float, default=10.0)
    t.add_argument("--val-frac", type=float, default=0.1)
    t.add_argument("--patience", type=int, default=200)
    t.add_argument("--out", default=os.path.join(default_out, "model"))
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", parents=[common],
                       help="sample-and-hold closed-loop runs")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--x0", type=float, required=True)
    s.add_argument("--y0", type=float, required=True)
    s.add_argument("--pairs", default="0.01:0.01,0.2:0.01,0.01:0.2,0.2:0.2",
                   help="comma list of delta_e:delta_p")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--t-max", type=float, default=20.0)
    s.add_argument("--policy", choices=MODES, default="network-direct")
    s.add_argument("--eps", type=float, default=1e-3)
    s.add_argument("--out", default=os.path.join(default_out, "sim"))
    s.set_defaults(func=cmd_simulate)

    gl = sub.add_parser("gainloss", parents=[common],
                        help="one-interval gain/loss fields")
    gl.add_argument("--checkpoint", required=True)
    gl.add_argument("--delta", default="0.05,0.1,0.2", help="comma list of hold times")
    gl.add_argument("--res", type=int, default=101)
    gl.add_argument("--policy", choices=MODES, default="network-direct")
    gl.add_argument("--eps", type=float, default=1e-3)
    gl.add_argument("--out", default=os.path.join(default_out, "fields"))
    gl.set_defaults(func=cmd_gainloss)

    r = sub.add_parser("render", parents=[common], help="emit SVG figures")
    r.add_argument("--out", required=True, help="output .svg path")
    r.add_argument("--title", default="")
    r.add_argument("--field", choices=("value", "dvx", "dvy", "ue", "up"),
                   default="value")
    r.add_argument("--checkpoint")
    r.add_argument("--res", type=int, default=201)
    r.add_argument("--gainloss", help="field CSV from the gainloss command")
    r.add_argument("--component", choices=("vmin", "vmax", "v"), default="vmin")
    r.add_argument("--traj", action="append",
                   help="trajectory CSV to overlay (repeatable)")
    r.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    # config file provides defaults; explicit flags override them
    probe, _ = parser.parse_known_args(argv)
    if getattr(probe, "config", None):
        try:
            raw = _read_config(probe.config)
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 1
        for action in parser._subparsers._group_actions[0].choices.values():
            known = {a.dest for a in action._actions}
            action.set_defaults(**{k: v for k, v in raw.items() if k in known})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, mlp.FormatError, mlp.NonFiniteLoss,
            characteristics.EmptyUsablePart) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
