"""Command-line entry point: ``safegame {gamma,verify-exact,train,simulate,evaluate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import (ConfigurationError, DomainError, NumericError, SafetyViolation,
                     UnsupportedOperation)
from .game import PredefinedTimeParams
from .simulator import (accumulate_cost, evaluate_surrogate, evaluation_grid, integrate_batch,
                        metrics_csv, settling_time, trajectory_csv)
from .strategies import closed_form_pair, feedback_pair
from .trainer import sample_collocation, train
from .valuenet import MLP, SurrogateValue, load_checkpoint
from .verify import exact_suite

log = logging.getLogger("safegame")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


class Outputs:
    """Files written under ``--out``; ``finish`` adds metadata.json and manifest.txt."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.started = datetime.now(timezone.utc).isoformat()
        self.t0 = time.perf_counter()

    def write(self, rel, text):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        if rel not in self.files:
            self.files.append(rel)
        return path

    def finish(self, command, extra=None):
        meta = {"command": command, "started": self.started,
                "finished": datetime.now(timezone.utc).isoformat(),
                "elapsed_seconds": time.perf_counter() - self.t0, **(extra or {})}
        self.write("metadata.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
        self.write("manifest.txt", "\n".join(sorted(self.files + ["manifest.txt"])) + "\n")


def _config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.default()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _outputs(args, cfg, required=True):
    out = args.out or cfg["out"]
    if out is None:
        if required:
            raise ConfigurationError("no output directory: pass --out or set 'out' in the config")
        return None
    return Outputs(out)


def _surrogate_for(cfg, problem, checkpoint):
    """``(value, pair)`` for ``checkpoint`` ("exact" or a checkpoint path)."""
    if checkpoint == "exact":
        if problem.exact is None:
            raise UnsupportedOperation(f"example {problem.name!r} has no exact value")
        if problem.name in ("bounded", "unbounded"):
            sp = problem.strategy_params
            pair = closed_form_pair(problem.name, sp.gamma1, sp.gamma2)
        else:
            pair = feedback_pair(problem.game, problem.exact)
        return problem.exact, pair
    if problem.barrier is None:
        raise UnsupportedOperation(f"example {problem.name!r} defines no barrier for a surrogate")
    surrogate, w, header = load_checkpoint(checkpoint, barrier=problem.barrier)
    want = cfg.mlp_config()
    got = surrogate.net.config
    for field in ("hidden_layers", "hidden_width", "activation"):
        if getattr(got, field) != getattr(want, field):
            raise ConfigurationError(
                f"checkpoint {checkpoint}: {field}={getattr(got, field)!r} but config has "
                f"{getattr(want, field)!r}")
    bound = surrogate.bind(w)
    return bound, feedback_pair(problem.game, bound)


def _timing(problem):
    return {"gamma": problem.ptp.gamma, "T_p": problem.ptp.T_p}


def _initial_states(cfg, problem):
    s = cfg["simulation"]
    if s["initial_conditions"]:
        path = s["initial_conditions"]
        try:
            with open(path) as fh:
                lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
        except OSError as exc:
            raise ConfigurationError(f"cannot read initial conditions {path}: {exc}") from None
        rows = [ln.replace(",", " ").split() for ln in lines]
        try:
            X0 = np.array([[float(v) for v in r] for r in rows], dtype=float)
        except ValueError:
            # header line
            X0 = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        if X0.ndim != 2 or X0.shape[1] != problem.game.n:
            raise ConfigurationError(f"{path}: expected rows of {problem.game.n} numbers")
        return X0
    # offset keeps this stream distinct from the collocation draw
    return sample_collocation(problem.game.safe_set, s["random_count"], s["random_margin"],
                              cfg["seed"] + 1).points


# -- commands ---------------------------------------------------------------------------

def cmd_gamma(args):
    cfg = _config(args)
    ptp = cfg.predefined_time()
    given = {k: getattr(args, k) for k in ("alpha", "beta", "p", "q", "r")}
    if any(v is not None for v in given.values()):
        vals = {k: getattr(ptp, k) if v is None else v for k, v in given.items()}
        ptp = PredefinedTimeParams(**vals, T_p=args.T_p)
    elif args.T_p is not None:
        ptp = PredefinedTimeParams(ptp.alpha, ptp.beta, ptp.p, ptp.q, ptp.r, args.T_p)
    print(f"gamma = {ptp.gamma:.12g}")
    print(f"T_p = {ptp.T_p:.12g}  (gamma/T_p = {ptp.rate:.12g})")
    out = _outputs(args, cfg, required=False)
    if out:
        out.write("gamma.csv", "alpha,beta,p,q,r,gamma,T_p\n" + ",".join(
            f"{v:.17g}" for v in (ptp.alpha, ptp.beta, ptp.p, ptp.q, ptp.r, ptp.gamma, ptp.T_p)) + "\n")
        out.finish("gamma")
    return EXIT_OK


def cmd_verify_exact(args):
    cfg = _config(args)
    problem = cfg.problem()
    results = exact_suite(problem, seed=cfg["seed"])
    for r in results:
        print(r.line())
    out = _outputs(args, cfg, required=False)
    if out:
        lines = ["check,worst,tol,passed," + ",".join(f"x{i + 1}" for i in range(problem.game.n))]
        for r in results:
            lines.append(f"{r.name},{r.worst:.17g},{r.tol:.17g},{int(r.passed)},"
                         + ",".join(f"{v:.17g}" for v in r.worst_point))
        out.write("verify.csv", "\n".join(lines) + "\n")
        out.finish("verify-exact", _timing(problem))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_train(args):
    cfg = _config(args)
    problem = cfg.problem()
    if problem.barrier is None:
        raise UnsupportedOperation(f"example {problem.name!r} defines no barrier for a surrogate")
    out = _outputs(args, cfg)
    surrogate = SurrogateValue(MLP(cfg.mlp_config()), problem.barrier)
    state = {}

    def on_record(report):
        state["report"] = report
        out.write("report.csv", report.to_csv())
        k = report.rows[-1]["outer_iter"]
        rel = f"checkpoints/checkpoint_{k:03d}.txt"
        if rel not in out.files:
            out.files.append(rel)

    try:
        w, report, _ = train(problem, surrogate, cfg.train_config(), checkpoint_dir=out.root / "checkpoints",
                             on_record=on_record)
    except NumericError:
        rep = state.get("report")
        out.finish("train", {"failed": True, **_timing(problem),
                             "wall_times": rep.wall_times if rep else [],
                             "settings": rep.settings if rep else {}})
        raise
    last = report.rows[-1]
    print(f"outer {last['outer_iter']}: E={last['E']:.6g} max_l={last['max_l']:.3g} "
          f"violated_fraction={last['violated_fraction']:.4f}")
    k = last["outer_iter"]
    print(f"final checkpoint: {out.root / 'checkpoints' / f'checkpoint_{k:03d}.txt'}")
    out.finish("train", {"wall_times": report.wall_times, "settings": report.settings, **_timing(problem),
                         "config": cfg.data})
    return EXIT_OK


def cmd_simulate(args):
    cfg = _config(args)
    if not args.checkpoint:
        raise ConfigurationError("simulate needs --checkpoint <path> or --checkpoint exact")
    problem = cfg.problem()
    _, pair = _surrogate_for(cfg, problem, args.checkpoint)
    out = _outputs(args, cfg)
    X0 = _initial_states(cfg, problem)
    sim = cfg.sim_config()
    horizon = sim.horizon or problem.ptp.T_p
    trajs = integrate_batch(problem.game, pair, X0, sim, horizon=horizon)
    tol = cfg["simulation"]["settle_tol"]
    n = problem.game.n
    rows = [",".join(["index"] + [f"x0_{i + 1}" for i in range(n)]
                     + ["status", "settled_at", "min_safety_level", "final_norm", "cost"])]
    counts = {}
    for i, (x0, tr) in enumerate(zip(X0, trajs)):
        out.write(f"trajectories/traj_{i:03d}.csv", trajectory_csv(tr))
        counts[tr.status] = counts.get(tr.status, 0) + 1
        t_set = settling_time(tr, tol) if tr.status == "ok" else None
        cost = accumulate_cost(tr) if tr.complete else float("nan")
        rows.append(",".join([str(i)] + [f"{v:.17g}" for v in x0] + [
            tr.status, "" if t_set is None else f"{t_set:.17g}",
            f"{tr.min_safety_level:.17g}", f"{tr.final_norm:.17g}", f"{cost:.17g}"]))
    out.write("summary.csv", "\n".join(rows) + "\n")
    settled = sum(1 for tr in trajs if tr.status == "ok" and tr.final_norm <= tol)
    print(f"{len(trajs)} trajectories: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
          + f"; |x(T)| <= {tol:g}: {settled}")
    out.finish("simulate", {"horizon": horizon, "checkpoint": args.checkpoint, **_timing(problem)})
    if counts.get("outside"):
        return EXIT_VALIDATION
    if counts.get("safety_violation") or counts.get("numeric"):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _config(args)
    if not args.checkpoint:
        raise ConfigurationError("evaluate needs --checkpoint <path> or --checkpoint exact")
    problem = cfg.problem()
    if problem.exact is None:
        raise UnsupportedOperation(f"example {problem.name!r} has no exact value to compare against")
    approx, _ = _surrogate_for(cfg, problem, args.checkpoint)
    out = _outputs(args, cfg)
    ev = cfg["evaluation"]
    grid = evaluation_grid(problem.game.safe_set, ev["grid_per_axis"], ev["grid_margin"])
    table, summary = evaluate_surrogate(problem.game, approx, problem.exact, grid)
    out.write("metrics.csv", metrics_csv(table))
    out.write("metrics_summary.csv", "metric,value\n" + "".join(
        f"{k},{v:.17g}\n" for k, v in summary.items()))
    for k, v in summary.items():
        print(f"{k} = {v:.6g}")
    out.finish("evaluate", {"checkpoint": args.checkpoint, "grid_points": int(len(grid)),
                            **_timing(problem)})
    return EXIT_OK


COMMANDS = {"gamma": cmd_gamma, "verify-exact": cmd_verify_exact, "train": cmd_train,
            "simulate": cmd_simulate, "evaluate": cmd_evaluate}


def build_parser():
    parser = argparse.ArgumentParser(prog="safegame", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment config (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (overrides the config's 'out')")
        p.add_argument("--seed", type=int, help="override the config seed")
        if name in ("simulate", "evaluate"):
            p.add_argument("--checkpoint", help="checkpoint file, or 'exact'")
        if name == "gamma":
            for k in ("alpha", "beta", "p", "q", "r"):
                p.add_argument(f"--{k}", type=float)
            p.add_argument("--T_p", type=float)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, DomainError, UnsupportedOperation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, SafetyViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
