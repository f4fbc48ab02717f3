"""Command-line entry point: ``tlmt compile|label|oracle|train|eval --config PATH``.

Exit codes: 0 success, 2 config error, 3 compile error, 4 runtime error.
Log level comes from ``TLMT_LOG`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import automaton
from .agent import METRIC_FIELDS, build_qfunction, evaluate, final_success, train
from .syntax import ParseError, ResolutionError, print_formula
from .tasks import ConfigError, TaskConfig, load_config

log = logging.getLogger("tlmt")

EXIT_OK, EXIT_CONFIG, EXIT_COMPILE, EXIT_RUNTIME = 0, 2, 3, 4


class TraceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# file helpers

def write_atomic(path, data):
    """Write bytes or text to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_trace(path, variables) -> np.ndarray:
    """Load a trace CSV whose columns start with the signature variables.

    A leading ``step`` column and trailing extra columns (as in trajectory
    dumps) are allowed.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise TraceError(f"cannot read trace: {e}") from None
    if not rows:
        raise TraceError("trace file is empty")
    header = [h.strip() for h in rows[0]]
    start = 1 if header and header[0] == "step" else 0
    got = tuple(header[start:start + len(variables)])
    if got != tuple(variables):
        raise TraceError(f"trace header {tuple(header)} does not match variables {tuple(variables)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise TraceError("trace has no steps")
    try:
        return np.array([[float(v) for v in r[start:start + len(variables)]] for r in body])
    except (ValueError, IndexError) as e:
        raise TraceError(f"bad trace row: {e}") from None


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRIC_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands

def cmd_compile(cfg: TaskConfig, args) -> int:
    task = cfg.compile()
    d = task.dfa
    before = d.metadata.get("states_before_minimization", d.num_states)
    report = {
        "letters": task.table.to_json(),
        "num_letters": d.num_letters,
        "states_before_minimization": before,
        "states": d.num_states,
        "accepting": sorted(d.accepting),
        "dead": sorted(task.dead),
        "abstraction": print_formula(task.prop),
    }
    if args.out:
        out = Path(args.out)
        write_atomic(out / "dfa.json", automaton.to_json(d, task.table.formulas))
        write_atomic(out / "dfa.dot", automaton.to_dot(d))
        write_atomic(out / "letters.json", json.dumps(report, indent=2) + "\n")
    print(f"letters |P| = {d.num_letters}")
    for name, formula in zip(task.table.names, task.table.formulas):
        print(f"  {name}: {formula}")
    print(f"states |Q| = {d.num_states} (before minimization: {before})")
    return EXIT_OK


def cmd_label(cfg: TaskConfig, args) -> int:
    task = cfg.compile()
    trace = read_trace(_need(args.trace, "--trace"), task.variables)
    labels = task.table.label_batch(trace, task.constants)
    k = task.dfa.num_letters
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "label", *[f"p{i}" for i in range(k)]])
    for t, nu in enumerate(labels):
        w.writerow([t, int(nu), *[(int(nu) >> i) & 1 for i in range(k)]])
    _emit(buf.getvalue(), args.out, "labels.csv")
    return EXIT_OK


def cmd_oracle(cfg: TaskConfig, args) -> int:
    task = cfg.compile()
    trace = read_trace(_need(args.trace, "--trace"), task.variables)
    accepted = automaton.ltlfmt_eval(task.formula, trace, task.constants)
    print(f"accepted={'true' if accepted else 'false'}")
    return EXIT_OK


def cmd_train(cfg: TaskConfig, args) -> int:
    task = cfg.compile()
    spec0 = cfg.train_spec(mode=args.mode, episodes=args.episodes)
    goal_spec = cfg.goal_spec()
    out = Path(args.out or "runs")
    # byte copy, so the snapshot is auditable against the input
    write_atomic(out / "config.json", Path(args.config).read_bytes())
    write_atomic(out / "dfa.json", automaton.to_json(task.dfa, task.table.formulas))
    write_atomic(out / "dfa.dot", automaton.to_dot(task.dfa))
    summary = {}
    for k in range(args.seeds):
        spec = cfg.train_spec(mode=args.mode, episodes=args.episodes, seed=spec0.seed + k)
        log.info("training seed %d mode %s", spec.seed, spec.mode)
        rows, qf, _ = train(task, cfg.make_env(), spec, goal_spec, eval_env=cfg.make_env())
        write_atomic(out / f"metrics_seed{spec.seed}.csv", metrics_csv(rows))
        buf = io.BytesIO()
        qf.save(buf)
        write_atomic(out / f"weights_seed{spec.seed}.npz", buf.getvalue())
        score = final_success(rows, 50, spec.eval_episodes)
        summary[str(spec.seed)] = None if np.isnan(score) else score
        print(f"seed {spec.seed} mode {spec.mode}: final success {score:.3f}")
    write_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_eval(cfg: TaskConfig, args) -> int:
    task = cfg.compile()
    spec = cfg.train_spec(mode=args.mode)
    goal_spec = cfg.goal_spec()
    env = cfg.make_env(seed=spec.seed)
    qf = build_qfunction(task, env, spec, goal_spec)
    qf.load_weights(_need(args.weights, "--weights"))
    rate = evaluate(task, env, qf, args.episodes or spec.eval_episodes, spec.max_steps, goal_spec)
    print(f"success_rate={rate:.4f}")
    return EXIT_OK


COMMANDS = {"compile": cmd_compile, "label": cmd_label, "oracle": cmd_oracle,
            "train": cmd_train, "eval": cmd_eval}


def _need(value, flag):
    if not value:
        raise ConfigError(f"{flag} is required for this command")
    return value


def _emit(text, out, name):
    if out:
        write_atomic(Path(out) / name, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tlmt", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="task config JSON")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds (train)")
    p.add_argument("--mode", choices=("baseline", "crm", "her", "crm_her"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--trace", help="trace CSV (label, oracle)")
    p.add_argument("--weights", help="weights .npz (eval)")
    p.add_argument("--episodes", type=int, help="training episodes (train) or evaluation episodes (eval)")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TLMT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.seeds < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, ResolutionError, automaton.CompilationError) as e:
        print(f"compile error: {e}", file=sys.stderr)
        return EXIT_COMPILE
    except Exception as e:  # noqa: BLE001 - surface as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
