"""Compile every corpus task and print its letters and automaton size.

    python3 demos/compile_corpus.py [OUTDIR]

With OUTDIR, one DOT file per task is written there.
"""
import sys
from pathlib import Path

from tlmt.automaton import to_dot
from tlmt.envs import make_env
from tlmt.product import compile_task
from tlmt.syntax import print_formula
from tlmt.tasks import CORPUS


def main(out=None):
    for name, e in CORPUS.items():
        variables = make_env(e.env).variables
        task = compile_task(e.formula, e.constants, variables)
        before = task.dfa.metadata.get("states_before_minimization", task.num_states)
        print(f"{name:15s} |P|={task.dfa.num_letters} |Q|={task.num_states} (raw {before})"
              f"  {print_formula(task.prop)}")
        for name, formula in zip(task.table.names, task.table.formulas):
            print(f"{'':17s}{name} := {formula}")
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / f"{name}.dot").write_text(to_dot(task.dfa, name))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
