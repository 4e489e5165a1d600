#!/usr/bin/env python3
"""Writes the scripted end-to-end suite: tasks, scripted provider, stub fault rules
and the hand-traced expectations.

Each task concatenates one to three functions ("chunks"). A chunk carries one
injected error at a single choice step where the erroneous token is slightly
more likely (0.48) than the correct one (0.46); the remaining 0.06 is spread
over filler tokens. Later chunks use more fillers, so their choice steps carry
strictly higher entropy than earlier ones.

Rollbacks needed per chunk (decay 0.9, offset 0):
  syntax      2  (retry at the error column repeats the error, then the line restarts)
  runtime     1  (line restart, the erroneous token sits at step r + 1)
  repetition  1  (restart at the first repeated statement)
  final_test  1  (restart at the most uncertain line)
"""

import argparse
import json
import pathlib

EOS = "<eos>"
BAD, GOOD, REST = 0.48, 0.46, 0.06

RUNTIME = {
    "div": (" = len(items) / 0\n", r"/ 0\b", "division_by_zero"),
    "index": (" = items[99]\n", r"\[99\]", "index_out_of_bounds"),
    "resource": (" = open('missing.txt')\n", r"missing\.txt", "resource_not_found"),
}


def chunk(kind, name):
    """Lines of (fixed text | (good, bad)) steps and the rollbacks the error costs."""
    if kind == "syntax":
        return [[f"def {name}(a, b):\n"], ["    total", (" = a + b\n", " = a + b)\n")], ["    return total\n"]], 2
    if kind.startswith("runtime"):
        bad = RUNTIME[kind.split(":")[1]][0]
        return [[f"def {name}(items):\n"], ["    value", (" = len(items)\n", bad)], ["    return value\n"]], 1
    if kind == "repetition":
        lines = [[f"def {name}(x):\n"]] + [["    print(x)\n"] for _ in range(5)]
        return lines + [[("    return x\n", "    print(x)\n")]], 1
    if kind == "final_test":
        return [[f"def {name}(a):\n"], ["    return", (" a * 2\n", " a * 2 - 1\n")]], 1
    raise ValueError(kind)


TASKS = [
    ["syntax"],
    ["runtime:div"],
    ["repetition"],
    ["final_test"],
    ["runtime:index"],
    ["runtime:resource"],
    ["syntax", "runtime:div"],
    ["runtime:index", "repetition"],
    ["repetition", "final_test"],
    ["syntax", "final_test"],
    ["syntax", "repetition"],
    ["runtime:resource", "final_test"],
    ["syntax", "runtime:div", "final_test"],
    ["runtime:index", "repetition", "final_test"],
    ["syntax", "repetition", "final_test"],
    ["syntax", "runtime:resource", "repetition"],
    ["runtime:index", "runtime:resource"],
    ["syntax", "syntax"],
    ["repetition", "runtime:div", "final_test"],
    ["runtime:div", "syntax", "final_test"],
]


def build(out_dir):
    vocab = [EOS] + [f"#{i}" for i in range(8)]
    models, tasks, expected = [], [], {}

    def token(text):
        if text not in vocab:
            vocab.append(text)
        return text

    for index, kinds in enumerate(TASKS, start=1):
        task_id = f"scripted-{index:02d}"
        prompt = f"# {task_id}: implement the functions below\n"
        rules, text, rollbacks, entry = [], "", 0, None
        for level, kind in enumerate(kinds):
            name = f"{kind.split(':')[0]}_{index}_{level}"
            entry = entry or name
            lines, cost = chunk(kind, name)
            rollbacks += cost
            for line in lines:
                for step in line:
                    if isinstance(step, tuple):
                        good, bad = step
                        fillers = [f"#{i}" for i in range(level + 1)]
                        dist = {token(bad): BAD, token(good): GOOD}
                        dist.update({f: REST / len(fillers) for f in fillers})
                    else:
                        good = step
                        dist = {token(good): 1.0}
                    rules.append({"exact": text, "dist": dist})
                    text += good
        models.append({"prompt": prompt, "rules": rules, "fallback": {EOS: 1.0}})
        tasks.append({
            "task_id": task_id,
            "prompt": prompt,
            "entry_point": entry,
            "public_tests": [{"input": "1 2", "expected_output": "3"}],
            "private_tests": [{"input": "2 3", "expected_output": "5"}, {"input": "0 0", "expected_output": "0"}],
        })
        expected[task_id] = {"rollbacks": rollbacks, "errors": kinds, "final_code": text}

    faults = [{"pattern": pattern, "type": kind} for _, pattern, kind in RUNTIME.values()]
    faults.append({"pattern": r"\* 2 - 1", "type": "assertion_failed", "modes": ["run_tests"],
                   "message": "expected output differs"})

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tasks.jsonl").write_text("".join(json.dumps(t) + "\n" for t in tasks))
    (out_dir / "provider.json").write_text(
        json.dumps({"vocab": vocab, "eos": EOS, "max_context_length": 4096, "models": models}, indent=1) + "\n")
    (out_dir / "faults.json").write_text(json.dumps({"faults": faults}, indent=1) + "\n")
    (out_dir / "expected.json").write_text(
        json.dumps({"max_generation_length": 64, "ablation_task": "scripted-02", "tasks": expected}, indent=1) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=pathlib.Path)
    build(parser.parse_args().out_dir)


if __name__ == "__main__":
    main()
