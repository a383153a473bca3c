#!/usr/bin/env python3
"""Writes tests/golden/*.txt straight from the prompt figures in paper.md.

Deliberately independent of data/catalog.json: the figures are parsed from
the LaTeX source and the QA pairs come from the sample sessions in fixtures/samples.
"""
import json
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIGS = {"bio": "bio", "travel plan": "travel", "dialogue": "dialogue", "poem": "poem",
        "event summary": "event", "story": "story"}


def figure_lines(ref, label):
    end = ref.index("\\label{" + label + "}")
    start = ref.rindex("\\begin{boxedminipage}", 0, end)
    body = ref[start:ref.index("\\end{boxedminipage}", start)]
    lines = [l.strip() for l in body.splitlines()[1:]]
    lines = [l.removesuffix("\\\\").strip() for l in lines if l and l != "\\footnotesize"]
    return lines


def slug(task):
    return task.replace(" ", "_")


def main():
    ref = (ROOT / "paper.md").read_text()
    out = ROOT / "tests" / "golden"
    out.mkdir(parents=True, exist_ok=True)
    for task, fig in FIGS.items():
        stage1 = figure_lines(ref, f"fig:prompt1{fig}")
        assert stage1[-1] == "Question:" and len(stage1) == 2, stage1
        (out / f"{slug(task)}.stage1.first_person.txt").write_text("\n".join(stage1))

        stage3 = figure_lines(ref, f"fig:prompt2{fig}")
        preamble = stage3[0]
        assert preamble == stage1[0]
        dots = stage3.index("...")
        tail = [l for l in stage3[dots + 1:] if "model generates" not in l]
        sample = json.loads((ROOT / "fixtures" / "samples" / f"{slug(task)}.json").read_text())
        blocks = "\n".join(f"Question: {q.strip()}\nAnswer: {a.strip()}" for q, a in sample["qa_pairs"])
        text = preamble + "\n\n" + blocks + "\n" + "\n".join(tail)
        (out / f"{slug(task)}.stage3.first_person.txt").write_text(text)

    # The conversational reframing is given verbatim only for the poem task.
    m = re.search(r"User: (You are a famous poet\..*?)\\\\", ref)
    (out / "poem.stage1.second_person.txt").write_text(m.group(1).strip() + "\nQuestion:")


if __name__ == "__main__":
    main()
