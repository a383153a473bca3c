#!/usr/bin/env python3
"""Builds scripted-backend fixtures (fixtures/replay/*.json) from the
sample sessions in fixtures/samples/.

Replies are consumed in order: one per Stage-1 call, then one per Stage-3
batch at the task's default batch size. Each Stage-1 script repeats its
first question once (a near-duplicate the loop must reject) and, when the
bank is smaller than the question limit, ends with three more duplicates
so the loop stops on consecutive rejects.
"""
import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
MAX_QUESTIONS = 32
CONSECUTIVE_REJECTS = 3


def stage1_reply(q, a):
    return f" {q}\nAnswer: {a}"


def near_duplicate(q):
    return q.upper().rstrip("?") + " ?"


def main():
    catalog = {t["name"]: t for t in json.loads((ROOT / "data" / "catalog.json").read_text())["tasks"]}
    out_dir = ROOT / "fixtures" / "replay"
    out_dir.mkdir(exist_ok=True)

    for path in sorted((ROOT / "fixtures" / "samples").glob("*.json")):
        sample = json.loads(path.read_text())
        task = catalog[sample["task"]]
        pairs = sample["qa_pairs"]
        first_q, first_a = pairs[0]

        replies = [stage1_reply(*pairs[0])]
        if len(pairs) > 1:
            replies.append(stage1_reply(near_duplicate(first_q), first_a))
        replies += [stage1_reply(q, a) for q, a in pairs[1:]]
        if len(pairs) < MAX_QUESTIONS:
            replies += [stage1_reply(first_q, first_a)] * CONSECUTIVE_REJECTS

        output = sample["output"]
        paragraphs = output.split("\n\n")
        if task["dependent_qa"] or len(pairs) <= task["default_batch_size"]:
            batches = [output]
        else:
            # one paragraph per QA pair, except a leading title paragraph
            size = task["default_batch_size"]
            per_pair = len(paragraphs) / len(pairs)
            batches = []
            for start in range(0, len(pairs), size):
                lo = round(start * per_pair)
                hi = round(min(start + size, len(pairs)) * per_pair)
                batches.append("\n\n".join(paragraphs[lo:hi]))
            assert "\n\n".join(batches) == output, path.name
        cue = task.get("output_cue")
        if cue and batches[0].startswith(cue + " "):
            # the model continues after the cue that ends the prompt
            batches[0] = batches[0][len(cue) + 1:]
        replies += batches

        (out_dir / path.name).write_text(json.dumps({"matching": "sequence", "replies": replies},
                                                    indent=1, ensure_ascii=False) + "\n")

    # Every reply repeats one question: Stage 1 must give up within its call bound.
    dup = "What is your name?\nAnswer: Sam"
    adversarial = [dup] + [dup] * 200
    (out_dir / "adversarial.json").write_text(json.dumps(adversarial, indent=1) + "\n")


if __name__ == "__main__":
    main()
