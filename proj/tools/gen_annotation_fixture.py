#!/usr/bin/env python3
"""Writes fixtures/table3.ann: three annotators x 30 samples per core task.

Per-task label counts below were solved so that majority voting reproduces
the published per-task percentages (both knowledge-absorption regimes and
both NA treatments). Vote patterns rotate per sample so that the majority
rule, not unanimity, is what gets exercised.
"""
import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SAMPLES = 30

# task -> (tolerant yes, strict yes)
KA = {
    "bio": (26, 13), "travel plan": (1, 0), "dialogue": (21, 15),
    "poem": (27, 22), "event summary": (26, 17), "story": (25, 7),
}
RELEVANCE = {"bio": 30, "travel plan": 28, "dialogue": 23, "poem": 29, "event summary": 29, "story": 30}
# task -> (yes, no, na)
ROBUSTNESS = {
    "bio": (29, 1, 0), "travel plan": (1, 1, 28), "dialogue": (15, 6, 9),
    "poem": (2, 0, 28), "event summary": (14, 4, 12), "story": (7, 0, 23),
}
COHERENCE = {
    "bio": (30, 0, 0), "travel plan": (30, 0, 0), "dialogue": (25, 1, 4),
    "poem": (29, 0, 1), "event summary": (10, 0, 20), "story": (30, 0, 0),
}

# Each pattern yields the keyed label under both NA treatments.
BINARY = {
    "yes": [("yes", "yes", "yes"), ("yes", "yes", "no"), ("no", "yes", "yes"), ("yes", "no", "yes")],
    "no": [("no", "no", "no"), ("no", "yes", "no"), ("yes", "no", "no"), ("no", "no", "yes")],
}
WITH_NA = {
    "yes": BINARY["yes"] + [("yes", "na", "yes"), ("na", "yes", "yes")],
    "no": BINARY["no"] + [("no", "na", "no"), ("yes", "no", "na")],
    "na": [("na", "na", "na"), ("na", "yes", "na"), ("no", "na", "na")],
}


def slug(task):
    return task.replace(" ", "_")


def tolerance(bank_size):
    return 1 if bank_size <= 4 else 2


def ka_patterns(kind, tol):
    if kind == "strict":  # absorbed everything by majority
        return [(0, 0, 0), (0, 1, 0), (0, 0, tol + 1)]
    if kind == "tolerant":  # within tolerance, but not complete
        return [(1, tol, 0), (tol, 1, tol + 1), (1, 1, 1)]
    return [(tol + 1, tol + 1, 0), (tol + 2, tol + 1, tol + 1), (0, tol + 1, tol + 2)]


def shuffled(labels, rng):
    rng.shuffle(labels)
    return labels


def main():
    catalog = json.loads((ROOT / "data" / "catalog.json").read_text())
    banks = {t["name"]: len(t["question_bank"]) for t in catalog["tasks"] if t.get("core")}
    rng = random.Random(20221017)
    rows = []

    def emit(task, sample, aspect, votes, missing=None):
        for k, v in enumerate(votes):
            m = "" if missing is None else str(missing[k])
            rows.append(f"{task}\t{sample}\t{aspect}\tann{k + 1}\t{v}\t{m}")

    for task in KA:
        tol = tolerance(banks[task])
        for qi in range(banks[task]):
            for aspect in ("q_validity", "q_relevance"):
                emit(task, f"{slug(task)}-q{qi:02d}", aspect, ("yes", "yes", "yes"))

        tol_yes, strict_yes = KA[task]
        ka = shuffled(["strict"] * strict_yes + ["tolerant"] * (tol_yes - strict_yes)
                      + ["miss"] * (SAMPLES - tol_yes), rng)
        rel = shuffled(["yes"] * RELEVANCE[task] + ["no"] * (SAMPLES - RELEVANCE[task]), rng)
        rob = shuffled([l for l, n in zip(("yes", "no", "na"), ROBUSTNESS[task]) for _ in range(n)], rng)
        coh = shuffled([l for l, n in zip(("yes", "no", "na"), COHERENCE[task]) for _ in range(n)], rng)

        for i in range(SAMPLES):
            sample = f"{slug(task)}-{i:02d}"
            emit(task, sample, "validity", BINARY["yes"][i % 4])
            pats = ka_patterns(ka[i], tol)
            emit(task, sample, "knowledge_absorption", ("-", "-", "-"), pats[i % len(pats)])
            emit(task, sample, "relevance", BINARY[rel[i]][i % 4])
            for aspect, labels in (("robustness", rob), ("coherence", coh)):
                pats = WITH_NA[labels[i]]
                emit(task, sample, aspect, pats[i % len(pats)])

    out = ROOT / "fixtures" / "table3.ann"
    header = ("# Three-annotator judgements for the six core tasks, 30 samples each.\n"
              "# Generated by tools/gen_annotation_fixture.py; do not edit by hand.\n"
              "task\tsample_id\taspect\tannotator_id\tvote\tmissing_count\n")
    out.write_text(header + "\n".join(rows) + "\n")
    print(f"wrote {len(rows)} records to {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
