"""Writes the golden fixture. Expected scores live in expected.json and were
counted by hand from the table in TRACE.md, not by running this script."""

import json
import os

W = H = 20
HERE = os.path.dirname(os.path.abspath(__file__))

LABELS = ["O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-MISC", "I-MISC"]


def raster_rle(box, w=W, h=H):
    x1, y1, x2, y2 = box
    bits = []
    for x in range(w):
        for y in range(h):
            bits.append(x1 <= x + 0.5 < x2 and y1 <= y + 0.5 < y2)
    counts, cur, run = [], False, 0
    for b in bits:
        if b == cur:
            run += 1
        else:
            counts.append(run)
            cur, run = b, 1
    counts.append(run)
    return {"w": w, "h": h, "counts": counts}


def ent(tokens, start, end, etype, boxes=(), masks=None):
    if masks is None:
        masks = [raster_rle(b) for b in boxes]
    return {
        "surface": " ".join(tokens[start:end]),
        "start": start,
        "end": end,
        "type": etype,
        "boxes": [list(b) for b in boxes],
        "masks": masks,
    }


SAMPLES = [
    ("s0", "Messi joins Barcelona", lambda t: [ent(t, 0, 1, "PER", [(2, 2, 10, 18)]), ent(t, 2, 3, "ORG")]),
    ("s1", "Obama visits Paris", lambda t: [ent(t, 0, 1, "PER", [(0, 0, 10, 20)]), ent(t, 2, 3, "LOC")]),
    ("s2", "Apple unveils iPhone", lambda t: [
        ent(t, 0, 1, "ORG"),
        ent(t, 2, 3, "MISC", [(4, 4, 16, 16)], [raster_rle((6, 6, 14, 14))]),
    ]),
    ("s3", "Lakers beat Celtics", lambda t: [ent(t, 0, 1, "ORG", [(0, 0, 8, 8)]), ent(t, 2, 3, "ORG", [(10, 10, 18, 18)])]),
    ("s4", "Taylor Swift sings", lambda t: [ent(t, 0, 2, "PER", [(0, 0, 8, 8), (10, 10, 20, 20)])]),
    ("s5", "Good morning London", lambda t: [ent(t, 2, 3, "LOC", [(0, 5, 20, 15)])]),
    ("s6", "Trump and Biden debate", lambda t: [ent(t, 0, 1, "PER", [(0, 0, 10, 10)]), ent(t, 2, 3, "PER", [(10, 0, 20, 10)])]),
    ("s7", "NBA finals tonight", lambda t: [ent(t, 0, 1, "ORG")]),
    ("s8", "Tokyo Tower at night", lambda t: [ent(t, 0, 2, "LOC", [(5, 0, 15, 20)])]),
    ("s9", "Federer wins", lambda t: [ent(t, 0, 1, "PER", [(0, 0, 10, 10)])]),
]

# intended CRF output per token; s4 "Swift" is ambiguous in the emissions
PRED_TAGS = {
    "s0": ["B-PER", "O", "B-ORG"],
    "s1": ["B-PER", "O", "B-LOC"],
    "s2": ["B-ORG", "O", "B-MISC"],
    "s3": ["B-PER", "O", "B-ORG"],
    "s4": ["B-PER", "I-PER", "O"],
    "s5": ["O", "B-MISC", "B-LOC"],
    "s6": ["B-PER", "O", "O", "B-MISC"],
    "s7": ["B-ORG", "O", "O"],
    "s8": ["B-LOC", "O", "O", "O"],
    "s9": ["B-PER", "O"],
}

LOOKUP = [
    ("s0", "Messi", "e", (2, 2, 10, 18)),
    ("s0", "Barcelona", "c", None),
    ("s1", "Obama", "e", (0, 0, 10, 12)),
    ("s1", "Paris", "e", (10, 0, 20, 10)),
    ("s2", "Apple", "c", None),
    ("s2", "iPhone", "e", (4, 4, 16, 16)),
    ("s3", "Lakers", "e", (0, 0, 8, 8)),
    ("s3", "Celtics", "e", (10, 10, 18, 18)),
    ("s4", "Taylor Swift", "e", (11, 11, 20, 20)),
    ("s5", "morning", "c", None),
    ("s5", "London", "e", (0, 5, 20, 15)),
    ("s6", "Trump", "e", (0, 0, 10, 10)),
    ("s6", "debate", "c", None),
    ("s7", "NBA", "e", (5, 5, 15, 15)),
    ("s8", "Tokyo", "e", (5, 0, 15, 20)),
    ("s9", "Federer", "e", (4, 4, 14, 14)),
]

EXPANSIONS = [
    ("s0", "Messi", "Argentine footballer"),
    ("s1", "Obama", "former president of the United States"),
    ("s4", "Taylor Swift", "American singer"),
]


def emissions(tags):
    rows = []
    for tag in tags:
        row = [0.0] * len(LABELS)
        row[LABELS.index(tag)] = 5.0
        rows.append(row)
    return rows


def crf_params():
    n = len(LABELS)
    trans = [[0.0] * n for _ in range(n)]
    start = [0.0] * n
    for j, b in enumerate(LABELS):
        if b.startswith("I-"):
            start[j] = -10.0
            for i, a in enumerate(LABELS):
                if a[2:] != b[2:]:
                    trans[i][j] = -10.0
            trans[LABELS.index("B-" + b[2:])][j] = 1.0
    return {"labels": LABELS, "transition": trans, "start": start, "end": [0.0] * n}


def write_jsonl(name, rows):
    with open(os.path.join(HERE, name), "w") as f:
        for r in rows:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def main():
    gold, emis = [], []
    for sid, text, make in SAMPLES:
        tokens = text.split()
        gold.append({
            "id": sid,
            "tokens": tokens,
            "image": {"path": sid + ".jpg", "width": W, "height": H},
            "entities": make(tokens),
        })
        rows = emissions(PRED_TAGS[sid])
        if sid == "s4":
            # argmax alone would pick B-LOC; the B-PER -> I-PER bonus flips it
            rows[1][LABELS.index("I-PER")] = 2.0
            rows[1][LABELS.index("B-LOC")] = 2.5
        emis.append({"id": sid, "emissions": rows})
    write_jsonl("gold.jsonl", gold)
    write_jsonl("emissions.jsonl", emis)
    lookup = []
    for sid, surface, label, box in LOOKUP:
        rec = {"id": sid, "surface": surface, "label": label}
        if box is not None:
            rec["box"] = list(box)
        lookup.append(rec)
    write_jsonl("lookup.jsonl", lookup)
    write_jsonl("expansions.jsonl", [{"id": i, "surface": s, "expansion": x} for i, s, x in EXPANSIONS])
    with open(os.path.join(HERE, "crf.json"), "w") as f:
        json.dump(crf_params(), f)
        f.write("\n")


if __name__ == "__main__":
    main()
