"""Writes data/demo_corpus.jsonl: 1,000 synthetic samples for the demo run.

Each image is declared as a tag set (`synth:<tags>`) drawn from the caption's
content words, each kept with a per-sample probability, plus a few distractor
tags. Alignment therefore varies from near-zero to high. Run from the
repository root.
"""
import json
import random
import sys

sys.path.insert(0, "scripts")
from make_captions import OBJECTS, caption  # noqa: E402

STOP = {
    "a", "an", "the", "of", "on", "in", "at", "by", "with", "and", "to", "for", "near", "under",
    "behind", "next", "beside", "across", "above", "inside", "after", "during", "their", "front",
    "along", "over", "against",
}


def content_words(text):
    words = [w.strip(".!").lower() for w in text.split()]
    return [w for w in words if w.isalpha() and w not in STOP]


def main():
    rng = random.Random(20240917)
    with open("data/demo_corpus.jsonl", "w", encoding="utf-8") as f:
        for i in range(1000):
            text = caption(rng)
            keep = rng.uniform(0.15, 1.0)
            tags = [w for w in content_words(text) if rng.random() < keep]
            tags += rng.sample(OBJECTS, rng.randint(0, 3))
            if not tags:
                tags = [rng.choice(OBJECTS)]
            rec = {"id": f"demo-{i:04d}", "image": "synth:" + " ".join(tags), "caption": text}
            f.write(json.dumps(rec) + "\n")


if __name__ == "__main__":
    main()
