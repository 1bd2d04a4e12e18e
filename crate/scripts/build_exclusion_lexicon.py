"""Builds the bundled exclusion word list: the 50k most frequent alphabetic
English words (wordfreq) united with every word of the tagger and category
lexicons. Run from the repository root."""
import pathlib

import wordfreq

LEX = pathlib.Path("crates/core/assets/lexicon")
TARGET = 50_000

words = []
seen = set()
for w in wordfreq.iter_wordlist("en", wordlist="large"):
    if w.isascii() and w.isalpha() and w == w.lower() and w not in seen:
        seen.add(w)
        words.append(w)
        if len(words) == TARGET:
            break

for name in ["closed_class.txt", "open_class.txt", "categories.txt"]:
    for line in (LEX / name).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        w = line.split("\t")[0]
        if w.isalpha() and w not in seen:
            seen.add(w)
            words.append(w)

(LEX / "exclusion.txt").write_text("\n".join(sorted(words)) + "\n")
print(len(words))
