"""Writes data/fixtures/clip_tokenizer_fixture.tsv with reference CLIP ids.

Rows are `escaped text<TAB>comma-joined ids` (no start/end tokens). Run from
the repository root; requires ftfy and regex.
"""
import random
import sys

sys.path.insert(0, "scripts")
from clip_reference import SimpleTokenizer  # noqa: E402
from make_captions import caption  # noqa: E402

EDGE_CASES = [
    "",
    "A  Photo\tof a CAT",
    "cat",
    "Dog\u2019s \u201cfavourite\u201d toy",
    "fish &amp; chips &amp;amp; more",
    "caf&eacute; on the corner",
    "&lt;b&gt;bold&lt;/b&gt; text",
    "<b>raw tag</b> and &amp; entity",
    "price: $19.99 (was $25!)",
    "#sunset #beach #travel",
    "@user check this out!!!",
    "emoji \U0001F600\U0001F436 party \U0001F389",
    "\u65e5\u672c\u306e\u685c",
    "na\u00efve cr\u00e8me br\u00fbl\u00e9e",
    "cafe\u0301 with combining accent",
    "\uff26\uff55\uff4c\uff4c\u3000width text",
    "\ufb01sh and \ufb02owers",
    "tabs\tand\nnewlines\r\nhere",
    "   leading and trailing   ",
    "ALL CAPS CAPTION HERE",
    "it's they're we've I'm you'll he'd can't",
    "IT'S LOUD",
    "1999 was a year; 2024 too",
    "3d render of a 4k tv",
    "\u00bfqu\u00e9 pasa? \u00a1hola!",
    "stra\u00dfe in m\u00fcnchen",
    "\u0395\u039b\u039b\u0391\u03a3 \u03bf\u03b4\u03cc\u03c2",
    "\u041c\u043e\u0441\u043a\u0432\u0430 \u0437\u0438\u043c\u043e\u0439",
    "word-with-hyphens and under_scores",
    "email me at someone@example.com",
    "http://example.com/path?x=1&y=2",
    "<|startoftext|> literal special <|endoftext|>",
    "quote \"inside\" and 'single'",
    "ellipsis\u2026 and dash \u2014 en \u2013",
    "&#39;numeric&#x27; &#8220;refs&#8221;",
    "the dogs' owners and the dog's bone",
    "supercalifragilisticexpialidocious antidisestablishmentarianism",
    "a\u00a0non\u00a0breaking\u00a0space",
    "x",
    "!!!",
]


def main():
    tok = SimpleTokenizer("assets/bpe_simple_vocab_16e6.txt.gz")
    rng = random.Random(20240601)
    texts = list(EDGE_CASES)
    while len(texts) < 1000:
        texts.append(caption(rng))
    with open("data/fixtures/clip_tokenizer_fixture.tsv", "w", encoding="utf-8") as f:
        for t in texts:
            ids = tok.encode(t)
            esc = t.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")
            f.write(esc + "\t" + ",".join(map(str, ids)) + "\n")
    print(len(texts))


if __name__ == "__main__":
    main()
