"""Regenerate porter_vectors.tsv.

Words are every lowercase alphabetic run in the CPython help topics; the
expected stems come from NLTK's PorterStemmer in ORIGINAL_ALGORITHM mode and
are kept only where Snowball's ``porter`` stemmer agrees.
"""

import re
from pathlib import Path

import snowballstemmer
from nltk.stem.porter import PorterStemmer
from pydoc_data.topics import topics

nltk_stem = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM).stem
snow_stem = snowballstemmer.stemmer("porter").stemWord

words = sorted({w for t in topics.values() for w in re.findall(r"[a-z]+", t.lower())})
rows = [(w, nltk_stem(w)) for w in words if nltk_stem(w) == snow_stem(w)]
out = Path(__file__).with_name("porter_vectors.tsv")
out.write_text("".join(f"{w}\t{s}\n" for w, s in rows))
print(len(rows), "vectors written to", out)
