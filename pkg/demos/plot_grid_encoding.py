"""
Encoding a sentence as a label grid
===================================

A sentence becomes an upper-triangular grid of labels: ``A`` cells join
characters of one aspect, ``O`` cells join characters of one opinion and ``P``
cells link an aspect to its opinion. Decoding reads the grid back into spans.
"""

import numpy as np

from gcgts.corpus import (ALL_CHAR, FIRST_CHAR, LABELS, char_relation_matrix, encode_gold_grid,
                          generate_synthetic_corpus)
from gcgts.decode import decode_grid

s = generate_synthetic_corpus(seed=3, count=1)[0]
print(s.text)
print("aspects ", [s.surface(a) for a in s.aspects])
print("opinions", [s.surface(o) for o in s.opinions])

###############################################################################
# In all-char mode every cell is supervised; in first-char mode only cells
# between word-initial characters are.

for mode in (ALL_CHAR, FIRST_CHAR):
    grid = encode_gold_grid(s, mode)
    print(f"\n{mode}: {int(grid.mask.sum())} supervised cells")
    for i, row in enumerate(grid.labels):
        cells = [LABELS[v] if grid.mask[i, j] else "." for j, v in enumerate(row)]
        print(s.chars[i], " ".join(cells))
    print(decode_grid(grid.labels, s, mode).to_json(s))

###############################################################################
# The dependency tree is lifted to characters: two characters share the
# relation of the arc between their words, ``self`` inside one word, and the
# no-relation tag ``O`` otherwise. ``d`` marks where attention may flow.

g = char_relation_matrix(s)
print("\nadjacency d:")
print(np.asarray(g.d, dtype=int))
