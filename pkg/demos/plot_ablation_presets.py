"""
Ablation presets
================

Each preset switches components on or off: ``gts`` is the plain grid tagger,
``dgts`` adds the dependency-aware encoder, ``dbgts`` also feeds its relation
tensor to inference, ``gts-uc`` and ``gts-ic`` add the unit and image
convolutions, and ``gcgts`` enables everything.
"""

from gcgts.corpus import build_vocabs, generate_synthetic_corpus
from gcgts.model import GCGTS, PRESETS, ModelConfig
from gcgts.train import train

corpus = generate_synthetic_corpus(seed=7, count=20)
vocabs = build_vocabs(corpus)
small = dict(d_h=32, d_r=8, d_p=8, d_beta=8, d_g=32, d_z=32)

for name, flags in PRESETS.items():
    model = GCGTS(ModelConfig.from_preset(name, **small), vocabs)
    n_params = sum(p.data.size for p in model.params.values())
    logs = train(model, corpus, epochs=3, seed=0)
    groups = sorted({k.split(".")[0] for k in model.params})
    print(f"{name:7s} {n_params:7d} params  loss {logs[-1]['loss']:8.3f}  groups {groups}")
