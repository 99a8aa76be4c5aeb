"""
Pair maps and checkpoints
=========================

The pair channel of the final prediction can be written as a greyscale PGM
(black where the model is sure of a pair). Checkpoints are a small binary
format: a JSON manifest followed by raw little-endian float32 tensors.
"""

import tempfile
from pathlib import Path

from gcgts import checkpoint
from gcgts.corpus import build_vocabs, generate_synthetic_corpus
from gcgts.decode import evaluate_model, predict
from gcgts.model import GCGTS, ModelConfig
from gcgts.train import train
from gcgts.visualize import pair_channel, write_pgm

corpus = generate_synthetic_corpus(seed=2, count=10)
model = GCGTS(ModelConfig.from_preset("gcgts", d_h=32, d_g=32, d_z=32), build_vocabs(corpus))
train(model, corpus, epochs=5, seed=0)

out = Path(tempfile.mkdtemp())
_, probs = predict(model, corpus[0])
write_pgm(out / "pairs.pgm", pair_channel(probs))
print("wrote", out / "pairs.pgm", (out / "pairs.pgm").stat().st_size, "bytes")

###############################################################################
# Saving a loaded checkpoint reproduces the original file byte for byte.

checkpoint.save(model, out / "a.ckpt", {"epoch": 5})
restored, extra = checkpoint.load(out / "a.ckpt")
checkpoint.save(restored, out / "b.ckpt", extra)
print("identical bytes:", (out / "a.ckpt").read_bytes() == (out / "b.ckpt").read_bytes())
print("same metrics:", evaluate_model(model, corpus)[0].to_json() == evaluate_model(restored, corpus)[0].to_json())
