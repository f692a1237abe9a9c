#!/usr/bin/env python3
"""Train a detector on a small simulated corpus and score it.

Usage: python3 demos/train_and_evaluate.py [EPOCHS] [MESSAGES]

The acceptance run uses 100k messages per capture and 100 epochs (about
25 minutes on one core). The defaults here finish in a couple of minutes.
"""

import sys

from threadpoolctl import threadpool_limits

from caae_ids.caae import TrainConfig, load_checkpoint, save_checkpoint, train
from caae_ids.corpus import synthetic_corpus
from caae_ids.evaluation import measure_latency, run_known_protocol
from caae_ids.framing import SplitConfig, split_dataset

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
n_messages = int(sys.argv[2]) if len(sys.argv) > 2 else 40_000

corpus = synthetic_corpus(n_messages=n_messages, seed=0)
print({kind: len(frames) for kind, frames in corpus.items()})

# 10% of the attack frames go to training, and 10% of the training frames
# keep their label. Everything else is learned from unlabeled frames.
bundle = split_dataset(corpus, SplitConfig(train_ratio=0.1, label_ratio=0.1, seed=1))
print(f"labeled {len(bundle.labeled)}, unlabeled {len(bundle.unlabeled)}, "
      f"val {len(bundle.val)}, test {len(bundle.test)}")

with threadpool_limits(1):
    model, log = train(
        bundle, TrainConfig(epochs=epochs, seed=1),
        on_epoch=lambda r: print(f"epoch {r.epoch:3d}  L_R {r.l_r:8.3f}  L_sup {r.l_sup:.4f}"),
    )

print()
print(run_known_protocol(model, bundle).as_table())

# Only the encoder is needed at detection time.
save_checkpoint(model, "/tmp/caae_encoder.ckpt", encoder_only=True)
detector = load_checkpoint("/tmp/caae_encoder.ckpt")
print()
print(measure_latency(detector, bundle.test[:500], repetitions=500).as_line())
