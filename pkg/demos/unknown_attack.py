#!/usr/bin/env python3
"""Detect an attack kind whose labels were never shown to the model.

Usage: python3 demos/unknown_attack.py [HELD_OUT] [EPOCHS] [MESSAGES]

Gear spoofing, DoS and fuzzy keep their labels; RPM spoofing (the default
held-out kind) is only present as unlabeled frames during training.
"""

import sys

from threadpoolctl import threadpool_limits

from caae_ids.caae import TrainConfig, train
from caae_ids.corpus import SPOOF_B, synthetic_corpus
from caae_ids.evaluation import run_unknown_protocol
from caae_ids.framing import SplitConfig, leave_one_out, split_dataset

held_out = sys.argv[1] if len(sys.argv) > 1 else SPOOF_B
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 5
n_messages = int(sys.argv[3]) if len(sys.argv) > 3 else 40_000

corpus = synthetic_corpus(n_messages=n_messages, seed=0)
bundle = split_dataset(corpus, SplitConfig(train_ratio=0.3, label_ratio=0.1, seed=1))
bundle = leave_one_out(bundle, held_out)
print(f"labeled kinds: {sorted(bundle.labeled_kinds())}, held out: {held_out}")

with threadpool_limits(1):
    model, _ = train(bundle, TrainConfig(epochs=epochs, seed=1))

unknown, known = run_unknown_protocol(model, bundle)
print("\nunknown kind (normal test frames + held-out kind):")
print(unknown.as_table())
print("\nknown kinds (normal test frames + the rest):")
print(known.as_table())
