#!/usr/bin/env python3
"""Simulated CAN traffic, injected attacks and the bit frames the detector sees."""

import numpy as np

from caae_ids.can_core import format_hcrl_record
from caae_ids.framing import build_frames, group_by_class
from caae_ids.traffic_sim import CAPTURE_PRESETS, simulate_capture

# One capture per attack kind. Attacks arrive in 2 s bursts; the rate and gap
# of each kind are tuned so message and frame shares look like the HCRL logs.
for kind in CAPTURE_PRESETS:
    msgs = simulate_capture(kind, duration=120.0, seed=0)
    frames = build_frames(msgs, attack_kind=kind)
    injected = sum(m.injected for m in msgs)
    abnormal = sum(f.label for f in frames)
    print(f"{kind:6s} {len(msgs):7d} msgs, {injected / len(msgs):6.1%} injected, "
          f"{len(frames):5d} frames, {abnormal / len(frames):6.1%} abnormal")

# The log format is the HCRL CSV layout, one message per line.
msgs = simulate_capture("dos", duration=30.0, seed=0)
first_attack = next(i for i, m in enumerate(msgs) if m.injected)
print()
for m in msgs[first_attack - 2:first_attack + 3]:
    print(format_hcrl_record(m))

# A frame stacks 29 consecutive IDs as 29-bit rows, most significant bit first.
# DoS frames show up as all-zero rows among the normal IDs.
groups = group_by_class(build_frames(msgs, attack_kind="dos"))
for name in ("normal", "dos"):
    bits = groups[name][len(groups[name]) // 2].bits
    print(f"\n{name} frame ({int((bits.sum(axis=1) == 0).sum())} all-zero rows):")
    for row in bits[:10]:
        print("".join(".#"[b] for b in row))
    print("...")

# Frames are binary and only the low 11 bits vary for standard IDs.
all_bits = np.stack([f.bits for f in groups["normal"]])
print("\nshare of set bits per column (normal):")
print(np.round(all_bits.mean(axis=(0, 1)), 2))
