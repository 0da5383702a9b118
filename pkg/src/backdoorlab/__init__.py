"""Desk-scale laboratory for CNN backdoor attacks and their defenses.

Train small CNNs from scratch, plant pixel-pattern backdoors via data
poisoning (including a pruning-aware variant with decoy channels), and
evaluate the pruning, fine-tuning, and fine-pruning defenses.
"""

__version__ = "0.1.0"
