"""Memory transfer for temporal graph networks.

Train a memory-based temporal graph network on a rich source interaction
stream, align source and target nodes through an attribute-decoupled static
transformation encoded by a staged attention network, carry the per-node
memory across, fine-tune, and evaluate future-link prediction.
"""

__version__ = "0.1.0"
