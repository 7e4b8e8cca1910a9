"""Sequential recommender with fused ID/semantic item embeddings.

Pipeline: ingest interaction logs, pre-train a causal next-item model on
all-scene sequences, continue with bidirectional ranking training on the
target scene, evaluate with leave-one-out ranking metrics, then export
embeddings and serve nearest-neighbor recall over TCP.
"""

__version__ = "0.1.0"
