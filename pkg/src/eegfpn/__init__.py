"""EEG sentiment classifier: filtered epochs through a skip-connected
autoencoder pyramid, a conv/pool compressor, and a parallel-GRU ensemble,
all trained with hand-written gradients."""

__version__ = "0.1.0"
