from ._cppnlab import DEFAULT_TAU, Genome, Mlp, evolve, train, train_raw

__all__ = ["DEFAULT_TAU", "Genome", "Mlp", "evolve", "train", "train_raw"]
