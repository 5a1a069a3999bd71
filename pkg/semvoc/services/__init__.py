"""
Services Package

Corpus synthesis, latent providers, the vocoder and DiT engines, evaluation and sweeps.
"""
