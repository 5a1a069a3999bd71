"""semvoc: semantic-latent flow-matching vocoder, text-to-latent DiT and evaluation kit."""

__version__ = "1.0.0"
