"""Strategic source coding over a Gray-Wyner network with two decoders."""

__version__ = "0.1.0"
