"""nmtrec: toy semantic-recovery model emitting analyzer sidecars."""

__version__ = "0.1.0"
