"""Speaker verification from speech and EEG with GE2E-trained recurrent d-vectors."""

__version__ = "0.1.0"
