"""revadapter: pretrained-LM metrics served over the adapter protocol."""

__version__ = "0.1.0"

PROTOCOL_VERSION = 1
