"""Desk-scale UDP-flood test bed: traffic generation, a queueing IDS server,
an auto-associative random-neural-network detector and a drop-window
mitigation policy, on a virtual clock or over loopback sockets."""

__version__ = "0.1.0"
