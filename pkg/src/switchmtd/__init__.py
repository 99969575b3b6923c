"""Cybersecurity-aware switched control layers for interconnected multi-agent systems.

The package is organised as a pipeline::

    synth -> graph -> design -> sim -> analysis -> plotting

and a command line front end in :mod:`switchmtd.cli`.
"""

from .errors import SwitchMTDError

__all__ = ["SwitchMTDError"]
__version__ = "0.1.0"
