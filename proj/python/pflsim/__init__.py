"""Personalized federated learning simulator (C++ core)."""

try:
    from ._pflsim import *  # noqa: F401,F403  (installed package layout)
    from ._pflsim import __version__  # noqa: F401
except ImportError:  # in-tree build: extension module on sys.path
    from _pflsim import *  # noqa: F401,F403
    from _pflsim import __version__  # noqa: F401
