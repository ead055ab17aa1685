"""Structure learning for decoherence-free subalgebras of monitored dynamics."""

try:
    from ._core import *  # noqa: F401,F403  (installed layout)
    from ._core import __version__  # noqa: F401
except ImportError:  # development layout: _core built next to the package
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
