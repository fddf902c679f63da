"""Tree-wired and feedforward image classifiers: Python surface.

Re-exports the compiled core. Works both installed (treebp._core) and from a
build tree with the extension directory on sys.path.
"""

try:
    from treebp._core import *  # noqa: F401,F403
    from treebp._core import __doc__  # noqa: F401
except ImportError:  # build-tree layout
    from _core import *  # noqa: F401,F403
    from _core import __doc__  # noqa: F401

__version__ = "0.1.0"
