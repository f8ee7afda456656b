"""Geometry kernel backend selection.

Imports the compiled Cython core when available and falls back to the
pure-Python mirror otherwise. Set HRCPLAN_PURE_GEOMETRY=1 to force the
fallback (used by the backend-parity tests and the kernel benchmark).
"""

import os

from . import _ref

if os.environ.get("HRCPLAN_PURE_GEOMETRY"):
    impl = _ref
else:
    try:
        from . import _fastgeom as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _ref

BACKEND = impl.BACKEND

fk_origins = impl.fk_origins
seg_seg_distance = impl.seg_seg_distance
seg_box_distance = impl.seg_box_distance
config_collision = impl.config_collision
edge_collision = impl.edge_collision


def available_backends():
    """Names of the kernel backends importable in this environment."""
    names = ["python"]
    try:
        from . import _fastgeom  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for `name` ("compiled" or "python")."""
    if name == "python":
        return _ref
    if name == "compiled":
        from . import _fastgeom
        return _fastgeom
    raise ValueError(f"unknown kernel backend: {name!r}")
