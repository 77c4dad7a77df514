"""Select the compiled flow kernel when available, else the numpy fallback.

Set ``QPSMOOTH_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _flow_py

BACKEND = "python"
integrate_many = _flow_py.integrate_many
dV = _flow_py.dV

if os.environ.get("QPSMOOTH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _flowcore
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        integrate_many = _flowcore.integrate_many
        dV = _flowcore.dV
