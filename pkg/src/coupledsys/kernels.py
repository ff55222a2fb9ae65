"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``COUPLEDSYS_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the parity tests).
"""
import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("COUPLEDSYS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

solve_rcond = _impl.solve_rcond
bernstein = _impl.bernstein
hermite_midpoint = _impl.hermite_midpoint
solve_reduced_rcond = _impl.solve_reduced_rcond
normal_form_terms = _impl.normal_form_terms
normal_form_vertex = _impl.normal_form_vertex
coupling_point = _impl.coupling_point

__all__ = [
    "BACKEND", "solve_rcond", "bernstein", "hermite_midpoint",
    "solve_reduced_rcond", "normal_form_terms", "normal_form_vertex",
    "coupling_point",
]
