"""Optional numba acceleration for the byte-level hot loops.

Without numba the kernels run as plain Python, which is correct but slow.
"""

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
