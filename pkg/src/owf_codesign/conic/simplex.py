import numpy as np


def project_simplex(w, dim=None):
    """Euclidean projection onto the probability simplex.

    Sort-and-threshold method: find the largest ``k`` such that the
    ``k`` biggest entries stay positive after subtracting a common shift,
    then clip.

    Parameters
    ----------
    w : array_like
        Point to project.
    dim : int, optional
        Expected dimension; checked against ``len(w)`` when given.

    Returns
    -------
    numpy.ndarray
        Nonnegative vector summing to one.
    """
    w = np.asarray(w, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("cannot project an empty vector onto the simplex")
    if dim is not None and dim != w.size:
        raise ValueError(f"expected a {dim}-vector, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, w.size + 1)
    active = u - css / ks > 0
    k = ks[active][-1]
    shift = css[k - 1] / k
    out = np.maximum(w - shift, 0.0)
    # remove the last bit of rounding so the sum is one to machine precision
    out /= out.sum()
    return out
