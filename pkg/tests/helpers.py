import numpy as np

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Log one acceptance line (printed in the terminal summary) and return ``ok``."""
    line = f"{criterion:<4} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def numgrad(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    """Max elementwise error relative to the overall gradient scale."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / scale)


def grad_close(analytic, numeric, rtol=1e-4, atol=1e-9):
    """Relative check, except where both gradients are zero up to difference noise."""
    diff = np.max(np.abs(np.asarray(analytic) - np.asarray(numeric)))
    return diff <= atol or rel_err(analytic, numeric) <= rtol
