"""Request distributions over items 1, 2, ... (or 1..N).

Every distribution is non-increasing in the item index.  Tails are
``Pr[R > x]``; samples are item indices starting at 1.

Power-law sums use an Euler-Maclaurin tail correction, so the normalising
constant and every tail value are accurate to roughly machine precision
without summing the series out to infinity.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import InvalidParameter

# Euler-Maclaurin switch point: explicit summation below, asymptotic tail above.
_EM_CUT = 128
# Largest tail table kept for inversion sampling of infinite-support laws.
_MAX_TABLE = 1 << 20
# Largest finite support whose pmf/tail vectors are materialised.
_MAX_DENSE = 1 << 22


def _hurwitz_tail(alpha, k):
    """Sum of i**-alpha over i >= k, for k >= _EM_CUT (float or array)."""
    k = np.asarray(k, dtype=float)
    a = alpha
    kp = k ** (-a)
    return (
        k * kp / (a - 1.0)
        + 0.5 * kp
        + a * kp / (12.0 * k)
        - a * (a + 1) * (a + 2) * kp / (720.0 * k**3)
        + a * (a + 1) * (a + 2) * (a + 3) * (a + 4) * kp / (30240.0 * k**5)
    )


class RequestDistribution:
    """Base class; subclasses supply ``pmf``, ``tail`` and sampling.

    ``support`` is ``None`` for infinite support and ``N`` otherwise.
    """

    kind = "abstract"
    support: int | None = None

    def __init__(self):
        self._table = np.ones(1)

    # --- evaluation -----------------------------------------------------
    def pmf(self, i):
        raise NotImplementedError

    def tail(self, x):
        raise NotImplementedError

    def pmf_vector(self, n):
        """``(pi_1, ..., pi_n)`` as an array."""
        return np.asarray(self.pmf(np.arange(1, n + 1)), dtype=float)

    def ratio(self, i):
        """``pi_{i+1} / pi_i``; zero past the end of a finite support."""
        i = np.asarray(i)
        num = np.asarray(self.pmf(i + 1), dtype=float)
        den = np.asarray(self.pmf(i), dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        return out if out.ndim else float(out)

    # --- sampling ---------------------------------------------------------
    def tail_table(self, m):
        """Cached ``[tail(0), ..., tail(m')]`` with ``m' >= m``.

        The cache grows by doubling; a new array is built completely before
        it replaces the old one, so concurrent readers never see a partial
        table.
        """
        if self.support is not None:
            m = min(m, self.support)
        table = self._table
        if len(table) - 1 >= m:
            return table
        size = max(len(table) - 1, 1)
        while size < m:
            size *= 2
        if self.support is not None:
            size = min(size, self.support)
        new = np.asarray(self.tail(np.arange(size + 1)), dtype=float)
        new[0] = 1.0
        self._table = new
        return new

    def sample(self, rng, size=None):
        """Draw item indices with probabilities ``pi_i``."""
        n = 1 if size is None else int(np.prod(size))
        v = 1.0 - rng.random(n)  # uniform on (0, 1]
        out = self._invert(v)
        if size is None:
            return int(out[0])
        return out.reshape(size)

    def _invert(self, v):
        """Smallest k >= 1 with tail(k) < v, for v in (0, 1]."""
        cap = self.support if self.support is not None else _MAX_TABLE
        table = self.tail_table(min(cap, 1024))
        k = np.searchsorted(-table, -v, side="right")
        if self.support is None:
            while len(table) - 1 < cap and np.any(k > len(table) - 1):
                table = self.tail_table(2 * (len(table) - 1))
                k = np.searchsorted(-table, -v, side="right")
            far = k > len(table) - 1
            if np.any(far):
                k = k.astype(np.int64)
                k[far] = self._invert_far(v[far], len(table) - 1)
        return k.astype(np.int64)

    def _invert_far(self, v, m):
        raise NotImplementedError

    # --- description --------------------------------------------------------
    def describe(self):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.describe()}>"


class PowerLaw(RequestDistribution):
    kind = "power_law"

    def __init__(self, alpha):
        alpha = float(alpha)
        if not alpha > 1.0 or not math.isfinite(alpha):
            raise InvalidParameter(f"power law needs alpha > 1, got {alpha}")
        super().__init__()
        self.alpha = alpha
        head = np.arange(1, _EM_CUT, dtype=float) ** (-alpha)
        # _head_rev[m] = sum_{i=m}^{_EM_CUT-1} i**-alpha, summed small-first
        rev = np.concatenate([np.cumsum(head[::-1])[::-1], [0.0]])
        self._head_rev = np.concatenate([[rev[0]], rev])
        self._em = float(_hurwitz_tail(alpha, _EM_CUT))
        self.zeta = float(self._head_rev[1] + self._em)
        self.c = 1.0 / self.zeta

    def pmf(self, i):
        i = np.asarray(i, dtype=float)
        out = np.where(i >= 1, self.c * np.maximum(i, 1.0) ** (-self.alpha), 0.0)
        return out if out.ndim else float(out)

    def ratio(self, i):
        i = np.asarray(i, dtype=float)
        out = (i / (i + 1.0)) ** self.alpha
        return out if out.ndim else float(out)

    def _series_tail(self, k):
        """sum_{i >= k} i**-alpha for integer k >= 1."""
        k = np.asarray(k, dtype=np.int64)
        near = k < _EM_CUT
        kk = np.where(near, _EM_CUT, k)
        far = _hurwitz_tail(self.alpha, kk)
        head = self._head_rev[np.clip(k, 0, _EM_CUT)]
        return np.where(near, head + self._em, far)

    def tail(self, x):
        x = np.asarray(x)
        xi = np.maximum(x, 0).astype(np.int64)
        out = np.where(x <= 0, 1.0, self.c * self._series_tail(xi + 1))
        return out if out.ndim else float(out)

    def _invert_far(self, v, m):
        a = self.alpha
        k0 = (self.c / ((a - 1.0) * v)) ** (1.0 / (a - 1.0))
        limit = float(1 << 62)
        lo = np.clip(np.floor(k0 / 2.0), m, limit).astype(np.int64)
        hi = np.clip(np.ceil(2.0 * k0) + 2.0, m + 1, limit).astype(np.int64)
        # invariant: tail(lo) >= v > tail(hi)
        lo = np.where(self.tail(lo) >= v, lo, m)
        for _ in range(70):
            open_ = hi - lo > 1
            if not open_.any():
                break
            mid = lo + (hi - lo) // 2
            below = self.tail(mid) < v
            hi = np.where(open_ & below, mid, hi)
            lo = np.where(open_ & ~below, mid, lo)
        return hi

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha}


class Geometric(RequestDistribution):
    kind = "geometric"

    def __init__(self, nu):
        nu = float(nu)
        if not 0.0 < nu < 1.0:
            raise InvalidParameter(f"geometric needs 0 < nu < 1, got {nu}")
        super().__init__()
        self.nu = nu
        self._lognu = math.log(nu)

    def pmf(self, i):
        i = np.asarray(i, dtype=float)
        out = np.where(i >= 1, (1.0 - self.nu) * self.nu ** (np.maximum(i, 1.0) - 1.0), 0.0)
        return out if out.ndim else float(out)

    def ratio(self, i):
        i = np.asarray(i, dtype=float)
        out = np.full(i.shape, self.nu)
        return out if out.ndim else float(out)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = self.nu ** np.maximum(x, 0.0)
        return out if out.ndim else float(out)

    def _invert(self, v):
        return (1 + np.floor(np.log(v) / self._lognu)).astype(np.int64)

    def describe(self):
        return {"kind": self.kind, "nu": self.nu}


class _Finite(RequestDistribution):
    """Shared machinery for distributions with a materialised pmf vector."""

    def _set_vector(self, p):
        self.support = len(p)
        self._p = p
        # _tail_vec[x] = sum_{i > x} pi_i, summed small-first
        tv = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
        tv[0] = 1.0
        self._tail_vec = tv
        self._table = tv

    def pmf(self, i):
        i = np.asarray(i)
        ok = (i >= 1) & (i <= self.support)
        out = np.where(ok, self._p[np.clip(i, 1, self.support) - 1], 0.0)
        return out if out.ndim else float(out)

    def tail(self, x):
        x = np.asarray(x)
        out = self._tail_vec[np.clip(x, 0, self.support)]
        return out if out.ndim else float(out)

    def tail_table(self, m):
        return self._tail_vec


class Explicit(_Finite):
    kind = "explicit"

    def __init__(self, pmf, tol=1e-9):
        p = np.asarray(pmf, dtype=float).ravel()
        if p.size == 0:
            raise InvalidParameter("explicit pmf is empty")
        if np.any(~np.isfinite(p)) or np.any(p <= 0):
            raise InvalidParameter("explicit pmf entries must be positive")
        if np.any(np.diff(p) > 0):
            raise InvalidParameter("explicit pmf must be non-increasing")
        s = p.sum()
        if abs(s - 1.0) > tol:
            raise InvalidParameter(f"explicit pmf sums to {s!r}, not 1")
        super().__init__()
        # already-normalised input is kept bit-for-bit so descriptions round-trip
        self._set_vector(p if abs(s - 1.0) <= 1e-15 * p.size else p / s)

    def describe(self):
        return {"kind": self.kind, "explicit": [float(v) for v in self._p]}


class Truncated(_Finite):
    """``base`` conditioned on ``{R <= N}``."""

    kind = "truncated"

    def __init__(self, base, n):
        n = int(n)
        if n < 1:
            raise InvalidParameter(f"truncation needs N >= 1, got {n}")
        if base.support is not None and base.support < n:
            raise InvalidParameter(f"cannot truncate support {base.support} at N={n}")
        if isinstance(base, Truncated):
            base = base.base
        if n > _MAX_DENSE:
            raise InvalidParameter(f"truncation at N={n} exceeds the dense cap {_MAX_DENSE}")
        super().__init__()
        self.base = base
        p = base.pmf_vector(n)
        self.mass = float(1.0 - base.tail(n))
        self._set_vector(p / p.sum())

    def describe(self):
        d = dict(self.base.describe())
        d["truncate_at"] = self.support
        return d


# --- functional surface -----------------------------------------------------


def power_law(alpha):
    return PowerLaw(alpha)


def geometric(nu):
    return Geometric(nu)


def explicit(pmf):
    return Explicit(pmf)


def truncate(dist, n):
    return Truncated(dist, n)


def tail(dist, x):
    return dist.tail(x)


def sample(dist, rng, size=None):
    return dist.sample(rng, size)


def is_monotone(dist, upto=10_000):
    n = upto if dist.support is None else min(upto, dist.support)
    p = dist.pmf_vector(n + (1 if dist.support is None else 0))
    return bool(np.all(np.diff(p) <= 0))


_TOKEN = re.compile(r"(\w+)\s*=\s*(\[[^\]]*\]|\S+)")


def parse_distribution(text):
    """Parse ``kind=power_law alpha=2.0 truncate_at=40`` style descriptions.

    ``explicit=[0.5,0.3,0.2]`` alone is also accepted.
    """
    fields = dict(_TOKEN.findall(text))
    return from_fields(fields)


def from_fields(fields):
    fields = {k: v for k, v in fields.items() if v is not None and v != ""}
    kind = fields.get("kind")
    if kind is None and "explicit" in fields:
        kind = "explicit"
    try:
        if kind == "power_law":
            dist = PowerLaw(float(fields["alpha"]))
        elif kind == "geometric":
            dist = Geometric(float(fields["nu"]))
        elif kind == "explicit":
            raw = fields["explicit"]
            if isinstance(raw, str):
                raw = [float(t) for t in raw.strip("[]").split(",") if t.strip()]
            dist = Explicit(raw)
        else:
            raise InvalidParameter(f"unknown distribution kind {kind!r}")
    except KeyError as exc:
        raise InvalidParameter(f"distribution {kind!r} is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidParameter):
            raise
        raise InvalidParameter(str(exc)) from None
    if "truncate_at" in fields:
        try:
            n = int(fields["truncate_at"])
        except ValueError:
            raise InvalidParameter(f"bad truncate_at {fields['truncate_at']!r}") from None
        dist = Truncated(dist, n)
    return dist


def format_distribution(dist):
    """Inverse of :func:`parse_distribution`."""
    parts = []
    for key, val in dist.describe().items():
        if key == "explicit":
            val = "[" + ",".join(repr(v) for v in val) + "]"
        parts.append(f"{key}={val}")
    return " ".join(parts)
