"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys, duplicate keys, malformed lines and out-of-range values raise
``ConfigurationError`` naming the key.  ``ExperimentConfig.echo()`` writes
every setting, defaults included, in the same format, so parsing an echo
gives back an identical config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .diophantine import golden_vector
from .errors import ConfigurationError

KINDS = ("check-diophantine", "classify-spectrum", "verify-kernels", "linear-decay", "nonlinear-run")
_GRID_KINDS = ("linear-decay", "nonlinear-run")
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: int
    N: int | None
    background: tuple[float, ...]
    background_token: str
    r: float
    case: tuple[float, float]
    dt: float
    T: float
    record_stride: int
    amplitude: float
    shells: tuple[int, ...]
    m: float
    alphas: tuple[float, ...]
    lyapunov_s: float
    fit_window: tuple[float, float] | None
    output: str
    seed: int
    K_cert: int
    K: int
    s: float
    band: int | None
    samples: int
    t_min: float
    times: tuple[float, ...]
    s3_constant: float
    cfl_guard: float
    project_b: bool

    def echo(self) -> str:
        """The effective configuration as parseable ``key = value`` lines."""
        lines = [f"# effective configuration for {self.kind}"]
        for key, value in self.items():
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def items(self):
        for f in fields(self):
            if f.name == "background_token":
                continue
            value = getattr(self, f.name)
            if f.name == "background":
                yield "background", self.background_token
            elif value is None:
                yield f.name, "auto"
            elif isinstance(value, bool):
                yield f.name, "true" if value else "false"
            elif isinstance(value, tuple):
                yield f.name, ",".join(_num(v) for v in value)
            else:
                yield f.name, _num(value) if isinstance(value, (int, float)) else str(value)


def _num(v) -> str:
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


# ---------------------------------------------------------------------------
# value parsers


def _float(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigurationError(f"expected a number, got {text!r}", key) from None
    if not math.isfinite(v):
        raise ConfigurationError(f"expected a finite number, got {text!r}", key)
    return v


def _int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError(f"expected an integer, got {text!r}", key) from None


def _floats(key, text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigurationError("expected a comma-separated list", key)
    return tuple(_float(key, p) for p in parts)


def _ints(key, text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigurationError("expected a comma-separated list", key)
    return tuple(_int(key, p) for p in parts)


def _bool(key, text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigurationError(f"expected true or false, got {text!r}", key)


_KEYS = {
    "kind", "n", "N", "background", "r", "case", "dt", "T", "record_stride", "amplitude",
    "shells", "m", "alphas", "lyapunov_s", "fit_window", "output", "seed", "K_cert", "K",
    "s", "band", "samples", "t_min", "times", "s3_constant", "cfl_guard", "project_b",
}


def read_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw.strip()!r}",
                                     line.split()[0])
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key", key)
        if key in pairs:
            raise ConfigurationError(f"line {lineno}: duplicate key", key)
        if not value:
            raise ConfigurationError(f"line {lineno}: empty value", key)
        pairs[key] = value
    return pairs


def build_config(pairs: dict[str, str]) -> ExperimentConfig:
    """Validate raw ``key -> text`` pairs and fill defaults."""
    unknown = set(pairs) - _KEYS
    if unknown:
        raise ConfigurationError("unknown key", sorted(unknown)[0])
    get = pairs.get

    kind = get("kind")
    if kind is None:
        raise ConfigurationError("missing required key", "kind")
    if kind not in KINDS:
        raise ConfigurationError(f"must be one of {', '.join(KINDS)}, got {kind!r}", "kind")

    if "n" not in pairs:
        raise ConfigurationError("missing required key", "n")
    n = _int("n", pairs["n"])
    if n not in (2, 3):
        raise ConfigurationError(f"must be 2 or 3, got {n}", "n")

    N = None
    if "N" in pairs and pairs["N"] != "auto":
        N = _int("N", pairs["N"])
        if N < 8 or N % 2:
            raise ConfigurationError(f"must be even and at least 8, got {N}", "N")
    elif kind in _GRID_KINDS:
        raise ConfigurationError("missing required key", "N")

    token = get("background", "golden").strip()
    if token == "golden":
        background = golden_vector(n)
    else:
        background = _floats("background", token)
        if len(background) != n:
            raise ConfigurationError(f"needs {n} components, got {len(background)}", "background")
        token = ",".join(repr(v) for v in background)

    r = _float("r", get("r", repr(n - 0.9)))
    if not r > n - 1:
        raise ConfigurationError(f"r must exceed n - 1 = {n - 1}, got {r}", "r")

    case = _floats("case", get("case", "0,1"))
    if case not in ((0.0, 1.0), (1.0, 0.0)):
        raise ConfigurationError(f"must be 0,1 or 1,0, got {get('case')}", "case")

    dt = _float("dt", get("dt", "0.001"))
    if not dt > 0:
        raise ConfigurationError("must be positive", "dt")
    T = _float("T", get("T", "10000.0" if kind == "linear-decay" else "1.0"))
    if not T >= 0:
        raise ConfigurationError("must be nonnegative", "T")
    record_stride = _int("record_stride", get("record_stride", "100"))
    if record_stride < 1:
        raise ConfigurationError("must be at least 1", "record_stride")
    amplitude = _float("amplitude", get("amplitude", "0.01"))
    if not amplitude > 0:
        raise ConfigurationError("must be positive", "amplitude")
    shells = _ints("shells", get("shells", "1,2,3,4"))
    if min(shells) < 1:
        raise ConfigurationError("shells are positive integers", "shells")
    if N is not None and max(shells) > N // 3:
        raise ConfigurationError(f"shell {max(shells)} exceeds the dealiasing cutoff {N // 3}", "shells")
    m = _float("m", get("m", repr(r + 1)))
    if m < 0:
        raise ConfigurationError("must be nonnegative", "m")
    alphas = _floats("alphas", get("alphas", "2"))
    if min(alphas) < 0:
        raise ConfigurationError("norm indices must be nonnegative", "alphas")
    s = _float("s", get("s", "5"))
    if s < 0:
        raise ConfigurationError("must be nonnegative", "s")
    if kind == "linear-decay" and max(alphas) >= s:
        raise ConfigurationError(f"norm indices must be below the data regularity s = {s}", "alphas")
    lyapunov_s = _float("lyapunov_s", get("lyapunov_s", repr(2 * r)))
    if lyapunov_s < 0:
        raise ConfigurationError("must be nonnegative", "lyapunov_s")

    fit_window = None
    fw = get("fit_window", "auto")
    if fw != "auto":
        lo_hi = _floats("fit_window", fw)
        if len(lo_hi) != 2 or not 0 <= lo_hi[0] < lo_hi[1]:
            raise ConfigurationError("expected lo,hi with 0 <= lo < hi", "fit_window")
        fit_window = lo_hi

    output = get("output", f"mhdlab-out/{kind}")
    seed = _int("seed", get("seed", "0"))
    if not 0 <= seed <= MAX_SEED:
        raise ConfigurationError("must be an unsigned 64-bit integer", "seed")
    K_cert = _int("K_cert", get("K_cert", "64"))
    if K_cert < 1:
        raise ConfigurationError("must be at least 1", "K_cert")
    K = _int("K", get("K", "32"))
    if K < 1:
        raise ConfigurationError("must be at least 1", "K")
    band = None
    if "band" in pairs and pairs["band"] != "auto":
        band = _int("band", pairs["band"])
        if band < 1 or (N is not None and band >= N // 2):
            raise ConfigurationError(f"must satisfy 1 <= band < N/2, got {band}", "band")
    elif N is not None:
        band = N // 2 - 1

    samples = _int("samples", get("samples", "121"))
    if samples < 2:
        raise ConfigurationError("must be at least 2", "samples")
    t_min = _float("t_min", get("t_min", "0.01"))
    if not t_min > 0 or (kind == "linear-decay" and not t_min < T):
        raise ConfigurationError("must satisfy 0 < t_min < T", "t_min")
    times = _floats("times", get("times", "0,0.01,0.1,1,10,100"))
    if min(times) < 0:
        raise ConfigurationError("times must be nonnegative", "times")
    s3_constant = _float("s3_constant", get("s3_constant", "1"))
    if not s3_constant > 0:
        raise ConfigurationError("must be positive", "s3_constant")
    cfl_guard = _float("cfl_guard", get("cfl_guard", "1"))
    if not cfl_guard > 0:
        raise ConfigurationError("must be positive", "cfl_guard")
    project_b = _bool("project_b", get("project_b", "true"))

    return ExperimentConfig(
        kind=kind, n=n, N=N, background=tuple(background), background_token=token, r=r,
        case=case, dt=dt, T=T, record_stride=record_stride, amplitude=amplitude,
        shells=tuple(sorted(set(shells))), m=m, alphas=alphas, lyapunov_s=lyapunov_s,
        fit_window=fit_window, output=output, seed=seed, K_cert=K_cert, K=K, s=s, band=band,
        samples=samples, t_min=t_min, times=times, s3_constant=s3_constant,
        cfl_guard=cfl_guard, project_b=project_b)


def parse_config(source, overrides: dict[str, str] | None = None,
                 kind: str | None = None) -> ExperimentConfig:
    """Parse a config file (path) or config text, then apply ``overrides``.

    ``overrides`` maps keys to raw text values, as inline flags would supply
    them; they replace values from the file.  ``kind`` (the CLI subcommand)
    fills a missing ``kind`` key and must agree with a present one.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "=" not in source
                                    and "\n" not in source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read {source}: {exc.strerror}", "config") from None
    else:
        text = source
    pairs = read_pairs(text)
    for key, value in (overrides or {}).items():
        if key not in _KEYS:
            raise ConfigurationError("unknown key", key)
        pairs[key] = str(value)
    if kind is not None:
        if pairs.setdefault("kind", kind) != kind:
            raise ConfigurationError(
                f"config is for {pairs['kind']!r} but the subcommand is {kind!r}", "kind")
    return build_config(pairs)
