"""Severity-factor capacity-fade model.

    Q_loss = sigma(SOC, I_c, T) * Ah**z
    sigma  = (alpha*SOC + beta) * exp((-E_a + delta*I_c) / (R_g * (273.15 + T)))

SOC enters in percent by default (``soc_percent=True``); with the
identified coefficients the SOC term only matters at that scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K


@dataclass(frozen=True)
class AgingParams:
    alpha: float = 2.0161
    beta: float = 4398.5
    delta: float = 112.0
    z: float = 0.5715
    e_a: float = 31500.0
    r_g: float = 8.3145
    soc_percent: bool = True

    def __post_init__(self):
        if not 0.0 < self.z <= 1.0:
            raise ValueError("z must lie in (0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def soc_scale(self) -> float:
        return 100.0 if self.soc_percent else 1.0

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "delta": self.delta, "z": self.z,
                "e_a": self.e_a, "r_g": self.r_g, "soc_percent": self.soc_percent}


def severity_factor(soc, i_c, temp_c, params: AgingParams = AgingParams()):
    """Severity factor; ``soc`` in the units selected by ``params`` (percent by default).

    Vectorised over numpy inputs.
    """
    temp_c = np.asarray(temp_c, dtype=float)
    if np.any(temp_c <= -273.15):
        raise ValueError("temperature must be above absolute zero")
    expo = (-params.e_a + params.delta * np.asarray(i_c, dtype=float)) / (
        params.r_g * (273.15 + temp_c))
    out = (params.alpha * np.asarray(soc, dtype=float) + params.beta) * np.exp(expo)
    return float(out) if out.ndim == 0 else out


def capacity_loss(sigma, ah, z: float = AgingParams.z):
    """Capacity loss in percent for throughput ``ah`` at severity ``sigma``."""
    ah = np.asarray(ah, dtype=float)
    if np.any(ah < 0):
        raise ValueError("Ah-throughput must be non-negative")
    out = np.asarray(sigma) * ah**z
    return float(out) if out.ndim == 0 else out


def c_rate(current, q_nom):
    """|I| / Q_nom in 1/h."""
    if q_nom <= 0:
        raise ValueError("q_nom must be positive")
    out = np.abs(np.asarray(current, dtype=float)) / q_nom
    return float(out) if out.ndim == 0 else out


def accumulate_loss(state, soc, current, dt, q_nom, temp_c=25.0,
                    params: AgingParams = AgingParams()):
    """Advance ``state.capacity_loss`` by one step of constant current.

    The loss so far is mapped to an equivalent throughput at the present
    severity, the step's Ah is added there, and the power law is
    re-evaluated.  ``soc`` is a fraction; it is scaled per ``params``.
    Also advances ``state.ah_throughput``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sigma = K.severity(soc * params.soc_scale, abs(current) / q_nom, temp_c,
                       params.alpha, params.beta, params.delta, params.e_a, params.r_g)
    d_ah = abs(current) * dt / 3600.0
    q = K.loss_increment(state.capacity_loss, sigma, d_ah, params.z)
    return replace(state, capacity_loss=q, ah_throughput=state.ah_throughput + d_ah)


def r_squared(data, model) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    y = np.asarray(data, dtype=float)
    f = np.asarray(model, dtype=float)
    if y.shape != f.shape or y.size < 2:
        raise ValueError("data and model need equal length >= 2")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0.0:
        raise ValueError("R^2 undefined for zero-variance data")
    return float(1.0 - np.sum((y - f) ** 2) / ss_tot)


@dataclass(frozen=True)
class AgingDataset:
    """Constant-condition cycling data: (Ah, loss %) at fixed SOC/C-rate/T."""

    soc: float  # percent
    c_rate: float
    temperature_c: float
    ah: np.ndarray = field(repr=False)
    loss: np.ndarray = field(repr=False)
    name: str = ""

    def __post_init__(self):
        ah = np.asarray(self.ah, dtype=float)
        loss = np.asarray(self.loss, dtype=float)
        object.__setattr__(self, "ah", ah)
        object.__setattr__(self, "loss", loss)
        if ah.shape != loss.shape or ah.ndim != 1:
            raise ValueError("ah and loss must be 1-D arrays of equal length")
        if np.any(np.diff(ah) <= 0):
            raise ValueError("Ah samples must be strictly increasing")
        if np.any(loss < 0):
            raise ValueError("capacity loss must be non-negative")

    @property
    def condition(self):
        return self.soc, self.c_rate, self.temperature_c


def synthesize_dataset(soc, i_c, temp_c, ah, params: AgingParams = AgingParams(),
                       noise: float = 0.0, rng=None, name="") -> AgingDataset:
    """Capacity-loss samples from the model, optionally with multiplicative noise.

    Noisy samples are made monotone with a running maximum so the dataset
    invariants hold.
    """
    ah = np.asarray(ah, dtype=float)
    sigma = severity_factor(soc, i_c, temp_c, params)
    loss = sigma * ah**params.z
    if noise > 0.0:
        rng = np.random.default_rng(rng)
        loss = loss * (1.0 + noise * rng.standard_normal(ah.shape))
        loss = np.maximum.accumulate(np.clip(loss, 0.0, None))
    return AgingDataset(soc, i_c, temp_c, ah, loss, name=name)


# fixture conditions (SOC %, C-rate, T degC); synthetic placeholders
FIXTURE_CONDITIONS = ((35.0, 2.0, 25.0), (50.0, 3.75, 25.0), (50.0, 2.0, 45.0))


def fixture_datasets(noise: float = 0.0, seed: int = 0, n: int = 50,
                     ah_max: float = 3000.0, params: AgingParams = AgingParams()):
    rng = np.random.default_rng(seed)
    ah = np.linspace(ah_max / n, ah_max, n)
    return [synthesize_dataset(*cond, ah, params, noise=noise, rng=rng, name=f"dataset{i + 1}")
            for i, cond in enumerate(FIXTURE_CONDITIONS)]


def save_dataset(ds: AgingDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# soc_percent={float(ds.soc)!r},c_rate={float(ds.c_rate)!r},"
                 f"temperature_c={float(ds.temperature_c)!r}\n")
        fh.write("ah,loss_percent\n")
        for a, q in zip(ds.ah, ds.loss):
            fh.write(f"{float(a)!r},{float(q)!r}\n")


def load_dataset(path) -> AgingDataset:
    """Read the CSV written by :func:`save_dataset`."""
    cond = {}
    ah, loss = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split(","):
                    key, _, val = item.partition("=")
                    cond[key.strip()] = float(val)
                continue
            if line.startswith("ah"):
                continue
            try:
                a, q = (float(x) for x in line.split(","))
            except ValueError:
                raise ValueError(f"{path}: malformed row at line {lineno}: {line!r}") from None
            ah.append(a)
            loss.append(q)
    missing = {"soc_percent", "c_rate", "temperature_c"} - cond.keys()
    if missing:
        raise ValueError(f"{path}: condition header lacks {sorted(missing)}")
    return AgingDataset(cond["soc_percent"], cond["c_rate"], cond["temperature_c"],
                        np.array(ah), np.array(loss), name=str(path))


def save_params(params: AgingParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in params.to_dict().items():
            fh.write(f"{key} = {str(val).lower() if isinstance(val, bool) else repr(float(val))}\n")


def load_params(path) -> AgingParams:
    kw = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            kw[key] = val.lower() == "true" if key == "soc_percent" else float(val)
    return AgingParams(**kw)
