"""Geometry, fading, disco-surface coefficients, and received-signal simulation.

The simulator follows a block-fading structure: direct small-scale
channels and the two cascaded-hop vectors are redrawn once per coherence
interval, while the surface's reflection coefficients and the transmit
symbols are redrawn every symbol.  That per-symbol redraw is what makes
the surface "disco": it deliberately ages the channel inside a single
coherence interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .statkit import sample_cgauss

__all__ = [
    "Geometry",
    "DrisProfile",
    "PathLoss",
    "LinkFading",
    "ChannelRealization",
    "Scenario",
    "LOS_3GPP",
    "NLOS_3GPP",
    "dbm_to_watts",
    "path_loss_linear",
    "sample_bob_position",
    "los_steering",
    "sample_rician_g",
    "sample_dris_coeffs",
    "cascaded_h",
    "sample_realization",
    "cascaded_mc",
    "gen_willie_statistics",
    "gen_bob_signals",
]


@dataclass(frozen=True)
class PathLoss:
    """Log-distance path loss: intercept + slope * log10(d) in dB."""

    intercept_db: float
    slope_db: float

    def loss_db(self, d) -> np.ndarray | float:
        return self.intercept_db + self.slope_db * np.log10(d)


# 3GPP-style large-scale models used throughout the simulations.
LOS_3GPP = PathLoss(35.6, 22.0)
NLOS_3GPP = PathLoss(32.6, 36.7)


@dataclass(frozen=True)
class Geometry:
    """Node positions, the receiver annulus, and the surface's element grid."""

    alice: tuple[float, float, float]
    willie: tuple[float, float, float]
    dris_center: tuple[float, float, float]
    bob_center: tuple[float, float, float]
    bob_inner: float
    bob_outer: float
    grid_h: int = 64
    grid_v: int = 32
    element_spacing: float = 0.0857 / 2
    wavelength: float = 0.0857

    def __post_init__(self):
        if self.grid_h < 0 or self.grid_v < 0:
            raise ValueError("element grid counts must be non-negative")
        if self.bob_inner > self.bob_outer:
            raise ValueError("annulus inner radius must not exceed the outer radius")

    @property
    def n_elements(self) -> int:
        return self.grid_h * self.grid_v

    def element_positions(self) -> np.ndarray:
        """(N_D, 3) element coordinates on a planar grid centered at dris_center.

        The panel spans the y (horizontal) and z (vertical) axes, facing
        the transmitter along x.
        """
        c = np.asarray(self.dris_center, dtype=float)
        iy = np.arange(self.grid_h) - (self.grid_h - 1) / 2.0
        iz = np.arange(self.grid_v) - (self.grid_v - 1) / 2.0
        yy, zz = np.meshgrid(iy, iz, indexing="ij")
        pos = np.zeros((self.n_elements, 3))
        pos[:, 0] = c[0]
        pos[:, 1] = c[1] + yy.ravel() * self.element_spacing
        pos[:, 2] = c[2] + zz.ravel() * self.element_spacing
        return pos

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))


@dataclass(frozen=True)
class DrisProfile:
    """Discrete reflection-coefficient profile of the disco surface.

    Each element independently draws phase ``phases[i]`` with probability
    ``probabilities[i]``; the amplitude is the hardware-coupled value
    ``amplitudes[i]`` for that phase.
    """

    phases: tuple[float, ...]
    amplitudes: tuple[float, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        k = len(self.phases)
        if len(self.amplitudes) != k or len(self.probabilities) != k:
            raise ValueError("phases, amplitudes, and probabilities must have equal length")
        if k == 0 or (k & (k - 1)) != 0:
            raise ValueError(f"profile size must be a power of two (b-bit quantization), got {k}")
        if abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        if any(a < 0 or a > 1 for a in self.amplitudes):
            raise ValueError("amplitudes must lie in [0, 1]")

    @property
    def bits(self) -> int:
        return len(self.phases).bit_length() - 1

    def coeff_table(self) -> np.ndarray:
        return np.asarray(self.amplitudes) * np.exp(1j * np.asarray(self.phases))


@dataclass(frozen=True)
class LinkFading:
    """Per-link path-loss assignment plus fading and noise parameters.

    The surface hops default to LOS (the surface is deployed with a clear
    view next to the transmitter); the two direct links default to NLOS.
    """

    alice_dris: PathLoss = LOS_3GPP
    dris_willie: PathLoss = LOS_3GPP
    dris_bob: PathLoss = LOS_3GPP
    alice_willie: PathLoss = NLOS_3GPP
    alice_bob: PathLoss = NLOS_3GPP
    rician_g: float = 4.0
    noise_w: float = 1.8e-15
    noise_b: float = 1.8e-15

    def __post_init__(self):
        if self.rician_g < 0:
            raise ValueError("Rician factor must be non-negative")
        if self.noise_w <= 0 or self.noise_b <= 0:
            raise ValueError("noise powers must be positive")


@dataclass
class ChannelRealization:
    """One coherence interval's channel state (large-scale factors are linear)."""

    h_d_w: complex
    h_d_b: complex
    g_hat: np.ndarray
    h_i_w: np.ndarray
    h_i_b: np.ndarray
    loss_g: float
    loss_i_w: float
    loss_i_b: float
    loss_d_w: float
    loss_d_b: float


@dataclass(frozen=True)
class Scenario:
    """Everything the signal generators need for one experiment setting."""

    geometry: Geometry
    fading: LinkFading
    profile: DrisProfile
    p0_watts: float
    m_symbols: int = 20           # coherence-interval length (symbols), N <= M
    bob_position: Optional[tuple[float, float, float]] = None  # None: sample the annulus


def dbm_to_watts(p_dbm: float) -> float:
    """Convert dBm to watts: 10^((p - 30)/10)."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def path_loss_linear(model: PathLoss, d) -> np.ndarray | float:
    """Linear large-scale attenuation 10^(PL_dB/10) at distance d (meters)."""
    arr = np.asarray(d, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("path loss requires a positive distance")
    out = 10.0 ** (model.loss_db(arr) / 10.0)
    return float(out) if np.ndim(d) == 0 else out


def sample_bob_position(gen: np.random.Generator, geometry: Geometry, size=None):
    """Area-uniform positions inside the receiver annulus.

    Radius = sqrt(u * (r2^2 - r1^2) + r1^2) with u uniform, angle uniform
    in [0, 2pi); height equals the annulus center height.
    """
    c = np.asarray(geometry.bob_center, dtype=float)
    r1, r2 = geometry.bob_inner, geometry.bob_outer
    n = 1 if size is None else size
    u = gen.random(n)
    theta = gen.random(n) * 2 * np.pi
    r = np.sqrt(u * (r2 * r2 - r1 * r1) + r1 * r1)
    pos = np.empty((n, 3))
    pos[:, 0] = c[0] + r * np.cos(theta)
    pos[:, 1] = c[1] + r * np.sin(theta)
    pos[:, 2] = c[2]
    return pos[0] if size is None else pos


def los_steering(geometry: Geometry) -> np.ndarray:
    """Unit-modulus near-field LOS vector exp(-j 2pi/lambda (d_r - d_0))."""
    alice = np.asarray(geometry.alice, dtype=float)
    d_r = np.linalg.norm(geometry.element_positions() - alice, axis=1)
    d_0 = geometry.distance(alice, geometry.dris_center)
    return np.exp(-1j * (2 * np.pi / geometry.wavelength) * (d_r - d_0))


def sample_rician_g(gen: np.random.Generator, geometry: Geometry, kappa: float,
                    size=None) -> np.ndarray:
    """Transmitter-to-surface small-scale vector with Rician factor kappa.

    Per-entry second moment is 1 for every kappa >= 0.  With ``size`` set,
    returns ``(size, N_D)`` independent interval realizations sharing the
    deterministic LOS component.
    """
    if kappa < 0:
        raise ValueError("Rician factor must be non-negative")
    los = los_steering(geometry)
    shape = (geometry.n_elements,) if size is None else (size, geometry.n_elements)
    nlos = sample_cgauss(gen, 0.0, 1.0, size=shape)
    return math.sqrt(kappa / (1 + kappa)) * los + math.sqrt(1 / (1 + kappa)) * nlos


def sample_dris_coeffs(gen: np.random.Generator, profile: DrisProfile, n: int,
                       size=None) -> np.ndarray:
    """Independent per-element reflection coefficients amp_i * exp(j phase_i).

    ``size`` prepends extra axes (e.g. ``(intervals, symbols)``) for one
    fresh draw per symbol time.
    """
    table = profile.coeff_table()
    cum = np.cumsum(profile.probabilities)
    shape = (n,) if size is None else tuple(np.atleast_1d(size)) + (n,)
    idx = np.searchsorted(cum, gen.random(shape), side="right")
    idx = np.minimum(idx, len(table) - 1)  # guard u == 1.0 edge
    return table[idx]


def cascaded_h(realization: ChannelRealization, coeffs: np.ndarray, target: str):
    """Scalar cascaded channel sum_r g_r * coeff_r * h_r / sqrt(L_g * L_I)."""
    if target == "willie":
        h_i, loss_i = realization.h_i_w, realization.loss_i_w
    elif target == "bob":
        h_i, loss_i = realization.h_i_b, realization.loss_i_b
    else:
        raise ValueError(f"target must be 'willie' or 'bob', got {target!r}")
    if coeffs.shape[-1] != realization.g_hat.shape[-1]:
        raise ValueError("coefficient vector length does not match the element count")
    scale = math.sqrt(realization.loss_g * loss_i)
    return np.sum(realization.g_hat * coeffs * h_i, axis=-1) / scale


def sample_realization(gen: np.random.Generator, geometry: Geometry, fading: LinkFading,
                       bob_position=None) -> ChannelRealization:
    """Draw one coherence interval's small-scale channels and large-scale factors."""
    if bob_position is None:
        bob_position = sample_bob_position(gen, geometry)
    n = geometry.n_elements
    d_ad = geometry.distance(geometry.alice, geometry.dris_center)
    d_dw = geometry.distance(geometry.dris_center, geometry.willie)
    d_db = geometry.distance(geometry.dris_center, bob_position)
    d_aw = geometry.distance(geometry.alice, geometry.willie)
    d_ab = geometry.distance(geometry.alice, bob_position)
    loss_g = path_loss_linear(fading.alice_dris, d_ad)
    loss_i_w = path_loss_linear(fading.dris_willie, d_dw)
    loss_i_b = path_loss_linear(fading.dris_bob, d_db)
    loss_d_w = path_loss_linear(fading.alice_willie, d_aw)
    loss_d_b = path_loss_linear(fading.alice_bob, d_ab)
    h_d_w = sample_cgauss(gen, 0.0, 1.0) / math.sqrt(loss_d_w)
    h_d_b = sample_cgauss(gen, 0.0, 1.0) / math.sqrt(loss_d_b)
    g_hat = sample_rician_g(gen, geometry, fading.rician_g) if n else np.zeros(0, complex)
    h_i_w = sample_cgauss(gen, 0.0, 1.0, size=(n,)) if n else np.zeros(0, complex)
    h_i_b = sample_cgauss(gen, 0.0, 1.0, size=(n,)) if n else np.zeros(0, complex)
    return ChannelRealization(h_d_w, h_d_b, g_hat, h_i_w, h_i_b,
                              loss_g, loss_i_w, loss_i_b, loss_d_w, loss_d_b)


def _chunk_sizes(total: int, chunk: int):
    done = 0
    while done < total:
        take = min(chunk, total - done)
        yield take
        done += take


def _mc_chunk(n: int, per_draw: int) -> int:
    # keep scratch arrays around a few hundred MB at N_D = 2048
    return max(1, min(n, int(4e6 / max(per_draw, 1))))


def cascaded_mc(gen: np.random.Generator, geometry: Geometry, fading: LinkFading,
                profile: DrisProfile, target: str, n_draws: int,
                bob_position=None) -> np.ndarray:
    """Independent Monte-Carlo draws of the cascaded channel (one per draw).

    Used to validate the Gaussian-limit variance N_D * abar / (L_g * L_I).
    """
    if target not in ("willie", "bob"):
        raise ValueError(f"target must be 'willie' or 'bob', got {target!r}")
    n = geometry.n_elements
    if n == 0:
        return np.zeros(n_draws, dtype=complex)
    if bob_position is None:
        bob_position = geometry.bob_center
    d_ad = geometry.distance(geometry.alice, geometry.dris_center)
    if target == "willie":
        d_hop = geometry.distance(geometry.dris_center, geometry.willie)
        loss_i = path_loss_linear(fading.dris_willie, d_hop)
    else:
        d_hop = geometry.distance(geometry.dris_center, bob_position)
        loss_i = path_loss_linear(fading.dris_bob, d_hop)
    loss_g = path_loss_linear(fading.alice_dris, d_ad)
    scale = math.sqrt(loss_g * loss_i)
    out = np.empty(n_draws, dtype=complex)
    pos = 0
    for take in _chunk_sizes(n_draws, _mc_chunk(n_draws, n)):
        g = sample_rician_g(gen, geometry, fading.rician_g, size=take)
        h = sample_cgauss(gen, 0.0, 1.0, size=(take, n))
        c = sample_dris_coeffs(gen, profile, n, size=take)
        out[pos : pos + take] = np.sum(g * c * h, axis=1) / scale
        pos += take
    return out


def gen_willie_statistics(gen: np.random.Generator, scenario: Scenario, hypothesis: str,
                          n_intervals: int, n_samples: int):
    """Accumulated-power statistics Y = sum_{n=1..N} |y(n)|^2 at the warden.

    Under H0 each received sample is pure noise.  Under H1 a fresh channel
    realization is drawn per coherence interval, the surface coefficients
    and transmit symbol are redrawn per sample, and the direct channel is
    held fixed within the interval.
    """
    from .detector import ObservationBatch

    if hypothesis not in ("H0", "H1"):
        raise ValueError(f"hypothesis must be 'H0' or 'H1', got {hypothesis!r}")
    if n_samples < 1:
        raise ValueError("need at least one sample per statistic")
    if n_samples > scenario.m_symbols:
        raise ValueError(f"samples per statistic ({n_samples}) exceeds the "
                         f"coherence-interval length ({scenario.m_symbols})")
    noise_var = scenario.fading.noise_w
    labels = np.full(n_intervals, 1 if hypothesis == "H1" else 0, dtype=np.int8)

    if hypothesis == "H0":
        noise = sample_cgauss(gen, 0.0, noise_var, size=(n_intervals, n_samples))
        stats = np.abs(noise) ** 2
        return ObservationBatch(stats.sum(axis=1), labels)

    geo, fad = scenario.geometry, scenario.fading
    nd = geo.n_elements
    d_aw = geo.distance(geo.alice, geo.willie)
    loss_d_w = path_loss_linear(fad.alice_willie, d_aw)
    if nd:
        d_ad = geo.distance(geo.alice, geo.dris_center)
        d_dw = geo.distance(geo.dris_center, geo.willie)
        casc_scale = math.sqrt(path_loss_linear(fad.alice_dris, d_ad)
                               * path_loss_linear(fad.dris_willie, d_dw))
    stats = np.empty(n_intervals)
    pos = 0
    for take in _chunk_sizes(n_intervals, _mc_chunk(n_intervals, n_samples * max(nd, 1))):
        h_d = sample_cgauss(gen, 0.0, 1.0, size=take) / math.sqrt(loss_d_w)
        if nd:
            g = sample_rician_g(gen, geo, fad.rician_g, size=take)
            h_i = sample_cgauss(gen, 0.0, 1.0, size=(take, nd))
            a = g * h_i / casc_scale
            coeffs = sample_dris_coeffs(gen, scenario.profile, nd, size=(take, n_samples))
            h_tot = h_d[:, None] + np.einsum("ik,ink->in", a, coeffs)
        else:
            h_tot = np.broadcast_to(h_d[:, None], (take, n_samples))
        s = sample_cgauss(gen, 0.0, scenario.p0_watts, size=(take, n_samples))
        noise = sample_cgauss(gen, 0.0, noise_var, size=(take, n_samples))
        y = h_tot * s + noise
        stats[pos : pos + take] = np.sum(np.abs(y) ** 2, axis=1)
        pos += take
    return ObservationBatch(stats, labels)


def gen_bob_signals(gen: np.random.Generator, scenario: Scenario, n_symbols: int):
    """Per-symbol covert-signal and jamming powers at the receiver.

    Returns ``(signal_powers, jamming_powers, noise_power)`` with
    |h_d s|^2 and |h_D(m) s|^2 per transmitted symbol; symbols are grouped
    into coherence intervals of ``scenario.m_symbols``.
    """
    if n_symbols < 1:
        raise ValueError("need at least one symbol")
    geo, fad = scenario.geometry, scenario.fading
    nd = geo.n_elements
    m = scenario.m_symbols
    n_intervals = (n_symbols + m - 1) // m
    fixed_pos = scenario.bob_position
    d_ad = geo.distance(geo.alice, geo.dris_center)
    loss_g = path_loss_linear(fad.alice_dris, d_ad)

    sig = np.empty(n_intervals * m)
    jam = np.empty(n_intervals * m)
    pos = 0
    for take in _chunk_sizes(n_intervals, _mc_chunk(n_intervals, m * max(nd, 1))):
        if fixed_pos is None:
            bpos = sample_bob_position(gen, geo, size=take)
        else:
            bpos = np.broadcast_to(np.asarray(fixed_pos, float), (take, 3))
        d_ab = np.linalg.norm(bpos - np.asarray(geo.alice, float), axis=1)
        d_db = np.linalg.norm(bpos - np.asarray(geo.dris_center, float), axis=1)
        loss_d_b = path_loss_linear(fad.alice_bob, d_ab)
        loss_i_b = path_loss_linear(fad.dris_bob, d_db)
        h_d = sample_cgauss(gen, 0.0, 1.0, size=take) / np.sqrt(loss_d_b)
        if nd:
            g = sample_rician_g(gen, geo, fad.rician_g, size=take)
            h_i = sample_cgauss(gen, 0.0, 1.0, size=(take, nd))
            a = g * h_i / np.sqrt(loss_g * loss_i_b)[:, None]
            coeffs = sample_dris_coeffs(gen, scenario.profile, nd, size=(take, m))
            h_jam = np.einsum("ik,imk->im", a, coeffs)
        else:
            h_jam = np.zeros((take, m), dtype=complex)
        s = sample_cgauss(gen, 0.0, scenario.p0_watts, size=(take, m))
        chunk_n = take * m
        sig[pos : pos + chunk_n] = (np.abs(h_d[:, None] * s) ** 2).ravel()
        jam[pos : pos + chunk_n] = (np.abs(h_jam * s) ** 2).ravel()
        pos += chunk_n
    return sig[:n_symbols], jam[:n_symbols], fad.noise_b
