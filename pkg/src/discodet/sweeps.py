"""Experiment sweeps, validation suite, and CSV emission.

Each sweep point fits three detectors (unsupervised, supervised, and the
same unsupervised pipeline on data generated without the surface), then
evaluates missed-detection and false-alarm rates on fresh labeled data
and compares the simulated SJNR against the closed form.  Seeds are
derived per point from labeled substreams, so points are independent and
the emitted CSV is byte-identical across reruns.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import channel, detector, flow, statkit, theory
from .config import ScenarioConfig

__all__ = ["SweepResult", "run_power_sweep", "run_elements_sweep",
           "run_samples_sweep", "run_validation", "emit_csv", "run_point"]

CSV_HEADER = ("sweep_var,sweep_value,mdr_unsup,mdr_unsup_lo,mdr_unsup_hi,"
              "mdr_sup,mdr_sup_lo,mdr_sup_hi,mdr_no_dris,mdr_no_dris_lo,"
              "mdr_no_dris_hi,far_target,far_empirical,sjnr_sim_db,"
              "sjnr_theory_db,seed")


@dataclass
class SweepResult:
    sweep_var: str
    sweep_value: float
    mdr_unsup: float
    mdr_unsup_lo: float
    mdr_unsup_hi: float
    mdr_sup: float
    mdr_sup_lo: float
    mdr_sup_hi: float
    mdr_no_dris: float
    mdr_no_dris_lo: float
    mdr_no_dris_hi: float
    far_target: float
    far_empirical: float
    sjnr_sim_db: float
    sjnr_theory_db: float
    seed: int
    wall_seconds: float = 0.0


def _db(x: float) -> float:
    return 10.0 * math.log10(x)


def _train_seed(seeds: statkit.SeedStream, label: str) -> int:
    return seeds.derive(label).root_seed


def _fit_variant(cfg: ScenarioConfig, seeds: statkit.SeedStream, scenario, dcfg,
                 variant: str) -> detector.FittedDetector:
    """Fit one detector variant on freshly generated training data.

    ``variant`` is "unsup" or "sup"; the no-surface baseline is the
    unsupervised path run on a zero-element scenario (same code, same
    seed labels), which makes the N_D = 0 sweep row bit-identical to it.
    """
    null = theory.GammaNull(dcfg.n_samples, scenario.fading.noise_w)
    t_total = cfg["detector.train_size"]
    tcfg = cfg.train_config(seed=_train_seed(seeds, f"train-init/{variant}"))
    calib_gen = seeds.child(f"calibrate/{variant}")
    if variant == "unsup":
        n_h1 = int(round(dcfg.mixture_h1 * t_total))
        h1 = channel.gen_willie_statistics(seeds.child("train-data/unsup/h1"),
                                           scenario, "H1", n_h1, dcfg.n_samples)
        h0 = channel.gen_willie_statistics(seeds.child("train-data/unsup/h0"),
                                           scenario, "H0", t_total - n_h1, dcfg.n_samples)
        batch = detector.ObservationBatch.concatenate([h1, h0]) \
            .shuffled(seeds.child("train-data/unsup/shuffle"))
        return detector.fit_unsupervised(batch, null, dcfg, tcfg, calib_gen)
    if variant == "sup":
        batch = channel.gen_willie_statistics(seeds.child("train-data/sup/h1"),
                                              scenario, "H1", t_total, dcfg.n_samples)
        return detector.fit_supervised(batch, null, dcfg, tcfg, calib_gen)
    raise ValueError(f"unknown detector variant {variant!r}")


def _sjnr_pair(cfg: ScenarioConfig, seeds: statkit.SeedStream, p0_dbm: float,
               n_elements: int) -> tuple[float, float]:
    """(simulated, theoretical) SJNR in dB at this operating point."""
    bob_mode = cfg["sjnr.bob_mode"]
    bob_pos = tuple(cfg["geometry.bob_center"]) if bob_mode == "center" else None
    scen = cfg.scenario(p0_dbm, n_elements=n_elements, bob_position=bob_pos)
    sig, jam, noise = channel.gen_bob_signals(seeds.child("sjnr"), scen,
                                              cfg["sjnr.n_symbols"])
    sim = theory.sjnr_empirical(sig, jam, noise)

    geo, fad = scen.geometry, scen.fading
    center = np.asarray(cfg["geometry.bob_center"], float)
    loss_d_b = channel.path_loss_linear(fad.alice_bob, geo.distance(geo.alice, center))
    loss_i_b = channel.path_loss_linear(fad.dris_bob, geo.distance(geo.dris_center, center))
    loss_g = channel.path_loss_linear(fad.alice_dris,
                                      geo.distance(geo.alice, geo.dris_center))
    th = theory.sjnr_theory(scen.p0_watts, n_elements, theory.alpha_bar(scen.profile),
                            loss_d_b, loss_g, loss_i_b, fad.noise_b)
    return _db(sim), _db(th)


def run_point(cfg: ScenarioConfig, root: statkit.SeedStream, sweep_var: str,
              sweep_value: float, p0_dbm: float, n_elements: int,
              n_samples: int) -> SweepResult:
    """Fit and evaluate all detector variants at one sweep setting."""
    t0 = time.perf_counter()
    seeds = root.derive(f"point/{sweep_var}/{sweep_value!r}")
    dcfg = cfg.detector_config(n_samples=n_samples)
    scen = cfg.scenario(p0_dbm, n_elements=n_elements)
    scen0 = cfg.scenario(p0_dbm, n_elements=0)

    # seed labels keyed by element count: a zero-element sweep point takes
    # exactly the no-surface baseline's code path and randomness, so the
    # two rows agree bit-for-bit
    n_d = scen.geometry.n_elements
    det_unsup = _fit_variant(cfg, seeds.derive(f"fit/{n_d}"), scen, dcfg, "unsup")
    det_sup = _fit_variant(cfg, seeds.derive(f"fit/{n_d}"), scen, dcfg, "sup")
    det_nodris = _fit_variant(cfg, seeds.derive("fit/0"), scen0, dcfg, "unsup")

    n_eval = cfg["detector.eval_size"]
    eval_h0 = channel.gen_willie_statistics(seeds.child("eval/h0"), scen, "H0",
                                            n_eval, n_samples)
    eval_h1 = channel.gen_willie_statistics(seeds.child(f"eval/h1/{n_d}"), scen, "H1",
                                            n_eval, n_samples)
    eval_h1_0 = channel.gen_willie_statistics(seeds.child("eval/h1/0"), scen0,
                                              "H1", n_eval, n_samples)
    eval_dris = detector.ObservationBatch.concatenate([eval_h0, eval_h1])
    eval_nodris = detector.ObservationBatch.concatenate([eval_h0, eval_h1_0])

    rep_unsup = detector.evaluate(det_unsup, eval_dris)
    rep_sup = detector.evaluate(det_sup, eval_dris)
    rep_nodris = detector.evaluate(det_nodris, eval_nodris)
    sjnr_sim, sjnr_th = _sjnr_pair(cfg, seeds, p0_dbm, n_elements)

    return SweepResult(
        sweep_var=sweep_var,
        sweep_value=sweep_value,
        mdr_unsup=rep_unsup.mdr, mdr_unsup_lo=rep_unsup.mdr_ci[0],
        mdr_unsup_hi=rep_unsup.mdr_ci[1],
        mdr_sup=rep_sup.mdr, mdr_sup_lo=rep_sup.mdr_ci[0], mdr_sup_hi=rep_sup.mdr_ci[1],
        mdr_no_dris=rep_nodris.mdr, mdr_no_dris_lo=rep_nodris.mdr_ci[0],
        mdr_no_dris_hi=rep_nodris.mdr_ci[1],
        far_target=dcfg.alpha,
        far_empirical=rep_unsup.far,
        sjnr_sim_db=sjnr_sim,
        sjnr_theory_db=sjnr_th,
        seed=root.root_seed,
        wall_seconds=time.perf_counter() - t0,
    )


def run_power_sweep(cfg: ScenarioConfig, root_seed: Optional[int] = None) -> list[SweepResult]:
    """Transmit-power sweep at the configured surface size."""
    root = statkit.SeedStream(cfg["seeds.root"] if root_seed is None else root_seed)
    n_d = cfg["dris.elements_h"] * cfg["dris.elements_v"]
    return [run_point(cfg, root, "p0_dbm", p0, p0, n_d, cfg["detector.n_samples"])
            for p0 in cfg["sweep.powers_dbm"]]


def run_elements_sweep(cfg: ScenarioConfig, root_seed: Optional[int] = None) -> list[SweepResult]:
    """Surface-size sweep at the fixed transmit power."""
    root = statkit.SeedStream(cfg["seeds.root"] if root_seed is None else root_seed)
    p0 = cfg["sweep.fixed_p0_dbm"]
    return [run_point(cfg, root, "n_elements", n_d, p0, n_d, cfg["detector.n_samples"])
            for n_d in cfg["sweep.elements"]]


def run_samples_sweep(cfg: ScenarioConfig, root_seed: Optional[int] = None) -> list[SweepResult]:
    """Samples-per-statistic sweep at the fixed transmit power."""
    root = statkit.SeedStream(cfg["seeds.root"] if root_seed is None else root_seed)
    p0 = cfg["sweep.fixed_p0_dbm"]
    n_d = cfg["dris.elements_h"] * cfg["dris.elements_v"]
    for n in cfg["sweep.samples"]:
        if n > cfg["detector.m_symbols"]:
            raise ValueError(f"sweep sample count {n} exceeds the coherence-interval "
                             f"length {cfg['detector.m_symbols']}")
    return [run_point(cfg, root, "n_samples", n, p0, n_d, n)
            for n in cfg["sweep.samples"]]


# -- CSV ---------------------------------------------------------------------

def _csv_num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def emit_csv(results: list[SweepResult], path, cfg: Optional[ScenarioConfig] = None) -> None:
    """Write sweep rows with a '#'-prefixed preamble echoing the config."""
    from .config import dump_config

    lines = []
    if cfg is not None:
        lines += [f"# {line}" for line in dump_config(cfg).splitlines()]
    lines.append(CSV_HEADER)
    for r in results:
        row = [r.sweep_var, _csv_num(r.sweep_value)]
        row += [_csv_num(v) for v in (
            r.mdr_unsup, r.mdr_unsup_lo, r.mdr_unsup_hi,
            r.mdr_sup, r.mdr_sup_lo, r.mdr_sup_hi,
            r.mdr_no_dris, r.mdr_no_dris_lo, r.mdr_no_dris_hi,
            r.far_target, r.far_empirical, r.sjnr_sim_db, r.sjnr_theory_db)]
        row.append(str(int(r.seed)))
        lines.append(",".join(row))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write CSV to {path}: {exc}") from exc


# -- validation suite --------------------------------------------------------

@dataclass
class ValidationCheck:
    name: str
    passed: bool
    detail: str


def autoregressive_check(model: flow.FlowModel, probe_gen: np.random.Generator,
                         eps: float = 1e-4) -> bool:
    """Finite-perturbation probe of the masked conditioner of every block:
    output t must ignore inputs u >= t."""
    for blk in model.blocks:
        d = blk.dim
        y = probe_gen.standard_normal((1, d))
        mu0, s0 = blk.made.forward(y)
        for u in range(d):
            bumped = y.copy()
            bumped[0, u] += eps
            mu1, s1 = blk.made.forward(bumped)
            for t in range(u + 1):
                if mu1[0, t] != mu0[0, t] or s1[0, t] != s0[0, t]:
                    return False
    return True


def run_validation(cfg: ScenarioConfig, root_seed: Optional[int] = None,
                   fast: bool = False) -> list[ValidationCheck]:
    """Execute the closed-form and pipeline self-checks; returns one record
    per check (failures are report content, not exceptions)."""
    root = statkit.SeedStream(cfg["seeds.root"] if root_seed is None else root_seed)
    checks: list[ValidationCheck] = []
    noise = cfg.noise_power()
    profile = cfg.profile()
    abar = theory.alpha_bar(profile)

    # mean squared amplitude of the reflection profile (informational)
    checks.append(ValidationCheck("alpha_bar", True, f"alpha_bar = {abar:.6f}"))

    # Gaussian-limit variance and circularity of the cascaded channel
    n_draws = 20_000 if fast else 100_000
    geo = cfg.geometry()
    fad = cfg.fading()
    draws = channel.cascaded_mc(root.child("validate/cascade"), geo, fad, profile,
                                "willie", n_draws)
    loss_g = channel.path_loss_linear(fad.alice_dris, geo.distance(geo.alice, geo.dris_center))
    loss_i = channel.path_loss_linear(fad.dris_willie,
                                      geo.distance(geo.dris_center, geo.willie))
    var_th = theory.prop_variance(geo.n_elements, abar, loss_g, loss_i)
    var_mc = float(np.mean(np.abs(draws) ** 2))
    rel = abs(var_mc - var_th) / var_th
    p2 = np.mean(np.abs(draws) ** 2)
    ratio = float(np.mean(np.abs(draws) ** 4) / p2**2)
    checks.append(ValidationCheck("cascade_variance", rel < 0.02,
                                  f"MC/theory relative error {rel:.4f}"))
    checks.append(ValidationCheck("cascade_circularity", 1.9 < ratio < 2.1,
                                  f"fourth-moment ratio {ratio:.3f}"))
    mean_mod = float(np.abs(draws.mean()))
    mean_bound = 6.0 * math.sqrt(var_th / n_draws)
    checks.append(ValidationCheck("cascade_mean_zero", mean_mod < mean_bound,
                                  f"|mean| = {mean_mod:.3e} (bound {mean_bound:.3e})"))

    # exactness of the Gamma null via Kolmogorov-Smirnov over 10 seeds
    from scipy.stats import gamma as gamma_dist, kstest

    n_stats = 20_000 if fast else 100_000
    n_dcfg = cfg["detector.n_samples"]
    scen = cfg.scenario(cfg["sweep.fixed_p0_dbm"])
    passes = 0
    for i in range(10):
        batch = channel.gen_willie_statistics(root.child("validate/ks", i), scen,
                                              "H0", n_stats, n_dcfg)
        stat, _ = kstest(batch.statistics, gamma_dist(a=n_dcfg, scale=noise).cdf)
        crit = 1.628 / math.sqrt(n_stats)   # 1% significance, large n
        passes += stat < crit
    checks.append(ValidationCheck("h0_gamma_ks", passes >= 9,
                                  f"{passes}/10 seeds below the 1% KS critical value"))

    # flow machinery: autoregressive masks, gradients, inversion, normalization
    probe_gen = root.child("validate/flow-probe")
    tcfg = flow.TrainConfig(seed=root.derive("validate/flow-seed").root_seed,
                            n_blocks=3, hidden=(16,), epochs=1)
    model = flow.build_flow(4, tcfg)
    for p in model.parameters():
        p += 0.1 * probe_gen.standard_normal(p.shape)
    checks.append(ValidationCheck("flow_autoregressive",
                                  autoregressive_check(model, probe_gen),
                                  "masked conditioner ignores current/future inputs"))

    batch = probe_gen.standard_normal((8, 4))
    _, grads = flow.grad_nll(model, batch)
    ok, worst = _gradient_check(model, batch, grads)
    checks.append(ValidationCheck("flow_gradients", ok,
                                  f"worst finite-difference mismatch {worst:.2e}"))

    y = probe_gen.standard_normal((64, 4))
    z, _ = model.forward(y)
    round_trip = float(np.max(np.abs(model.inverse(z) - y)))
    checks.append(ValidationCheck("flow_roundtrip", round_trip < 1e-9,
                                  f"max inverse(forward(y)) error {round_trip:.2e}"))

    model1 = flow.build_flow(1, flow.TrainConfig(seed=7, n_blocks=3, hidden=(16,)))
    for p in model1.parameters():
        p += 0.2 * probe_gen.standard_normal(p.shape)
    grid = np.linspace(-10, 10, 4001)
    dens = np.exp(model1.log_prob(grid[:, None]))
    mass = float(np.trapezoid(dens, grid))
    checks.append(ValidationCheck("flow_normalization", abs(mass - 1.0) < 1e-3,
                                  f"density mass on [-10, 10] = {mass:.6f}"))

    # FAR calibration and the tractable-surrogate comparison
    null = theory.GammaNull(n_dcfg, noise)
    sur_cfg = flow.TrainConfig(seed=root.derive("validate/sur-seed").root_seed,
                               epochs=40 if fast else 120)
    dcfg = detector.DetectorConfig(alpha=0.05, rho=cfg["detector.rho"],
                                   n_samples=n_dcfg,
                                   n_threshold=100_000 if fast else 400_000)
    n_train = 10_000 if fast else 20_000
    gen_s = root.child("validate/surrogate")
    h1_stats = statkit.sample_gamma(gen_s, n_dcfg, 2 * noise, size=n_train // 2)
    h0_stats = statkit.sample_gamma(gen_s, n_dcfg, noise, size=n_train - n_train // 2)
    batch = detector.ObservationBatch(
        np.concatenate([h1_stats, h0_stats]),
        np.concatenate([np.ones(h1_stats.size, np.int8), np.zeros(h0_stats.size, np.int8)]),
    ).shuffled(root.child("validate/surrogate-shuffle"))
    det = detector.fit_unsupervised(batch, null, dcfg, sur_cfg,
                                    root.child("validate/surrogate-calib"))
    n_eval = 20_000 if fast else 50_000
    gen_e = root.child("validate/surrogate-eval")
    far = float(np.mean(detector.classify(
        det, statkit.sample_gamma(gen_e, n_dcfg, noise, size=n_eval))))
    lo, hi = statkit.binomial_ci(int(round(dcfg.alpha * n_eval)), n_eval, 0.99)
    checks.append(ValidationCheck("far_calibration", lo <= far <= hi,
                                  f"empirical FAR {far:.4f} vs target {dcfg.alpha}"))

    h1_eval = statkit.sample_gamma(gen_e, n_dcfg, 2 * noise, size=n_eval)
    mdr = float(np.mean(~detector.classify(det, h1_eval)))
    y_crit = gamma_dist(a=n_dcfg, scale=noise).ppf(1 - dcfg.alpha)
    mdr_opt = float(gamma_dist(a=n_dcfg, scale=2 * noise).cdf(y_crit))
    checks.append(ValidationCheck("surrogate_np_oracle", mdr <= mdr_opt + 0.05,
                                  f"pipeline MDR {mdr:.4f} vs analytic optimum {mdr_opt:.4f}"))
    return checks


def _gradient_check(model: flow.FlowModel, batch: np.ndarray,
                    grads: list[np.ndarray], step: float = 1e-5,
                    rel_tol: float = 1e-4, abs_tol: float = 1e-7) -> tuple[bool, float]:
    """Central-difference check of every parameter coordinate."""
    params = model.parameters()
    worst = 0.0
    ok = True
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = flow.nll(model, batch)
            flat[i] = orig - step
            down = flow.nll(model, batch)
            flat[i] = orig
            fd = (up - down) / (2 * step)
            err = abs(fd - gflat[i])
            denom = max(abs(fd), abs(gflat[i]))
            score = err if denom < 1e-12 else err / max(denom, 1.0)
            worst = max(worst, score)
            if err > abs_tol and (denom == 0 or err / denom > rel_tol):
                ok = False
    return ok, worst
