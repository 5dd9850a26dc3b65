//! Monte Carlo emulation of preparation, Bell measurement and recasting
//! under the two-cloner attack, plus parameter estimation and the LO
//! phase-calibration arithmetic.
//!
//! Sampling runs in the recasting frame of [`ScenarioSpec`]: "a" is the
//! party that keeps its encodings and "b" the one that recasts.
//!
//! # Random streams
//!
//! Pulses are generated in chunks of [`CHUNK_SIZE`]. Chunk `k` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with stream id `k`, so a batch is a pure
//! function of `(scenario, count, seed)` regardless of thread count.
//! Gaussian variates come from `rand_distr::StandardNormal`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bounds::{recast_variances, ScenarioSpec};
use crate::error::{Error, Result};

/// Pulses per independently seeded chunk.
pub const CHUNK_SIZE: usize = 1 << 16;
/// Minimum batch size for parameter estimation.
pub const MIN_ESTIMATION_COUNT: usize = 100;
/// Sub-batches used for standard errors.
pub const SUB_BATCHES: usize = 10;
/// Below this magnitude both interference arguments give no phase.
pub const PHASE_DEGENERACY_TOL: f64 = 1e-9;

/// A quadrature pair `(Q, P)`.
pub type Quadratures = (f64, f64);

/// Simulated pulses and their classical records.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub count: usize,
    pub rng_seed: u64,
    /// Modulation variance the encodings were drawn with.
    pub modulation_variance: f64,
    pub encodings_a: Vec<Quadratures>,
    pub encodings_b: Vec<Quadratures>,
    /// Charlie's broadcast `(Q̂, P̂)`, already rescaled by `√2`.
    pub broadcast: Vec<Quadratures>,
    /// Recast data `(Q̂ + √T₂ Q_b, P̂ − √T₂ P_b)` built with the true `T₂`.
    pub recast_b: Vec<Quadratures>,
}

impl SampleBatch {
    /// Recast data built with a transmission estimate instead of the true `T₂`.
    pub fn recast_with(&self, t2: f64) -> Vec<Quadratures> {
        let s = t2.max(0.0).sqrt();
        self.broadcast
            .iter()
            .zip(&self.encodings_b)
            .map(|(&(q, p), &(qb, pb))| (q + s * qb, p - s * pb))
            .collect()
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

#[inline]
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One EPR pair of variance `n`: `(Q_E, Q_E'', P_E, P_E'')` with
/// covariance `[[n, c], [c, n]]` on Q and `[[n, −c], [−c, n]]` on P.
#[inline]
fn epr_draw(rng: &mut ChaCha8Rng, n: f64) -> [f64; 4] {
    let c = (n * n - 1.0).max(0.0).sqrt();
    let sn = n.sqrt();
    let (z1, z2, z3, z4) = (normal(rng), normal(rng), normal(rng), normal(rng));
    [sn * z1, (c * z1 + z2) / sn, sn * z3, (-c * z3 + z4) / sn]
}

/// Samples `count` EPR pairs of variance `n ≥ 1`.
pub fn sample_epr_pairs(n: f64, count: usize, seed: u64) -> Result<Vec<[f64; 4]>> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::UnphysicalParameters(format!("EPR variance must be >= 1, got {n}")));
    }
    Ok(chunks(count)
        .into_par_iter()
        .flat_map_iter(|(k, len)| {
            let mut rng = chunk_rng(seed, k);
            (0..len).map(move |_| epr_draw(&mut rng, n))
        })
        .collect())
}

fn chunks(count: usize) -> Vec<(usize, usize)> {
    (0..count.div_ceil(CHUNK_SIZE))
        .map(|k| (k, CHUNK_SIZE.min(count - k * CHUNK_SIZE)))
        .collect()
}

struct Pulse {
    enc_a: Quadratures,
    enc_b: Quadratures,
    broadcast: Quadratures,
    recast: Quadratures,
}

/// Runs `count` pulses of the protocol under the scenario's attack.
pub fn simulate_protocol(s: &ScenarioSpec, count: usize, seed: u64) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (t1, n1, t2, n2) = s.cloner_params();
    let vs = s.protocol().modulation_variance();
    let sig = vs.sqrt();
    let (a1, r1, a2, r2) = (t1.sqrt(), (1.0 - t1).sqrt(), t2.sqrt(), (1.0 - t2).sqrt());

    let pulses: Vec<Pulse> = chunks(count)
        .into_par_iter()
        .flat_map_iter(|(k, len)| {
            let mut rng = chunk_rng(seed, k);
            (0..len).map(move |_| {
                let enc_a = (sig * normal(&mut rng), sig * normal(&mut rng));
                let enc_b = (sig * normal(&mut rng), sig * normal(&mut rng));
                let vac_a = (normal(&mut rng), normal(&mut rng));
                let vac_b = (normal(&mut rng), normal(&mut rng));
                let e1 = epr_draw(&mut rng, n1);
                let e2 = epr_draw(&mut rng, n2);

                let qa = a1 * (enc_a.0 + vac_a.0) + r1 * e1[0];
                let pa = a1 * (enc_a.1 + vac_a.1) + r1 * e1[2];
                let qb = a2 * (enc_b.0 + vac_b.0) + r2 * e2[0];
                let pb = a2 * (enc_b.1 + vac_b.1) + r2 * e2[2];
                // Homodyne outputs (qa − qb)/√2 and (pa + pb)/√2, times √2.
                let broadcast = (qa - qb, pa + pb);
                let recast = (broadcast.0 + a2 * enc_b.0, broadcast.1 - a2 * enc_b.1);
                Pulse {
                    enc_a,
                    enc_b,
                    broadcast,
                    recast,
                }
            })
        })
        .collect();

    let mut batch = SampleBatch {
        count,
        rng_seed: seed,
        modulation_variance: vs,
        encodings_a: Vec::with_capacity(count),
        encodings_b: Vec::with_capacity(count),
        broadcast: Vec::with_capacity(count),
        recast_b: Vec::with_capacity(count),
    };
    for p in pulses {
        batch.encodings_a.push(p.enc_a);
        batch.encodings_b.push(p.enc_b);
        batch.broadcast.push(p.broadcast);
        batch.recast_b.push(p.recast);
    }
    Ok(batch)
}

/// A statistic with its standard error from sub-batch splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Distance from `truth` in units of the standard error.
    pub fn z_score(&self, truth: f64) -> f64 {
        (self.value - truth).abs() / self.std_error
    }
}

/// Evaluates `stat` on the full range and on [`SUB_BATCHES`] contiguous
/// sub-ranges; the standard error is `sd(sub-batch values)/√SUB_BATCHES`.
pub fn with_std_error(count: usize, stat: impl Fn(std::ops::Range<usize>) -> f64) -> Result<Estimate> {
    if count < 2 * SUB_BATCHES {
        return Err(Error::InsufficientData {
            needed: 2 * SUB_BATCHES,
            got: count,
        });
    }
    let value = stat(0..count);
    let subs: Vec<f64> = (0..SUB_BATCHES)
        .map(|k| stat(k * count / SUB_BATCHES..(k + 1) * count / SUB_BATCHES))
        .collect();
    let m = subs.iter().sum::<f64>() / SUB_BATCHES as f64;
    let var = subs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (SUB_BATCHES - 1) as f64;
    Ok(Estimate {
        value,
        std_error: (var / SUB_BATCHES as f64).sqrt(),
    })
}

/// Sample covariance over `range`.
fn cov(x: &[f64], y: &[f64], range: std::ops::Range<usize>) -> f64 {
    let n = range.len() as f64;
    let (xs, ys) = (&x[range.clone()], &y[range]);
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0)
}

fn split(v: &[Quadratures]) -> (Vec<f64>, Vec<f64>) {
    v.iter().copied().unzip()
}

/// Empirical moments compared against the analytic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMoments {
    /// `Var(Q_B')`; analytic value `b_v`.
    pub var_recast_q: Estimate,
    /// `Var(P_B')`; analytic value `b_v`.
    pub var_recast_p: Estimate,
    /// `Cov(Q̂, Q_a)`; analytic value `√T₁·V_S`.
    pub cov_broadcast_enc_a_q: Estimate,
    /// `Cov(P̂, P_a)`; analytic value `√T₁·V_S`.
    pub cov_broadcast_enc_a_p: Estimate,
    /// `Var(Q̂)`.
    pub var_broadcast_q: Estimate,
}

pub fn batch_moments(b: &SampleBatch) -> Result<BatchMoments> {
    let (qr, pr) = split(&b.recast_b);
    let (qh, ph) = split(&b.broadcast);
    let (qa, pa) = split(&b.encodings_a);
    let n = b.count;
    Ok(BatchMoments {
        var_recast_q: with_std_error(n, |r| cov(&qr, &qr, r))?,
        var_recast_p: with_std_error(n, |r| cov(&pr, &pr, r))?,
        cov_broadcast_enc_a_q: with_std_error(n, |r| cov(&qh, &qa, r))?,
        cov_broadcast_enc_a_p: with_std_error(n, |r| cov(&ph, &pa, r))?,
        var_broadcast_q: with_std_error(n, |r| cov(&qh, &qh, r))?,
    })
}

/// Gaussian estimate of `I(a; b')`: per quadrature ½·log₂ of the variance
/// over the variance conditioned on the encoding, summed over Q and P.
pub fn empirical_mutual_info(b: &SampleBatch) -> Result<f64> {
    if b.count < 2 {
        return Err(Error::InsufficientData { needed: 2, got: b.count });
    }
    let (qr, pr) = split(&b.recast_b);
    let (qa, pa) = split(&b.encodings_a);
    let all = 0..b.count;
    let half_bits = |x: &[f64], y: &[f64]| {
        let vx = cov(x, x, all.clone());
        let vy = cov(y, y, all.clone());
        let cxy = cov(x, y, all.clone());
        0.5 * (vx / (vx - cxy * cxy / vy)).log2()
    };
    Ok(half_bits(&qr, &qa) + half_bits(&pr, &pa))
}

/// Analytic `b_v` for comparison with [`BatchMoments::var_recast_q`].
pub fn analytic_recast_variance(s: &ScenarioSpec) -> f64 {
    recast_variances(s).0
}

/// How the pooled residual excess noise is attributed to the two channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseAllocation {
    /// `ε_a = ε_b` declared by the caller.
    Symmetric,
    /// No declaration; per-channel values stay unresolved.
    #[default]
    Unresolved,
}

/// One channel's estimated parameters. `eps_hat` is `None` when the
/// allocation leaves it unresolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedChannel {
    pub t_hat: f64,
    pub t_std_error: f64,
    pub eps_hat: Option<f64>,
    pub eps_std_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimates {
    pub channel_a: EstimatedChannel,
    pub channel_b: EstimatedChannel,
    /// Residual broadcast variance above vacuum, `T₁ε_a + T₂ε_b`.
    pub pooled_excess: Estimate,
}

struct RawEstimate {
    t1: f64,
    t2: f64,
    excess: f64,
}

/// Regresses the broadcast on both encodings in one quadrature; returns the
/// two slopes and the residual variance.
fn regress(y: &[f64], x1: &[f64], x2: &[f64], r: std::ops::Range<usize>) -> (f64, f64, f64) {
    let (s11, s22, s12) = (cov(x1, x1, r.clone()), cov(x2, x2, r.clone()), cov(x1, x2, r.clone()));
    let (s1y, s2y, syy) = (cov(x1, y, r.clone()), cov(x2, y, r.clone()), cov(y, y, r));
    let det = s11 * s22 - s12 * s12;
    let k1 = (s22 * s1y - s12 * s2y) / det;
    let k2 = (s11 * s2y - s12 * s1y) / det;
    (k1, k2, syy - k1 * s1y - k2 * s2y)
}

fn raw_estimate(cols: &[Vec<f64>; 6], r: std::ops::Range<usize>) -> RawEstimate {
    let [qh, ph, qa, pa, qb, pb] = cols;
    let (ka_q, kb_q, res_q) = regress(qh, qa, qb, r.clone());
    let (ka_p, kb_p, res_p) = regress(ph, pa, pb, r);
    // Q̂ carries +√T₁ Q_a − √T₂ Q_b; P̂ carries +√T₁ P_a + √T₂ P_b.
    let sa = 0.5 * (ka_q + ka_p);
    let sb = 0.5 * (-kb_q + kb_p);
    RawEstimate {
        t1: sa * sa,
        t2: sb * sb,
        excess: 0.5 * (res_q + res_p) - 2.0,
    }
}

/// Estimates both channels from the broadcast and the revealed encodings.
///
/// `√T̂ᵢ` is the pooled Q/P regression slope of the broadcast on party `i`'s
/// encodings. The residual variance minus the two vacuum units gives the
/// pooled excess `T₁ε_a + T₂ε_b`; under [`NoiseAllocation::Symmetric`] each
/// channel gets `excess/(T̂₁ + T̂₂)`.
pub fn estimate_channels(b: &SampleBatch, allocation: NoiseAllocation) -> Result<ChannelEstimates> {
    if b.count < MIN_ESTIMATION_COUNT {
        return Err(Error::InsufficientData {
            needed: MIN_ESTIMATION_COUNT,
            got: b.count,
        });
    }
    if !(b.modulation_variance > 0.0) {
        return Err(Error::Domain("transmission estimation needs a positive modulation variance".into()));
    }
    let (qh, ph) = split(&b.broadcast);
    let (qa, pa) = split(&b.encodings_a);
    let (qb, pb) = split(&b.encodings_b);
    let cols = [qh, ph, qa, pa, qb, pb];
    let n = b.count;

    let t1 = with_std_error(n, |r| raw_estimate(&cols, r).t1)?;
    let t2 = with_std_error(n, |r| raw_estimate(&cols, r).t2)?;
    let excess = with_std_error(n, |r| raw_estimate(&cols, r).excess)?;
    let eps = match allocation {
        NoiseAllocation::Symmetric => Some(with_std_error(n, |r| {
            let e = raw_estimate(&cols, r);
            e.excess / (e.t1 + e.t2)
        })?),
        NoiseAllocation::Unresolved => None,
    };
    let channel = |t: Estimate| EstimatedChannel {
        t_hat: t.value,
        t_std_error: t.std_error,
        eps_hat: eps.map(|e| e.value),
        eps_std_error: eps.map(|e| e.std_error),
    };
    Ok(ChannelEstimates {
        channel_a: channel(t1),
        channel_b: channel(t2),
        pooled_excess: excess,
    })
}

/// Intensities on the two calibration photodetectors:
/// `|α|²(1 + cos Δθ)` and `|α|²(1 + sin Δθ)` with `Δθ = θ_A − θ_B`.
pub fn lo_interference_outputs(theta_a: f64, theta_b: f64, intensity: f64) -> Result<(f64, f64)> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::Domain(format!("LO intensity must be > 0, got {intensity}")));
    }
    let d = theta_a - theta_b;
    Ok((intensity * (1.0 + d.cos()), intensity * (1.0 + d.sin())))
}

/// Inverts [`lo_interference_outputs`]; the result lies in `[0, 2π)`.
pub fn recover_phase_difference(beta1: f64, beta2: f64, intensity: f64) -> Result<f64> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::Domain(format!("LO intensity must be > 0, got {intensity}")));
    }
    let hi = 2.0 * intensity * (1.0 + 1e-9);
    let lo = -2.0 * intensity * 1e-9;
    for (name, x) in [("|beta1|^2", beta1), ("|beta2|^2", beta2)] {
        if !(lo..=hi).contains(&x) {
            return Err(Error::Domain(format!("{name} = {x} outside [0, 2*intensity]")));
        }
    }
    let (c, s) = (beta1 / intensity - 1.0, beta2 / intensity - 1.0);
    if c.abs() < PHASE_DEGENERACY_TOL && s.abs() < PHASE_DEGENERACY_TOL {
        return Err(Error::IndeterminatePhase);
    }
    Ok(wrap_phase(s.atan2(c)))
}

/// `(φ_B + Δθ) mod 2π`.
pub fn apply_reference_correction(phi_b: f64, delta_theta: f64) -> f64 {
    wrap_phase(phi_b + delta_theta)
}

/// Maps an angle into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Distance between two angles on the circle, in `[0, π]`.
pub fn angular_distance(x: f64, y: f64) -> f64 {
    let d = wrap_phase(x - y);
    d.min(TAU - d)
}

/// One calibration round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub outputs: (f64, f64),
    pub delta_theta: f64,
    pub corrected_phase: f64,
    /// Phase difference measured again after Bob's LO frame is shifted by Δθ.
    pub residual: f64,
}

/// Measures Δθ, corrects Bob's modulation phase `φ_B` and re-measures.
pub fn calibrate(theta_a: f64, theta_b: f64, intensity: f64, phi_b: f64) -> Result<Calibration> {
    let outputs = lo_interference_outputs(theta_a, theta_b, intensity)?;
    let delta_theta = recover_phase_difference(outputs.0, outputs.1, intensity)?;
    let corrected_phase = apply_reference_correction(phi_b, delta_theta);
    let after = lo_interference_outputs(theta_a, theta_b + delta_theta, intensity)?;
    let residual = recover_phase_difference(after.0, after.1, intensity)?;
    Ok(Calibration {
        outputs,
        delta_theta,
        corrected_phase,
        residual: angular_distance(residual, 0.0),
    })
}
