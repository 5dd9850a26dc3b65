//! Rate-vs-distance sweeps, modulation optimisation and cutoff search.
//!
//! Distances are reported as the total `d_A + d_B`; every row also carries
//! both legs, so per-leg curves can be recovered from the output.

use rayon::prelude::*;

use crate::bounds::{key_rate, HolevoMode, RecastingParty, ScenarioSpec};
use crate::error::{Error, Result};
use crate::model::{ChannelParams, Direction, FiberModel, KeyRatePoint, ProtocolParams};

/// Modulation variance `V_S` search range.
pub const MIN_MODULATION: f64 = 1e-2;
pub const MAX_MODULATION: f64 = 1e4;
/// Log-spaced probes used to bracket the optimum.
pub const COARSE_PROBES: usize = 33;
/// Relative tolerance on the optimal variance.
pub const VARIANCE_REL_TOL: f64 = 1e-4;
/// Total variance standing in for `V → ∞`.
pub const ASYMPTOTIC_VARIANCE: f64 = 1e8;
/// Relay offset for the near-Alice / near-Bob geometries.
pub const RELAY_OFFSET_KM: f64 = 0.01;
/// Cutoff search window and stopping rules.
pub const CUTOFF_MAX_KM: f64 = 500.0;
pub const CUTOFF_RATE_TOL: f64 = 1e-8;
pub const CUTOFF_DISTANCE_TOL_KM: f64 = 1e-3;

/// Where Charlie's relay sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// `d_A = d_B = d/2`.
    Symmetric,
    /// `d_A` = 10 m, `d_B = d − d_A`.
    RelayNearAlice,
    /// `d_B` = 10 m, `d_A = d − d_B`.
    RelayNearBob,
    /// Total distance split in the ratio `alice : bob`.
    Custom { alice: f64, bob: f64 },
}

impl Geometry {
    /// Smallest total distance this geometry can represent.
    pub fn min_total_km(&self) -> f64 {
        match self {
            Geometry::RelayNearAlice | Geometry::RelayNearBob => RELAY_OFFSET_KM,
            _ => 0.0,
        }
    }

    /// Per-leg distances `(d_A, d_B)` for a total distance.
    pub fn legs(&self, total_km: f64) -> Result<(f64, f64)> {
        if !(total_km >= 0.0) || !total_km.is_finite() {
            return Err(Error::Domain(format!("distance must be >= 0, got {total_km} km")));
        }
        match *self {
            Geometry::Symmetric => Ok((total_km / 2.0, total_km / 2.0)),
            Geometry::RelayNearAlice | Geometry::RelayNearBob => {
                if total_km < RELAY_OFFSET_KM {
                    return Err(Error::Domain(format!(
                        "total distance {total_km} km is shorter than the {RELAY_OFFSET_KM} km relay offset"
                    )));
                }
                let far = total_km - RELAY_OFFSET_KM;
                Ok(if matches!(self, Geometry::RelayNearAlice) {
                    (RELAY_OFFSET_KM, far)
                } else {
                    (far, RELAY_OFFSET_KM)
                })
            }
            Geometry::Custom { alice, bob } => {
                if !(alice >= 0.0 && bob >= 0.0 && alice + bob > 0.0) {
                    return Err(Error::Domain(format!("invalid leg ratio {alice}:{bob}")));
                }
                let a = total_km * alice / (alice + bob);
                Ok((a, total_km - a))
            }
        }
    }
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    /// `symmetric`, `near-alice`, `near-bob` or `custom:A:B`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "symmetric" => return Ok(Geometry::Symmetric),
            "near-alice" | "relay-near-alice" => return Ok(Geometry::RelayNearAlice),
            "near-bob" | "relay-near-bob" => return Ok(Geometry::RelayNearBob),
            _ => {}
        }
        let parts: Vec<&str> = lower.split(':').collect();
        if parts.len() == 3 && parts[0] == "custom" {
            let parse = |p: &str| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Domain(format!("invalid leg ratio component `{p}`")))
            };
            let out = Geometry::Custom {
                alice: parse(parts[1])?,
                bob: parse(parts[2])?,
            };
            out.legs(1.0)?;
            return Ok(out);
        }
        Err(Error::Domain(format!(
            "unknown geometry `{s}` (use symmetric, near-alice, near-bob or custom:A:B)"
        )))
    }
}

/// How the modulation variance is chosen at each point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariancePolicy {
    /// Fixed total variance `V`.
    Fixed(f64),
    /// Maximise the key rate over `V_S ∈ [1e−2, 1e4]`.
    Optimal,
    /// `V → ∞` with `β = 1`; RR uses the asymptotic Holevo bound.
    Asymptotic,
}

/// A single rate-vs-distance line: everything but the distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSpec {
    pub geometry: Geometry,
    pub eps_a: f64,
    pub eps_b: f64,
    pub reconciliation_efficiency: f64,
    pub policy: VariancePolicy,
    pub direction: Direction,
    pub attenuation_db_per_km: f64,
    pub detector_efficiency: f64,
    pub electronic_noise: f64,
    pub recaster: RecastingParty,
}

impl LineSpec {
    /// Ideal detectors, 0.2 dB/km, Bob recasting.
    pub fn new(geometry: Geometry, eps: f64, beta: f64, policy: VariancePolicy, direction: Direction) -> Self {
        Self {
            geometry,
            eps_a: eps,
            eps_b: eps,
            reconciliation_efficiency: beta,
            policy,
            direction,
            attenuation_db_per_km: crate::model::STANDARD_ATTENUATION_DB_PER_KM,
            detector_efficiency: 1.0,
            electronic_noise: 0.0,
            recaster: RecastingParty::Bob,
        }
    }

    /// Scenario at `total_km` with a placeholder total variance `v`.
    pub fn scenario(&self, total_km: f64, v: f64) -> Result<ScenarioSpec> {
        let (da, db) = self.geometry.legs(total_km)?;
        let ta = FiberModel::new(self.attenuation_db_per_km, da)?.transmission();
        let tb = FiberModel::new(self.attenuation_db_per_km, db)?.transmission();
        // The lossless-leg convention: a 0 km leg carries no excess noise.
        let eps_for = |t: f64, eps: f64| if t >= 1.0 { 0.0 } else { eps };
        let protocol = ProtocolParams::with_total_variance(v, self.reconciliation_efficiency, self.direction)?
            .with_detector(self.detector_efficiency, self.electronic_noise)?;
        ScenarioSpec::with_recaster(
            ChannelParams::new(ta, eps_for(ta, self.eps_a))?,
            ChannelParams::new(tb, eps_for(tb, self.eps_b))?,
            protocol,
            self.recaster,
        )
    }

    /// Key rate at one distance under this line's variance policy.
    pub fn evaluate(&self, total_km: f64) -> Result<PointRate> {
        let (d_a, d_b) = self.geometry.legs(total_km)?;
        let template = self.scenario(total_km, 1.0 + MIN_MODULATION)?;
        let (total_variance, rate, flags) = evaluate_policy(&template, self.policy)?;
        Ok(PointRate {
            total_km,
            d_a_km: d_a,
            d_b_km: d_b,
            total_variance,
            rate,
            flags,
        })
    }
}

/// Key rate of `template` with the variance chosen by `policy`. Returns the
/// total variance used, the rate and any row flags.
pub fn evaluate_policy(template: &ScenarioSpec, policy: VariancePolicy) -> Result<(f64, KeyRatePoint, Vec<Flag>)> {
    match policy {
        VariancePolicy::Fixed(v) => {
            let s = template.with_total_variance(v)?;
            Ok((v, key_rate(&s, HolevoMode::Exact)?, Vec::new()))
        }
        VariancePolicy::Asymptotic => {
            let p = template
                .protocol()
                .with_reconciliation_efficiency(1.0)?
                .with_modulation_variance(ASYMPTOTIC_VARIANCE - 1.0)?;
            let s = template.with_protocol(p)?;
            Ok((ASYMPTOTIC_VARIANCE, key_rate(&s, HolevoMode::Asymptotic)?, vec![Flag::Asymptotic]))
        }
        VariancePolicy::Optimal => {
            let opt = optimize_modulation(template, template.protocol().direction())?;
            let mut flags = Vec::new();
            if opt.boundary_optimal {
                flags.push(Flag::BoundaryOptimal);
            }
            if opt.no_positive_rate {
                flags.push(Flag::NoPositiveRate);
            }
            Ok((opt.total_variance, opt.rate, flags))
        }
    }
}

/// Row annotations.
#[derive(Debug, Clone, PartialEq)]
pub enum Flag {
    /// Optimum sits on the edge of the variance search range.
    BoundaryOptimal,
    /// No probed variance gave a positive rate.
    NoPositiveRate,
    /// Evaluated in the `V → ∞`, `β = 1` limit.
    Asymptotic,
    /// Row could not be evaluated.
    Error(String),
}

impl std::fmt::Display for Flag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flag::BoundaryOptimal => f.write_str("boundary_optimal"),
            Flag::NoPositiveRate => f.write_str("no_positive_rate"),
            Flag::Asymptotic => f.write_str("asymptotic"),
            Flag::Error(msg) => write!(f, "error={msg}"),
        }
    }
}

/// Key rate at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRate {
    pub total_km: f64,
    pub d_a_km: f64,
    pub d_b_km: f64,
    pub total_variance: f64,
    pub rate: KeyRatePoint,
    pub flags: Vec<Flag>,
}

/// Result of [`optimize_modulation`]. Variances are total (`V = V_S + 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizedRate {
    pub total_variance: f64,
    pub rate: KeyRatePoint,
    pub boundary_optimal: bool,
    pub no_positive_rate: bool,
}

/// Maximises the key rate over `V_S ∈ [1e−2, 1e4]`.
///
/// 33 log-spaced probes bracket the optimum, then a golden-section search in
/// `log V_S` narrows the bracket until the variance is known to `1e−4`
/// relative. The returned rate is never below the best probe.
pub fn optimize_modulation(template: &ScenarioSpec, direction: Direction) -> Result<OptimizedRate> {
    let template = template.with_direction(direction);
    let eval = |log_vs: f64| -> Result<KeyRatePoint> {
        let s = template.with_total_variance(1.0 + 10f64.powf(log_vs))?;
        key_rate(&s, HolevoMode::Exact)
    };
    let (lo, hi) = (MIN_MODULATION.log10(), MAX_MODULATION.log10());
    let step = (hi - lo) / (COARSE_PROBES - 1) as f64;
    let probes: Vec<(f64, KeyRatePoint)> = (0..COARSE_PROBES)
        .map(|i| {
            let u = if i == COARSE_PROBES - 1 { hi } else { lo + step * i as f64 };
            eval(u).map(|k| (u, k))
        })
        .collect::<Result<_>>()?;
    let no_positive_rate = probes.iter().all(|(_, k)| k.key_rate <= 0.0);
    let best = probes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.key_rate.total_cmp(&b.1 .1.key_rate))
        .map(|(i, _)| i)
        .expect("at least one probe");

    let a = probes[best.saturating_sub(1)].0;
    let b = probes[(best + 1).min(COARSE_PROBES - 1)].0;
    // Δ(log₁₀ V_S)·ln 10 bounds the relative error on V_S.
    let u_tol = VARIANCE_REL_TOL / std::f64::consts::LN_10;
    let (u_star, k_star) = golden_section_max(|u| eval(u).map(|k| k.key_rate), a, b, u_tol)?;

    let (u_opt, rate) = if k_star > probes[best].1.key_rate {
        (u_star, eval(u_star)?)
    } else {
        (probes[best].0, probes[best].1)
    };
    let boundary_optimal = (u_opt - lo).abs() < 2.0 * u_tol || (hi - u_opt).abs() < 2.0 * u_tol;
    Ok(OptimizedRate {
        total_variance: 1.0 + 10f64.powf(u_opt),
        rate,
        boundary_optimal,
        no_positive_rate,
    })
}

/// Golden-section maximisation of a unimodal function on `[a, b]`.
fn golden_section_max(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// A full sweep: one row per (excess noise, distance) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub geometry: Geometry,
    /// Total distances in km, strictly increasing.
    pub distance_grid: Vec<f64>,
    /// Excess noise applied to both channels, one line per value.
    pub excess_noise_list: Vec<f64>,
    pub reconciliation_efficiency: f64,
    pub policy: VariancePolicy,
    pub direction: Direction,
    pub attenuation_db_per_km: f64,
    pub detector_efficiency: f64,
    pub electronic_noise: f64,
    pub recaster: RecastingParty,
}

impl ScanSpec {
    pub fn new(
        geometry: Geometry,
        distance_grid: Vec<f64>,
        excess_noise_list: Vec<f64>,
        reconciliation_efficiency: f64,
        policy: VariancePolicy,
        direction: Direction,
    ) -> Self {
        Self {
            geometry,
            distance_grid,
            excess_noise_list,
            reconciliation_efficiency,
            policy,
            direction,
            attenuation_db_per_km: crate::model::STANDARD_ATTENUATION_DB_PER_KM,
            detector_efficiency: 1.0,
            electronic_noise: 0.0,
            recaster: RecastingParty::Bob,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.distance_grid.is_empty() {
            return Err(Error::Domain("distance grid is empty".into()));
        }
        if self.distance_grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Domain("distances must be finite and >= 0".into()));
        }
        if self.distance_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("distance grid must be strictly increasing".into()));
        }
        if self.excess_noise_list.is_empty() {
            return Err(Error::Domain("excess noise list is empty".into()));
        }
        if self.excess_noise_list.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::UnphysicalParameters("excess noise must be >= 0".into()));
        }
        if !(self.reconciliation_efficiency > 0.0 && self.reconciliation_efficiency <= 1.0) {
            return Err(Error::UnphysicalParameters(format!(
                "reconciliation efficiency must lie in (0, 1], got {}",
                self.reconciliation_efficiency
            )));
        }
        if let VariancePolicy::Fixed(v) = self.policy {
            if !(v >= 1.0) {
                return Err(Error::UnphysicalParameters(format!("total variance must be >= 1, got {v}")));
            }
        }
        FiberModel::new(self.attenuation_db_per_km, 0.0)?;
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) || !(self.electronic_noise >= 0.0) {
            return Err(Error::UnphysicalParameters("invalid detector parameters".into()));
        }
        Ok(())
    }

    /// The line for one excess-noise value.
    pub fn line(&self, eps: f64) -> LineSpec {
        LineSpec {
            geometry: self.geometry,
            eps_a: eps,
            eps_b: eps,
            reconciliation_efficiency: self.reconciliation_efficiency,
            policy: self.policy,
            direction: self.direction,
            attenuation_db_per_km: self.attenuation_db_per_km,
            detector_efficiency: self.detector_efficiency,
            electronic_noise: self.electronic_noise,
            recaster: self.recaster,
        }
    }
}

/// One output row. `rate` is `None` when the row failed; the failure is
/// recorded as an [`Flag::Error`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub total_km: f64,
    pub d_a_km: f64,
    pub d_b_km: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub total_variance: Option<f64>,
    pub rate: Option<KeyRatePoint>,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
}

impl ScanResult {
    /// Rows for one excess-noise value, in distance order.
    pub fn line(&self, eps: f64) -> impl Iterator<Item = &ScanRow> {
        self.rows.iter().filter(move |r| r.eps_a == eps)
    }
}

/// Evaluates every grid point. Rows are ordered by excess noise (outer) and
/// distance (inner) regardless of evaluation order; failed rows carry an
/// error flag and the scan continues.
pub fn run_scan(spec: &ScanSpec) -> Result<ScanResult> {
    spec.validate()?;
    let points: Vec<(f64, f64)> = spec
        .excess_noise_list
        .iter()
        .flat_map(|&e| spec.distance_grid.iter().map(move |&d| (e, d)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(eps, d)| {
            let line = spec.line(eps);
            let (d_a, d_b) = spec.geometry.legs(d).unwrap_or((f64::NAN, f64::NAN));
            match line.evaluate(d) {
                Ok(p) => ScanRow {
                    total_km: d,
                    d_a_km: p.d_a_km,
                    d_b_km: p.d_b_km,
                    eps_a: eps,
                    eps_b: eps,
                    total_variance: Some(p.total_variance),
                    rate: Some(p.rate),
                    flags: p.flags,
                },
                Err(e) => ScanRow {
                    total_km: d,
                    d_a_km: d_a,
                    d_b_km: d_b,
                    eps_a: eps,
                    eps_b: eps,
                    total_variance: None,
                    rate: None,
                    flags: vec![Flag::Error(e.to_string())],
                },
            }
        })
        .collect();
    Ok(ScanResult { rows })
}

/// Outcome of [`find_cutoff`].
#[derive(Debug, Clone, PartialEq)]
pub enum Cutoff {
    /// Zero crossing of the key rate.
    At {
        total_km: f64,
        d_a_km: f64,
        d_b_km: f64,
        /// Key rate at the returned distance.
        residual: f64,
    },
    /// Positive up to the end of the search window.
    SecureEverywhere { up_to_km: f64 },
    /// Not positive even at the shortest distance.
    InsecureEverywhere,
}

impl Cutoff {
    pub fn total_km(&self) -> Option<f64> {
        match self {
            Cutoff::At { total_km, .. } => Some(*total_km),
            _ => None,
        }
    }
}

/// Bisection for the distance where the key rate crosses zero, on
/// `[geometry minimum, 500 km]`; asymptotic lines start at 1 m. Stops when `|K| < 1e−8` or the bracket is
/// shorter than 1 m.
pub fn find_cutoff(line: &LineSpec) -> Result<Cutoff> {
    let rate = |d: f64| line.evaluate(d).map(|p| p.rate.key_rate);
    let mut lo = line.geometry.min_total_km();
    if line.policy == VariancePolicy::Asymptotic {
        // The large-modulation bound is undefined for a lossless leg.
        lo = lo.max(CUTOFF_DISTANCE_TOL_KM);
    }
    let mut hi = CUTOFF_MAX_KM;
    if rate(lo)? <= 0.0 {
        return Ok(Cutoff::InsecureEverywhere);
    }
    if rate(hi)? > 0.0 {
        return Ok(Cutoff::SecureEverywhere { up_to_km: hi });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let k = rate(mid)?;
        if k.abs() < CUTOFF_RATE_TOL || hi - lo < CUTOFF_DISTANCE_TOL_KM {
            let (d_a, d_b) = line.geometry.legs(mid)?;
            return Ok(Cutoff::At {
                total_km: mid,
                d_a_km: d_a,
                d_b_km: d_b,
                residual: k,
            });
        }
        if k > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// True if the line's key rate never increases along `grid`.
pub fn is_monotone_decreasing(line: &LineSpec, grid: &[f64], slack: f64) -> Result<bool> {
    let rates: Vec<f64> = grid
        .iter()
        .map(|&d| line.evaluate(d).map(|p| p.rate.key_rate))
        .collect::<Result<_>>()?;
    Ok(rates.windows(2).all(|w| w[1] <= w[0] + slack))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lossless(dir: Direction) -> ScenarioSpec {
        ScenarioSpec::new(
            ChannelParams::lossless(),
            ChannelParams::lossless(),
            ProtocolParams::with_total_variance(2.0, 1.0, dir).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn geometry_legs() {
        assert_eq!(Geometry::Symmetric.legs(10.0).unwrap(), (5.0, 5.0));
        let (a, b) = Geometry::RelayNearAlice.legs(80.0).unwrap();
        assert_eq!(a, 0.01);
        assert!((b - 79.99).abs() < 1e-12);
        let (a, b) = Geometry::RelayNearBob.legs(80.0).unwrap();
        assert!((a - 79.99).abs() < 1e-12 && b == 0.01);
        assert_eq!(Geometry::Custom { alice: 1.0, bob: 3.0 }.legs(8.0).unwrap(), (2.0, 6.0));
        assert!(Geometry::RelayNearAlice.legs(0.0).is_err());
        assert!(Geometry::Symmetric.legs(-1.0).is_err());
        assert_eq!("custom:1:3".parse::<Geometry>().unwrap(), Geometry::Custom { alice: 1.0, bob: 3.0 });
        assert!("custom:0:0".parse::<Geometry>().is_err());
        assert!("ring".parse::<Geometry>().is_err());
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| Ok(-(x - 0.3f64).powi(2)), -1.0, 2.0, 1e-9).unwrap();
        assert!((x - 0.3).abs() < 1e-8 && fx <= 0.0);
    }

    #[test]
    fn lossless_noiseless_dr_is_boundary_optimal() {
        // K(V) = log₂((V+1)/2) − log₂(2V/(V+1)) is increasing in V.
        let k = |v: f64| ((v + 1.0) / 2.0).log2() - (2.0 * v / (v + 1.0)).log2();
        let vs: Vec<f64> = (0..200).map(|i| 1.01 * 1.05f64.powi(i)).collect();
        assert!(vs.windows(2).all(|w| k(w[1]) > k(w[0])));

        let opt = optimize_modulation(&lossless(Direction::Direct), Direction::Direct).unwrap();
        assert!(opt.boundary_optimal);
        assert!((opt.total_variance - (1.0 + MAX_MODULATION)).abs() < 1e-6);
        assert!((opt.rate.key_rate - k(opt.total_variance)).abs() < 1e-12);
        assert!(!opt.no_positive_rate);
    }

    fn rate_at(s: &ScenarioSpec, v: f64) -> f64 {
        key_rate(&s.with_total_variance(v).unwrap(), HolevoMode::Exact).unwrap().key_rate
    }

    #[test]
    fn optimum_is_locally_optimal() {
        for (t, eps, dir) in [(0.9, 0.005, Direction::Reverse), (0.95, 0.01, Direction::Direct), (0.6, 0.0, Direction::Reverse)] {
            let s = ScenarioSpec::symmetric(t, eps, ProtocolParams::new(1.0, 0.95, dir).unwrap()).unwrap();
            let opt = optimize_modulation(&s, dir).unwrap();
            let v = opt.total_variance;
            let vs = v - 1.0;
            let k = opt.rate.key_rate;
            let tol = 1e-9;
            if vs * 1.1 <= MAX_MODULATION {
                assert!(k + tol >= rate_at(&s, 1.0 + vs * 1.1));
            }
            if vs / 1.1 >= MIN_MODULATION {
                assert!(k + tol >= rate_at(&s, 1.0 + vs / 1.1));
            }
        }
    }

    #[test]
    fn optimum_matches_dense_grid_at_5km_rr() {
        let line = LineSpec::new(Geometry::Symmetric, 0.005, 0.95, VariancePolicy::Optimal, Direction::Reverse);
        let template = line.scenario(5.0, 2.0).unwrap();
        let opt = optimize_modulation(&template, Direction::Reverse).unwrap();

        // Dense-grid oracle: 10⁴ log-spaced V_S values.
        let n = 10_000;
        let (lo, hi) = (MIN_MODULATION.log10(), MAX_MODULATION.log10());
        let (mut best_v, mut best_k) = (0.0, f64::NEG_INFINITY);
        for i in 0..n {
            let vs = 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64);
            let k = rate_at(&template, 1.0 + vs);
            if k > best_k {
                best_k = k;
                best_v = 1.0 + vs;
            }
        }
        assert!(!opt.boundary_optimal, "V_opt = {}", opt.total_variance);
        assert!(opt.rate.key_rate >= best_k - 1e-12);
        assert!((opt.total_variance - best_v).abs() / best_v < 2e-3, "{} vs {}", opt.total_variance, best_v);
        // Regression anchor frozen from the dense-grid oracle run.
        assert!((opt.total_variance - 146.786).abs() / 146.786 < 1e-3, "V_opt = {}", opt.total_variance);
        assert!((opt.rate.key_rate - 0.62412021).abs() < 1e-8, "K_opt = {}", opt.rate.key_rate);
    }

    #[test]
    fn zero_length_channels_are_secure() {
        for dir in [Direction::Direct, Direction::Reverse] {
            let p = LineSpec::new(Geometry::Symmetric, 0.0, 0.95, VariancePolicy::Optimal, dir).evaluate(0.0).unwrap();
            assert!(p.rate.key_rate > 0.0, "{dir}: {:?}", p.rate);
        }
    }

    #[test]
    fn scan_rows_are_ordered_and_reproducible() {
        let spec = ScanSpec::new(
            Geometry::Symmetric,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.0, 0.01],
            0.95,
            VariancePolicy::Optimal,
            Direction::Reverse,
        );
        let a = run_scan(&spec).unwrap();
        let b = run_scan(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 8);
        let order: Vec<(f64, f64)> = a.rows.iter().map(|r| (r.eps_a, r.total_km)).collect();
        assert_eq!(order[0], (0.0, 0.0));
        assert_eq!(order[4], (0.01, 0.0));
        assert_eq!(order[7], (0.01, 3.0));
        assert!(a.rows.iter().all(|r| r.total_variance.unwrap() > 1.0));
    }

    #[test]
    fn failed_rows_are_flagged() {
        let spec = ScanSpec::new(
            Geometry::RelayNearAlice,
            vec![0.0, 1.0],
            vec![0.0],
            0.95,
            VariancePolicy::Fixed(20.0),
            Direction::Direct,
        );
        let r = run_scan(&spec).unwrap();
        assert!(r.rows[0].rate.is_none());
        assert!(matches!(r.rows[0].flags[0], Flag::Error(_)));
        assert!(r.rows[1].rate.is_some());
    }

    #[test]
    fn scan_validation() {
        let mut spec = ScanSpec::new(Geometry::Symmetric, vec![], vec![0.0], 0.95, VariancePolicy::Optimal, Direction::Direct);
        assert!(run_scan(&spec).is_err());
        spec.distance_grid = vec![1.0, 1.0];
        assert!(spec.validate().is_err());
        spec.distance_grid = vec![1.0, 2.0];
        spec.excess_noise_list = vec![-0.1];
        assert!(spec.validate().is_err());
        spec.excess_noise_list = vec![0.0];
        spec.policy = VariancePolicy::Fixed(0.5);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn symmetric_rows_invariant_under_recaster_swap() {
        let mut spec = ScanSpec::new(
            Geometry::Symmetric,
            vec![0.5, 1.5, 2.5],
            vec![0.0, 0.005],
            0.95,
            VariancePolicy::Optimal,
            Direction::Direct,
        );
        let bob = run_scan(&spec).unwrap();
        spec.recaster = RecastingParty::Alice;
        let alice = run_scan(&spec).unwrap();
        assert_eq!(bob, alice);
    }

    #[test]
    fn cutoff_classification() {
        let line = LineSpec::new(Geometry::Symmetric, 0.0, 0.95, VariancePolicy::Optimal, Direction::Direct);
        match find_cutoff(&line).unwrap() {
            Cutoff::At { total_km, residual, .. } => {
                assert!(total_km > 0.0 && total_km < 20.0);
                let left = line.evaluate(total_km - 2e-3).unwrap().rate.key_rate;
                let right = line.evaluate(total_km + 2e-3).unwrap().rate.key_rate;
                assert!(left > 0.0 && right <= 0.0, "{left} {right} {residual}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let hopeless = LineSpec::new(Geometry::Symmetric, 0.0, 0.95, VariancePolicy::Fixed(1.0), Direction::Direct);
        assert_eq!(find_cutoff(&hopeless).unwrap(), Cutoff::InsecureEverywhere);
    }
}
