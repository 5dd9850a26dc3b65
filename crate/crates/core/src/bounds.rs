//! Analytic security bounds under two independent entangling-cloner attacks.
//!
//! Alice's channel is emulated by cloner 1 `(T₁, N₁)`, Bob's by cloner 2
//! `(T₂, N₂)`. Eve keeps the reflected modes `E'ᵢ` and the idle EPR halves
//! `E''ᵢ`; Charlie's broadcast hands her the classical mode `E₃`. In the
//! default setting Bob recasts his data by subtracting `√T₂` times his
//! encodings from the broadcast.
//!
//! Eve's Shannon information from the broadcast and her Holevo information
//! from the stored modes are subtracted independently, with no overlap
//! correction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{absorb_detector, ChannelParams, Direction, KeyRatePoint, ProtocolParams};
use crate::symplectic::{g_entropy, two_mode_eigenvalues, CovMatrix};

/// Below this modulation variance the RR broadcast information diverges.
pub const MIN_RR_MODULATION: f64 = 1e-9;

/// Which party subtracts its own encodings from Charlie's broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecastingParty {
    Alice,
    #[default]
    Bob,
}

/// How Eve's RR Holevo information is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HolevoMode {
    /// Full spectrum of the four-mode conditional covariance matrix.
    #[default]
    Exact,
    /// Large-modulation approximation: `ν₁ = N₁`, `ν₂ = N₂` and only the
    /// product `ν₃ν₄` from the determinant.
    Asymptotic,
}

/// One key-rate scenario: both channels and the shared protocol settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    channel_a: ChannelParams,
    channel_b: ChannelParams,
    protocol: ProtocolParams,
    recaster: RecastingParty,
    cloners: Cloners,
}

/// Effective cloner parameters after detector absorption, in the frame
/// where cloner 2 sits on the recasting party's channel.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cloners {
    t1: f64,
    n1: f64,
    t2: f64,
    n2: f64,
    v: f64,
}

impl ScenarioSpec {
    pub fn new(channel_a: ChannelParams, channel_b: ChannelParams, protocol: ProtocolParams) -> Result<Self> {
        Self::with_recaster(channel_a, channel_b, protocol, RecastingParty::Bob)
    }

    pub fn with_recaster(
        channel_a: ChannelParams,
        channel_b: ChannelParams,
        protocol: ProtocolParams,
        recaster: RecastingParty,
    ) -> Result<Self> {
        let eff = |ch: &ChannelParams| {
            absorb_detector(ch, protocol.detector_efficiency(), protocol.electronic_noise())
        };
        let (ea, eb) = (eff(&channel_a)?, eff(&channel_b)?);
        let (first, second) = match recaster {
            RecastingParty::Bob => (ea, eb),
            RecastingParty::Alice => (eb, ea),
        };
        let cloners = Cloners {
            t1: first.transmission(),
            n1: first.epr_variance()?,
            t2: second.transmission(),
            n2: second.epr_variance()?,
            v: protocol.total_variance(),
        };
        Ok(Self {
            channel_a,
            channel_b,
            protocol,
            recaster,
            cloners,
        })
    }

    /// Symmetric scenario: both channels `(t, eps)`.
    pub fn symmetric(t: f64, eps: f64, protocol: ProtocolParams) -> Result<Self> {
        let ch = ChannelParams::new(t, eps)?;
        Self::new(ch, ch, protocol)
    }

    pub fn with_protocol(&self, protocol: ProtocolParams) -> Result<Self> {
        Self::with_recaster(self.channel_a, self.channel_b, protocol, self.recaster)
    }

    /// Same scenario with total variance `v`.
    pub fn with_total_variance(&self, v: f64) -> Result<Self> {
        if !(v >= 1.0) {
            return Err(Error::UnphysicalParameters(format!("total variance must be >= 1, got {v}")));
        }
        self.with_protocol(self.protocol.with_modulation_variance(v - 1.0)?)
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        let mut out = *self;
        out.protocol = out.protocol.with_direction(direction);
        out
    }

    /// The mirrored scenario: channels swapped and the other party recasts.
    pub fn mirrored(&self) -> Result<Self> {
        let recaster = match self.recaster {
            RecastingParty::Alice => RecastingParty::Bob,
            RecastingParty::Bob => RecastingParty::Alice,
        };
        Self::with_recaster(self.channel_b, self.channel_a, self.protocol, recaster)
    }

    pub fn channel_a(&self) -> &ChannelParams {
        &self.channel_a
    }

    pub fn channel_b(&self) -> &ChannelParams {
        &self.channel_b
    }

    pub fn protocol(&self) -> &ProtocolParams {
        &self.protocol
    }

    pub fn recaster(&self) -> RecastingParty {
        self.recaster
    }

    /// `(T₁, N₁, T₂, N₂)` after detector absorption; index 2 is the recasting party's channel.
    pub fn cloner_params(&self) -> (f64, f64, f64, f64) {
        let c = &self.cloners;
        (c.t1, c.n1, c.t2, c.n2)
    }

    pub fn total_variance(&self) -> f64 {
        self.cloners.v
    }
}

/// Variance `b_v` of the recast data and its conditional variance `b_0` on
/// the non-recasting party's encodings.
pub fn recast_variances(s: &ScenarioSpec) -> (f64, f64) {
    let Cloners { t1, n1, t2, n2, v } = s.cloners;
    let noise = (1.0 - t1) * n1 + t2 + (1.0 - t2) * n2;
    (t1 * v + noise, t1 + noise)
}

/// `I_AB' = log₂(b_v/b_0)`; both quadratures carry key, so no ½ prefactor.
pub fn mutual_info_ab(s: &ScenarioSpec) -> f64 {
    let (bv, b0) = recast_variances(s);
    (bv / b0).log2()
}

/// Eve's Shannon information about Alice's encodings from the broadcast,
/// with the broadcast conditioned on her idle EPR halves.
pub fn eve_shannon_dr(s: &ScenarioSpec) -> f64 {
    let Cloners { t1, n1, t2, n2, v } = s.cloners;
    let rest = (1.0 - t1) / n1 + t2 * v + (1.0 - t2) / n2;
    ((t1 * v + rest) / (t1 + rest)).log2()
}

/// `γ_{E_A}(V)`: the two modes `(E'₁, E''₁)` of one cloner with input variance `v`.
pub fn cloner_covariance(t: f64, n: f64, v: f64) -> Result<CovMatrix> {
    let (e, phi) = cloner_entries(t, n, v);
    CovMatrix::two_mode_standard(e, n, phi)
}

fn cloner_entries(t: f64, n: f64, v: f64) -> (f64, f64) {
    let e = (1.0 - t) * v + t * n;
    let phi = (t * (n * n - 1.0).max(0.0)).sqrt();
    (e, phi)
}

fn two_mode_entropy(a: f64, b: f64, c: f64) -> f64 {
    let (l1, l2) = two_mode_eigenvalues(a, b, c);
    thermal_g(l1) + thermal_g(l2)
}

/// `G((ν−1)/2)` with ν inside the physical tolerance clamped to 1.
fn thermal_g(nu: f64) -> f64 {
    g_entropy(((nu - 1.0) / 2.0).max(0.0)).expect("argument clamped to >= 0")
}

/// Entropy of one cloner's modes with input variance `v`.
fn cloner_entropy(t: f64, n: f64, v: f64) -> f64 {
    let (e, phi) = cloner_entries(t, n, v);
    two_mode_entropy(e, n, phi)
}

/// `χ_{AE_A} = S(E_A) − S(E_A|A)` from the closed-form two-mode spectra.
pub fn eve_holevo_dr(s: &ScenarioSpec) -> f64 {
    let Cloners { t1, n1, v, .. } = s.cloners;
    cloner_entropy(t1, n1, v) - cloner_entropy(t1, n1, 1.0)
}

pub fn key_rate_dr(s: &ScenarioSpec) -> KeyRatePoint {
    KeyRatePoint::new(
        s.protocol.reconciliation_efficiency(),
        mutual_info_ab(s),
        eve_shannon_dr(s),
        eve_holevo_dr(s),
    )
}

/// Eve's Shannon information about the recast data from the broadcast:
/// `log₂(V_E3 / V_E3|B')` with `V_E3|B' = T₂·V_S`.
pub fn eve_shannon_rr(s: &ScenarioSpec) -> Result<f64> {
    let Cloners { t1, n1, t2, n2, v } = s.cloners;
    let vs = v - 1.0;
    if vs < MIN_RR_MODULATION {
        return Err(Error::DivergentInformation(format!(
            "modulation variance {vs:e} is below {MIN_RR_MODULATION:e}; the broadcast determines the recast data"
        )));
    }
    if t2 <= 0.0 {
        return Err(Error::DivergentInformation(
            "recasting party's channel has zero transmission".into(),
        ));
    }
    let ve3 = t1 * v + (1.0 - t1) * n1 + t2 * v + (1.0 - t2) * n2;
    Ok((ve3 / (t2 * vs)).log2())
}

/// Eve's four stored modes `(E'₁, E''₁, E'₂, E''₂)`, block diagonal.
pub fn eve_covariance(s: &ScenarioSpec) -> Result<CovMatrix> {
    let Cloners { t1, n1, t2, n2, v } = s.cloners;
    Ok(CovMatrix::direct_sum(&[
        &cloner_covariance(t1, n1, v)?,
        &cloner_covariance(t2, n2, v)?,
    ]))
}

/// `ξ₁, φ₁, ξ₂, φ₂`: correlations of Eve's modes with the recast data.
fn recast_correlations(c: &Cloners) -> [f64; 4] {
    let Cloners { t1, n1, t2, n2, v } = *c;
    [
        (t1 * (1.0 - t1)).sqrt() * (n1 - v),
        ((1.0 - t1) * (n1 * n1 - 1.0).max(0.0)).sqrt(),
        (t2 * (1.0 - t2)).sqrt() * (n2 - 1.0),
        ((1.0 - t2) * (n2 * n2 - 1.0).max(0.0)).sqrt(),
    ]
}

/// The 8×2 cross-covariance `σ_{EB'}` between Eve's modes and `(Q_B', P_B')`.
pub fn recast_cross_covariance(s: &ScenarioSpec) -> DMatrix<f64> {
    let [xi1, ph1, xi2, ph2] = recast_correlations(&s.cloners);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(8, 2, &[
        xi1, 0.0,
        0.0, xi1,
        ph1, 0.0,
        0.0, -ph1,
        -xi2, 0.0,
        0.0, xi2,
        -ph2, 0.0,
        0.0, -ph2,
    ]);
    m
}

/// `γ_{B'} = b_v·I`.
pub fn recast_covariance(s: &ScenarioSpec) -> DMatrix<f64> {
    DMatrix::identity(2, 2) * recast_variances(s).0
}

/// Eve's modes conditioned on the recast data, written out entry by entry.
pub fn conditional_eve_covariance(s: &ScenarioSpec) -> Result<CovMatrix> {
    let c = &s.cloners;
    let (bv, _) = recast_variances(s);
    let [xi1, ph1, xi2, ph2] = recast_correlations(c);
    let (e1, f1) = cloner_entries(c.t1, c.n1, c.v);
    let (e2, f2) = cloner_entries(c.t2, c.n2, c.v);

    // 4×4 block pattern; each entry is (scalar, uses σz).
    let blocks: [[(f64, bool); 4]; 4] = [
        [(e1 - xi1 * xi1 / bv, false), (f1 - xi1 * ph1 / bv, true), (xi1 * xi2 / bv, true), (xi1 * ph2 / bv, false)],
        [(f1 - xi1 * ph1 / bv, true), (c.n1 - ph1 * ph1 / bv, false), (xi2 * ph1 / bv, false), (ph1 * ph2 / bv, true)],
        [(xi1 * xi2 / bv, true), (xi2 * ph1 / bv, false), (e2 - xi2 * xi2 / bv, false), (f2 - xi2 * ph2 / bv, true)],
        [(xi1 * ph2 / bv, false), (ph1 * ph2 / bv, true), (f2 - xi2 * ph2 / bv, true), (c.n2 - ph2 * ph2 / bv, false)],
    ];
    let mut m = DMatrix::zeros(8, 8);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, &(x, sz)) in row.iter().enumerate() {
            m[(2 * bi, 2 * bj)] = x;
            m[(2 * bi + 1, 2 * bj + 1)] = if sz { -x } else { x };
        }
    }
    CovMatrix::new(m)
}

/// Indices of Eve's modes that are not trivially decoupled. A lossless
/// channel (`T = 1`, hence `N = 1`) leaves its cloner's modes in vacuum and
/// uncorrelated with everything else.
fn active_modes(c: &Cloners) -> Vec<usize> {
    let mut modes = Vec::with_capacity(4);
    if c.t1 < 1.0 {
        modes.extend([0, 1]);
    }
    if c.t2 < 1.0 {
        modes.extend([2, 3]);
    }
    modes
}

/// `S(E) = S(E_A) + S(E_B)` by block additivity.
pub fn eve_entropy(s: &ScenarioSpec) -> f64 {
    let Cloners { t1, n1, t2, n2, v } = s.cloners;
    cloner_entropy(t1, n1, v) + cloner_entropy(t2, n2, v)
}

/// `S(E|B')` from the full symplectic spectrum of the conditional matrix.
pub fn eve_conditional_entropy(s: &ScenarioSpec) -> Result<f64> {
    let modes = active_modes(&s.cloners);
    if modes.is_empty() {
        return Ok(0.0);
    }
    conditional_eve_covariance(s)?.select_modes(&modes)?.entropy()
}

/// `χ_{B'E} = S(E) − S(E|B')` with the exact conditional spectrum.
pub fn eve_holevo_rr_exact(s: &ScenarioSpec) -> Result<f64> {
    Ok(eve_entropy(s) - eve_conditional_entropy(s)?)
}

/// `det γ_{E|B'}` through the determinant lemma
/// `det(γ_E − σσᵀ/b_v) = det γ_E · (b_v − k)² / b_v²` with `σᵀγ_E⁻¹σ = k·I`.
/// This avoids an LU determinant of an ill-conditioned 8×8 at large `V`.
pub fn conditional_determinant(s: &ScenarioSpec) -> f64 {
    let c = &s.cloners;
    let (bv, _) = recast_variances(s);
    let [xi1, ph1, xi2, ph2] = recast_correlations(c);
    // σ rows per cloner along Q: (x, y); the P rows flip the sign pattern
    // consistently, giving the same quadratic form.
    let quad = |t: f64, n: f64, x: f64, y: f64| {
        let (e, phi) = cloner_entries(t, n, c.v);
        let k = e * n - phi * phi;
        ((n * x * x - 2.0 * phi * x * y + e * y * y) / k, k * k)
    };
    let (k1, d1) = quad(c.t1, c.n1, xi1, ph1);
    let (k2, d2) = quad(c.t2, c.n2, -xi2, -ph2);
    let schur = 1.0 - (k1 + k2) / bv;
    d1 * d2 * schur * schur
}

/// Large-modulation approximation of `χ_{B'E}`.
///
/// `S(E|B') ≈ G((N₁−1)/2) + G((N₂−1)/2) + log₂(e²·ν₃ν₄/4)` with
/// `ν₃ν₄ = √(det γ_{E|B'} / (N₁²N₂²))`. Both transmissions must lie in
/// `(0, 1)`: a lossless or opaque channel has no large eigenvalue pair.
pub fn eve_holevo_rr_asymptotic(s: &ScenarioSpec) -> Result<f64> {
    let Cloners { t1, n1, t2, n2, .. } = s.cloners;
    if !(t1 > 0.0 && t1 < 1.0 && t2 > 0.0 && t2 < 1.0) {
        return Err(Error::Domain(format!(
            "asymptotic Holevo bound needs both transmissions in (0, 1), got T1={t1}, T2={t2}"
        )));
    }
    let det = conditional_determinant(s);
    if !(det > 0.0) {
        return Err(Error::UnphysicalMatrix(format!(
            "conditional covariance determinant is {det:e}"
        )));
    }
    let nu34 = (det / (n1 * n1 * n2 * n2)).sqrt();
    let e = std::f64::consts::E;
    let conditional = g_entropy((n1 - 1.0) / 2.0)?
        + g_entropy((n2 - 1.0) / 2.0)?
        + (e * e * nu34 / 4.0).log2();
    Ok(eve_entropy(s) - conditional)
}

pub fn key_rate_rr(s: &ScenarioSpec, mode: HolevoMode) -> Result<KeyRatePoint> {
    let holevo = match mode {
        HolevoMode::Exact => eve_holevo_rr_exact(s)?,
        HolevoMode::Asymptotic => eve_holevo_rr_asymptotic(s)?,
    };
    Ok(KeyRatePoint::new(
        s.protocol.reconciliation_efficiency(),
        mutual_info_ab(s),
        eve_shannon_rr(s)?,
        holevo,
    ))
}

/// Key rate in the scenario's own reconciliation direction.
pub fn key_rate(s: &ScenarioSpec, mode: HolevoMode) -> Result<KeyRatePoint> {
    match s.protocol.direction() {
        Direction::Direct => Ok(key_rate_dr(s)),
        Direction::Reverse => key_rate_rr(s, mode),
    }
}

/// Every covariance matrix the bounds are built from, labelled.
pub fn constructed_covariances(s: &ScenarioSpec) -> Result<Vec<(&'static str, CovMatrix)>> {
    let Cloners { t1, n1, t2, n2, v } = s.cloners;
    Ok(vec![
        ("gamma_EA(V)", cloner_covariance(t1, n1, v)?),
        ("gamma_EA(1)", cloner_covariance(t1, n1, 1.0)?),
        ("gamma_EB(V)", cloner_covariance(t2, n2, v)?),
        ("gamma_E", eve_covariance(s)?),
        ("gamma_E|B'", conditional_eve_covariance(s)?),
    ])
}
