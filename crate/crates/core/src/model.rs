//! Domain types and channel-parameter algebra.
//!
//! Excess noise is always referred to the channel input, so a channel of
//! transmission `T` and excess noise `ε` is emulated by an entangling cloner
//! whose EPR modes have variance `N = 1 + T·ε/(1−T)`.

use crate::error::{Error, Result};

/// Validation tolerance for parameter bounds.
pub const PARAM_TOL: f64 = 1e-12;

/// Standard telecom fiber loss.
pub const STANDARD_ATTENUATION_DB_PER_KM: f64 = 0.2;

/// One Markovian Gaussian channel between a sender and the relay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    transmission: f64,
    excess_noise: f64,
}

impl ChannelParams {
    pub fn new(transmission: f64, excess_noise: f64) -> Result<Self> {
        if !transmission.is_finite() || !(-PARAM_TOL..=1.0 + PARAM_TOL).contains(&transmission) {
            return Err(Error::UnphysicalParameters(format!(
                "transmission must lie in [0, 1], got {transmission}"
            )));
        }
        if !excess_noise.is_finite() || excess_noise < -PARAM_TOL {
            return Err(Error::UnphysicalParameters(format!(
                "excess noise must be >= 0, got {excess_noise}"
            )));
        }
        let transmission = transmission.clamp(0.0, 1.0);
        let excess_noise = excess_noise.max(0.0);
        if transmission == 1.0 && excess_noise > PARAM_TOL {
            return Err(Error::UnphysicalParameters(format!(
                "a lossless channel cannot add excess noise (got {excess_noise})"
            )));
        }
        Ok(Self {
            transmission,
            excess_noise,
        })
    }

    /// Builds the channel from Eve's EPR variance instead of the excess noise.
    pub fn from_epr_variance(transmission: f64, epr_variance: f64) -> Result<Self> {
        if !(transmission > 0.0 && transmission <= 1.0) {
            return Err(Error::UnphysicalParameters(format!(
                "transmission must lie in (0, 1], got {transmission}"
            )));
        }
        if !(epr_variance >= 1.0 - PARAM_TOL) {
            return Err(Error::UnphysicalParameters(format!(
                "EPR variance must be >= 1, got {epr_variance}"
            )));
        }
        let eps = (1.0 - transmission) * (epr_variance - 1.0).max(0.0) / transmission;
        Self::new(transmission, eps)
    }

    pub fn lossless() -> Self {
        Self {
            transmission: 1.0,
            excess_noise: 0.0,
        }
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn excess_noise(&self) -> f64 {
        self.excess_noise
    }

    /// Shorthand for [`epr_variance`].
    pub fn epr_variance(&self) -> Result<f64> {
        epr_variance(self)
    }
}

/// Eve's EPR variance `N = 1 + T·ε/(1−T)` emulating the channel.
///
/// A lossless noiseless channel returns `N = 1`: the cloner's ancilla is
/// decoupled and vacuum-equivalent.
pub fn epr_variance(ch: &ChannelParams) -> Result<f64> {
    let t = ch.transmission;
    if t <= 0.0 {
        return Err(Error::DegenerateChannel);
    }
    if t >= 1.0 {
        // `ChannelParams::new` already rejects noisy lossless channels.
        return Ok(1.0);
    }
    Ok(1.0 + t * ch.excess_noise / (1.0 - t))
}

/// Which party's data is the reference raw key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Alice's encodings are the reference.
    Direct,
    /// Bob's recast data are the reference.
    Reverse,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Direct => "dr",
            Direction::Reverse => "rr",
        })
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dr" | "direct" => Ok(Direction::Direct),
            "rr" | "reverse" => Ok(Direction::Reverse),
            other => Err(Error::Domain(format!("unknown direction `{other}` (use dr or rr)"))),
        }
    }
}

/// Shared protocol settings: Gaussian modulation, reconciliation and the
/// relay's detector imperfections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    modulation_variance: f64,
    reconciliation_efficiency: f64,
    direction: Direction,
    detector_efficiency: f64,
    electronic_noise: f64,
}

impl ProtocolParams {
    /// Ideal detectors. `modulation_variance` is `V_S`; the total variance is `V_S + 1`.
    pub fn new(modulation_variance: f64, reconciliation_efficiency: f64, direction: Direction) -> Result<Self> {
        if !modulation_variance.is_finite() || modulation_variance < 0.0 {
            return Err(Error::UnphysicalParameters(format!(
                "modulation variance must be >= 0, got {modulation_variance}"
            )));
        }
        if !(reconciliation_efficiency > 0.0 && reconciliation_efficiency <= 1.0) {
            return Err(Error::UnphysicalParameters(format!(
                "reconciliation efficiency must lie in (0, 1], got {reconciliation_efficiency}"
            )));
        }
        Ok(Self {
            modulation_variance,
            reconciliation_efficiency,
            direction,
            detector_efficiency: 1.0,
            electronic_noise: 0.0,
        })
    }

    /// Same as [`ProtocolParams::new`] but from the total variance `V = V_S + 1`.
    pub fn with_total_variance(total_variance: f64, reconciliation_efficiency: f64, direction: Direction) -> Result<Self> {
        if !(total_variance >= 1.0) {
            return Err(Error::UnphysicalParameters(format!(
                "total variance must be >= 1, got {total_variance}"
            )));
        }
        Self::new(total_variance - 1.0, reconciliation_efficiency, direction)
    }

    pub fn with_detector(mut self, efficiency: f64, electronic_noise: f64) -> Result<Self> {
        check_detector(efficiency, electronic_noise)?;
        self.detector_efficiency = efficiency;
        self.electronic_noise = electronic_noise;
        Ok(self)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_modulation_variance(mut self, modulation_variance: f64) -> Result<Self> {
        let updated = Self::new(modulation_variance, self.reconciliation_efficiency, self.direction)?;
        self.modulation_variance = updated.modulation_variance;
        Ok(self)
    }

    pub fn with_reconciliation_efficiency(mut self, beta: f64) -> Result<Self> {
        let updated = Self::new(self.modulation_variance, beta, self.direction)?;
        self.reconciliation_efficiency = updated.reconciliation_efficiency;
        Ok(self)
    }

    pub fn modulation_variance(&self) -> f64 {
        self.modulation_variance
    }

    /// `V = V_S + 1`.
    pub fn total_variance(&self) -> f64 {
        self.modulation_variance + 1.0
    }

    pub fn reconciliation_efficiency(&self) -> f64 {
        self.reconciliation_efficiency
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn detector_efficiency(&self) -> f64 {
        self.detector_efficiency
    }

    pub fn electronic_noise(&self) -> f64 {
        self.electronic_noise
    }
}

fn check_detector(efficiency: f64, electronic_noise: f64) -> Result<()> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::UnphysicalParameters(format!(
            "detector efficiency must lie in (0, 1], got {efficiency}"
        )));
    }
    if !electronic_noise.is_finite() || electronic_noise < 0.0 {
        return Err(Error::UnphysicalParameters(format!(
            "electronic noise must be >= 0, got {electronic_noise}"
        )));
    }
    Ok(())
}

/// A fiber span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberModel {
    attenuation: f64,
    distance: f64,
}

impl FiberModel {
    pub fn new(attenuation_db_per_km: f64, distance_km: f64) -> Result<Self> {
        if !(attenuation_db_per_km > 0.0) || !attenuation_db_per_km.is_finite() {
            return Err(Error::Domain(format!(
                "fiber attenuation must be positive, got {attenuation_db_per_km} dB/km"
            )));
        }
        if !(distance_km >= 0.0) || !distance_km.is_finite() {
            return Err(Error::Domain(format!("distance must be >= 0, got {distance_km} km")));
        }
        Ok(Self {
            attenuation: attenuation_db_per_km,
            distance: distance_km,
        })
    }

    /// 0.2 dB/km fiber.
    pub fn standard(distance_km: f64) -> Result<Self> {
        Self::new(STANDARD_ATTENUATION_DB_PER_KM, distance_km)
    }

    pub fn attenuation(&self) -> f64 {
        self.attenuation
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn loss_db(&self) -> f64 {
        self.attenuation * self.distance
    }

    pub fn transmission(&self) -> f64 {
        fiber_transmission(self)
    }
}

/// `10^(−α·d/10)`.
pub fn fiber_transmission(f: &FiberModel) -> f64 {
    10f64.powf(-f.loss_db() / 10.0)
}

/// Folds the relay's detector efficiency and electronic noise into an
/// effective channel: `T' = η·T`, `ε' = ε + v_el/(η·T)`.
pub fn absorb_detector(ch: &ChannelParams, efficiency: f64, electronic_noise: f64) -> Result<ChannelParams> {
    check_detector(efficiency, electronic_noise)?;
    let t = ch.transmission;
    if t <= 0.0 {
        return Err(Error::DegenerateChannel);
    }
    if efficiency == 1.0 && electronic_noise == 0.0 {
        return Ok(*ch);
    }
    let t_eff = efficiency * t;
    ChannelParams::new(t_eff, ch.excess_noise + electronic_noise / t_eff)
}

/// Decomposed secret key rate, all terms in bits per pulse.
///
/// `key_rate` is always `β·mutual_info_ab − eve_shannon − eve_holevo`; it
/// is not clamped and goes negative past the cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRatePoint {
    pub reconciliation_efficiency: f64,
    pub mutual_info_ab: f64,
    pub eve_shannon: f64,
    pub eve_holevo: f64,
    pub key_rate: f64,
}

impl KeyRatePoint {
    pub fn new(reconciliation_efficiency: f64, mutual_info_ab: f64, eve_shannon: f64, eve_holevo: f64) -> Self {
        Self {
            reconciliation_efficiency,
            mutual_info_ab,
            eve_shannon,
            eve_holevo,
            key_rate: Self::combine(reconciliation_efficiency, mutual_info_ab, eve_shannon, eve_holevo),
        }
    }

    fn combine(beta: f64, i_ab: f64, shannon: f64, holevo: f64) -> f64 {
        beta * i_ab - shannon - holevo
    }

    /// Re-evaluates the decomposition identity from the stored fields.
    pub fn is_consistent(&self) -> bool {
        Self::combine(
            self.reconciliation_efficiency,
            self.mutual_info_ab,
            self.eve_shannon,
            self.eve_holevo,
        ) == self.key_rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ch(t: f64, e: f64) -> ChannelParams {
        ChannelParams::new(t, e).unwrap()
    }

    #[test]
    fn epr_variance_examples() {
        assert!((epr_variance(&ch(0.5, 2.0)).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(epr_variance(&ch(1.0, 0.0)).unwrap(), 1.0);
        let n = epr_variance(&ch(0.25, 0.01)).unwrap();
        assert!((n - (1.0 + 0.25 * 0.01 / 0.75)).abs() < 1e-15);
        assert!((n - 1.003333).abs() < 1e-6);
    }

    #[test]
    fn epr_variance_errors() {
        assert!(matches!(
            ChannelParams::new(1.0, 0.1),
            Err(Error::UnphysicalParameters(_))
        ));
        assert_eq!(epr_variance(&ch(0.0, 0.1)), Err(Error::DegenerateChannel));
        assert!(ChannelParams::new(-0.1, 0.0).is_err());
        assert!(ChannelParams::new(0.5, -0.01).is_err());
        assert!(ChannelParams::new(1.5, 0.0).is_err());
        assert!(ChannelParams::new(f64::NAN, 0.0).is_err());
        // within validation tolerance
        assert!(ChannelParams::new(1.0, 1e-13).is_ok());
    }

    #[test]
    fn fiber_examples() {
        assert_eq!(FiberModel::standard(0.0).unwrap().transmission(), 1.0);
        let t15 = FiberModel::standard(15.0).unwrap().transmission();
        assert!((t15 - 10f64.powf(-0.3)).abs() < 1e-15);
        assert!((t15 - 0.5012).abs() < 1e-4);
        assert!((FiberModel::standard(50.0).unwrap().transmission() - 0.1).abs() < 1e-15);
        assert!(matches!(FiberModel::standard(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn absorb_detector_examples() {
        let id = absorb_detector(&ch(0.5, 0.01), 1.0, 0.0).unwrap();
        assert_eq!(id, ch(0.5, 0.01));

        let a = absorb_detector(&ch(0.5, 0.0), 0.6, 0.015).unwrap();
        assert!((a.transmission() - 0.3).abs() < 1e-15);
        assert!((a.excess_noise() - 0.05).abs() < 1e-15);

        let b = absorb_detector(&ch(0.8, 0.005), 0.99, 0.01).unwrap();
        assert!((b.transmission() - 0.792).abs() < 1e-15);
        assert!((b.excess_noise() - (0.005 + 0.01 / 0.792)).abs() < 1e-15);
        assert!((b.excess_noise() - 0.017626).abs() < 1e-6);

        assert_eq!(absorb_detector(&ch(0.0, 0.0), 0.9, 0.0), Err(Error::DegenerateChannel));
        assert!(absorb_detector(&ch(0.5, 0.0), 0.0, 0.0).is_err());
        assert!(absorb_detector(&ch(0.5, 0.0), 0.5, -1.0).is_err());
    }

    #[test]
    fn protocol_params() {
        let p = ProtocolParams::with_total_variance(5.0, 0.95, Direction::Reverse).unwrap();
        assert_eq!(p.modulation_variance(), 4.0);
        assert_eq!(p.total_variance(), 5.0);
        assert!(ProtocolParams::new(-1.0, 0.95, Direction::Direct).is_err());
        assert!(ProtocolParams::new(1.0, 0.0, Direction::Direct).is_err());
        assert!(ProtocolParams::new(1.0, 1.01, Direction::Direct).is_err());
        assert!(p.with_detector(1.2, 0.0).is_err());
        assert_eq!("RR".parse::<Direction>().unwrap(), Direction::Reverse);
        assert!("xx".parse::<Direction>().is_err());
    }

    #[test]
    fn key_rate_identity() {
        let k = KeyRatePoint::new(0.95, 1.3, 0.2, 0.4);
        assert!(k.is_consistent());
        assert_eq!(k.key_rate, 0.95 * 1.3 - 0.2 - 0.4);
    }

    proptest! {
        #[test]
        fn epr_round_trip(t in 1e-3..0.999f64, eps in 0.0..1.0f64) {
            let c = ch(t, eps);
            let n = epr_variance(&c).unwrap();
            prop_assert!(n >= 1.0);
            let back = (1.0 - t) * (n - 1.0) / t;
            prop_assert!((back - eps).abs() < 1e-12);
            let rebuilt = ChannelParams::from_epr_variance(t, n).unwrap();
            prop_assert!((rebuilt.excess_noise() - eps).abs() < 1e-12);
        }

        #[test]
        fn absorb_composes(t in 1e-3..1.0f64, eps in 0.0..0.1f64, e1 in 0.05..1.0f64, e2 in 0.05..1.0f64) {
            let c = ch(t, eps);
            let twice = absorb_detector(&absorb_detector(&c, e1, 0.0).unwrap(), e2, 0.0).unwrap();
            let once = absorb_detector(&c, e1 * e2, 0.0).unwrap();
            prop_assert!((twice.transmission() - once.transmission()).abs() < 1e-12);
            prop_assert!((twice.excess_noise() - once.excess_noise()).abs() < 1e-12);
        }

        #[test]
        fn fiber_is_multiplicative(d1 in 0.0..200.0f64, d2 in 0.0..200.0f64) {
            let t = |d| FiberModel::standard(d).unwrap().transmission();
            prop_assert!((t(d1 + d2) - t(d1) * t(d2)).abs() < 1e-12);
            prop_assert!(t(d1 + d2) <= t(d1));
        }
    }
}
