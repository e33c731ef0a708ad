//! Synthetic measurements with a known voltage→current mapping.
//!
//! Voltages are log-normal around per-order base levels with equicorrelated
//! log-deviations. Each load signature emits current on its dominant orders:
//!
//! ```text
//! i_h = Σ_d share_d · weight_{d,h} · g_d(u_{d,h}) + η_h
//! u_{d,h} = ṽ_h + κ · Σ_{h' ∈ orders_d, h' ≠ h} ṽ_{h'},   ṽ = v / base
//! g_d(u) = sat_d · tanh((u + β_d·u^p_d) / sat_d)
//! ```
//!
//! THD columns are root-sum-squares of the emitted components over a fixed
//! fundamental, in percent.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, HarmonicRecord};
use crate::error::{Error, Result};
use crate::seeds;

pub const ORDERS: [u32; 9] = [3, 5, 7, 9, 11, 13, 15, 17, 19];
/// Orders standing in for "high order" in the equipment table.
pub const HIGH_ORDERS: [u32; 4] = [13, 15, 17, 19];

fn order_index(h: u32) -> Option<usize> {
    ORDERS.iter().position(|&o| o == h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSignature {
    pub name: String,
    pub orders: Vec<u32>,
    /// Emission amplitude in amperes for each entry of `orders`.
    pub weights: Vec<f64>,
    /// Odd power of the response polynomial.
    pub exponent: u32,
    pub nonlinearity: f64,
    pub saturation: f64,
    /// Share of this load in the mix.
    #[serde(default = "one")]
    pub share: f64,
}

fn one() -> f64 {
    1.0
}

/// Typical amplitude per order used by the catalog.
const ORDER_AMPLITUDE: [f64; 9] = [0.8, 1.0, 0.7, 0.35, 0.4, 0.2, 0.15, 0.12, 0.1];

impl LoadSignature {
    fn table(name: &str, orders: &[u32], high: bool, nonlinearity: f64) -> Self {
        let mut o = orders.to_vec();
        if high {
            o.extend_from_slice(&HIGH_ORDERS);
        }
        let weights = o.iter().map(|&h| ORDER_AMPLITUDE[order_index(h).expect("catalog order")]).collect();
        Self {
            name: name.into(),
            orders: o,
            weights,
            exponent: 3,
            nonlinearity,
            saturation: 3.0,
            share: 1.0,
        }
    }

    /// The equipment table: dominant current orders per device type.
    pub fn catalog() -> Vec<LoadSignature> {
        let t = Self::table;
        vec![
            t("vfd", &[5, 7, 11], false, 0.3),
            t("ups", &[3, 5, 7, 11], false, 0.25),
            t("arc_welding", &[3, 5, 7, 11], false, 0.5),
            t("induction_motor", &[5, 7], false, 0.1),
            t("induction_cooktop", &[5, 7, 11], true, 0.35),
            t("air_conditioner", &[5, 7, 11], false, 0.3),
            t("electric_heater", &[5, 7, 11], false, 0.2),
            t("heat_pump", &[5, 7, 11], false, 0.3),
            t("microwave_oven", &[3, 5, 7], false, 0.4),
            t("water_heater", &[5, 7, 11], false, 0.2),
            t("personal_computer", &[3, 5, 7, 9], true, 0.3),
            t("led_lighting", &[3, 5, 7, 9], true, 0.3),
            t("fluorescent_lighting", &[3, 5, 7, 9], false, 0.25),
            t("monitor", &[5, 7, 9], true, 0.3),
            t("power_conversion", &[3, 5, 7, 9], true, 0.4),
        ]
    }

    pub fn from_catalog(name: &str) -> Result<Self> {
        Self::catalog()
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("unknown load signature `{name}`")))
    }

    pub fn with_share(mut self, share: f64) -> Self {
        self.share = share;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("signature `{}`: {m}", self.name)));
        if self.orders.is_empty() {
            return bad("needs at least one dominant order".into());
        }
        if self.orders.len() != self.weights.len() {
            return bad("one weight per order required".into());
        }
        if let Some(h) = self.orders.iter().find(|&&h| order_index(h).is_none()) {
            return bad(format!("order {h} is not one of {ORDERS:?}"));
        }
        if self.weights.iter().chain([&self.share]).any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("weights and share must be finite and >= 0".into());
        }
        if self.exponent % 2 == 0 {
            return bad("exponent must be odd".into());
        }
        if !(self.saturation > 0.0) || !self.nonlinearity.is_finite() || self.nonlinearity < 0.0 {
            return bad("saturation must be positive and nonlinearity >= 0".into());
        }
        Ok(())
    }

    pub fn response(&self, u: f64) -> f64 {
        let s = self.saturation;
        s * ((u + self.nonlinearity * u.powi(self.exponent as i32)) / s).tanh()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub signatures: Vec<LoadSignature>,
    pub n: usize,
    /// Relative current noise level.
    pub noise: f64,
    pub seed: u64,
    /// Correlation of the log-voltage deviations across orders.
    pub correlation: f64,
    /// Fundamental current (A) for THD_i.
    pub fundamental_current: f64,
    #[serde(default = "default_fundamental_voltage")]
    pub fundamental_voltage: f64,
    /// Standard deviation of log(v_h / base_h).
    #[serde(default = "default_spread")]
    pub voltage_spread: f64,
    #[serde(default = "default_base_voltages")]
    pub base_voltages: [f64; 9],
    /// Cross-order coupling κ inside a signature.
    #[serde(default = "default_coupling")]
    pub coupling: f64,
}

fn default_fundamental_voltage() -> f64 {
    230.0
}
fn default_spread() -> f64 {
    0.35
}
fn default_base_voltages() -> [f64; 9] {
    [1.6, 2.2, 1.4, 0.6, 0.9, 0.5, 0.3, 0.35, 0.25]
}
fn default_coupling() -> f64 {
    0.1
}

impl Default for GenConfig {
    /// A mixed residential/industrial load covering every order.
    fn default() -> Self {
        let mix = [
            ("vfd", 1.0),
            ("ups", 0.6),
            ("induction_motor", 0.5),
            ("personal_computer", 0.8),
            ("led_lighting", 0.7),
            ("fluorescent_lighting", 0.4),
            ("monitor", 0.5),
            ("power_conversion", 0.6),
        ];
        Self {
            signatures: mix
                .iter()
                .map(|(n, s)| LoadSignature::from_catalog(n).expect("catalog entry").with_share(*s))
                .collect(),
            n: 10_000,
            noise: 0.05,
            seed: 0,
            correlation: 0.3,
            fundamental_current: 20.0,
            fundamental_voltage: default_fundamental_voltage(),
            voltage_spread: default_spread(),
            base_voltages: default_base_voltages(),
            coupling: default_coupling(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        if self.signatures.is_empty() {
            return Err(Error::Config("at least one load signature required".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise level {} must be >= 0", self.noise)));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::Config(format!("correlation {} outside [0, 1)", self.correlation)));
        }
        let positive = [self.fundamental_current, self.fundamental_voltage];
        if positive.iter().chain(&self.base_voltages).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("fundamentals and base voltages must be positive".into()));
        }
        if !(self.voltage_spread >= 0.0) || !(self.coupling >= 0.0) {
            return Err(Error::Config("voltage spread and coupling must be >= 0".into()));
        }
        self.signatures.iter().try_for_each(LoadSignature::validate)
    }
}

/// The exact noise-free mapping behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GenConfig,
    /// Clean currents at the base voltages.
    pub reference: [f64; 9],
    /// Per-order noise standard deviation (A).
    pub noise_std: [f64; 9],
}

impl GroundTruth {
    pub fn new(config: GenConfig) -> Result<Self> {
        config.validate()?;
        let mut gt = Self {
            config,
            reference: [0.0; 9],
            noise_std: [0.0; 9],
        };
        let mut base = [0.0; 10];
        base[..9].copy_from_slice(&gt.config.base_voltages);
        gt.reference = gt.components(&base);
        let floor = 0.01 * gt.reference.iter().copied().fold(0.0, f64::max);
        for (s, r) in gt.noise_std.iter_mut().zip(gt.reference) {
            *s = gt.config.noise * r.max(floor);
        }
        Ok(gt)
    }

    /// Noise-free harmonic currents i3..i19 for voltages `v` (THD_v ignored).
    pub fn components(&self, v: &[f64; 10]) -> [f64; 9] {
        let c = &self.config;
        let mut rel = [0.0; 9];
        for k in 0..9 {
            rel[k] = v[k] / c.base_voltages[k];
        }
        let mut out = [0.0; 9];
        for sig in &c.signatures {
            let idx: Vec<usize> = sig.orders.iter().map(|&h| order_index(h).expect("validated")).collect();
            let total: f64 = idx.iter().map(|&k| rel[k]).sum();
            for (&k, &w) in idx.iter().zip(&sig.weights) {
                let u = rel[k] + c.coupling * (total - rel[k]);
                out[k] += sig.share * w * sig.response(u);
            }
        }
        out
    }

    /// Full noise-free output row: components plus THD_i.
    pub fn currents(&self, v: &[f64; 10]) -> [f64; 10] {
        let comp = self.components(v);
        let mut out = [0.0; 10];
        out[..9].copy_from_slice(&comp);
        out[9] = thd(&comp, self.config.fundamental_current);
        out
    }

    /// Spread-scaled sensitivity `[output][feature]`: the mean absolute partial
    /// derivative of each clean output with respect to each harmonic voltage over
    /// `samples`, times that voltage's standard deviation. The THD_v column is zero
    /// because the generator never reads it.
    pub fn sensitivity(&self, samples: &[[f64; 10]]) -> [[f64; 10]; 10] {
        let n = samples.len() as f64;
        let mut out = [[0.0; 10]; 10];
        if samples.len() < 2 {
            return out;
        }
        for j in 0..9 {
            let mean = samples.iter().map(|v| v[j]).sum::<f64>() / n;
            let std = (samples.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let h = 1e-6 * std.max(1e-12);
            for v in samples {
                let (mut up, mut down) = (*v, *v);
                up[j] += h;
                down[j] -= h;
                let (a, b) = (self.currents(&up), self.currents(&down));
                for o in 0..10 {
                    out[o][j] += ((a[o] - b[o]) / (2.0 * h)).abs() * std / n;
                }
            }
        }
        out
    }

    /// Index of the harmonic voltage with the largest [`sensitivity`](Self::sensitivity)
    /// for each output; `None` for an output no voltage moves.
    pub fn dominant_drivers(&self, samples: &[[f64; 10]]) -> [Option<usize>; 10] {
        let s = self.sensitivity(samples);
        let mut out = [None; 10];
        for (o, row) in s.iter().enumerate() {
            let (j, &best) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("ten features");
            if best > 0.0 {
                out[o] = Some(j);
            }
        }
        out
    }

    /// THD_v for harmonic voltages `v3..v19`.
    pub fn voltage_thd(&self, v: &[f64]) -> f64 {
        thd(&v[..9], self.config.fundamental_voltage)
    }
}

/// `sqrt(Σ c²) / fundamental · 100`.
pub fn thd(components: &[f64], fundamental: f64) -> f64 {
    components.iter().map(|c| c * c).sum::<f64>().sqrt() / fundamental * 100.0
}

pub fn synthesize(config: &GenConfig) -> Result<(Dataset, GroundTruth)> {
    let gt = GroundTruth::new(config.clone())?;
    let c = &gt.config;
    let mut rng = seeds::rng(c.seed, seeds::stream::SYNTH);
    let (shared, own) = (c.correlation.sqrt(), (1.0 - c.correlation).sqrt());
    let mut records = Vec::with_capacity(c.n);
    for _ in 0..c.n {
        let common: f64 = rng.sample(StandardNormal);
        let mut v = [0.0; 10];
        for k in 0..9 {
            let e: f64 = rng.sample(StandardNormal);
            v[k] = c.base_voltages[k] * (c.voltage_spread * (shared * common + own * e)).exp();
        }
        v[9] = gt.voltage_thd(&v);
        let clean = gt.components(&v);
        let mut i = [0.0; 10];
        for k in 0..9 {
            let eta: f64 = rng.sample::<f64, _>(StandardNormal) * gt.noise_std[k];
            i[k] = (clean[k] + eta).max(0.0);
        }
        i[9] = thd(&i[..9], c.fundamental_current);
        records.push(HarmonicRecord { timestamp: None, v, i });
    }
    Ok((Dataset::new(records, format!("synthetic seed {}", c.seed)), gt))
}
