//! GHZ states degraded by the Hawking effect.
//!
//! Each Kruskal mode near a horizon splits into an exterior and an interior
//! mode by a two-mode squeeze:
//!
//! ```text
//! |0⟩_K = cos r |0_out 0_in⟩ + sin r |1_out 1_in⟩,   |1⟩_K = |1_out 0_in⟩
//! ```
//!
//! with `cos r = (e^{−ω/T} + 1)^{−1/2}`. Tracing out the unobserved partner of
//! every split mode leaves an X-type four-qubit state, so the Svetlichny value
//! has a closed form in the scenario parameters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{classify_xtype, partial_trace, DensityOperator, ModeKind, ModeLabel, ModeState, XTYPE_TOL};
use crate::svetlichny::{xtype_value, SvetlichnyResult, COHERENCE_FACTOR};

use num_complex::Complex64 as C64;

/// Relative tolerance when both `T` and `M` are given.
pub const MASS_TEMPERATURE_TOL: f64 = 1e-9;

/// Scenarios must satisfy `3M√Λ < 1 − NARIAI_GUARD`.
pub const NARIAI_GUARD: f64 = 1e-9;

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}

fn unit_interval(alpha: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(Error::InvalidScenario(format!("alpha = {alpha} is outside [0, 1]")))
    }
}

/// `T = 1/(8πM)`.
pub fn hawking_temperature(mass: f64) -> Result<f64> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::NonPositiveMass(mass));
    }
    Ok(1.0 / (8.0 * PI * mass))
}

/// `(1/√(e^{−ω/T}+1), 1/√(e^{ω/T}+1))`, evaluated without overflow.
pub fn squeeze_coeffs(omega: f64, temperature: f64) -> Result<(f64, f64)> {
    positive("omega", omega)?;
    positive("temperature", temperature)?;
    let e = (-omega / temperature).exp();
    Ok((1.0 / (1.0 + e).sqrt(), (e / (1.0 + e)).sqrt()))
}

/// `cos² − sin² = tanh(ω/2T)`.
fn squeeze_contrast(omega: f64, temperature: f64) -> f64 {
    (0.5 * omega / temperature).tanh()
}

/// `α√(1−α²)` with `α` clamped into `[0, 1]`.
fn alpha_weight(alpha: f64) -> f64 {
    alpha * (1.0 - alpha * alpha).max(0.0).sqrt()
}

/// `n` Kruskal modes near a Schwarzschild horizon, of which `p` exterior and
/// `q` interior partners are kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchwarzschildScenario {
    pub alpha: f64,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    pub n: u32,
    pub p: u32,
    pub q: u32,
}

impl SchwarzschildScenario {
    pub fn with_temperature(alpha: f64, omega: f64, temperature: f64, n: u32, p: u32, q: u32) -> Result<Self> {
        let s = Self {
            alpha,
            omega,
            temperature: Some(temperature),
            mass: None,
            n,
            p,
            q,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_mass(alpha: f64, omega: f64, mass: f64, n: u32, p: u32, q: u32) -> Result<Self> {
        let s = Self {
            alpha,
            omega,
            temperature: None,
            mass: Some(mass),
            n,
            p,
            q,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval(self.alpha)?;
        positive("omega", self.omega)?;
        if !(1..=3).contains(&self.n) {
            return Err(Error::InvalidScenario(format!("n = {} is outside 1..=3", self.n)));
        }
        if self.p + self.q != self.n {
            return Err(Error::InvalidScenario(format!(
                "p + q = {} + {} does not equal n = {}",
                self.p, self.q, self.n
            )));
        }
        self.temperature().map(|_| ())
    }

    /// The Hawking temperature, from `T`, from `M`, or both if consistent.
    pub fn temperature(&self) -> Result<f64> {
        match (self.temperature, self.mass) {
            (Some(t), None) => positive("temperature", t),
            (None, Some(m)) => hawking_temperature(m),
            (Some(t), Some(m)) => {
                let t = positive("temperature", t)?;
                let from_mass = hawking_temperature(m)?;
                if (t - from_mass).abs() > MASS_TEMPERATURE_TOL * t.max(from_mass) {
                    return Err(Error::InvalidScenario(format!(
                        "temperature {t} disagrees with 1/(8πM) = {from_mass}"
                    )));
                }
                Ok(t)
            }
            (None, None) => Err(Error::InvalidScenario("either temperature or mass is required".into())),
        }
    }

    fn kruskal_count(&self) -> u32 {
        4 - self.n
    }

    /// Mode order: the `4 − n` Kruskal modes, then `out_i, in_i` pairs.
    pub fn modes(&self) -> Vec<ModeLabel> {
        let mut modes: Vec<ModeLabel> = (1..=self.kruskal_count())
            .map(|i| ModeLabel::new(ModeKind::Kruskal, i))
            .collect();
        for i in 1..=self.n {
            modes.push(ModeLabel::new(ModeKind::Out, i));
            modes.push(ModeLabel::new(ModeKind::In, i));
        }
        modes
    }

    /// Kruskal modes, `out_1..out_p`, then `in_{p+1}..in_n`.
    pub fn kept_modes(&self) -> Vec<ModeLabel> {
        let mut keep: Vec<ModeLabel> = (1..=self.kruskal_count())
            .map(|i| ModeLabel::new(ModeKind::Kruskal, i))
            .collect();
        keep.extend((1..=self.p).map(|i| ModeLabel::new(ModeKind::Out, i)));
        keep.extend((self.p + 1..=self.n).map(|i| ModeLabel::new(ModeKind::In, i)));
        keep
    }
}

/// The `(4 + n)`-mode pure state after squeezing the last `n` GHZ modes.
pub fn build_schwarzschild_state(s: &SchwarzschildScenario) -> Result<ModeState> {
    s.validate()?;
    let (c, sn) = squeeze_coeffs(s.omega, s.temperature()?)?;
    let alpha = s.alpha;
    let beta = (1.0 - alpha * alpha).max(0.0).sqrt();
    let k = s.kruskal_count() as usize;
    let n = s.n as usize;
    let total = k + 2 * n;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << total];

    // |0̄⟩ ⊗ (c|00⟩ + s|11⟩)^{⊗n}
    for pattern in 0..(1usize << n) {
        let mut idx = 0usize;
        let mut amp = alpha;
        for i in 0..n {
            let excited = (pattern >> (n - 1 - i)) & 1 == 1;
            idx = (idx << 2) | if excited { 0b11 } else { 0b00 };
            amp *= if excited { sn } else { c };
        }
        amps[idx] += C64::from(amp);
    }

    // |1̄⟩ ⊗ |1_out 0_in⟩^{⊗n}
    let mut idx = (1usize << k) - 1;
    for _ in 0..n {
        idx = (idx << 2) | 0b10;
    }
    amps[idx] += C64::from(beta);

    ModeState::new(s.modes(), amps)
}

/// `ρ_{4−n,p,q}` over the kept modes.
pub fn reduce_schwarzschild(s: &SchwarzschildScenario) -> Result<DensityOperator> {
    let psi = build_schwarzschild_state(s)?;
    partial_trace(&psi, &s.kept_modes())
}

/// Closed form `max{16√2 α√(1−α²) cosᵖr sinᵠr, 4|N|}` with
/// `N = α² tanhⁿ(ω/2T) + (−1)^q (1 − α²)`.
pub fn svetlichny_schwarzschild(s: &SchwarzschildScenario) -> Result<SvetlichnyResult> {
    s.validate()?;
    let t = s.temperature()?;
    let (c, sn) = squeeze_coeffs(s.omega, t)?;
    let coherence = alpha_weight(s.alpha) * c.powi(s.p as i32) * sn.powi(s.q as i32);
    let a2 = s.alpha * s.alpha;
    let parity = if s.q.is_multiple_of(2) { 1.0 } else { -1.0 };
    let signed = a2 * squeeze_contrast(s.omega, t).powi(s.n as i32) + parity * (1.0 - a2);
    let (value, branch) = xtype_value(coherence, signed);
    SvetlichnyResult::analytic(value, branch)
}

/// Generic route: build, trace, classify, then the X-type closed form.
pub fn svetlichny_schwarzschild_via_state(s: &SchwarzschildScenario) -> Result<SvetlichnyResult> {
    let rho = reduce_schwarzschild(s)?;
    crate::svetlichny::svetlichny_xtype(&classify_xtype(&rho, XTYPE_TOL)?)
}

/// Radii of the black-hole and cosmological horizons.
///
/// These are the two positive roots of `Λr³ − 3r + 6M = 0`, each refined by a
/// Newton step when that lowers the residual.
pub fn sds_horizons(mass: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::NonPositiveMass(mass));
    }
    positive("lambda", lambda)?;
    let x = 3.0 * mass * lambda.sqrt();
    if x >= 1.0 {
        return Err(Error::NariaiViolation(x));
    }
    let scale = 2.0 / lambda.sqrt();
    let phi = x.acos();
    let r_h = polish(scale * ((PI + phi) / 3.0).cos(), mass, lambda);
    let r_c = polish(scale * ((phi - PI) / 3.0).cos(), mass, lambda);
    Ok((r_h, r_c))
}

fn polish(mut r: f64, mass: f64, lambda: f64) -> f64 {
    let f = |r: f64| lambda * r * r * r - 3.0 * r + 6.0 * mass;
    for _ in 0..4 {
        let fr = f(r);
        let slope = 3.0 * lambda * r * r - 3.0;
        if fr == 0.0 || slope.abs() < 1e-8 {
            break;
        }
        let next = r - fr / slope;
        if f(next).abs() < fr.abs() {
            r = next;
        } else {
            break;
        }
    }
    r
}

/// `1 − 2M/r − Λr²/3`.
pub fn sds_metric(mass: f64, lambda: f64, r: f64) -> f64 {
    1.0 - 2.0 * mass / r - lambda * r * r / 3.0
}

/// Horizon radii, surface gravities, temperatures and squeezing coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdSThermo {
    pub r_h: f64,
    pub r_c: f64,
    pub k_h: f64,
    pub k_c: f64,
    pub t_h: f64,
    pub t_c: f64,
    pub cos_r: f64,
    pub sin_r: f64,
    pub cos_w: f64,
    pub sin_w: f64,
}

pub fn sds_thermo(mass: f64, lambda: f64, omega: f64) -> Result<SdSThermo> {
    positive("omega", omega)?;
    let (r_h, r_c) = sds_horizons(mass, lambda)?;
    let gap = r_c - r_h;
    let k_h = lambda * (2.0 * r_h + r_c) * gap / (6.0 * r_h);
    let k_c = lambda * (2.0 * r_c + r_h) * gap / (6.0 * r_c);
    let t_h = k_h / (2.0 * PI);
    let t_c = k_c / (2.0 * PI);
    let (cos_r, sin_r) = squeeze_coeffs(omega, t_h)?;
    let (cos_w, sin_w) = squeeze_coeffs(omega, t_c)?;
    Ok(SdSThermo {
        r_h,
        r_c,
        k_h,
        k_c,
        t_h,
        t_c,
        cos_r,
        sin_r,
        cos_w,
        sin_w,
    })
}

/// `n` modes near the black-hole horizon and `m` near the cosmological one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdSScenario {
    pub alpha: f64,
    pub omega: f64,
    pub mass: f64,
    pub lambda: f64,
    pub n: u32,
    pub m: u32,
}

impl SdSScenario {
    pub fn new(alpha: f64, omega: f64, mass: f64, lambda: f64, n: u32, m: u32) -> Result<Self> {
        let s = Self {
            alpha,
            omega,
            mass,
            lambda,
            n,
            m,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval(self.alpha)?;
        positive("omega", self.omega)?;
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::NonPositiveMass(self.mass));
        }
        positive("lambda", self.lambda)?;
        let x = 3.0 * self.mass * self.lambda.sqrt();
        if x >= 1.0 - NARIAI_GUARD {
            return Err(Error::NariaiViolation(x));
        }
        if self.n < 1 || self.m < 1 || self.n + self.m != 4 {
            return Err(Error::InvalidScenario(format!(
                "need n, m ≥ 1 with n + m = 4, got n = {}, m = {}",
                self.n, self.m
            )));
        }
        Ok(())
    }

    pub fn thermo(&self) -> Result<SdSThermo> {
        self.validate()?;
        sds_thermo(self.mass, self.lambda, self.omega)
    }

    /// `A_i, L_i` pairs followed by `B_j, R_j` pairs.
    pub fn modes(&self) -> Vec<ModeLabel> {
        let mut modes = Vec::with_capacity(8);
        for i in 1..=self.n {
            modes.push(ModeLabel::new(ModeKind::A, i));
            modes.push(ModeLabel::new(ModeKind::L, i));
        }
        for j in 1..=self.m {
            modes.push(ModeLabel::new(ModeKind::B, j));
            modes.push(ModeLabel::new(ModeKind::R, j));
        }
        modes
    }

    pub fn kept_modes(&self) -> Vec<ModeLabel> {
        (1..=self.n)
            .map(|i| ModeLabel::new(ModeKind::A, i))
            .chain((1..=self.m).map(|j| ModeLabel::new(ModeKind::B, j)))
            .collect()
    }
}

/// The eight-mode pure state before tracing out `L` and `R`.
pub fn build_sds_mode_state(s: &SdSScenario) -> Result<ModeState> {
    let th = s.thermo()?;
    let alpha = s.alpha;
    let beta = (1.0 - alpha * alpha).max(0.0).sqrt();
    let pairs: Vec<(f64, f64)> = (0..s.n)
        .map(|_| (th.cos_r, th.sin_r))
        .chain((0..s.m).map(|_| (th.cos_w, th.sin_w)))
        .collect();
    let mut amps = vec![C64::new(0.0, 0.0); 1 << 8];
    for pattern in 0..16usize {
        let mut idx = 0usize;
        let mut amp = alpha;
        for (i, (c, sn)) in pairs.iter().enumerate() {
            let excited = (pattern >> (3 - i)) & 1 == 1;
            idx = (idx << 2) | if excited { 0b11 } else { 0b00 };
            amp *= if excited { *sn } else { *c };
        }
        amps[idx] += C64::from(amp);
    }
    amps[0b1010_1010] += C64::from(beta);
    ModeState::new(s.modes(), amps)
}

/// `ρ₄` over the `A` and `B` modes.
pub fn build_sds_state(s: &SdSScenario) -> Result<DensityOperator> {
    let psi = build_sds_mode_state(s)?;
    partial_trace(&psi, &s.kept_modes())
}

/// Closed form `max{16√2 α√(1−α²) cosⁿr cosᵐw, 4|N|}` with
/// `N = α² (cos²r − sin²r)ⁿ (cos²w − sin²w)ᵐ + 1 − α²`.
pub fn svetlichny_sds(s: &SdSScenario) -> Result<SvetlichnyResult> {
    let th = s.thermo()?;
    let coherence = alpha_weight(s.alpha) * th.cos_r.powi(s.n as i32) * th.cos_w.powi(s.m as i32);
    let a2 = s.alpha * s.alpha;
    let signed = a2
        * squeeze_contrast(s.omega, th.t_h).powi(s.n as i32)
        * squeeze_contrast(s.omega, th.t_c).powi(s.m as i32)
        + (1.0 - a2);
    let (value, branch) = xtype_value(coherence, signed);
    SvetlichnyResult::analytic(value, branch)
}

pub fn svetlichny_sds_via_state(s: &SdSScenario) -> Result<SvetlichnyResult> {
    let rho = build_sds_state(s)?;
    crate::svetlichny::svetlichny_xtype(&classify_xtype(&rho, XTYPE_TOL)?)
}

/// The coherence term alone, `16√2 α√(1−α²) cosᵖr sinᵠr`.
pub fn schwarzschild_coherence_branch(s: &SchwarzschildScenario) -> Result<f64> {
    let (c, sn) = squeeze_coeffs(s.omega, s.temperature()?)?;
    Ok(COHERENCE_FACTOR * alpha_weight(s.alpha) * c.powi(s.p as i32) * sn.powi(s.q as i32))
}
