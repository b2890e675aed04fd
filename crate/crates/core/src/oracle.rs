//! Numerical maximization of `tr(Sρ)` over measurement settings.
//!
//! Charlie's pair is eliminated in closed form ([`inner_max`]), so the search
//! runs over the twelve polar/azimuthal angles of `a, a′, b, b′, d, d′`:
//!
//! ```text
//! a = (sin α₁ sin α₂, sin α₁ cos α₂, cos α₁),   a′ = same with β₁, β₂
//! b from α₃, α₄ / β₃, β₄,   d from α₅, α₆ / β₅, β₆
//! ```
//!
//! Each restart is a Nelder–Mead ascent from a seeded random point; the best
//! restart wins, ties going to the lowest index.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::qstate::{pauli_tensor, CorrelationTensor, DensityOperator};
use crate::svetlichny::{inner_argmax, inner_max, lambdas_from_blocks, MeasurementSettings};

const DIM: usize = 12;

/// Angles `α₁..α₆`, `β₁..β₆`, each wrapped into `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleVector {
    pub alpha: [f64; 6],
    pub beta: [f64; 6],
}

impl AngleVector {
    pub fn new(alpha: [f64; 6], beta: [f64; 6]) -> Result<Self> {
        if alpha.iter().chain(&beta).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("angles must be finite".into()));
        }
        Ok(Self {
            alpha: alpha.map(wrap),
            beta: beta.map(wrap),
        })
    }

    /// `[α₁..α₆, β₁..β₆]`.
    pub fn from_flat(x: &[f64; DIM]) -> Result<Self> {
        Self::new(
            std::array::from_fn(|i| x[i]),
            std::array::from_fn(|i| x[6 + i]),
        )
    }

    pub fn to_flat(&self) -> [f64; DIM] {
        std::array::from_fn(|i| if i < 6 { self.alpha[i] } else { self.beta[i - 6] })
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            alpha: std::array::from_fn(|_| rng.gen::<f64>() * TAU),
            beta: std::array::from_fn(|_| rng.gen::<f64>() * TAU),
        }
    }

    /// `[a, a′, b, b′, d, d′]`.
    pub fn directions(&self) -> [Vector3<f64>; 6] {
        directions_flat(&self.to_flat())
    }
}

fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn polar(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * sp, st * cp, ct)
}

fn directions_flat(x: &[f64; DIM]) -> [Vector3<f64>; 6] {
    [
        polar(x[0], x[1]),
        polar(x[6], x[7]),
        polar(x[2], x[3]),
        polar(x[8], x[9]),
        polar(x[4], x[5]),
        polar(x[10], x[11]),
    ]
}

fn objective_flat(blocks: &[[Matrix3<f64>; 3]; 3], x: &[f64; DIM]) -> f64 {
    inner_max(&lambdas_from_blocks(blocks, &directions_flat(x)))
}

/// Best expectation with `a, a′, b, b′, d, d′` fixed by `v` and `c, c′` free.
pub fn angle_objective(t: &CorrelationTensor, v: &AngleVector) -> f64 {
    objective_flat(&t.blocks(), &v.to_flat())
}

/// Full settings for `v`, with Charlie's pair set to the inner maximizer.
pub fn settings_from_angles(t: &CorrelationTensor, v: &AngleVector) -> MeasurementSettings {
    settings_from_blocks(&t.blocks(), &v.to_flat())
}

fn settings_from_blocks(blocks: &[[Matrix3<f64>; 3]; 3], x: &[f64; DIM]) -> MeasurementSettings {
    let dirs = directions_flat(x);
    let (c, c_prime) = inner_argmax(&lambdas_from_blocks(blocks, &dirs)).charlie();
    let [a, a_prime, b, b_prime, d, d_prime] = dirs;
    MeasurementSettings {
        a,
        a_prime,
        b,
        b_prime,
        c,
        c_prime,
        d,
        d_prime,
    }
}

/// `(δ, δ′, δ + 4δ′ ≤ 32)` with `Xᵢ = sin²αᵢ + sin²βᵢ`, `Pᵢ = sin αᵢ sin βᵢ`:
/// `δ = X₁X₃X₅ + 4P₁P₃X₅ + 4P₃P₅X₁ + 4P₁P₅X₃`, `δ′ = (2−X₁)(2−X₃)(2−X₅)`.
pub fn delta_inequality_check(v: &AngleVector) -> (f64, f64, bool) {
    let x = |i: usize| v.alpha[i].sin().powi(2) + v.beta[i].sin().powi(2);
    let p = |i: usize| v.alpha[i].sin() * v.beta[i].sin();
    let (x1, x3, x5) = (x(0), x(2), x(4));
    let (p1, p3, p5) = (p(0), p(2), p(4));
    let delta = x1 * x3 * x5 + 4.0 * p1 * p3 * x5 + 4.0 * p3 * p5 * x1 + 4.0 * p1 * p5 * x3;
    let delta_prime = (2.0 - x1) * (2.0 - x3) * (2.0 - x5);
    (delta, delta_prime, delta + 4.0 * delta_prime <= 32.0 + 1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub restarts: usize,
    /// Per-restart budget of simplex iterations.
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub value_tolerance: f64,
    pub rng_seed: u64,
    pub execution: Execution,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            restarts: 64,
            max_iterations: 4000,
            step_tolerance: 1e-9,
            value_tolerance: 1e-12,
            rng_seed: 42,
            execution: Execution::Parallel,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidConfig("restarts and max_iterations must be at least 1".into()));
        }
        if !(self.step_tolerance > 0.0 && self.value_tolerance > 0.0) {
            return Err(Error::InvalidConfig("oracle tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub value: f64,
    pub settings: MeasurementSettings,
    pub angles: AngleVector,
    pub iterations_used: usize,
    /// False if the winning restart ran out of iterations.
    pub converged: bool,
}

/// Counter-based seed for restart `index`.
pub fn restart_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct LocalResult {
    x: [f64; DIM],
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder–Mead ascent with dimension-adapted coefficients. Restarts the
/// simplex around the incumbent until a restart no longer improves it.
fn nelder_mead(f: impl Fn(&[f64; DIM]) -> f64, start: [f64; DIM], cfg: &OracleConfig) -> LocalResult {
    let n = DIM as f64;
    let (refl, expand, contract, shrink) = (1.0, 1.0 + 2.0 / n, 0.75 - 0.5 / n, 1.0 - 1.0 / n);
    let mut best_x = start;
    let mut best_v = f(&start);
    let mut iterations = 0usize;
    let mut step = 0.6;
    let mut converged = false;

    for _ in 0..8 {
        let mut simplex: Vec<([f64; DIM], f64)> = (0..=DIM)
            .map(|i| {
                let mut x = best_x;
                if i > 0 {
                    x[i - 1] += step;
                }
                let v = f(&x);
                (x, v)
            })
            .collect();
        converged = false;
        while iterations < cfg.max_iterations {
            iterations += 1;
            simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
            let (hi, lo) = (simplex[0].1, simplex[DIM].1);
            let size = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if hi - lo <= cfg.value_tolerance && size <= cfg.step_tolerance {
                converged = true;
                break;
            }
            let mut centroid = [0.0; DIM];
            for (x, _) in &simplex[..DIM] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n;
                }
            }
            let worst = simplex[DIM].0;
            let along = |t: f64| -> [f64; DIM] { std::array::from_fn(|i| centroid[i] + t * (worst[i] - centroid[i])) };
            let xr = along(-refl);
            let vr = f(&xr);
            if vr > simplex[0].1 {
                let xe = along(-expand);
                let ve = f(&xe);
                simplex[DIM] = if ve > vr { (xe, ve) } else { (xr, vr) };
            } else if vr > simplex[DIM - 1].1 {
                simplex[DIM] = (xr, vr);
            } else {
                let (xc, vc) = if vr > lo {
                    let xc = along(-contract);
                    (xc, f(&xc))
                } else {
                    let xc = along(contract);
                    (xc, f(&xc))
                };
                if vc > vr.max(lo) {
                    simplex[DIM] = (xc, vc);
                } else {
                    let top = simplex[0].0;
                    for (x, v) in simplex.iter_mut().skip(1) {
                        *x = std::array::from_fn(|i| top[i] + shrink * (x[i] - top[i]));
                        *v = f(x);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let improved = simplex[0].1 - best_v;
        if simplex[0].1 > best_v {
            best_x = simplex[0].0;
            best_v = simplex[0].1;
        }
        if !converged || improved <= cfg.value_tolerance.max(1e-14 * best_v.abs()) {
            break;
        }
        step = 0.1;
    }
    LocalResult {
        x: best_x,
        value: best_v,
        iterations,
        converged,
    }
}

/// Multistart maximization over the tensor's correlation blocks.
pub fn maximize_tensor(t: &CorrelationTensor, cfg: &OracleConfig) -> Result<OracleOutcome> {
    cfg.validate()?;
    let blocks = t.blocks();
    let f = |x: &[f64; DIM]| objective_flat(&blocks, x);
    let runs = cfg.execution.map_indexed(cfg.restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.rng_seed, r as u64));
        let start = AngleVector::random(&mut rng).to_flat();
        nelder_mead(f, start, cfg)
    });
    let iterations_used = runs.iter().map(|r| r.iterations).sum();
    let best = runs
        .into_iter()
        .reduce(|acc, r| if r.value > acc.value { r } else { acc })
        .expect("at least one restart");
    let angles = AngleVector::from_flat(&best.x)?;
    Ok(OracleOutcome {
        value: best.value,
        settings: settings_from_blocks(&blocks, &angles.to_flat()),
        angles,
        iterations_used,
        converged: best.converged,
    })
}

/// Multistart lower bound on `S(ρ)` with a replayable certificate.
pub fn maximize(rho: &DensityOperator, cfg: &OracleConfig) -> Result<OracleOutcome> {
    let report = rho.validate();
    if !report.passed {
        return Err(Error::InvalidState(format!("{report:?}")));
    }
    maximize_tensor(&pauli_tensor(rho), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{classify_xtype, XTypeState, XTYPE_TOL};
    use crate::svetlichny::{expectation, svetlichny_xtype};
    use crate::S_MAX;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn ghz() -> DensityOperator {
        DensityOperator::ghz(FRAC_1_SQRT_2)
    }

    fn quick() -> OracleConfig {
        OracleConfig {
            restarts: 16,
            ..OracleConfig::default()
        }
    }

    #[test]
    fn zero_tensor_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(angle_objective(&CorrelationTensor::zero(), &AngleVector::random(&mut rng)), 0.0);
        }
    }

    #[test]
    fn ghz_equatorial_angles() {
        let h = FRAC_PI_2;
        // α₂ − β₂ = α₄ − β₄ = α₆ − β₆ = π/2
        let v = AngleVector::new([h, h, h, h, h, h], [h, 0.0, h, 0.0, h, 0.0]).unwrap();
        let value = angle_objective(&pauli_tensor(&ghz()), &v);
        assert!((value - S_MAX).abs() < 1e-12, "{value}");
    }

    /// `‖λ₀‖² + ‖λ₁‖²` expanded in the angles for a real (1,16) coherence;
    /// the two `α₆ − β₆` terms enter with a minus sign.
    #[test]
    fn angle_expansion_of_lambda_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let mut x = XTypeState::random(&mut rng);
            while x.pair_index() != 1 {
                x = XTypeState::random(&mut rng);
            }
            let x = x.with_pair_value(num_complex::Complex64::from(x.pair_value().norm())).unwrap();
            let (r, n) = (x.pair_value().re, x.signed_diagonal_sum());
            let v = AngleVector::random(&mut rng);
            let (al, be) = (v.alpha, v.beta);
            let s = f64::sin;
            let xs = |i: usize| s(al[i]).powi(2) + s(be[i]).powi(2);
            let ps = |i: usize| s(al[i]) * s(be[i]);
            let expanded = 4.0
                * r
                * r
                * (xs(0) * xs(2) * xs(4)
                    + 4.0 * ps(0) * ps(2) * s(al[1] - be[1]) * s(al[3] - be[3]) * xs(4)
                    - 4.0 * ps(2) * ps(4) * s(be[3] - al[3]) * s(al[5] - be[5]) * xs(0)
                    - 4.0 * ps(0) * ps(4) * s(be[1] - al[1]) * s(al[5] - be[5]) * xs(2))
                + n * n * (2.0 - xs(0)) * (2.0 - xs(2)) * (2.0 - xs(4));
            let t = pauli_tensor(&x.to_density());
            let p = lambdas_from_blocks(&t.blocks(), &v.directions());
            let direct = p.lambda0.norm_squared() + p.lambda1.norm_squared();
            assert!((direct - expanded).abs() < 1e-12, "{direct} vs {expanded}");
        }
    }

    #[test]
    fn z_aligned_angles_on_product_state() {
        let v = AngleVector::new([0.0; 6], [0.0; 6]).unwrap();
        let value = angle_objective(&pauli_tensor(&DensityOperator::basis_state(0)), &v);
        assert!((value - 4.0).abs() < 1e-12, "{value}");
    }

    #[test]
    fn angles_wrap() {
        let v = AngleVector::new([-0.5, 7.0, 0.0, 0.0, 0.0, 0.0], [0.0; 6]).unwrap();
        assert!((v.alpha[0] - (TAU - 0.5)).abs() < 1e-15);
        assert!((v.alpha[1] - (7.0 - TAU)).abs() < 1e-15);
        assert!(AngleVector::new([f64::NAN; 6], [0.0; 6]).is_err());
    }

    #[test]
    fn delta_boundaries() {
        let h = FRAC_PI_2;
        let (d, dp, ok) = delta_inequality_check(&AngleVector::new([h; 6], [h; 6]).unwrap());
        assert!((d - 32.0).abs() < 1e-12 && dp.abs() < 1e-12 && ok);
        let (d, dp, ok) = delta_inequality_check(&AngleVector::new([0.0; 6], [0.0; 6]).unwrap());
        assert!(d.abs() < 1e-12 && (dp - 8.0).abs() < 1e-12 && ok);
    }

    #[test]
    fn delta_inequality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20_000 {
            assert!(delta_inequality_check(&AngleVector::random(&mut rng)).2);
        }
    }

    #[test]
    fn ghz_maximum_and_certificate() {
        let rho = ghz();
        let out = maximize(&rho, &quick()).unwrap();
        assert!((out.value - S_MAX).abs() < 1e-4, "{}", out.value);
        assert!(out.value <= S_MAX + 1e-9);
        let replay = expectation(&rho, &out.settings).unwrap();
        assert!((replay - out.value).abs() < 1e-9);
    }

    #[test]
    fn maximally_mixed_gives_zero() {
        let out = maximize(&DensityOperator::maximally_mixed(), &quick()).unwrap();
        assert!(out.value.abs() < 1e-9);
    }

    #[test]
    fn deterministic_across_execution_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = XTypeState::random(&mut rng).to_density();
        let par = maximize(&rho, &quick()).unwrap();
        let again = maximize(&rho, &quick()).unwrap();
        let seq = maximize(
            &rho,
            &OracleConfig {
                execution: Execution::Sequential,
                ..quick()
            },
        )
        .unwrap();
        assert_eq!(par, again);
        assert_eq!(par, seq);
    }

    #[test]
    fn agrees_with_closed_form_on_random_xtype() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let x = XTypeState::random(&mut rng);
            let rho = x.to_density();
            let analytic = svetlichny_xtype(&classify_xtype(&rho, XTYPE_TOL).unwrap()).unwrap().value;
            let out = maximize(&rho, &quick()).unwrap();
            assert!(out.value <= analytic + 1e-6, "{} > {analytic}", out.value);
            assert!((out.value - analytic).abs() < 1e-3, "{} vs {analytic}", out.value);
            let e = expectation(&rho, &out.settings).unwrap();
            assert!((e - out.value).abs() < 1e-9, "{e} vs {} analytic {analytic} {:?}", out.value, out.settings);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = OracleConfig {
            restarts: 0,
            ..OracleConfig::default()
        };
        assert!(matches!(maximize(&ghz(), &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn tiny_budget_reports_not_converged() {
        let cfg = OracleConfig {
            restarts: 2,
            max_iterations: 5,
            ..OracleConfig::default()
        };
        let out = maximize(&ghz(), &cfg).unwrap();
        assert!(!out.converged);
        assert!(out.iterations_used <= 10);
    }
}
