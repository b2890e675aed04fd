//! The four-partite Svetlichny operator and its maximal expectation.
//!
//! With `X = x·σ` for each party's two dichotomic observables, the operator is
//!
//! ```text
//! S = [A⊗B − A′⊗B′]⊗[(C−C′)⊗D − (C+C′)⊗D′]
//!   − [A′⊗B + A⊗B′]⊗[(C+C′)⊗D + (C−C′)⊗D′]
//! ```
//!
//! Writing `c ± c′` as `2cos θ e₀` and `2sin θ e₁` with `e₀ ⊥ e₁`, its
//! expectation collapses to `2cos θ⟨e₀,λ₀⟩ + 2sin θ⟨e₁,λ₁⟩`, where the
//! [`LambdaPair`] depends only on the other six directions. The maximum over
//! Charlie's settings is then closed-form ([`inner_max`]).

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{pauli_entry, CorrelationTensor, DensityOperator, XTypeState, DIM};
use crate::{SVETLICHNY_BOUND, S_MAX};

/// Unit-norm tolerance for measurement directions.
pub const UNIT_TOL: f64 = 1e-12;

/// Values this far above `8√2` are clamped before computing the measure.
pub const OVERSHOOT_TOL: f64 = 1e-6;

/// Coefficient of `|ρ_pair|` in the X-type closed form.
pub const COHERENCE_FACTOR: f64 = 16.0 * std::f64::consts::SQRT_2;

/// Coefficient of `|⟨σ3⊗4⟩|` in the X-type closed form.
///
/// When only `t_3333` survives, `λ₀ ∥ λ₁` and the inner maximum is
/// `2·max(‖λ₀‖, ‖λ₁‖) ≤ 4|N|`; the `4√2|N|` upper bound is never attained.
pub const DIAGONAL_FACTOR: f64 = 4.0;

/// Eight unit directions `a, a′, b, b′, c, c′, d, d′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    pub a: Vector3<f64>,
    pub a_prime: Vector3<f64>,
    pub b: Vector3<f64>,
    pub b_prime: Vector3<f64>,
    pub c: Vector3<f64>,
    pub c_prime: Vector3<f64>,
    pub d: Vector3<f64>,
    pub d_prime: Vector3<f64>,
}

impl MeasurementSettings {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Vector3<f64>,
        a_prime: Vector3<f64>,
        b: Vector3<f64>,
        b_prime: Vector3<f64>,
        c: Vector3<f64>,
        c_prime: Vector3<f64>,
        d: Vector3<f64>,
        d_prime: Vector3<f64>,
    ) -> Result<Self> {
        let s = Self {
            a,
            a_prime,
            b,
            b_prime,
            c,
            c_prime,
            d,
            d_prime,
        };
        s.check_units()?;
        Ok(s)
    }

    /// Every direction set to `v`.
    pub fn uniform(v: Vector3<f64>) -> Result<Self> {
        Self::new(v, v, v, v, v, v, v, v)
    }

    fn named(&self) -> [(&'static str, &Vector3<f64>); 8] {
        [
            ("a", &self.a),
            ("a'", &self.a_prime),
            ("b", &self.b),
            ("b'", &self.b_prime),
            ("c", &self.c),
            ("c'", &self.c_prime),
            ("d", &self.d),
            ("d'", &self.d_prime),
        ]
    }

    pub fn check_units(&self) -> Result<()> {
        for (name, v) in self.named() {
            check_unit(name, v)?;
        }
        Ok(())
    }
}

fn check_unit(name: &'static str, v: &Vector3<f64>) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOL || !norm.is_finite() {
        return Err(Error::NonUnitVector { name, norm });
    }
    Ok(())
}

/// `x·σ` as a 2×2 matrix.
fn observable(v: &Vector3<f64>) -> DMatrix<C64> {
    let m: Matrix2<C64> = Matrix2::from_fn(|r, c| {
        (1..=3)
            .map(|k| pauli_entry(k, r, c) * v[k - 1])
            .sum::<C64>()
    });
    DMatrix::from_iterator(2, 2, m.iter().copied())
}

/// The 16×16 Svetlichny operator for the given settings.
pub fn svetlichny_operator(s: &MeasurementSettings) -> Result<DMatrix<C64>> {
    s.check_units()?;
    let [a, ap, b, bp, c, cp, d, dp] = [
        &s.a,
        &s.a_prime,
        &s.b,
        &s.b_prime,
        &s.c,
        &s.c_prime,
        &s.d,
        &s.d_prime,
    ]
    .map(observable);
    let c_minus = &c - &cp;
    let c_plus = &c + &cp;
    let ab_minus = a.kronecker(&b) - ap.kronecker(&bp);
    let ab_plus = ap.kronecker(&b) + a.kronecker(&bp);
    let cd_first = c_minus.kronecker(&d) - c_plus.kronecker(&dp);
    let cd_second = c_plus.kronecker(&d) + c_minus.kronecker(&dp);
    Ok(ab_minus.kronecker(&cd_first) - ab_plus.kronecker(&cd_second))
}

/// `tr(Sρ)` by direct matrix evaluation.
pub fn expectation(rho: &DensityOperator, s: &MeasurementSettings) -> Result<f64> {
    let op = svetlichny_operator(s)?;
    let m = rho.matrix();
    let mut tr = C64::new(0.0, 0.0);
    for r in 0..DIM {
        for c in 0..DIM {
            tr += op[(r, c)] * m[(c, r)];
        }
    }
    debug_assert!(tr.im.abs() <= 1e-10, "imaginary residue {}", tr.im);
    Ok(tr.re)
}

/// The pair `(λ₀, λ₁)` through which the expectation factorizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda0: Vector3<f64>,
    pub lambda1: Vector3<f64>,
}

impl LambdaPair {
    pub fn new(lambda0: Vector3<f64>, lambda1: Vector3<f64>) -> Self {
        Self { lambda0, lambda1 }
    }
}

/// `T_xy = Σ_ij x_i y_j T_ij`.
#[inline]
pub(crate) fn contract(blocks: &[[Matrix3<f64>; 3]; 3], x: &Vector3<f64>, y: &Vector3<f64>) -> Matrix3<f64> {
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let w = x[i] * y[j];
            if w != 0.0 {
                out += blocks[i][j] * w;
            }
        }
    }
    out
}

/// Unchecked λ computation on pre-extracted blocks; the oracle's hot path.
#[inline]
pub(crate) fn lambdas_from_blocks(
    blocks: &[[Matrix3<f64>; 3]; 3],
    dirs: &[Vector3<f64>; 6],
) -> LambdaPair {
    let [a, ap, b, bp, d, dp] = dirs;
    let t_ab = contract(blocks, a, b);
    let t_apbp = contract(blocks, ap, bp);
    let t_apb = contract(blocks, ap, b);
    let t_abp = contract(blocks, a, bp);
    LambdaPair {
        lambda0: t_apbp * dp - t_ab * dp - t_apb * d - t_abp * d,
        lambda1: t_ab * d - t_apbp * d - t_apb * dp - t_abp * dp,
    }
}

/// `λ₀ = T_{a′b′}d′ − T_{ab}d′ − T_{a′b}d − T_{ab′}d`,
/// `λ₁ = T_{ab}d − T_{a′b′}d − T_{a′b}d′ − T_{ab′}d′`.
pub fn lambdas(
    t: &CorrelationTensor,
    a: &Vector3<f64>,
    a_prime: &Vector3<f64>,
    b: &Vector3<f64>,
    b_prime: &Vector3<f64>,
    d: &Vector3<f64>,
    d_prime: &Vector3<f64>,
) -> Result<LambdaPair> {
    for (name, v) in [
        ("a", a),
        ("a'", a_prime),
        ("b", b),
        ("b'", b_prime),
        ("d", d),
        ("d'", d_prime),
    ] {
        check_unit(name, v)?;
    }
    Ok(lambdas_from_blocks(
        &t.blocks(),
        &[*a, *a_prime, *b, *b_prime, *d, *d_prime],
    ))
}

/// `max 2cos θ⟨e₀,λ₀⟩ + 2sin θ⟨e₁,λ₁⟩` over orthonormal `e₀, e₁` and `θ`:
/// `2·sqrt(½[L₀ + L₁ + sqrt((L₀+L₁)² − 4⟨λ₀,λ₁⟩²)])`.
pub fn inner_max(p: &LambdaPair) -> f64 {
    let l0 = p.lambda0.norm_squared();
    let l1 = p.lambda1.norm_squared();
    // (L₀+L₁)² − 4⟨λ₀,λ₁⟩², written to avoid cancellation when λ₀ ∥ λ₁
    let disc = (l0 - l1).powi(2) + 4.0 * p.lambda0.cross(&p.lambda1).norm_squared();
    2.0 * (0.5 * (l0 + l1 + disc.sqrt())).sqrt()
}

/// `2·sqrt(‖λ₀‖² + ‖λ₁‖²)`, never below [`inner_max`].
pub fn upper_bound(p: &LambdaPair) -> f64 {
    2.0 * (p.lambda0.norm_squared() + p.lambda1.norm_squared()).sqrt()
}

/// Maximizer of the inner problem, from which Charlie's settings follow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptimum {
    pub value: f64,
    pub e0: Vector3<f64>,
    pub e1: Vector3<f64>,
    pub angle: f64,
}

impl InnerOptimum {
    /// `(c, c′) = (cos θ e₀ + sin θ e₁, cos θ e₀ − sin θ e₁)`.
    pub fn charlie(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (s, c) = self.angle.sin_cos();
        (self.e0 * c + self.e1 * s, self.e0 * c - self.e1 * s)
    }
}

fn any_orthogonal(u: &Vector3<f64>) -> Vector3<f64> {
    // cross with the axis least aligned with u
    let axis = if u.x.abs() <= u.y.abs() && u.x.abs() <= u.z.abs() {
        Vector3::x()
    } else if u.y.abs() <= u.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    u.cross(&axis).normalize()
}

/// Solves the inner problem explicitly.
///
/// Only the plane spanned by `λ₀, λ₁` matters. With an orthonormal basis
/// `(u, v)` of it and `e₀ = cos φ u + sin φ v`, `e₁ = −sin φ u + cos φ v`,
/// `⟨e₀,λ₀⟩² + ⟨e₁,λ₁⟩² = A + B cos 2φ + C sin 2φ`.
pub fn inner_argmax(p: &LambdaPair) -> InnerOptimum {
    const EPS: f64 = 1e-300;
    let (l0, l1) = (&p.lambda0, &p.lambda1);
    let u = if l0.norm_squared() > EPS {
        l0.normalize()
    } else if l1.norm_squared() > EPS {
        l1.normalize()
    } else {
        Vector3::x()
    };
    let w = l1 - u * u.dot(l1);
    let v = if w.norm() > 1e-12 * (1.0 + l1.norm()) {
        w.normalize()
    } else {
        any_orthogonal(&u)
    };
    let (p0, q0) = (l0.dot(&u), l0.dot(&v));
    let (p1, q1) = (l1.dot(&u), l1.dot(&v));
    let big_b = 0.5 * (p0 * p0 - q0 * q0 + q1 * q1 - p1 * p1);
    let big_c = p0 * q0 - p1 * q1;
    let phi = 0.5 * big_c.atan2(big_b);
    let (sp, cp) = phi.sin_cos();
    let e0 = u * cp + v * sp;
    let e1 = -u * sp + v * cp;
    let x0 = e0.dot(l0);
    let x1 = e1.dot(l1);
    InnerOptimum {
        value: 2.0 * x0.hypot(x1),
        e0,
        e1,
        angle: x1.atan2(x0),
    }
}

/// Which term of the closed form won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Coherence,
    Diagonal,
    Numeric,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Coherence => "coherence",
            Branch::Diagonal => "diagonal",
            Branch::Numeric => "numeric",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherence" => Ok(Branch::Coherence),
            "diagonal" => Ok(Branch::Diagonal),
            "numeric" => Ok(Branch::Numeric),
            _ => Err(Error::Parse(format!("unknown branch `{s}`"))),
        }
    }
}

/// `S(ρ)`, `N(ρ)` and how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvetlichnyResult {
    pub value: f64,
    pub measure: f64,
    pub branch: Branch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<MeasurementSettings>,
}

impl SvetlichnyResult {
    pub fn analytic(value: f64, branch: Branch) -> Result<Self> {
        Ok(Self {
            value,
            measure: nonlocality_measure(value)?,
            branch,
            certificate: None,
        })
    }

    pub fn numeric(value: f64, settings: MeasurementSettings) -> Result<Self> {
        Ok(Self {
            value,
            measure: nonlocality_measure(value)?,
            branch: Branch::Numeric,
            certificate: Some(settings),
        })
    }
}

/// Picks the larger of the coherence and diagonal terms.
pub fn xtype_value(pair_modulus: f64, signed_sum: f64) -> (f64, Branch) {
    let coherence = COHERENCE_FACTOR * pair_modulus;
    let diagonal = DIAGONAL_FACTOR * signed_sum.abs();
    if coherence > diagonal {
        (coherence, Branch::Coherence)
    } else {
        (diagonal, Branch::Diagonal)
    }
}

/// Exact `S(ρ) = max{16√2|ρ_pair|, 4|N|}` for an X-type state.
pub fn svetlichny_xtype(x: &XTypeState) -> Result<SvetlichnyResult> {
    let (value, branch) = xtype_value(x.pair_value().norm(), x.signed_diagonal_sum());
    SvetlichnyResult::analytic(value, branch)
}

/// `N(ρ) = max(0, (S − 8)/(8√2 − 8))`, clamped to 1 for tiny overshoot.
pub fn nonlocality_measure(value: f64) -> Result<f64> {
    if value > S_MAX + OVERSHOOT_TOL || value.is_nan() {
        return Err(Error::OutOfRange(value));
    }
    let v = value.min(S_MAX);
    Ok(((v - SVETLICHNY_BOUND) / (S_MAX - SVETLICHNY_BOUND)).max(0.0))
}
