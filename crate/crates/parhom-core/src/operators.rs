//! Symmetric matrices, Pucci extremal operators, and the uniformly elliptic
//! operator family `F(M, y, s, ω)`: Pucci plus/minus, the linear trace, and
//! scalar modulation by a random coefficient field, each optionally shifted
//! so that `F_M(N) = F(N + M)`.

use crate::environment::EnvSample;
use crate::grid::SpaceTimePoint;
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// d×d symmetric matrix for d in {1, 2}, stored as the upper triangle
/// `[m00]` or `[m00, m01, m11]`. Eigenvalues are closed-form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    d: usize,
    e: [f64; 3],
}

impl SymMatrix {
    pub fn new_1d(m00: f64) -> Self {
        SymMatrix { d: 1, e: [m00, 0.0, 0.0] }
    }

    pub fn new_2d(m00: f64, m01: f64, m11: f64) -> Self {
        SymMatrix { d: 2, e: [m00, m01, m11] }
    }

    pub fn zero(d: usize) -> Self {
        SymMatrix { d, e: [0.0; 3] }
    }

    pub fn identity(d: usize) -> Self {
        match d {
            1 => Self::new_1d(1.0),
            _ => Self::new_2d(1.0, 0.0, 1.0),
        }
    }

    pub fn diag(d: usize, a: f64, b: f64) -> Self {
        match d {
            1 => Self::new_1d(a),
            _ => Self::new_2d(a, 0.0, b),
        }
    }

    /// Builds from the upper triangle: `[m00]` (d = 1) or `[m00, m01, m11]`.
    pub fn from_upper(entries: &[f64]) -> Result<Self> {
        match entries.len() {
            1 => Ok(Self::new_1d(entries[0])),
            3 => Ok(Self::new_2d(entries[0], entries[1], entries[2])),
            n => Err(Error::param("shift", format!("expected 1 or 3 entries, got {n}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn trace(&self) -> f64 {
        match self.d {
            1 => self.e[0],
            _ => self.e[0] + self.e[2],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix { d: self.d, e: [self.e[0] * c, self.e[1] * c, self.e[2] * c] }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch(self.d, other.d));
        }
        Ok(SymMatrix {
            d: self.d,
            e: [self.e[0] + other.e[0], self.e[1] + other.e[1], self.e[2] + other.e[2]],
        })
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self.d {
            1 => self.e[0],
            _ => match (i, j) {
                (0, 0) => self.e[0],
                (1, 1) => self.e[2],
                _ => self.e[1],
            },
        }
    }

    /// Eigenvalues in increasing order (second slot unused for d = 1).
    pub fn eigenvalues(&self) -> [f64; 2] {
        match self.d {
            1 => [self.e[0], 0.0],
            _ => {
                let mean = 0.5 * (self.e[0] + self.e[2]);
                let disc = (0.5 * (self.e[0] - self.e[2])).hypot(self.e[1]);
                [mean - disc, mean + disc]
            }
        }
    }

    /// Largest eigenvalue; the matrix norm used in the ellipticity bounds.
    pub fn max_eigenvalue(&self) -> f64 {
        let ev = self.eigenvalues();
        if self.d == 1 {
            ev[0]
        } else {
            ev[1]
        }
    }

    /// Largest absolute eigenvalue.
    pub fn norm(&self) -> f64 {
        let ev = self.eigenvalues();
        if self.d == 1 {
            ev[0].abs()
        } else {
            ev[0].abs().max(ev[1].abs())
        }
    }

    /// Directional curvatures along the two orthogonal stencil frames for
    /// d = 2: `(m_xx, m_yy, m_d1, m_d2)` with the diagonals `(e1 ± e2)/√2`.
    pub(crate) fn frame_components(&self) -> (f64, f64, f64, f64) {
        let half_tr = 0.5 * (self.e[0] + self.e[2]);
        (self.e[0], self.e[2], half_tr + self.e[1], half_tr - self.e[1])
    }
}

fn check_ellipticity_constants(lambda_min: f64, lambda_max: f64) -> Result<()> {
    if !(lambda_min > 0.0 && lambda_max >= lambda_min) {
        return Err(Error::param(
            "lambda",
            format!("need 0 < lambda_min <= lambda_max, got ({lambda_min}, {lambda_max})"),
        ));
    }
    Ok(())
}

#[inline]
fn psi_plus(s: f64, lo: f64, hi: f64) -> f64 {
    hi * s.max(0.0) + lo * s.min(0.0)
}

#[inline]
fn psi_minus(s: f64, lo: f64, hi: f64) -> f64 {
    lo * s.max(0.0) + hi * s.min(0.0)
}

/// Pucci maximal operator: `Λ Σ e_i⁺ + λ Σ e_i⁻` over the eigenvalues of M.
pub fn pucci_plus(m: &SymMatrix, lambda_min: f64, lambda_max: f64) -> Result<f64> {
    check_ellipticity_constants(lambda_min, lambda_max)?;
    let ev = m.eigenvalues();
    let mut acc = psi_plus(ev[0], lambda_min, lambda_max);
    if m.dim() == 2 {
        acc += psi_plus(ev[1], lambda_min, lambda_max);
    }
    Ok(acc)
}

/// Pucci minimal operator: `λ Σ e_i⁺ + Λ Σ e_i⁻`.
pub fn pucci_minus(m: &SymMatrix, lambda_min: f64, lambda_max: f64) -> Result<f64> {
    check_ellipticity_constants(lambda_min, lambda_max)?;
    let ev = m.eigenvalues();
    let mut acc = psi_minus(ev[0], lambda_min, lambda_max);
    if m.dim() == 2 {
        acc += psi_minus(ev[1], lambda_min, lambda_max);
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    PucciPlus,
    PucciMinus,
    LinearTrace,
}

/// Uniformly elliptic operator specification. The zoo is closed so each kind
/// has a guaranteed monotone discretization; `modulated` multiplies the base
/// operator by the coefficient field `a(y, s, ω)` and `shift` realizes
/// `F_M(·) = F(· + M)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: BaseKind,
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(default)]
    pub modulated: bool,
    #[serde(default)]
    pub shift: Option<SymMatrix>,
}

impl OperatorSpec {
    pub fn new(kind: BaseKind, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        check_ellipticity_constants(lambda_min, lambda_max)?;
        Ok(OperatorSpec { kind, lambda_min, lambda_max, modulated: false, shift: None })
    }

    pub fn pucci_plus(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        Self::new(BaseKind::PucciPlus, lambda_min, lambda_max)
    }

    pub fn pucci_minus(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        Self::new(BaseKind::PucciMinus, lambda_min, lambda_max)
    }

    pub fn linear_trace() -> Self {
        OperatorSpec {
            kind: BaseKind::LinearTrace,
            lambda_min: 1.0,
            lambda_max: 1.0,
            modulated: false,
            shift: None,
        }
    }

    pub fn modulated(mut self) -> Self {
        self.modulated = true;
        self
    }

    pub fn with_shift(mut self, m: SymMatrix) -> Self {
        self.shift = Some(m);
        self
    }

    pub fn without_shift(mut self) -> Self {
        self.shift = None;
        self
    }

    pub fn shift_norm(&self) -> f64 {
        self.shift.as_ref().map_or(0.0, |m| m.norm())
    }

    /// Base operator applied to `m + shift`, without modulation.
    pub fn base_eval(&self, m: &SymMatrix) -> Result<f64> {
        let arg = match &self.shift {
            Some(s) => m.add(s)?,
            None => *m,
        };
        match self.kind {
            BaseKind::PucciPlus => pucci_plus(&arg, self.lambda_min, self.lambda_max),
            BaseKind::PucciMinus => pucci_minus(&arg, self.lambda_min, self.lambda_max),
            BaseKind::LinearTrace => Ok(arg.trace()),
        }
    }

    /// Full evaluation `a(p) * base(m + shift)`; the caller passes `p` already
    /// in environment coordinates (any `x/ε, t/ε²` scaling happens upstream).
    pub fn eval(&self, m: &SymMatrix, p: &SpaceTimePoint, env: Option<&EnvSample>) -> Result<f64> {
        let base = self.base_eval(m)?;
        if self.modulated {
            let env = env.ok_or(Error::MissingEnvironment)?;
            Ok(env.value(&p.x, p.t) * base)
        } else {
            Ok(base)
        }
    }

    /// Kind-level ellipticity constants before modulation: `(λ, Λ)` for the
    /// Pucci operators, `(1, 1)` for the trace.
    pub fn kind_constants(&self) -> (f64, f64) {
        match self.kind {
            BaseKind::LinearTrace => (1.0, 1.0),
            _ => (self.lambda_min, self.lambda_max),
        }
    }

    /// Envelope for increments under N ⪰ 0 measured against the largest
    /// eigenvalue of N: `λ_eff ‖N‖ ≤ F(M+N) - F(M) ≤ d·Λ_eff ‖N‖`, with the
    /// modulation range folded in.
    pub fn ellipticity_envelope(&self, d: usize, a_lo: f64, a_hi: f64) -> (f64, f64) {
        let (lo, hi) = self.kind_constants();
        let (m_lo, m_hi) = if self.modulated { (a_lo, a_hi) } else { (1.0, 1.0) };
        (lo * m_lo, hi * m_hi * d as f64)
    }

    /// Worst per-direction coefficient entering the CFL bound:
    /// kind Λ times the top of the modulation range.
    pub fn cfl_coefficient(&self, a_hi: f64) -> f64 {
        let (_, hi) = self.kind_constants();
        if self.modulated {
            hi * a_hi
        } else {
            hi
        }
    }
}

/// Report of the randomized uniform-ellipticity check.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Draws random (M, N ⪰ 0, p) triples and verifies
/// `λ_eff ‖N‖ ≤ F(M+N, p) - F(M, p) ≤ d·Λ_eff ‖N‖` with ‖N‖ the largest
/// eigenvalue of N. Modulated specs need an environment sample.
pub fn check_uniform_ellipticity(
    spec: &OperatorSpec,
    env: Option<&EnvSample>,
    d: usize,
    samples: usize,
    seed: u64,
) -> Result<EllipticityReport> {
    let (a_lo, a_hi) = match (spec.modulated, env) {
        (true, Some(e)) => e.spec().range(),
        (true, None) => return Err(Error::MissingEnvironment),
        (false, _) => (1.0, 1.0),
    };
    let (lo_bound, hi_bound) = spec.ellipticity_envelope(d, a_lo, a_hi);
    let f = |m: &SymMatrix, p: &SpaceTimePoint| spec.eval(m, p, env);
    let (min_ratio, max_ratio) = increment_ratio_range(&f, d, samples, seed)?;
    let tol = 1e-9 * (1.0 + hi_bound);
    Ok(EllipticityReport {
        min_ratio,
        max_ratio,
        lower_bound: lo_bound,
        upper_bound: hi_bound,
        samples,
        pass: min_ratio >= lo_bound - tol && max_ratio <= hi_bound + tol,
    })
}

/// Extreme increment ratios `(F(M+N, p) - F(M, p)) / ‖N‖` over random
/// samples; shared by the spec-backed check and negative-control tests.
pub fn increment_ratio_range(
    f: &dyn Fn(&SymMatrix, &SpaceTimePoint) -> Result<f64>,
    d: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let mut rng = stream(derive_seed(seed, "ellipticity", 0));
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    for _ in 0..samples {
        let m = random_sym(&mut rng, d, 2.0);
        let n = random_psd(&mut rng, d, 2.0);
        let norm = n.max_eigenvalue();
        if norm < 1e-12 {
            continue;
        }
        let p = SpaceTimePoint::new(
            (0..d).map(|_| rng.random_range(-10.0..10.0)).collect(),
            rng.random_range(-10.0..10.0),
        );
        let ratio = (f(&m.add(&n)?, &p)? - f(&m, &p)?) / norm;
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
    }
    Ok((min_ratio, max_ratio))
}

pub(crate) fn random_sym(rng: &mut impl Rng, d: usize, scale: f64) -> SymMatrix {
    match d {
        1 => SymMatrix::new_1d(rng.random_range(-scale..scale)),
        _ => SymMatrix::new_2d(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        ),
    }
}

pub(crate) fn random_psd(rng: &mut impl Rng, d: usize, scale: f64) -> SymMatrix {
    let s = random_sym(rng, d, scale);
    let ev = s.eigenvalues();
    let min_ev = if d == 1 { ev[0] } else { ev[0].min(ev[1]) };
    let bump = (-min_ev).max(0.0);
    let id = SymMatrix::identity(d).scaled(bump);
    s.add(&id).expect("same dimension")
}
