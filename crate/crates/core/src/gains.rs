//! Edge gain functions `f(s)` of the consensus protocol, with their exact
//! derivatives, antiderivatives, and grid checks of the admissibility
//! conditions.
//!
//! Condition (i) asks for `f(s) > 0`, and condition (iii) asks for
//!
//! ```text
//! (n - 2 + s) s f(s) - (2 - s) s² f'(s) > 0    for all s in (0, 2].
//! ```
//!
//! Condition (ii) (`f_ij = f_ji`) holds structurally because gains are keyed
//! by unordered edges in [`crate::Graph`].

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Left end of the condition-(iii) grid; the open end at zero is approached
/// geometrically down to this value.
pub const GRID_DELTA: f64 = 1e-8;

/// Grid size used by the command line and config checks.
pub const DEFAULT_GRID_POINTS: usize = 4000;

#[derive(Clone)]
pub enum GainFunction {
    /// `f(s) = k`.
    Constant(f64),
    /// `f(s) = s^k`.
    Power(u32),
    Custom(CustomGain),
}

/// User-supplied gain with an explicit derivative, checked against central
/// finite differences when constructed.
#[derive(Clone)]
pub struct CustomGain {
    name: String,
    f: ScalarFn,
    f_prime: ScalarFn,
}

impl CustomGain {
    pub fn new<F, D>(name: impl Into<String>, f: F, f_prime: D) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6a1e);
        let h = 1e-6;
        for _ in 0..100 {
            let s: f64 = rng.random_range(h..2.0 - h);
            let fd = (f(s + h) - f(s - h)) / (2.0 * h);
            let d = f_prime(s);
            if !d.is_finite() || (d - fd).abs() > 1e-5 * fd.abs().max(1.0) {
                return Err(Error::InvalidGain(format!(
                    "{name}: f'({s}) = {d} disagrees with finite difference {fd}"
                )));
            }
        }
        Ok(Self {
            name,
            f: Arc::new(f),
            f_prime: Arc::new(f_prime),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for GainFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainFunction::Constant(k) => write!(f, "Constant({k})"),
            GainFunction::Power(k) => write!(f, "Power({k})"),
            GainFunction::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl fmt::Display for GainFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainFunction::Constant(k) => write!(f, "constant:{k}"),
            GainFunction::Power(k) => write!(f, "power:{k}"),
            GainFunction::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl GainFunction {
    /// `(f(s), f'(s))` for `s` in `[0, 2]`.
    pub fn evaluate(&self, s: f64) -> Result<(f64, f64)> {
        if !(0.0..=2.0).contains(&s) {
            return Err(Error::GainDomain(s));
        }
        Ok(self.value(s))
    }

    /// `(f(s), f'(s))` without the domain check. Used on SO(3), where
    /// `s` ranges over `[0, 6]`, and inside integrators where rounding pushes
    /// `s` marginally outside `[0, 2]`.
    #[inline]
    pub fn value(&self, s: f64) -> (f64, f64) {
        match self {
            GainFunction::Constant(k) => (*k, 0.0),
            GainFunction::Power(0) => (1.0, 0.0),
            GainFunction::Power(1) => (s, 1.0),
            GainFunction::Power(k) => {
                let k = *k as i32;
                let p = s.powi(k - 1);
                (p * s, k as f64 * p)
            }
            GainFunction::Custom(c) => ((c.f)(s), (c.f_prime)(s)),
        }
    }

    /// `∫_0^s f(r) dr`; closed form for the built-in families, adaptive
    /// Simpson quadrature otherwise.
    pub fn integral(&self, s: f64) -> f64 {
        match self {
            GainFunction::Constant(k) => k * s,
            GainFunction::Power(k) => s.powi(*k as i32 + 1) / (*k as f64 + 1.0),
            GainFunction::Custom(c) => adaptive_simpson(&*c.f, 0.0, s, 1e-12),
        }
    }

    /// Largest `|f|` on `[0, hi]`, used to scale default step sizes.
    pub fn max_abs_on(&self, hi: f64) -> f64 {
        match self {
            GainFunction::Constant(k) => k.abs(),
            GainFunction::Power(k) => hi.powi(*k as i32),
            GainFunction::Custom(_) => (0..=1000)
                .map(|i| self.value(hi * i as f64 / 1000.0).0.abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Left-hand side of condition (iii) at one point.
#[inline]
pub fn condition_iii_value(f: f64, f_prime: f64, s: f64, n: usize) -> f64 {
    (n as f64 - 2.0 + s) * s * f - (2.0 - s) * s * s * f_prime
}

/// Grid on `(0, 2]`: half geometric on `[δ, 1]`, half uniform on `(0, 2]`.
pub fn check_grid(points: usize) -> Vec<f64> {
    let geo = points / 2;
    let uni = points - geo;
    let mut grid: Vec<f64> = (0..geo)
        .map(|k| 10f64.powf(GRID_DELTA.log10() * (1.0 - k as f64 / (geo - 1).max(1) as f64)))
        .chain((1..=uni).map(|k| 2.0 * k as f64 / uni as f64))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConditionVerdict {
    Pass,
    /// `witness` is the grid point with the most negative left-hand side.
    Fail { witness: f64, value: f64 },
}

impl ConditionVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ConditionVerdict::Pass)
    }
}

fn grid_verdict(grid: &[f64], expr: impl Fn(f64) -> f64) -> ConditionVerdict {
    let worst = grid
        .iter()
        .map(|&s| (s, expr(s)))
        .filter(|(_, v)| !(*v > 0.0))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    match worst {
        None => ConditionVerdict::Pass,
        Some((witness, value)) => ConditionVerdict::Fail { witness, value },
    }
}

/// Grid check of condition (i), `f > 0` on `(0, 2]`.
pub fn check_condition_i(g: &GainFunction, grid_points: usize) -> ConditionVerdict {
    grid_verdict(&check_grid(grid_points.max(100)), |s| g.value(s).0)
}

/// Grid check of condition (iii) on the `n`-sphere. For the constant and
/// power families the grid result is cross-checked against the closed-form
/// criterion, and a disagreement is reported as an internal error.
pub fn check_condition_iii(g: &GainFunction, n: usize, grid_points: usize) -> Result<ConditionVerdict> {
    if n == 0 {
        return Err(Error::Config("sphere dimension must be at least 1".into()));
    }
    let grid = check_grid(grid_points.max(100));
    let verdict = grid_verdict(&grid, |s| {
        let (f, fp) = g.value(s);
        condition_iii_value(f, fp, s, n)
    });
    if let Some(expected) = closed_form_condition_iii(g, n) {
        if expected != verdict.passed() {
            return Err(Error::Internal(format!(
                "grid check of condition (iii) for {g} on S^{n} gave {verdict:?}, closed form says {expected}"
            )));
        }
    }
    Ok(verdict)
}

/// Closed-form condition (iii) for the built-in families:
/// `k (n - 2 + s) s > 0` for constants, `(n - (k+1)(2 - s)) s^{k+1} > 0`
/// for powers.
pub fn closed_form_condition_iii(g: &GainFunction, n: usize) -> Option<bool> {
    match g {
        GainFunction::Constant(k) => Some(*k > 0.0 && n >= 2),
        GainFunction::Power(k) => Some(n as u64 >= 2 * (*k as u64 + 1)),
        GainFunction::Custom(_) => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub gain: String,
    pub dim: usize,
    pub condition_i: ConditionVerdict,
    pub condition_iii: ConditionVerdict,
    pub admissible: bool,
    /// Real analyticity of custom gains is assumed, not verified.
    pub analyticity_assumed: bool,
}

pub fn check_admissible(g: &GainFunction, n: usize, grid_points: usize) -> Result<AdmissibilityReport> {
    let condition_i = check_condition_i(g, grid_points);
    let condition_iii = check_condition_iii(g, n, grid_points)?;
    Ok(AdmissibilityReport {
        gain: g.to_string(),
        dim: n,
        admissible: condition_i.passed() && condition_iii.passed(),
        condition_i,
        condition_iii,
        analyticity_assumed: matches!(g, GainFunction::Custom(_)),
    })
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}
