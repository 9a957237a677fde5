//! Independent numerical references: Runge-Kutta integration, adaptive
//! quadrature for ordered time integrals, and least-squares secular fitting.
//!
//! Everything here is deliberately dumb and classical so it can arbitrate
//! disagreements between the combinatorial series code and closed forms.

use num_traits::Zero;

use crate::diagram::lambda_of_term;
use crate::error::{FlowError, Result};
use crate::field::{PolyTerm, VectorField};
use crate::scalar::C64;

/// State magnitude past which an integration is declared blown up.
const BLOWUP_LIMIT: f64 = 1e12;

/// Integration method plus its step/tolerance knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratorMethod {
    Rk4Fixed { step: f64 },
    Rk45Adaptive { tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: IntegratorMethod,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig { method: IntegratorMethod::Rk4Fixed { step }, max_steps: 4_000_000 }
    }

    pub fn rk45(tolerance: f64) -> Self {
        IntegratorConfig {
            method: IntegratorMethod::Rk45Adaptive { tolerance },
            max_steps: 1_000_000,
        }
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::rk4(1e-3)
    }
}

/// Sampled solution path. `complete` is false when the integrator stopped
/// early (step exhaustion or blow-up); the trajectory up to that point is
/// still valid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub complete: bool,
}

impl Trajectory {
    pub fn dimension(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[C64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// One-component view as a new trajectory (dimension 1).
    pub fn component(&self, i: usize) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| vec![s[i]]).collect(),
            complete: self.complete,
        }
    }
}

fn derivative(field: &VectorField<C64>, x: &[C64]) -> Result<Vec<C64>> {
    field.evaluate(x)
}

fn axpy(x: &[C64], h: f64, k: &[C64]) -> Vec<C64> {
    x.iter().zip(k).map(|(a, b)| a + b * h).collect()
}

fn state_blown(x: &[C64]) -> bool {
    x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm() > BLOWUP_LIMIT)
}

/// Integrates `dx/dt = P(x)` from 0 to `t_end`, sampling every accepted step.
pub fn integrate(
    field: &VectorField<C64>,
    x0: &[C64],
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    if x0.len() != field.dimension() {
        return Err(FlowError::Dimension(format!(
            "x0 has {} components, field dimension is {}",
            x0.len(),
            field.dimension()
        )));
    }
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(FlowError::Invalid("t_end must be finite and non-negative".into()));
    }
    match config.method {
        IntegratorMethod::Rk4Fixed { step } => {
            if !(step > 0.0) {
                return Err(FlowError::Invalid("step must be positive".into()));
            }
            rk4_fixed(field, x0, t_end, step, config.max_steps)
        }
        IntegratorMethod::Rk45Adaptive { tolerance } => {
            if !(tolerance > 0.0) {
                return Err(FlowError::Invalid("tolerance must be positive".into()));
            }
            rk45_adaptive(field, x0, t_end, tolerance, config.max_steps)
        }
    }
}

fn rk4_step(field: &VectorField<C64>, x: &[C64], h: f64) -> Result<Vec<C64>> {
    let k1 = derivative(field, x)?;
    let k2 = derivative(field, &axpy(x, h / 2.0, &k1))?;
    let k3 = derivative(field, &axpy(x, h / 2.0, &k2))?;
    let k4 = derivative(field, &axpy(x, h, &k3))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| v + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0))
        .collect())
}

fn rk4_fixed(
    field: &VectorField<C64>,
    x0: &[C64],
    t_end: f64,
    step: f64,
    max_steps: usize,
) -> Result<Trajectory> {
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut complete = true;
    let mut steps = 0usize;
    while t < t_end {
        if steps >= max_steps {
            complete = false;
            break;
        }
        let h = step.min(t_end - t);
        let next = rk4_step(field, &x, h)?;
        if state_blown(&next) {
            complete = false;
            break;
        }
        t += h;
        x = next;
        times.push(t);
        states.push(x.clone());
        steps += 1;
    }
    Ok(Trajectory { times, states, complete })
}

// Dormand-Prince 5(4) tableau.
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn rk45_adaptive(
    field: &VectorField<C64>,
    x0: &[C64],
    t_end: f64,
    tolerance: f64,
    max_steps: usize,
) -> Result<Trajectory> {
    let d = x0.len();
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    if t_end == 0.0 {
        return Ok(Trajectory { times, states, complete: true });
    }
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut h = (t_end / 100.0).min(0.1).max(1e-10);
    let mut complete = true;
    let mut steps = 0usize;
    let h_floor = t_end * 1e-14;
    loop {
        if t >= t_end {
            break;
        }
        if steps >= max_steps || h < h_floor {
            complete = false;
            break;
        }
        steps += 1;
        let h_try = h.min(t_end - t);
        let mut k: Vec<Vec<C64>> = Vec::with_capacity(7);
        k.push(derivative(field, &x)?);
        let mut failed = false;
        for stage in 0..6 {
            let mut arg = x.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    for i in 0..d {
                        arg[i] += kj[i] * (a * h_try);
                    }
                }
            }
            if state_blown(&arg) {
                failed = true;
                break;
            }
            k.push(derivative(field, &arg)?);
        }
        if failed {
            h *= 0.25;
            continue;
        }
        let mut x5 = x.clone();
        let mut x4 = x.clone();
        for (j, kj) in k.iter().enumerate() {
            for i in 0..d {
                x5[i] += kj[i] * (DP_B5[j] * h_try);
                x4[i] += kj[i] * (DP_B4[j] * h_try);
            }
        }
        if state_blown(&x5) {
            h *= 0.25;
            continue;
        }
        // Scaled RMS error against mixed absolute/relative tolerance.
        let mut err_sq = 0.0;
        for i in 0..d {
            let scale = tolerance + tolerance * x[i].norm().max(x5[i].norm());
            let e = (x5[i] - x4[i]).norm() / scale;
            err_sq += e * e;
        }
        let err = (err_sq / d as f64).sqrt();
        if err <= 1.0 {
            t += h_try;
            x = x5;
            times.push(t);
            states.push(x.clone());
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h = h_try * factor.clamp(0.2, 5.0);
    }
    Ok(Trajectory { times, states, complete })
}

// ---------------------------------------------------------------------------
// Adaptive quadrature for ordered exponential integrals
// ---------------------------------------------------------------------------

fn simpson_rule(fa: C64, fm: C64, fb: C64, h: f64) -> C64 {
    (fa + fm * 4.0 + fb) * (h / 6.0)
}

fn adaptive_simpson_rec(
    f: &mut dyn FnMut(f64) -> Result<C64>,
    a: f64,
    b: f64,
    fa: C64,
    fm: C64,
    fb: C64,
    whole: C64,
    tol: f64,
    depth: usize,
) -> Result<C64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson_rule(fa, flm, fm, m - a);
    let right = simpson_rule(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.norm() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(FlowError::Invalid("quadrature did not converge".into()));
    }
    let l = adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson quadrature of a complex-valued integrand on [a, b].
pub fn adaptive_simpson(
    f: &mut dyn FnMut(f64) -> Result<C64>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<C64> {
    if a == b {
        return Ok(C64::zero());
    }
    let m = 0.5 * (a + b);
    let fa = f(a)?;
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = simpson_rule(fa, fm, fb, b - a);
    adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 42)
}

/// Ordered exponential integral over the simplex 0 < t_1 < … < t_m < t:
/// ∫ e^{r_m t_m} ∫ … ∫ e^{r_1 t_1} dt_1 … dt_m, `rates[0]` innermost.
/// Evaluated by nested adaptive quadrature; this is an oracle, deliberately
/// ignorant of closed forms.
pub fn ordered_exponential_integral(rates: &[C64], t: f64, tol: f64) -> Result<C64> {
    if rates.is_empty() {
        return Ok(C64::new(1.0, 0.0));
    }
    if rates.len() > 4 {
        return Err(FlowError::Invalid("quadrature depth limited to 4".into()));
    }
    let (outer, inner) = rates.split_last().unwrap();
    let outer = *outer;
    if inner.is_empty() {
        return adaptive_simpson(&mut |s| Ok((outer * s).exp()), 0.0, t, tol);
    }
    adaptive_simpson(
        &mut |s| Ok((outer * s).exp() * ordered_exponential_integral(inner, s, tol * 0.1)?),
        0.0,
        t,
        tol,
    )
}

/// Quadrature of the depth-1 or depth-2 ordered time integral whose level-j
/// integrand is `coeff(term_j) · e^{λ(term_j) s}`, eigenvalue sums taken
/// against `spectrum`.
pub fn iterated_integral_quadrature(
    spectrum: &[C64],
    terms: &[PolyTerm<C64>],
    depth: usize,
    t: f64,
) -> Result<C64> {
    if depth != 1 && depth != 2 {
        return Err(FlowError::Invalid(format!("depth {depth} unsupported, expected 1 or 2")));
    }
    if terms.len() < depth {
        return Err(FlowError::Invalid(format!(
            "need {depth} terms for depth {depth}, got {}",
            terms.len()
        )));
    }
    let rates: Vec<C64> = terms[..depth].iter().map(|p| lambda_of_term(p, spectrum)).collect();
    let coeff: C64 = terms[..depth].iter().map(|p| p.coeff).product();
    Ok(ordered_exponential_integral(&rates, t, 1e-12)? * coeff)
}

// ---------------------------------------------------------------------------
// Secular fitting
// ---------------------------------------------------------------------------

/// Result of a secular-term fit: the trajectory behaves like
/// `amplitude · t^k · e^{rate·t}` plus lower powers, with the quoted RMS
/// residual on the polynomial factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SecularFit {
    pub k: usize,
    pub rate: C64,
    pub amplitude: C64,
    pub residual: f64,
    pub component: usize,
}

/// Strips `e^{rate·t}` from each trajectory component, least-squares fits a
/// polynomial of degree ≤ `max_k` in t, and reports the highest power whose
/// coefficient stands above 10× the residual noise. With several components
/// the one the polynomial model explains best (smallest relative residual)
/// is reported.
pub fn fit_secular(trajectory: &Trajectory, rate: C64, max_k: usize) -> Result<SecularFit> {
    let n = trajectory.len();
    if n < 20 {
        return Err(FlowError::Invalid(format!("need at least 20 samples, got {n}")));
    }
    let d = trajectory.dimension();
    let mut best: Option<(f64, SecularFit)> = None;
    for comp in 0..d {
        let stripped: Vec<C64> = trajectory
            .states
            .iter()
            .zip(&trajectory.times)
            .map(|(s, &t)| s[comp] * (-rate * t).exp())
            .collect();
        let (coeffs, residual) = polyfit(&trajectory.times, &stripped, max_k)?;
        let signal = rms(&stripped);
        // Highest power whose contribution is clearly above the fit noise:
        // 10x the residual RMS, floored by the coefficient-estimation noise
        // of the normal equations (exact polynomial inputs have residual at
        // machine level, which would otherwise make rounding junk in the
        // high coefficients look significant).
        let threshold = (10.0 * residual).max(1e-7 * signal);
        let mut k = 0usize;
        let mut amplitude = coeffs[0];
        for p in (1..=max_k).rev() {
            let power_rms =
                (trajectory.times.iter().map(|t| t.powi(2 * p as i32)).sum::<f64>() / n as f64)
                    .sqrt();
            if coeffs[p].norm() * power_rms > threshold {
                k = p;
                amplitude = coeffs[p];
                break;
            }
        }
        let fit = SecularFit { k, rate, amplitude, residual, component: comp };
        let relative = residual / (signal + f64::MIN_POSITIVE);
        if best.as_ref().is_none_or(|(r, _)| relative < *r) {
            best = Some((relative, fit));
        }
    }
    Ok(best.expect("dimension is at least 1").1)
}

fn rms(z: &[C64]) -> f64 {
    (z.iter().map(|v| v.norm_sqr()).sum::<f64>() / z.len() as f64).sqrt()
}

/// Least-squares polynomial fit of complex samples against real abscissae.
/// Returns (coefficients c_0..c_deg, RMS residual).
fn polyfit(times: &[f64], values: &[C64], deg: usize) -> Result<(Vec<C64>, f64)> {
    let n = times.len();
    let m = deg + 1;
    // Normal equations with a real Gram matrix and complex right-hand side.
    let mut gram = vec![vec![0.0f64; m]; m];
    let mut rhs = vec![C64::zero(); m];
    for (idx, &t) in times.iter().enumerate() {
        let mut powers = vec![1.0f64; m];
        for p in 1..m {
            powers[p] = powers[p - 1] * t;
        }
        for p in 0..m {
            for q in 0..m {
                gram[p][q] += powers[p] * powers[q];
            }
            rhs[p] += values[idx] * powers[p];
        }
    }
    // Gaussian elimination with partial pivoting.
    let mut coeffs = rhs;
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&a, &b| gram[a][col].abs().total_cmp(&gram[b][col].abs()))
            .unwrap();
        let scale: f64 = gram[pivot_row].iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gram[pivot_row][col].abs() < 1e-12 * scale.max(1e-300) {
            return Err(FlowError::Invalid("ill-conditioned polynomial fit".into()));
        }
        gram.swap(col, pivot_row);
        coeffs.swap(col, pivot_row);
        for row in (col + 1)..m {
            let f = gram[row][col] / gram[col][col];
            for q in col..m {
                gram[row][q] -= f * gram[col][q];
            }
            let delta = coeffs[col] * f;
            coeffs[row] -= delta;
        }
    }
    for col in (0..m).rev() {
        for q in (col + 1)..m {
            let delta = coeffs[q] * gram[col][q];
            coeffs[col] -= delta;
        }
        coeffs[col] /= gram[col][col];
    }
    let mut err_sq = 0.0;
    for (idx, &t) in times.iter().enumerate() {
        let mut fit = C64::zero();
        let mut power = 1.0;
        for c in &coeffs {
            fit += c * power;
            power *= t;
        }
        err_sq += (values[idx] - fit).norm_sqr();
    }
    Ok((coeffs, (err_sq / n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolyTerm;
    use num_traits::One;

    fn scalar_quadratic(alpha: f64) -> VectorField<C64> {
        VectorField::new(1, vec![PolyTerm::new(0, vec![2], C64::new(alpha, 0.0))]).unwrap()
    }

    fn linear_field(lambda: C64) -> VectorField<C64> {
        VectorField::new(1, vec![PolyTerm::new(0, vec![1], lambda)]).unwrap()
    }

    #[test]
    fn rk45_matches_linear_exact_solution() {
        let lambda = C64::new(-0.5, 1.2);
        let field = linear_field(lambda);
        let x0 = [C64::new(0.8, -0.3)];
        let traj =
            integrate(&field, &x0, 2.0, &IntegratorConfig::rk45(1e-10)).unwrap();
        assert!(traj.complete);
        let exact = x0[0] * (lambda * 2.0).exp();
        assert!((traj.final_state()[0] - exact).norm() < 1e-9);
    }

    #[test]
    fn rk4_recovers_quadratic_closed_form() {
        let field = scalar_quadratic(1.0);
        let x0 = [C64::new(0.1, 0.0)];
        let traj = integrate(&field, &x0, 1.0, &IntegratorConfig::rk4(1e-3)).unwrap();
        assert!(traj.complete);
        assert!((traj.final_state()[0].re - 1.0 / 9.0).abs() < 1e-8);
    }

    #[test]
    fn rk4_global_error_scales_as_h4() {
        let field = scalar_quadratic(1.0);
        let x0 = [C64::new(0.5, 0.0)];
        let exact = 1.0; // 0.5/(1-0.5)
        let hs = [1e-1, 10f64.powf(-1.5), 1e-2, 10f64.powf(-2.5), 1e-3];
        let mut points = Vec::new();
        for &h in &hs {
            let traj = integrate(&field, &x0, 1.0, &IntegratorConfig::rk4(h)).unwrap();
            let err = (traj.final_state()[0].re - exact).abs();
            points.push((h.ln(), err.ln()));
        }
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - 4.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn near_blowup_run_is_flagged_partial() {
        let field = scalar_quadratic(1.0);
        let x0 = [C64::one()]; // blows up at t* = 1
        let traj = integrate(&field, &x0, 2.0, &IntegratorConfig::rk45(1e-8)).unwrap();
        assert!(!traj.complete);
        let last = *traj.times.last().unwrap();
        assert!(last < 1.01, "stopped at {last}, past the singularity");
        assert!(last > 0.9, "stopped too early at {last}");
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(traj.states.iter().all(|s| s.len() == 1));
    }

    #[test]
    fn zero_time_integration_is_initial_state() {
        let field = scalar_quadratic(1.0);
        let x0 = [C64::new(0.3, 0.0)];
        let traj = integrate(&field, &x0, 0.0, &IntegratorConfig::rk45(1e-10)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.final_state()[0], x0[0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let field = scalar_quadratic(1.0);
        let e = integrate(&field, &[C64::one(), C64::one()], 1.0, &IntegratorConfig::default());
        assert!(matches!(e, Err(FlowError::Dimension(_))));
    }

    #[test]
    fn ordered_integral_of_zero_rates_is_simplex_volume() {
        let zero = [C64::zero(), C64::zero()];
        let v = ordered_exponential_integral(&zero, 1.5, 1e-12).unwrap();
        assert!((v - C64::new(1.5 * 1.5 / 2.0, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn ordered_integral_depth_one_matches_closed_form() {
        let r = C64::new(0.7, -1.1);
        let t = 0.9;
        let v = ordered_exponential_integral(&[r], t, 1e-12).unwrap();
        let exact = ((r * t).exp() - 1.0) / r;
        assert!((v - exact).norm() < 1e-11);
    }

    #[test]
    fn ordered_integral_depth_two_matches_closed_form() {
        // ∫₀ᵗ e^{r₂u} (e^{r₁u} − 1)/r₁ du for distinct non-zero rates.
        let r1 = C64::new(0.4, 0.8);
        let r2 = C64::new(-0.6, 0.2);
        let t = 1.0;
        let v = ordered_exponential_integral(&[r1, r2], t, 1e-12).unwrap();
        let s = r1 + r2;
        let exact = (((s * t).exp() - 1.0) / s - ((r2 * t).exp() - 1.0) / r2) / r1;
        assert!((v - exact).norm() < 1e-10);
    }

    #[test]
    fn iterated_quadrature_includes_coefficients() {
        // Constant integrand c over the ordered triangle → c·t²/2.
        let spectrum = [C64::zero(), C64::zero()];
        let c1 = C64::new(2.0, -1.0);
        let c2 = C64::new(0.5, 0.5);
        let terms = vec![PolyTerm::new(0, vec![1, 0], c1), PolyTerm::new(1, vec![0, 1], c2)];
        let t = 1.2;
        let v = iterated_integral_quadrature(&spectrum, &terms, 2, t).unwrap();
        let exact = c1 * c2 * (t * t / 2.0);
        assert!((v - exact).norm() < 1e-10);
        assert!(iterated_integral_quadrature(&spectrum, &terms, 3, t).is_err());
    }

    fn sample_trajectory(f: impl Fn(f64) -> Vec<C64>, t_max: f64, n: usize) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
        let states = times.iter().map(|&t| f(t)).collect();
        Trajectory { times, states, complete: true }
    }

    #[test]
    fn fit_recovers_linear_secular_factor() {
        let a2 = 0.09;
        let b = 0.1;
        let traj = sample_trajectory(
            |t| vec![C64::new((b + a2 * t) * (2.0 * t).exp(), 0.0)],
            1.0,
            200,
        );
        let fit = fit_secular(&traj, C64::new(2.0, 0.0), 4).unwrap();
        assert_eq!(fit.k, 1);
        assert!((fit.amplitude.re - a2).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn pure_exponential_fits_constant() {
        let traj =
            sample_trajectory(|t| vec![C64::new(0.7 * (-1.3 * t).exp(), 0.0)], 1.0, 100);
        let fit = fit_secular(&traj, C64::new(-1.3, 0.0), 4).unwrap();
        assert_eq!(fit.k, 0);
        assert!((fit.amplitude.re - 0.7).abs() < 1e-9);
    }

    #[test]
    fn best_explained_component_wins() {
        // Component 0 is a stripped-rate mismatch (never polynomial);
        // component 1 is exactly b + a²t after stripping.
        let traj = sample_trajectory(
            |t| {
                vec![
                    C64::new(0.3 * t.exp(), 0.0),
                    C64::new((0.1 + 0.09 * t) * (2.0 * t).exp(), 0.0),
                ]
            },
            1.0,
            200,
        );
        let fit = fit_secular(&traj, C64::new(2.0, 0.0), 4).unwrap();
        assert_eq!(fit.component, 1);
        assert_eq!(fit.k, 1);
        assert!((fit.amplitude.re - 0.09).abs() < 1e-8);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let traj = sample_trajectory(|t| vec![C64::new(t, 0.0)], 1.0, 5);
        assert!(fit_secular(&traj, C64::zero(), 2).is_err());
    }

    #[test]
    fn noise_only_residual_is_not_a_detection() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let times: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let states: Vec<Vec<C64>> = times
            .iter()
            .map(|&t| {
                vec![C64::new(
                    (0.5 + 1e-9 * rng.gen_range(-1.0..1.0)) * (0.3 * t).exp(),
                    0.0,
                )]
            })
            .collect();
        let traj = Trajectory { times, states, complete: true };
        let fit = fit_secular(&traj, C64::new(0.3, 0.0), 4).unwrap();
        assert_eq!(fit.k, 0);
    }
}
