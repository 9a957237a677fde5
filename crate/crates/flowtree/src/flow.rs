//! The nonlinear exponent: the flow of `dx/dt = P(x)` as a tree-indexed
//! series Σ t^|D|/D! · D(x0), plus everything needed to trust it: a
//! Taylor-recurrence cross-check, the one-dimensional closed form, exact
//! coefficient sums, convergence-radius estimates, and the diagram expansion
//! of discrete iterated maps.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed};

use crate::diagram::{enumerate_diagrams, evaluate_diagram, Diagram};
use crate::error::{FlowError, Result};
use crate::field::VectorField;
use crate::numeric::Trajectory;
use crate::scalar::{rational_to_f64, Q, Scalar, C64};

/// All diagrams of one order with their exact weights 1/D!.
#[derive(Debug, Clone)]
pub struct OrderGroup {
    pub order: usize,
    pub diagrams: Vec<(Diagram, Q)>,
}

/// Truncated evolution-operator series for a concrete field. The order-0
/// term is the initial point itself and is kept implicit.
#[derive(Debug, Clone)]
pub struct EvolutionSeries<S: Scalar> {
    field: VectorField<S>,
    truncation: usize,
    orders: Vec<OrderGroup>,
}

impl<S: Scalar> EvolutionSeries<S> {
    pub fn field(&self) -> &VectorField<S> {
        &self.field
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn orders(&self) -> &[OrderGroup] {
        &self.orders
    }

    pub fn diagram_count(&self) -> usize {
        self.orders.iter().map(|g| g.diagrams.len()).sum()
    }
}

/// Builds Σ_{|D| ≤ N} t^{|D|}/D! · D for the field's arity set.
pub fn build_series<S: Scalar>(field: &VectorField<S>, n: usize) -> EvolutionSeries<S> {
    let arities = field.arities();
    let mut orders = Vec::with_capacity(n);
    for order in 1..=n {
        let diagrams = enumerate_diagrams(&arities, order)
            .into_iter()
            .map(|d| {
                let c = d.coefficient();
                (d, c)
            })
            .collect();
        orders.push(OrderGroup { order, diagrams });
    }
    EvolutionSeries { field: field.clone(), truncation: n, orders }
}

/// Numerically evaluates the truncated series at `x0`, time `t`.
pub fn evaluate_series<S: Scalar>(
    series: &EvolutionSeries<S>,
    x0: &[S],
    t: &S,
) -> Result<Vec<S>> {
    if x0.len() != series.field.dimension() {
        return Err(FlowError::Dimension(format!(
            "x0 has {} components, field dimension is {}",
            x0.len(),
            series.field.dimension()
        )));
    }
    let mut acc: Vec<S> = x0.to_vec();
    let mut t_power = S::one();
    for group in &series.orders {
        t_power = t_power * t.clone();
        for (diagram, weight) in &group.diagrams {
            let value = evaluate_diagram(diagram, &series.field, x0)?;
            let w = S::from_q(weight) * t_power.clone();
            for i in 0..acc.len() {
                acc[i] = acc[i].clone() + value[i].clone() * w.clone();
            }
        }
    }
    Ok(acc)
}

/// Taylor coefficients u_0..u_N of the flow at `x0`, by the recurrence
/// u_{n} = (1/n) Σ_s Σ_{k_1+…+k_s=n-1} T_s(u_{k_1},…,u_{k_s}).
///
/// Order by order this equals the diagram sum Σ_{|D|=n} 1/D!·D(x0); the two
/// are computed by entirely different routes, which makes their agreement a
/// meaningful cross-check.
pub fn flow_taylor_coefficients<S: Scalar>(
    field: &VectorField<S>,
    x0: &[S],
    n: usize,
) -> Result<Vec<Vec<S>>> {
    if x0.len() != field.dimension() {
        return Err(FlowError::Dimension("x0 dimension mismatch".into()));
    }
    let d = field.dimension();
    let arities = field.arities();
    let mut u: Vec<Vec<S>> = vec![x0.to_vec()];
    for order in 1..=n {
        let mut total = vec![S::zero(); d];
        for &s in &arities {
            for comp in crate::diagram::compositions(order - 1, s) {
                let args: Vec<Vec<S>> = comp.iter().map(|&k| u[k].clone()).collect();
                let v = field.apply_component(s, &args)?;
                for i in 0..d {
                    total[i] = total[i].clone() + v[i].clone();
                }
            }
        }
        let inv_n = S::from_ratio(1, order as i64);
        for i in 0..d {
            total[i] = total[i].clone() * inv_n.clone();
        }
        u.push(total);
    }
    Ok(u)
}

/// Closed-form solution of `dx/dt = α x^s`:
/// `x0 · (1 − (s−1)·α·x0^{s−1}·t)^{−1/(s−1)}`.
pub fn scalar_exact(alpha: C64, s: usize, x0: C64, t: C64) -> Result<C64> {
    if s < 2 {
        return Err(FlowError::Invalid("degree s must be at least 2".into()));
    }
    let sm1 = (s - 1) as f64;
    let base = C64::one() - alpha * x0.powu(s as u32 - 1) * t * sm1;
    let real_inputs = alpha.im == 0.0 && x0.im == 0.0 && t.im == 0.0;
    if base.norm() < 1e-250 || (real_inputs && base.re <= 0.0) {
        return Err(FlowError::BlowUp(format!(
            "evaluation at or beyond the blow-up time (1 − (s−1)·α·x0^(s−1)·t = {base})"
        )));
    }
    Ok(x0 * base.powc(C64::new(-1.0 / sm1, 0.0)))
}

/// Exact k-th Taylor coefficient in t of the closed form with α = x0 = 1:
/// the rising-factorial form (s−1)^k·(1/(s−1))_k / k!, i.e.
/// Π_{p<k} (1 + p(s−1)) / k!.
pub fn closed_form_taylor_coefficient(s: usize, k: usize) -> Result<Q> {
    if s < 2 {
        return Err(FlowError::Invalid("degree s must be at least 2".into()));
    }
    let mut numerator = BigInt::one();
    for p in 0..k {
        numerator *= BigInt::from(1 + p * (s - 1));
    }
    let mut k_factorial = BigInt::one();
    for j in 1..=k {
        k_factorial *= BigInt::from(j);
    }
    Ok(Q::new(numerator, k_factorial))
}

/// Σ_{|D|=k} 1/D! by direct enumeration of arity-s planar trees.
pub fn sum_coefficients_enumerated(s: usize, k: usize) -> Result<Q> {
    if s < 2 {
        return Err(FlowError::Invalid("degree s must be at least 2".into()));
    }
    if k == 0 {
        return Ok(Q::one());
    }
    let arities = [s].into_iter().collect();
    Ok(enumerate_diagrams(&arities, k).iter().map(|d| d.coefficient()).sum())
}

/// C^k_Σ computed both by diagram enumeration and by the closed-form Taylor
/// oracle; errors if the two disagree (they must not).
pub fn sum_coefficients(s: usize, k: usize) -> Result<Q> {
    let enumerated = sum_coefficients_enumerated(s, k)?;
    let oracle = closed_form_taylor_coefficient(s, k)?;
    if enumerated != oracle {
        return Err(FlowError::Invalid(format!(
            "coefficient sum mismatch at s={s}, k={k}: enumeration {enumerated}, oracle {oracle}"
        )));
    }
    Ok(oracle)
}

/// The uncorrected printed variant of C^k_Σ (kept for comparison; it
/// disagrees with the closed form: at s=2 it gives k·(−1)^k where the
/// series forces 1).
pub fn sum_coefficients_uncorrected(s: usize, k: usize) -> Result<Q> {
    if s < 2 {
        return Err(FlowError::Invalid("degree s must be at least 2".into()));
    }
    if k == 0 {
        return Ok(Q::one());
    }
    let mut numerator = BigInt::one();
    for p in 0..k {
        numerator *= BigInt::from(1 + p * (s - 1));
    }
    if k % 2 == 1 {
        numerator = -numerator;
    }
    let mut denominator = BigInt::from(s - 1).pow(2 * k as u32);
    for j in 1..k {
        denominator *= BigInt::from(j);
    }
    Ok(Q::new(numerator, denominator))
}

/// Convergence-radius estimate for a homogeneous field.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusReport {
    /// Homogeneity degree s.
    pub degree: usize,
    /// Frobenius-style upper bound ‖T‖ on the component norm.
    pub norm_bound: f64,
    /// Corrected bound on t·|x|^{s−1}: 1/((s−1)·‖T‖).
    pub corrected_bound: f64,
    /// The uncorrected variant (s−1)/‖T‖, reported for comparison only.
    pub uncorrected_bound: f64,
    /// Corrected bound translated to a time horizon for the given |x0|.
    pub time_bound: Option<f64>,
    /// Exact blow-up time of the closed form (one-dimensional fields only).
    pub empirical_blowup: Option<f64>,
}

/// Radius estimate from the corrected coefficient asymptotics
/// lim (C^k_Σ)^{1/k} = s−1. Requires a homogeneous field of degree ≥ 2.
pub fn radius_estimate(field: &VectorField<C64>, x0_norm: f64) -> Result<RadiusReport> {
    let mut degrees: Vec<usize> = field.arities().into_iter().collect();
    degrees.retain(|&s| field.terms_of_degree(s).next().is_some());
    if degrees.len() != 1 || degrees[0] < 2 {
        return Err(FlowError::Invalid(
            "radius estimate requires a homogeneous field of degree at least 2".into(),
        ));
    }
    let s = degrees[0];
    let norm = field.component_norm_upper(s);
    if norm == 0.0 {
        return Err(FlowError::Invalid("zero field has no finite-radius estimate".into()));
    }
    let sm1 = (s - 1) as f64;
    let corrected = 1.0 / (sm1 * norm);
    let uncorrected = sm1 / norm;
    let time_bound = if x0_norm > 0.0 { Some(corrected / x0_norm.powi(s as i32 - 1)) } else { None };
    let empirical_blowup = if field.dimension() == 1 {
        let alpha = field.terms()[0].coeff;
        let a = alpha.norm();
        if a > 0.0 && x0_norm > 0.0 {
            Some(1.0 / (sm1 * a * x0_norm.powi(s as i32 - 1)))
        } else {
            None
        }
    } else {
        None
    };
    Ok(RadiusReport {
        degree: s,
        norm_bound: norm,
        corrected_bound: corrected,
        uncorrected_bound: uncorrected,
        time_bound,
        empirical_blowup,
    })
}

/// Observed blow-up time of the one-dimensional closed form, located by
/// bisection on |x(t)| exceeding a huge threshold. Independent of the
/// algebraic formula for t*.
pub fn observe_blowup(alpha: f64, s: usize, x0: f64) -> Result<f64> {
    if s < 2 || alpha <= 0.0 || x0 <= 0.0 {
        return Err(FlowError::Invalid("need s ≥ 2, α > 0, x0 > 0".into()));
    }
    let diverged = |t: f64| match scalar_exact(
        C64::new(alpha, 0.0),
        s,
        C64::new(x0, 0.0),
        C64::new(t, 0.0),
    ) {
        Ok(v) => v.norm() > 1e9,
        Err(_) => true,
    };
    let mut hi = 1e-6;
    while !diverged(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(FlowError::Invalid("no blow-up located below t = 1e12".into()));
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if diverged(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Discrete dynamics
// ---------------------------------------------------------------------------

/// Diagram multiset of the n-fold substitution of a polynomial map into
/// itself; evaluating and summing it reproduces `iterate_map` exactly.
pub fn discrete_expansion<S: Scalar>(
    field: &VectorField<S>,
    n: usize,
) -> Result<Vec<(Diagram, u128)>> {
    if n == 0 {
        return Err(FlowError::Invalid("need at least one iteration".into()));
    }
    let arities: Vec<usize> = field.arities().into_iter().collect();
    if arities.is_empty() {
        return Err(FlowError::Invalid("empty map".into()));
    }
    let mut level: BTreeMap<Diagram, u128> = BTreeMap::new();
    for &s in &arities {
        level.insert(Diagram::vertex(s), 1);
    }
    for _ in 1..n {
        let mut next: BTreeMap<Diagram, u128> = BTreeMap::new();
        let entries: Vec<(Diagram, u128)> = level.into_iter().collect();
        for &s in &arities {
            let mut pick = vec![0usize; s];
            loop {
                let mut mult: u128 = 1;
                let slots: Vec<Option<Diagram>> = pick
                    .iter()
                    .map(|&idx| {
                        mult = mult.saturating_mul(entries[idx].1);
                        Some(entries[idx].0.clone())
                    })
                    .collect();
                let d = Diagram::with_slots(slots);
                *next.entry(d).or_insert(0) += mult;
                // Advance the mixed-radix counter over child choices.
                let mut pos = 0;
                loop {
                    if pos == s {
                        break;
                    }
                    pick[pos] += 1;
                    if pick[pos] < entries.len() {
                        break;
                    }
                    pick[pos] = 0;
                    pos += 1;
                }
                if pos == s {
                    break;
                }
            }
        }
        level = next;
    }
    Ok(level.into_iter().collect())
}

/// n-fold direct application of the map.
pub fn iterate_map<S: Scalar>(field: &VectorField<S>, x0: &[S], n: usize) -> Result<Vec<S>> {
    let mut x = x0.to_vec();
    for _ in 0..n {
        x = field.evaluate(&x)?;
    }
    Ok(x)
}

/// Sums the expansion against a concrete initial point.
pub fn evaluate_expansion<S: Scalar>(
    field: &VectorField<S>,
    expansion: &[(Diagram, u128)],
    x0: &[S],
) -> Result<Vec<S>> {
    let d = field.dimension();
    let mut acc = vec![S::zero(); d];
    for (diagram, mult) in expansion {
        let v = evaluate_diagram(diagram, field, x0)?;
        let m = S::from_ratio(
            i64::try_from(*mult).map_err(|_| FlowError::Invalid("multiplicity overflow".into()))?,
            1,
        );
        for i in 0..d {
            acc[i] = acc[i].clone() + v[i].clone() * m.clone();
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// CSV with columns `t, x{i}_re, x{i}_im …` plus an `err` column holding the
/// series-vs-oracle discrepancy (empty cells when no oracle ran).
pub fn trajectory_csv(trajectory: &Trajectory, errors: Option<&[f64]>) -> String {
    let d = trajectory.dimension();
    let mut out = String::from("t");
    for i in 0..d {
        out.push_str(&format!(",x{i}_re,x{i}_im"));
    }
    out.push_str(",err\n");
    for (row, (&t, state)) in trajectory.times.iter().zip(&trajectory.states).enumerate() {
        out.push_str(&format!("{t}"));
        for v in state {
            out.push_str(&format!(",{},{}", v.re, v.im));
        }
        match errors {
            Some(e) => out.push_str(&format!(",{}\n", e[row])),
            None => out.push_str(",\n"),
        }
    }
    out
}

/// Helper shared with the radius code: |q| as f64 (for reporting only).
pub fn q_to_f64(q: &Q) -> f64 {
    rational_to_f64(&q.abs())
}
