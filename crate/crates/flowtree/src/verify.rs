//! End-to-end verification battery: eleven numbered checks covering the
//! coefficient identities, flow accuracy, blow-up prediction, linearization,
//! inversion, ordered-exponent closed forms, the generator catalog,
//! secular detection, the field algebra, and discrete expansions.
//!
//! Each check is independent, deterministic (fixed RNG seeds), and reports
//! a pass flag plus a one-line detail. A failing check is reported as-is;
//! nothing here downgrades a mismatch into a warning.

use std::time::Instant;

use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::FlowError;
use crate::field::{bracket, star_product, PolyTerm, VectorField};
use crate::flow::{
    self, build_series, evaluate_series, radius_estimate, sum_coefficients,
    sum_coefficients_uncorrected,
};
use crate::linearize::{
    self, complete_degree, evolve_near_fixed_point, inverse_series, linearizing_map, PolyMap,
};
use crate::numeric::{self, IntegratorConfig};
use crate::resonance::{
    detect_secular_term, resonant_generator_catalog, ResonanceRelation, DEFAULT_CATALOG_ORDER,
};
use crate::scalar::{Scalar, C64, CQ, Q};

/// Outcome of one verification criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: usize, name: &'static str, passed: bool, detail: String) -> Self {
        CriterionResult { id, name, passed, detail }
    }
}

/// Runs the full battery in order with the pinned default seeds.
pub fn run_all() -> Vec<CriterionResult> {
    run_all_seeded(None)
}

/// Runs the full battery; `seed` reseeds the randomized criteria (3, 6, 7,
/// 10, 11), while `None` keeps the pinned defaults for reproducible output.
pub fn run_all_seeded(seed: Option<u64>) -> Vec<CriterionResult> {
    let s = |id: u64, pinned: u64| seed.map_or(pinned, |s| s.wrapping_mul(101).wrapping_add(id));
    vec![
        criterion_1_coefficient_identity(),
        criterion_2_coefficient_cross_validation(),
        criterion_3_flow_accuracy_seeded(s(3, 301)),
        criterion_4_radius_blowup(),
        criterion_5_linearization(),
        criterion_6_inverse_series_seeded(s(6, 601)),
        criterion_7_ordered_exponent_seeded(s(7, 701)),
        criterion_8_generator_catalog(),
        criterion_9_secular_term(),
        criterion_10_field_algebra_seeded(s(10, 1001)),
        criterion_11_discrete_dynamics_seeded(s(11, 1101)),
    ]
}

fn cq(n: i64, d: i64) -> CQ {
    CQ::from_ratio(n, d)
}

fn nonzero_rational(rng: &mut ChaCha8Rng) -> CQ {
    loop {
        let num = rng.gen_range(-6i64..=6);
        if num != 0 {
            return cq(num, rng.gen_range(1i64..=4));
        }
    }
}

/// 1. Σ_{|D|=n} 1/D! over planar binary diagrams equals 1 for n ≤ 8,
///    exactly, in under five seconds.
pub fn criterion_1_coefficient_identity() -> CriterionResult {
    let start = Instant::now();
    let mut bad = Vec::new();
    for k in 1..=8usize {
        match sum_coefficients(2, k) {
            Ok(v) if v == Q::one() => {}
            Ok(v) => bad.push(format!("n={k}: Σ1/D! = {v}")),
            Err(e) => bad.push(format!("n={k}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    let in_time = elapsed.as_secs_f64() < 5.0;
    let passed = bad.is_empty() && in_time;
    let detail = if passed {
        format!(
            "Σ 1/D! = 1 exactly for every order n ≤ 8 (1430 binary diagrams at n=8; {} ms)",
            elapsed.as_millis()
        )
    } else if !in_time {
        format!("exceeded 5 s budget: {} ms", elapsed.as_millis())
    } else {
        bad.join("; ")
    };
    CriterionResult::new(1, "coefficient identity", passed, detail)
}

/// 2. Diagram sums vs the closed-form coefficient oracle for s ∈ {2,3,4},
///    k ≤ 7, exactly; the printed variant's deviation is documented.
pub fn criterion_2_coefficient_cross_validation() -> CriterionResult {
    let mut bad = Vec::new();
    for s in [2usize, 3, 4] {
        for k in 1..=7usize {
            if let Err(e) = sum_coefficients(s, k) {
                bad.push(format!("s={s} k={k}: {e}"));
            }
        }
    }
    let passed = bad.is_empty();
    let detail = if passed {
        let printed: Vec<String> = (1..=4)
            .map(|k| sum_coefficients_uncorrected(2, k).map_or_else(|e| e.to_string(), |v| v.to_string()))
            .collect();
        format!(
            "diagram sums equal the closed form for s ∈ {{2,3,4}}, k ≤ 7 (s=2 all equal 1); \
             the uncorrected variant instead gives k·(−1)^k for s=2 ({}) and 3/16 at s=3,k=2 \
             versus the oracle's 3/2",
            printed.join(", ")
        )
    } else {
        bad.join("; ")
    };
    CriterionResult::new(2, "coefficient cross-validation", passed, detail)
}

/// 3. Flow accuracy: scalar quadratic series at N=12 within 1e-8 of 1/9,
///    and a seeded random planar quadratic within 1e-6 of RK4 at half the
///    corrected time bound, all under 30 s.
pub fn criterion_3_flow_accuracy() -> CriterionResult {
    criterion_3_flow_accuracy_seeded(301)
}

pub fn criterion_3_flow_accuracy_seeded(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<String, String> {
        let scalar_field = VectorField::new(
            1,
            vec![PolyTerm::new(0, vec![2], C64::new(1.0, 0.0))],
        )
        .map_err(|e| e.to_string())?;
        let series = build_series(&scalar_field, 12);
        let x = evaluate_series(&series, &[C64::new(0.1, 0.0)], &C64::new(1.0, 0.0))
            .map_err(|e| e.to_string())?;
        let scalar_err = (x[0] - C64::new(1.0 / 9.0, 0.0)).norm();
        if scalar_err > 1e-8 {
            return Err(format!("scalar series error {scalar_err:.3e} > 1e-8"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for target in 0..2usize {
            for ex in 0..=2u32 {
                let mag = rng.gen_range(0.25..1.0);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                terms.push(PolyTerm::new(target, vec![ex, 2 - ex], C64::new(sign * mag, 0.0)));
            }
        }
        let field = VectorField::new(2, terms).map_err(|e| e.to_string())?;
        let x0 = [C64::new(0.2, 0.0), C64::new(-0.25, 0.0)];
        let x0_norm = 0.25;
        let report = radius_estimate(&field, x0_norm).map_err(|e| e.to_string())?;
        let t = report.time_bound.ok_or("no time bound")? / 2.0;
        let series = build_series(&field, 8);
        let by_series =
            evaluate_series(&series, &x0, &C64::new(t, 0.0)).map_err(|e| e.to_string())?;
        let traj = numeric::integrate(&field, &x0, t, &IntegratorConfig::rk4(1e-4))
            .map_err(|e| e.to_string())?;
        let oracle = traj.final_state();
        let err = by_series
            .iter()
            .zip(oracle)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        if err > 1e-6 {
            return Err(format!("planar series vs RK4 error {err:.3e} > 1e-6 at t={t:.4}"));
        }
        Ok(format!(
            "scalar N=12 error {scalar_err:.2e}; planar N=8 vs RK4 error {err:.2e} at t={t:.4}"
        ))
    };
    let outcome = run();
    let elapsed = start.elapsed();
    let in_time = elapsed.as_secs_f64() < 30.0;
    match outcome {
        Ok(detail) if in_time => CriterionResult::new(
            3,
            "flow accuracy",
            true,
            format!("{detail} ({} ms)", elapsed.as_millis()),
        ),
        Ok(_) => CriterionResult::new(
            3,
            "flow accuracy",
            false,
            format!("exceeded 30 s budget: {} ms", elapsed.as_millis()),
        ),
        Err(detail) => CriterionResult::new(3, "flow accuracy", false, detail),
    }
}

/// 4. The corrected time bound matches the observed blow-up of the scalar
///    closed form within 1% across (α, s, x₀) ∈ {1,2,3}×{2,3}×{0.5,1}.
pub fn criterion_4_radius_blowup() -> CriterionResult {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for alpha in [1.0f64, 2.0, 3.0] {
        for s in [2usize, 3] {
            for x0 in [0.5f64, 1.0] {
                let predicted = 1.0 / ((s as f64 - 1.0) * alpha * x0.powi(s as i32 - 1));
                match flow::observe_blowup(alpha, s, x0) {
                    Ok(observed) => {
                        let rel = (observed - predicted).abs() / predicted;
                        worst = worst.max(rel);
                        if rel > 0.01 {
                            bad.push(format!(
                                "α={alpha} s={s} x0={x0}: observed {observed:.6} vs {predicted:.6}"
                            ));
                        }
                    }
                    Err(e) => bad.push(format!("α={alpha} s={s} x0={x0}: {e}")),
                }
            }
        }
    }
    let passed = bad.is_empty();
    let detail = if passed {
        format!("blow-up time matches 1/((s−1)·α·x0^(s−1)) on all 12 cases; worst deviation {:.2e}", worst)
    } else {
        bad.join("; ")
    };
    CriterionResult::new(4, "radius vs blow-up", passed, detail)
}

/// 5. Scalar linearization coefficients equal (T/λ)^{k−1} exactly for
///    k ≤ 6, and the linearized evolution tracks RK4 within 1e-7.
pub fn criterion_5_linearization() -> CriterionResult {
    let run = || -> Result<String, String> {
        let field = VectorField::new(
            1,
            vec![
                PolyTerm::new(0, vec![1], cq(2, 1)),
                PolyTerm::new(0, vec![2], cq(3, 1)),
            ],
        )
        .map_err(|e| e.to_string())?;
        let spectrum = [cq(2, 1)];
        let series = linearizing_map(&field, &spectrum, 6).map_err(|e| e.to_string())?;
        let map = series.to_polymap();
        let ratio = cq(3, 2);
        let mut expect = CQ::one();
        for k in 1..=6usize {
            let got = map.coefficient(0, &[k as u32]);
            if got != expect {
                return Err(format!("degree {k}: coefficient {got:?} ≠ (T/λ)^{}", k - 1));
            }
            expect = expect * ratio.clone();
        }

        let field = VectorField::new(
            1,
            vec![
                PolyTerm::new(0, vec![1], C64::new(-1.0, 0.0)),
                PolyTerm::new(0, vec![2], C64::new(1.0, 0.0)),
            ],
        )
        .map_err(|e| e.to_string())?;
        let spectrum = [C64::new(-1.0, 0.0)];
        let x0 = [C64::new(0.2, 0.0)];
        let mut worst: f64 = 0.0;
        for step in 1..=10 {
            let t = step as f64 / 10.0;
            let by_map =
                evolve_near_fixed_point(&field, &spectrum, &x0, t, 10).map_err(|e| e.to_string())?;
            let traj = numeric::integrate(&field, &x0, t, &IntegratorConfig::rk4(1e-4))
                .map_err(|e| e.to_string())?;
            worst = worst.max((by_map[0] - traj.final_state()[0]).norm());
        }
        if worst > 1e-7 {
            return Err(format!("evolution error {worst:.3e} > 1e-7"));
        }
        Ok(format!(
            "coefficients equal (T/λ)^(k−1) exactly for k ≤ 6; evolution within {worst:.2e} of RK4 on t ∈ [0,1]"
        ))
    };
    match run() {
        Ok(detail) => CriterionResult::new(5, "linearization", true, detail),
        Err(detail) => CriterionResult::new(5, "linearization", false, detail),
    }
}

/// 6. f⁻¹∘f = id exactly through total degree 6 on 20 seeded random
///    rational planar quadratic non-resonant systems.
pub fn criterion_6_inverse_series() -> CriterionResult {
    criterion_6_inverse_series_seeded(601)
}

pub fn criterion_6_inverse_series_seeded(seed: u64) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0usize;
    let mut attempts = 0usize;
    while done < 20 && attempts < 400 {
        attempts += 1;
        let l1 = nonzero_rational(&mut rng);
        let l2 = nonzero_rational(&mut rng);
        let mut terms = vec![
            PolyTerm::new(0, vec![1, 0], l1.clone()),
            PolyTerm::new(1, vec![0, 1], l2.clone()),
        ];
        let mut any = false;
        for target in 0..2usize {
            for ex in 0..=2u32 {
                if rng.gen_bool(0.5) {
                    terms.push(PolyTerm::new(target, vec![ex, 2 - ex], nonzero_rational(&mut rng)));
                    any = true;
                }
            }
        }
        if !any {
            continue;
        }
        let field = match VectorField::new(2, terms) {
            Ok(f) => f,
            Err(e) => {
                return CriterionResult::new(6, "inverse series", false, e.to_string());
            }
        };
        let spectrum = [l1, l2];
        let n = 5;
        let fwd = match linearizing_map(&field, &spectrum, n) {
            Ok(s) => s,
            Err(FlowError::ResonanceEncountered { .. }) => continue,
            Err(e) => return CriterionResult::new(6, "inverse series", false, e.to_string()),
        };
        let inv = match inverse_series(&fwd, n) {
            Ok(s) => s,
            Err(e) => {
                return CriterionResult::new(
                    6,
                    "inverse series",
                    false,
                    format!("instance {done}: {e}"),
                )
            }
        };
        let degree = complete_degree(&field, n);
        let composed = match inv.to_polymap().compose(&fwd.to_polymap(), degree) {
            Ok(m) => m,
            Err(e) => return CriterionResult::new(6, "inverse series", false, e.to_string()),
        };
        if composed.truncated(degree) != PolyMap::identity(2) {
            return CriterionResult::new(
                6,
                "inverse series",
                false,
                format!("instance {done}: composition differs from the identity at degree ≤ {degree}"),
            );
        }
        done += 1;
    }
    if done < 20 {
        return CriterionResult::new(
            6,
            "inverse series",
            false,
            format!("only {done} non-resonant instances out of {attempts} attempts"),
        );
    }
    CriterionResult::new(
        6,
        "inverse series",
        true,
        format!("f⁻¹∘f = id exactly through degree 6 on 20 random rational systems ({attempts} draws)"),
    )
}

/// 7. First-order ordered-exponent closed form vs quadrature on 50 random
///    spectra within 1e-10, and the resonant t·e^{λt} limit within 1e-9.
pub fn criterion_7_ordered_exponent() -> CriterionResult {
    criterion_7_ordered_exponent_seeded(701)
}

pub fn criterion_7_ordered_exponent_seeded(seed: u64) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    while checked < 50 {
        let spectrum: Vec<C64> = (0..3)
            .map(|_| {
                C64::new(
                    rng.gen_range(0.3..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                    rng.gen_range(-1.5..1.5),
                )
            })
            .collect();
        let target = rng.gen_range(0..3usize);
        let a = rng.gen_range(0..3usize);
        let b = rng.gen_range(0..3usize);
        let mut exponents = vec![0u32; 3];
        exponents[a] += 1;
        exponents[b] += 1;
        let coeff = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let term = PolyTerm::new(target, exponents, coeff);
        let mu: C64 = term
            .exponents
            .iter()
            .zip(&spectrum)
            .map(|(&e, l)| l * e as f64)
            .sum();
        if (mu - spectrum[target]).norm() < 0.1 {
            continue;
        }
        let t2 = rng.gen_range(0.3..1.2);
        let closed = linearize::first_order_term(&spectrum, &term, t2);
        let quad = match linearize::first_order_term_quadrature(&spectrum, &term, t2) {
            Ok(v) => v,
            Err(e) => return CriterionResult::new(7, "ordered exponent", false, e.to_string()),
        };
        worst = worst.max((closed - quad).norm());
        checked += 1;
    }
    if worst > 1e-10 {
        return CriterionResult::new(
            7,
            "ordered exponent",
            false,
            format!("non-resonant closed form vs quadrature worst error {worst:.3e} > 1e-10"),
        );
    }
    // Resonant limit: λ_m + λ_n = λ_i exactly.
    let mut res_worst: f64 = 0.0;
    for _ in 0..10 {
        let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let b = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let spectrum = [a, b, a + b];
        let coeff = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let term = PolyTerm::new(2, vec![1, 1, 0], coeff);
        let t2 = rng.gen_range(0.3..1.0);
        let closed = linearize::first_order_term(&spectrum, &term, t2);
        let expected = coeff * t2 * (spectrum[2] * t2).exp();
        if (closed - expected).norm() > 1e-12 {
            return CriterionResult::new(
                7,
                "ordered exponent",
                false,
                "resonant branch does not reduce to t·e^{λt}".into(),
            );
        }
        let quad = match linearize::first_order_term_quadrature(&spectrum, &term, t2) {
            Ok(v) => v,
            Err(e) => return CriterionResult::new(7, "ordered exponent", false, e.to_string()),
        };
        res_worst = res_worst.max((closed - quad).norm());
    }
    if res_worst > 1e-9 {
        return CriterionResult::new(
            7,
            "ordered exponent",
            false,
            format!("resonant limit vs quadrature worst error {res_worst:.3e} > 1e-9"),
        );
    }
    CriterionResult::new(
        7,
        "ordered exponent",
        true,
        format!(
            "closed form within {worst:.2e} of quadrature on 50 spectra; resonant t·e^{{λt}} limit within {res_worst:.2e}"
        ),
    )
}

/// 8. The generator catalog reproduces the bundled reference lists as set
///    equality for degree 2, k ∈ {3,4} and degree 3, k ∈ {3..8}.
pub fn criterion_8_generator_catalog() -> CriterionResult {
    let rows: Vec<(usize, usize)> = [(2, 3), (2, 4)]
        .into_iter()
        .chain((3..=8).map(|k| (3, k)))
        .collect();
    let mut failures = Vec::new();
    let mut agreements = 0usize;
    for (degree, k) in rows.iter().copied() {
        match resonant_generator_catalog(degree, k, DEFAULT_CATALOG_ORDER) {
            Ok(row) => {
                if row.matching_convention.is_some() {
                    agreements += 1;
                } else {
                    let computed: Vec<String> = row
                        .plus_sets
                        .iter()
                        .map(|s| {
                            format!("{{{}}}", s.generators.iter().cloned().collect::<Vec<_>>().join("+"))
                        })
                        .collect();
                    let reference: Vec<String> = row
                        .reference
                        .unwrap_or_default()
                        .iter()
                        .map(|s| format!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join("+")))
                        .collect();
                    failures.push(format!(
                        "degree {degree} k={k}: computed [{}] vs reference [{}]",
                        computed.join(" "),
                        reference.join(" ")
                    ));
                }
            }
            Err(e) => failures.push(format!("degree {degree} k={k}: {e}")),
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("all {} reference rows reproduced exactly", rows.len())
    } else {
        format!(
            "{agreements}/{} rows agree; known disagreements with the bundled lists: {}",
            rows.len(),
            failures.join(" | ")
        )
    };
    CriterionResult::new(8, "generator catalog", passed, detail)
}

/// 9. Secular detection on the 1:2 model recovers k=1 and amplitude
///    a² = 0.09 within 1e-6.
pub fn criterion_9_secular_term() -> CriterionResult {
    let run = || -> Result<String, String> {
        let field = VectorField::new(
            2,
            vec![
                PolyTerm::new(0, vec![1, 0], C64::new(1.0, 0.0)),
                PolyTerm::new(1, vec![0, 1], C64::new(2.0, 0.0)),
                PolyTerm::new(1, vec![2, 0], C64::new(1.0, 0.0)),
            ],
        )
        .map_err(|e| e.to_string())?;
        let spectrum = [C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
        let x0 = [C64::new(0.3, 0.0), C64::new(0.1, 0.0)];
        let relation =
            ResonanceRelation { n: vec![2, 0], target: 1, witness: None, approximate: false };
        let fit = detect_secular_term(&field, &spectrum, &x0, &relation).map_err(|e| e.to_string())?;
        if fit.k != 1 {
            return Err(format!("detected power k={} instead of 1", fit.k));
        }
        let amp_err = (fit.amplitude - C64::new(0.09, 0.0)).norm();
        if amp_err > 1e-6 {
            return Err(format!("amplitude {} off by {amp_err:.3e}", fit.amplitude));
        }
        Ok(format!(
            "detected t¹·e^{{2t}} with amplitude {:.8} (error {amp_err:.2e}, residual {:.2e})",
            fit.amplitude.re, fit.residual
        ))
    };
    match run() {
        Ok(detail) => CriterionResult::new(9, "secular term", true, detail),
        Err(detail) => CriterionResult::new(9, "secular term", false, detail),
    }
}

fn negate_field(f: &VectorField<CQ>) -> VectorField<CQ> {
    let terms = f
        .terms()
        .iter()
        .map(|t| PolyTerm::new(t.target, t.exponents.clone(), CQ::zero() - t.coeff.clone()))
        .collect();
    VectorField::new(f.dimension(), terms).expect("negation preserves validity")
}

fn sum_fields(a: &VectorField<CQ>, b: &VectorField<CQ>) -> VectorField<CQ> {
    let mut terms = a.terms().to_vec();
    terms.extend_from_slice(b.terms());
    VectorField::new(a.dimension(), terms).expect("sum preserves validity")
}

fn random_low_degree_field(rng: &mut ChaCha8Rng) -> VectorField<CQ> {
    loop {
        let mut terms = Vec::new();
        for target in 0..2usize {
            for exps in [
                vec![1u32, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2],
            ] {
                if rng.gen_bool(0.6) {
                    terms.push(PolyTerm::new(target, exps, nonzero_rational(rng)));
                }
            }
        }
        if let Ok(f) = VectorField::new(2, terms) {
            if !f.terms().is_empty() {
                return f;
            }
        }
    }
}

/// 10. Bracket antisymmetry and Jacobi hold exactly on 50 random rational
///     triples; the linear bracket is the matrix commutator; ⋆ has a
///     concrete non-associativity witness.
pub fn criterion_10_field_algebra() -> CriterionResult {
    criterion_10_field_algebra_seeded(1001)
}

pub fn criterion_10_field_algebra_seeded(seed: u64) -> CriterionResult {
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..50usize {
            let u = random_low_degree_field(&mut rng);
            let v = random_low_degree_field(&mut rng);
            let w = random_low_degree_field(&mut rng);
            let uv = bracket(&u, &v).map_err(|e| e.to_string())?;
            let vu = bracket(&v, &u).map_err(|e| e.to_string())?;
            if uv != negate_field(&vu) {
                return Err(format!("triple {i}: antisymmetry fails"));
            }
            let jac = sum_fields(
                &sum_fields(
                    &bracket(&uv, &w).map_err(|e| e.to_string())?,
                    &bracket(&bracket(&v, &w).map_err(|e| e.to_string())?, &u)
                        .map_err(|e| e.to_string())?,
                ),
                &bracket(&bracket(&w, &u).map_err(|e| e.to_string())?, &v)
                    .map_err(|e| e.to_string())?,
            );
            if !jac.terms().is_empty() {
                return Err(format!("triple {i}: Jacobi identity fails"));
            }
        }

        // Linear fields bracket to the matrix commutator.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for _ in 0..10 {
            let a: Vec<Vec<CQ>> =
                (0..2).map(|_| (0..2).map(|_| nonzero_rational(&mut rng)).collect()).collect();
            let b: Vec<Vec<CQ>> =
                (0..2).map(|_| (0..2).map(|_| nonzero_rational(&mut rng)).collect()).collect();
            let linear = |m: &Vec<Vec<CQ>>| -> Result<VectorField<CQ>, String> {
                let mut terms = Vec::new();
                for i in 0..2 {
                    for j in 0..2 {
                        let mut exps = vec![0u32; 2];
                        exps[j] = 1;
                        terms.push(PolyTerm::new(i, exps, m[i][j].clone()));
                    }
                }
                VectorField::new(2, terms).map_err(|e| e.to_string())
            };
            let commutator: Vec<Vec<CQ>> = (0..2)
                .map(|i| {
                    (0..2)
                        .map(|j| {
                            let mut acc = CQ::zero();
                            for l in 0..2 {
                                acc = acc + a[i][l].clone() * b[l][j].clone()
                                    - b[i][l].clone() * a[l][j].clone();
                            }
                            acc
                        })
                        .collect()
                })
                .collect();
            let got = bracket(&linear(&a)?, &linear(&b)?).map_err(|e| e.to_string())?;
            if got != linear(&commutator)? {
                return Err("linear bracket differs from the matrix commutator".into());
            }
        }

        // ⋆ is not associative: u = x² in one dimension separates the sides.
        let u = VectorField::new(1, vec![PolyTerm::new(0, vec![2], cq(1, 1))])
            .map_err(|e| e.to_string())?;
        let uu = star_product(&u, &u).map_err(|e| e.to_string())?;
        let left = star_product(&uu, &u).map_err(|e| e.to_string())?;
        let right = star_product(&u, &uu).map_err(|e| e.to_string())?;
        if left == right {
            return Err("expected (u⋆u)⋆u ≠ u⋆(u⋆u)".into());
        }
        let show = |f: &VectorField<CQ>| -> String {
            f.terms()
                .iter()
                .map(|t| format!("{}·({})", t.coeff.re, t.describe()))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        Ok(format!(
            "antisymmetry + Jacobi exact on 50 triples; linear bracket = matrix commutator; \
             (u⋆u)⋆u = {} ≠ {} = u⋆(u⋆u) for u = x²",
            show(&left),
            show(&right)
        ))
    };
    match run() {
        Ok(detail) => CriterionResult::new(10, "field algebra", true, detail),
        Err(detail) => CriterionResult::new(10, "field algebra", false, detail),
    }
}

/// 11. Discrete expansion evaluation equals direct iteration exactly on
///     100 random rational instances with n ≤ 4.
pub fn criterion_11_discrete_dynamics() -> CriterionResult {
    criterion_11_discrete_dynamics_seeded(1101)
}

pub fn criterion_11_discrete_dynamics_seeded(seed: u64) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arity_menu: [&[usize]; 5] = [&[1, 2], &[0, 1], &[0, 2], &[2], &[0, 1, 2]];
    for i in 0..100usize {
        let arities = arity_menu[rng.gen_range(0..arity_menu.len())];
        let mut terms = Vec::new();
        for target in 0..2usize {
            for &s in arities {
                for ex in 0..=s as u32 {
                    if rng.gen_bool(0.6) {
                        terms.push(PolyTerm::new(
                            target,
                            vec![ex, s as u32 - ex],
                            nonzero_rational(&mut rng),
                        ));
                    }
                }
            }
        }
        let field = match VectorField::new(2, terms) {
            Ok(f) if !f.terms().is_empty() => f,
            _ => continue,
        };
        // Deep ternary towers get enormous; cap the step count there.
        let max_n = if field.arities().len() >= 3 { 3 } else { 4 };
        let n = rng.gen_range(1..=max_n);
        let x0 = [
            cq(rng.gen_range(-3i64..=3), 8),
            cq(rng.gen_range(-3i64..=3), 8),
        ];
        let expansion = match flow::discrete_expansion(&field, n) {
            Ok(e) => e,
            Err(e) => {
                return CriterionResult::new(11, "discrete dynamics", false, e.to_string())
            }
        };
        let by_diagrams = match flow::evaluate_expansion(&field, &expansion, &x0) {
            Ok(v) => v,
            Err(e) => {
                return CriterionResult::new(11, "discrete dynamics", false, e.to_string())
            }
        };
        let by_iteration = match flow::iterate_map(&field, &x0, n) {
            Ok(v) => v,
            Err(e) => {
                return CriterionResult::new(11, "discrete dynamics", false, e.to_string())
            }
        };
        if by_diagrams != by_iteration {
            return CriterionResult::new(
                11,
                "discrete dynamics",
                false,
                format!("instance {i}: expansion and iteration disagree at n={n}"),
            );
        }
    }
    CriterionResult::new(
        11,
        "discrete dynamics",
        true,
        "expansion evaluation equals direct iteration exactly on 100 random instances (n ≤ 4)".into(),
    )
}
