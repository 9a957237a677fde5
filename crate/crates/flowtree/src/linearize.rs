//! Linearization near a fixed point in diagonal coordinates: the change of
//! variables f with x(t) = f(e^{Λt} f⁻¹(x0)), built as a skeleton-indexed
//! series with coefficients C_S = Π 1/λ(K) over rooted sub-skeletons.
//!
//! Everything is order-by-order and truncated; no convergence claims are
//! made beyond the reported bounds. Resonant denominators surface as typed
//! errors naming the offending sub-diagram rather than as infinities.

use std::collections::BTreeMap;

use crate::diagram::{enumerate_skeletons_up_to, Skeleton};
use crate::error::{FlowError, Result};
use crate::field::{PolyTerm, VectorField};
use crate::numeric;
use crate::scalar::{Scalar, C64};

/// Relative tolerance under which a floating-point λ(K) counts as resonant
/// (scaled by the largest eigenvalue magnitude). Exact arithmetic ignores it.
pub const RESONANCE_RTOL: f64 = 1e-12;

/// Which way a linearization series maps: f (flat coordinates to the
/// original ones) or f⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    Forward,
    Inverse,
}

/// Truncated linearizing map: the identity plus one coefficient per skeleton
/// of order 2 ≤ |S| ≤ order... the order-1 part is always the identity and
/// is kept implicit. Coefficients are the bare C_S (or G_S); the vertex
/// tensor factors live in the field and are multiplied in at evaluation.
#[derive(Debug, Clone)]
pub struct LinearizationSeries<S: Scalar> {
    field: VectorField<S>,
    spectrum: Vec<S>,
    direction: MapDirection,
    order: usize,
    terms: Vec<(Skeleton, S)>,
}

impl<S: Scalar> LinearizationSeries<S> {
    pub fn direction(&self) -> MapDirection {
        self.direction
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[(Skeleton, S)] {
        &self.terms
    }

    pub fn field(&self) -> &VectorField<S> {
        &self.field
    }

    pub fn spectrum(&self) -> &[S] {
        &self.spectrum
    }

    /// Evaluates the series at a point: y + Σ C_S · S(y).
    pub fn evaluate(&self, y: &[S]) -> Result<Vec<S>> {
        if y.len() != self.field.dimension() {
            return Err(FlowError::Dimension("point dimension mismatch".into()));
        }
        let mut out = y.to_vec();
        for (skeleton, c) in &self.terms {
            let v = skeleton.evaluate(&self.field, y)?;
            for i in 0..out.len() {
                out[i] = out[i].clone() + v[i].clone() * c.clone();
            }
        }
        Ok(out)
    }

    /// Collapses the series to an explicit truncated polynomial map,
    /// merging skeletons that share a monomial.
    pub fn to_polymap(&self) -> PolyMap<S> {
        let d = self.field.dimension();
        let mut map = PolyMap::identity(d);
        for (skeleton, c) in &self.terms {
            let exponents = skeleton.open_counts(d);
            let coeff = c.clone() * skeleton.coefficient_product(&self.field);
            map.add_term(skeleton.target(), exponents, coeff);
        }
        map
    }
}

/// Checks that the field's degree-1 part is exactly diagonal with the given
/// eigenvalues (zero entries may simply be absent from the field).
pub fn validate_linear_part<S: Scalar>(field: &VectorField<S>, spectrum: &[S]) -> Result<()> {
    if spectrum.len() != field.dimension() {
        return Err(FlowError::Dimension(format!(
            "spectrum has {} entries, field dimension is {}",
            spectrum.len(),
            field.dimension()
        )));
    }
    let mut diagonal = vec![S::zero(); field.dimension()];
    for term in field.terms_of_degree(1) {
        let j = term
            .exponents
            .iter()
            .position(|&e| e == 1)
            .expect("degree-1 term has one unit exponent");
        if j != term.target {
            return Err(FlowError::Invalid(format!(
                "linear part is not diagonal: term {} feeds coordinate {}",
                term.describe(),
                term.target
            )));
        }
        diagonal[j] = term.coeff.clone();
    }
    for i in 0..field.dimension() {
        if diagonal[i] != spectrum[i] {
            return Err(FlowError::Invalid(format!(
                "spectrum entry {i} disagrees with the field's diagonal linear part"
            )));
        }
    }
    Ok(())
}

/// Floating tolerance for resonance tests against this spectrum.
pub(crate) fn resonance_tolerance<S: Scalar>(spectrum: &[S]) -> f64 {
    let max = spectrum.iter().map(|l| l.to_c64().norm()).fold(0.0f64, f64::max);
    RESONANCE_RTOL * max.max(1.0)
}

/// C_S = Π over rooted sub-skeletons K of 1/λ(K). A vanishing denominator
/// is reported as `ResonanceEncountered` naming the offending sub-diagram.
pub fn nonres_coefficient<S: Scalar>(skeleton: &Skeleton, spectrum: &[S]) -> Result<S> {
    let tol = resonance_tolerance(spectrum);
    let mut c = S::one();
    for (path, lambda) in skeleton.rooted_lambdas(spectrum) {
        match lambda.recip_checked(tol) {
            Some(inv) => c = c * inv,
            None => {
                let sub = skeleton.subtree_at(&path).expect("path from rooted_lambdas");
                return Err(FlowError::ResonanceEncountered {
                    subdiagram: sub.to_text(),
                    n: sub.open_counts(spectrum.len()),
                    target: sub.target(),
                });
            }
        }
    }
    Ok(c)
}

/// All skeletons over the field's nonlinear terms up to the given order.
fn nonlinear_skeletons<S: Scalar>(field: &VectorField<S>, order: usize) -> Result<Vec<Skeleton>> {
    let indices = field.nonlinear_term_indices();
    enumerate_skeletons_up_to(field, &indices, order)
}

/// Builds the linearizing map f = id + Σ_{|S| ≤ N} C_S·S for a field
/// ẋ = Λx + P(x) supplied in diagonal coordinates.
pub fn linearizing_map<S: Scalar>(
    field: &VectorField<S>,
    spectrum: &[S],
    n: usize,
) -> Result<LinearizationSeries<S>> {
    validate_linear_part(field, spectrum)?;
    let mut terms = Vec::new();
    for skeleton in nonlinear_skeletons(field, n)? {
        let c = nonres_coefficient(&skeleton, spectrum)?;
        terms.push((skeleton, c));
    }
    Ok(LinearizationSeries {
        field: field.clone(),
        spectrum: spectrum.to_vec(),
        direction: MapDirection::Forward,
        order: n,
        terms,
    })
}

/// G_S = Σ over the 2^(#internal edges) partitions π of S of
/// (−1)^{#π} Π_{Q ∈ π} C_Q.
///
/// The sign (−1)^{#π} is forced by the identity f⁻¹∘f = id at order 2 (a
/// (−1)^{#π+1} variant circulates but yields +C_S there, which the
/// composition contradicts); see `inverse_series`, which checks this formula
/// against the triangular solve on every call.
pub fn partition_coefficient<S: Scalar>(skeleton: &Skeleton, spectrum: &[S]) -> Result<S> {
    partition_coefficient_cached(skeleton, spectrum, &mut BTreeMap::new())
}

/// The same parts recur across partitions (and across the skeletons of a
/// whole series), so their forward coefficients are memoized by canonical
/// text; without this the inverse at order 5+ recomputes each C_Q thousands
/// of times.
fn partition_coefficient_cached<S: Scalar>(
    skeleton: &Skeleton,
    spectrum: &[S],
    cache: &mut BTreeMap<String, S>,
) -> Result<S> {
    let mut total = S::zero();
    for parts in skeleton.partitions() {
        let mut product = S::one();
        for q in &parts {
            let key = q.to_text();
            let c = match cache.get(&key) {
                Some(c) => c.clone(),
                None => {
                    let c = nonres_coefficient(q, spectrum)?;
                    cache.insert(key, c.clone());
                    c
                }
            };
            product = product * c;
        }
        if parts.len() % 2 == 1 {
            product = S::zero() - product;
        }
        total = total + product;
    }
    Ok(total)
}

/// Inverse linearizing map to the same skeleton order, coefficients from the
/// partition formula, verified on every call against an order-by-order
/// triangular solve of g∘f = id (the authoritative method).
pub fn inverse_series<S: Scalar>(
    f: &LinearizationSeries<S>,
    n: usize,
) -> Result<LinearizationSeries<S>> {
    if f.direction != MapDirection::Forward {
        return Err(FlowError::Invalid("can only invert a forward series".into()));
    }
    if n > f.order {
        return Err(FlowError::Invalid(format!(
            "inverse order {n} exceeds the forward series order {}",
            f.order
        )));
    }
    // The forward series already enumerates these skeletons and knows their
    // C_S, so reuse both: the trivial one-part partition of every S hits the
    // seeded cache instead of recomputing its coefficient from scratch.
    let mut cache = BTreeMap::new();
    let mut skeletons = Vec::new();
    for (skeleton, c) in f.terms() {
        if skeleton.order() <= n {
            cache.insert(skeleton.to_text(), c.clone());
            skeletons.push(skeleton.clone());
        }
    }
    let mut terms = Vec::new();
    for skeleton in skeletons {
        let g = partition_coefficient_cached(&skeleton, &f.spectrum, &mut cache)?;
        terms.push((skeleton, g));
    }
    let inverse = LinearizationSeries {
        field: f.field.clone(),
        spectrum: f.spectrum.clone(),
        direction: MapDirection::Inverse,
        order: n,
        terms,
    };
    // Cross-check against the triangular solve up to the degree where the
    // skeleton truncation is complete. Exact scalars compare exactly;
    // floating ones get a scaled roundoff allowance.
    let degree = complete_degree(&f.field, n.min(f.order));
    let triangular = f.to_polymap().inverse_triangular(degree)?;
    let by_partitions = inverse.to_polymap().truncated(degree);
    let diff = by_partitions.sub(&triangular.truncated(degree));
    let scale = by_partitions.max_coeff_norm().max(triangular.max_coeff_norm()).max(1.0);
    if !diff.vanishes(1e-9 * scale) {
        return Err(FlowError::Invalid(
            "partition-formula inverse disagrees with the triangular solve".into(),
        ));
    }
    Ok(inverse)
}

/// Largest monomial degree at which a vertex-order-n truncation contains
/// every contributing skeleton: 1 + n·(s_min − 1) for the smallest
/// nonlinear arity s_min.
pub fn complete_degree<S: Scalar>(field: &VectorField<S>, n: usize) -> usize {
    let s_min = field
        .nonlinear_term_indices()
        .iter()
        .map(|&i| field.terms()[i].degree())
        .min()
        .unwrap_or(2);
    1 + n * (s_min - 1)
}

/// c₀ = f⁻¹(x₀) truncated at order N, via the triangular polynomial-map
/// inverse (the skeleton-indexed `inverse_series` agrees but costs far more
/// at high order).
pub fn deformed_initial_conditions<S: Scalar>(
    f: &LinearizationSeries<S>,
    x0: &[S],
    n: usize,
) -> Result<Vec<S>> {
    let degree = complete_degree(&f.field, n.min(f.order));
    f.to_polymap().inverse_triangular(degree)?.eval(x0)
}

/// Flow reconstruction x(t) = f(c₀ ⊙ e^{Λt}) near the fixed point.
pub fn evolve_near_fixed_point(
    field: &VectorField<C64>,
    spectrum: &[C64],
    x0: &[C64],
    t: f64,
    n: usize,
) -> Result<Vec<C64>> {
    let f = linearizing_map(field, spectrum, n)?;
    let c0 = deformed_initial_conditions(&f, x0, n)?;
    let flat: Vec<C64> =
        c0.iter().zip(spectrum).map(|(c, l)| c * (l * t).exp()).collect();
    f.evaluate(&flat)
}

/// All (n, target, (λ, n−e_i)) with 2 ≤ |n|₁ ≤ B, sorted by ascending
/// |value|; leading entries with zero value are exact resonances.
pub fn small_denominator_scan(
    spectrum: &[C64],
    bound: usize,
) -> Vec<(Vec<u32>, usize, C64)> {
    let d = spectrum.len();
    let mut out = Vec::new();
    let mut n = vec![0u32; d];
    scan_rec(spectrum, bound, 0, &mut n, &mut out);
    out.sort_by(|a, b| a.2.norm().total_cmp(&b.2.norm()).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    out
}

fn scan_rec(
    spectrum: &[C64],
    bound: usize,
    idx: usize,
    n: &mut Vec<u32>,
    out: &mut Vec<(Vec<u32>, usize, C64)>,
) {
    if idx == spectrum.len() {
        let total: u32 = n.iter().sum();
        if total < 2 {
            return;
        }
        let dot: C64 = n.iter().zip(spectrum).map(|(&k, l)| l * k as f64).sum();
        for (i, li) in spectrum.iter().enumerate() {
            out.push((n.clone(), i, dot - li));
        }
        return;
    }
    let used: u32 = n[..idx].iter().sum();
    for v in 0..=(bound as u32 - used) {
        n[idx] = v;
        scan_rec(spectrum, bound, idx + 1, n, out);
    }
    n[idx] = 0;
}

/// Parameters of the Diophantine small-denominator bound
/// |(λ, n−e_i)| > M·|n|^{−ν}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiophantineParams {
    pub m: f64,
    pub nu: f64,
    pub bound: usize,
}

impl DiophantineParams {
    pub fn new(m: f64, nu: f64, bound: usize) -> Self {
        DiophantineParams { m, nu, bound }
    }
}

/// Largest M consistent with the scan up to the given bound:
/// min |(λ, n−e_i)|·|n|₁^ν over non-resonant entries. None if an exact
/// resonance shows up.
pub fn empirical_diophantine_m(spectrum: &[C64], bound: usize, nu: f64) -> Option<f64> {
    let tol = resonance_tolerance(spectrum);
    let mut best = f64::INFINITY;
    for (n, _, value) in small_denominator_scan(spectrum, bound) {
        let size: u32 = n.iter().sum();
        let v = value.norm();
        if v <= tol {
            return None;
        }
        best = best.min(v * (size as f64).powf(nu));
    }
    (best.is_finite()).then_some(best)
}

/// Finite-N evaluation of the convergence-radius bound
/// |x|^{s−1} < M/((s−1)^ν·‖T‖) · (Σ_{|D|=N} (D!)^ν)^{−1/N}
/// for a homogeneous field of degree s.
pub fn perturbation_radius_bound(
    field: &VectorField<C64>,
    params: &DiophantineParams,
    n: usize,
) -> Result<f64> {
    if params.m <= 0.0 || n == 0 {
        return Err(FlowError::Invalid("need M > 0 and N ≥ 1".into()));
    }
    let degrees: Vec<usize> = field
        .nonlinear_term_indices()
        .iter()
        .map(|&i| field.terms()[i].degree())
        .collect();
    let Some(&s) = degrees.first() else {
        return Err(FlowError::Invalid("field has no nonlinear part".into()));
    };
    if degrees.iter().any(|&d| d != s) {
        return Err(FlowError::Invalid("homogeneous nonlinearity required".into()));
    }
    let norm = field.component_norm_upper(s);
    if norm == 0.0 {
        return Err(FlowError::Invalid("zero nonlinearity".into()));
    }
    let arities = [s].into_iter().collect();
    let sum: f64 = crate::diagram::enumerate_diagrams(&arities, n)
        .iter()
        .map(|d| (d.tree_factorial() as f64).powf(params.nu))
        .sum();
    let sm1 = (s - 1) as f64;
    Ok(params.m / (sm1.powf(params.nu) * norm) * sum.powf(-1.0 / n as f64))
}

/// Closed form of the first-order ordered-exponent contribution of one term:
/// coeff·(e^{μt₂} − e^{λ_i t₂})/(μ − λ_i) with μ the term's monomial
/// eigenvalue sum; the resonant case μ = λ_i degenerates to coeff·t₂·e^{λ_i t₂}.
pub fn first_order_term(spectrum: &[C64], p_term: &PolyTerm<C64>, t2: f64) -> C64 {
    let mu: C64 = p_term
        .exponents
        .iter()
        .zip(spectrum)
        .map(|(&e, l)| l * e as f64)
        .sum();
    let li = spectrum[p_term.target];
    let denom = mu - li;
    if denom.norm() <= resonance_tolerance(spectrum) {
        p_term.coeff * t2 * (li * t2).exp()
    } else {
        p_term.coeff * ((mu * t2).exp() - (li * t2).exp()) / denom
    }
}

/// Quadrature counterpart of `first_order_term`: e^{λ_i t₂} times the
/// depth-1 ordered integral of e^{(μ−λ_i)s}. Used as an oracle.
pub fn first_order_term_quadrature(
    spectrum: &[C64],
    p_term: &PolyTerm<C64>,
    t2: f64,
) -> Result<C64> {
    let mu: C64 = p_term
        .exponents
        .iter()
        .zip(spectrum)
        .map(|(&e, l)| l * e as f64)
        .sum();
    let li = spectrum[p_term.target];
    let integral = numeric::ordered_exponential_integral(&[mu - li], t2, 1e-13)?;
    Ok(p_term.coeff * (li * t2).exp() * integral)
}

// ---------------------------------------------------------------------------
// Truncated polynomial maps
// ---------------------------------------------------------------------------

/// Dense-by-monomial truncated polynomial map R^d → R^d; the workhorse for
/// composition, inversion, and formal residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap<S: Scalar> {
    dimension: usize,
    components: Vec<BTreeMap<Vec<u32>, S>>,
}

impl<S: Scalar> PolyMap<S> {
    pub fn zero(dimension: usize) -> Self {
        PolyMap { dimension, components: vec![BTreeMap::new(); dimension] }
    }

    pub fn identity(dimension: usize) -> Self {
        let mut map = PolyMap::zero(dimension);
        for i in 0..dimension {
            let mut e = vec![0u32; dimension];
            e[i] = 1;
            map.components[i].insert(e, S::one());
        }
        map
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn component(&self, i: usize) -> &BTreeMap<Vec<u32>, S> {
        &self.components[i]
    }

    pub fn coefficient(&self, i: usize, exponents: &[u32]) -> S {
        self.components[i].get(exponents).cloned().unwrap_or_else(S::zero)
    }

    pub fn add_term(&mut self, target: usize, exponents: Vec<u32>, coeff: S) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.components[target].entry(exponents).or_insert_with(S::zero);
        *slot = slot.clone() + coeff;
        if slot.is_zero() {
            // Re-fetch the key to remove the cancelled entry.
            let dead: Vec<Vec<u32>> = self.components[target]
                .iter()
                .filter(|(_, c)| c.is_zero())
                .map(|(k, _)| k.clone())
                .collect();
            for k in dead {
                self.components[target].remove(&k);
            }
        }
    }

    /// From a polynomial field, viewed as a map.
    pub fn from_field(field: &VectorField<S>) -> Self {
        let mut map = PolyMap::zero(field.dimension());
        for t in field.terms() {
            map.add_term(t.target, t.exponents.clone(), t.coeff.clone());
        }
        map
    }

    pub fn eval(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.dimension {
            return Err(FlowError::Dimension("point dimension mismatch".into()));
        }
        let mut out = Vec::with_capacity(self.dimension);
        for comp in &self.components {
            let mut acc = S::zero();
            for (exps, c) in comp {
                let mut v = c.clone();
                for (j, &e) in exps.iter().enumerate() {
                    for _ in 0..e {
                        v = v * x[j].clone();
                    }
                }
                acc = acc + v;
            }
            out.push(acc);
        }
        Ok(out)
    }

    pub fn truncated(&self, max_degree: usize) -> Self {
        let mut out = PolyMap::zero(self.dimension);
        for (i, comp) in self.components.iter().enumerate() {
            for (exps, c) in comp {
                if exps.iter().sum::<u32>() as usize <= max_degree {
                    out.components[i].insert(exps.clone(), c.clone());
                }
            }
        }
        out
    }

    pub fn max_degree(&self) -> usize {
        self.components
            .iter()
            .flat_map(|c| c.keys())
            .map(|e| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_empty())
    }

    /// True when every coefficient vanishes under the scalar's own test
    /// (exact zero for rationals, |·| ≤ tol for floats).
    pub fn vanishes(&self, tol: f64) -> bool {
        self.components.iter().all(|c| c.values().all(|v| v.vanishes(tol)))
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.values())
            .map(|v| v.to_c64().norm())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &PolyMap<S>) -> PolyMap<S> {
        let mut out = self.clone();
        for (i, comp) in other.components.iter().enumerate() {
            for (exps, c) in comp {
                out.add_term(i, exps.clone(), S::zero() - c.clone());
            }
        }
        out
    }

    /// Homogeneous slice of one total degree.
    pub fn degree_part(&self, degree: usize) -> PolyMap<S> {
        let mut out = PolyMap::zero(self.dimension);
        for (i, comp) in self.components.iter().enumerate() {
            for (exps, c) in comp {
                if exps.iter().sum::<u32>() as usize == degree {
                    out.components[i].insert(exps.clone(), c.clone());
                }
            }
        }
        out
    }

    /// self ∘ inner, truncated at total degree `max_degree`.
    pub fn compose(&self, inner: &PolyMap<S>, max_degree: usize) -> Result<PolyMap<S>> {
        if inner.dimension != self.dimension {
            return Err(FlowError::Dimension("composition dimension mismatch".into()));
        }
        let inner_polys: Vec<&BTreeMap<Vec<u32>, S>> = inner.components.iter().collect();
        let mut out = PolyMap::zero(self.dimension);
        for (i, comp) in self.components.iter().enumerate() {
            for (exps, c) in comp {
                let mut product: BTreeMap<Vec<u32>, S> = BTreeMap::new();
                product.insert(vec![0; self.dimension], c.clone());
                for (j, &e) in exps.iter().enumerate() {
                    for _ in 0..e {
                        product = poly_mul(&product, inner_polys[j], max_degree);
                        if product.is_empty() {
                            break;
                        }
                    }
                }
                for (m_exps, m_c) in product {
                    out.add_term(i, m_exps, m_c);
                }
            }
        }
        Ok(out)
    }

    /// (Df)·v, the differential of self applied to another map, truncated.
    pub fn differential_apply(&self, v: &PolyMap<S>, max_degree: usize) -> Result<PolyMap<S>> {
        if v.dimension != self.dimension {
            return Err(FlowError::Dimension("differential dimension mismatch".into()));
        }
        let mut out = PolyMap::zero(self.dimension);
        for (i, comp) in self.components.iter().enumerate() {
            for (exps, c) in comp {
                for j in 0..self.dimension {
                    if exps[j] == 0 {
                        continue;
                    }
                    // ∂/∂z_j of c·z^exps, then · v_j.
                    let mut de = exps.clone();
                    de[j] -= 1;
                    let dc = c.clone() * S::from_ratio(exps[j] as i64, 1);
                    let mut mono: BTreeMap<Vec<u32>, S> = BTreeMap::new();
                    mono.insert(de, dc);
                    let contrib = poly_mul(&mono, &v.components[j], max_degree);
                    for (m_exps, m_c) in contrib {
                        out.add_term(i, m_exps, m_c);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Order-by-order inverse of a map with identity linear part, exact to
    /// the given degree: g with g∘self = id + O(degree+1).
    pub fn inverse_triangular(&self, max_degree: usize) -> Result<PolyMap<S>> {
        let id = PolyMap::identity(self.dimension);
        if self.degree_part(1) != id {
            return Err(FlowError::Invalid(
                "triangular inversion needs an identity linear part".into(),
            ));
        }
        let mut g = id.clone();
        for m in 2..=max_degree {
            let composed = g.compose(self, m)?;
            let defect = composed.sub(&id).degree_part(m);
            // With identity linear parts, adding −defect at degree m fixes
            // that degree without disturbing lower ones.
            for (i, comp) in defect.components.iter().enumerate() {
                for (exps, c) in comp {
                    g.add_term(i, exps.clone(), S::zero() - c.clone());
                }
            }
        }
        Ok(g)
    }
}

fn poly_mul<S: Scalar>(
    a: &BTreeMap<Vec<u32>, S>,
    b: &BTreeMap<Vec<u32>, S>,
    max_degree: usize,
) -> BTreeMap<Vec<u32>, S> {
    let mut out: BTreeMap<Vec<u32>, S> = BTreeMap::new();
    for (ea, ca) in a {
        let da: u32 = ea.iter().sum();
        for (eb, cb) in b {
            let db: u32 = eb.iter().sum();
            if (da + db) as usize > max_degree {
                continue;
            }
            let exps: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            let c = ca.clone() * cb.clone();
            let slot = out.entry(exps).or_insert_with(S::zero);
            *slot = slot.clone() + c;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// Formal residual of the linearization ansatz: Df(z)·(Λz) − Λf(z) − P(f(z)),
/// truncated at the degree where the series is complete. Identically zero
/// when f truly conjugates the flow to its linear part.
pub fn ansatz_residual<S: Scalar>(
    field: &VectorField<S>,
    spectrum: &[S],
    series: &LinearizationSeries<S>,
) -> Result<PolyMap<S>> {
    let d = field.dimension();
    let degree = complete_degree(field, series.order());
    let f = series.to_polymap();
    // Λ as a map, applied two ways.
    let mut lambda_map = PolyMap::zero(d);
    for i in 0..d {
        let mut e = vec![0u32; d];
        e[i] = 1;
        lambda_map.add_term(i, e, spectrum[i].clone());
    }
    let df_lz = f.differential_apply(&lambda_map, degree)?;
    let mut lambda_f = PolyMap::zero(d);
    for (i, comp) in f.components.iter().enumerate() {
        for (exps, c) in comp {
            lambda_f.add_term(i, exps.clone(), c.clone() * spectrum[i].clone());
        }
    }
    // P = the nonlinear part of the field.
    let mut p = PolyMap::zero(d);
    for &idx in &field.nonlinear_term_indices() {
        let t = &field.terms()[idx];
        p.add_term(t.target, t.exponents.clone(), t.coeff.clone());
    }
    let p_of_f = p.compose(&f, degree)?;
    Ok(df_lz.sub(&lambda_f).sub(&p_of_f).truncated(degree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::enumerate_skeletons;
    use crate::scalar::CQ;
    use num_traits::{One, Zero};

    /// d=1 field λx + Tx² with rational λ, T.
    fn scalar_field(lambda: i64, t_coeff: i64) -> (VectorField<CQ>, Vec<CQ>) {
        let f = VectorField::new(
            1,
            vec![
                PolyTerm::new(0, vec![1], CQ::from_ratio(lambda, 1)),
                PolyTerm::new(0, vec![2], CQ::from_ratio(t_coeff, 1)),
            ],
        )
        .unwrap();
        (f, vec![CQ::from_ratio(lambda, 1)])
    }

    #[test]
    fn single_vertex_coefficient_is_reciprocal_lambda() {
        let (f, spectrum) = scalar_field(2, 1);
        let skeletons = enumerate_skeletons(&f, &f.nonlinear_term_indices(), 1).unwrap();
        assert_eq!(skeletons.len(), 1);
        let c = nonres_coefficient(&skeletons[0], &spectrum).unwrap();
        assert_eq!(c, CQ::from_ratio(1, 2));
    }

    #[test]
    fn chain_coefficient_is_one_over_two_lambda_squared() {
        let (f, spectrum) = scalar_field(3, 1);
        let skeletons = enumerate_skeletons(&f, &f.nonlinear_term_indices(), 2).unwrap();
        assert_eq!(skeletons.len(), 2); // two planar chains
        for s in skeletons {
            assert_eq!(nonres_coefficient(&s, &spectrum).unwrap(), CQ::from_ratio(1, 18));
        }
    }

    #[test]
    fn resonant_skeleton_is_reported_with_its_relation() {
        // λ=(1,2), term y ← x²: λ(S) = 2·1 − 2 = 0.
        let f: VectorField<CQ> = VectorField::new(
            2,
            vec![
                PolyTerm::new(0, vec![1, 0], CQ::one()),
                PolyTerm::new(1, vec![0, 1], CQ::from_ratio(2, 1)),
                PolyTerm::new(1, vec![2, 0], CQ::one()),
            ],
        )
        .unwrap();
        let spectrum = vec![CQ::one(), CQ::from_ratio(2, 1)];
        let skeletons = enumerate_skeletons(&f, &f.nonlinear_term_indices(), 1).unwrap();
        let err = nonres_coefficient(&skeletons[0], &spectrum).unwrap_err();
        match err {
            FlowError::ResonanceEncountered { n, target, .. } => {
                assert_eq!(n, vec![2, 0]);
                assert_eq!(target, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_nonlinearity_linearizes_to_identity() {
        let f: VectorField<CQ> =
            VectorField::new(1, vec![PolyTerm::new(0, vec![1], CQ::from_ratio(5, 1))]).unwrap();
        let series = linearizing_map(&f, &[CQ::from_ratio(5, 1)], 6).unwrap();
        assert!(series.terms().is_empty());
        assert_eq!(series.to_polymap(), PolyMap::identity(1));
    }

    #[test]
    fn scalar_coefficients_follow_geometric_law() {
        // f(y) = y + Σ_k (T/λ)^{k-1} y^k.
        let (f, spectrum) = scalar_field(2, 3);
        let n = 5;
        let series = linearizing_map(&f, &spectrum, n).unwrap();
        let map = series.to_polymap();
        let ratio = CQ::from_ratio(3, 2); // T/λ
        let mut expected = CQ::one();
        for k in 1..=(n + 1) {
            assert_eq!(map.coefficient(0, &[k as u32]), expected, "degree {k}");
            expected = expected * ratio.clone();
        }
    }

    #[test]
    fn spectrum_mismatch_is_rejected() {
        let (f, _) = scalar_field(2, 1);
        assert!(linearizing_map(&f, &[CQ::from_ratio(7, 1)], 3).is_err());
        // Off-diagonal linear part.
        let g: VectorField<CQ> = VectorField::new(
            2,
            vec![PolyTerm::new(0, vec![0, 1], CQ::one()), PolyTerm::new(1, vec![0, 1], CQ::one())],
        )
        .unwrap();
        assert!(validate_linear_part(&g, &[CQ::one(), CQ::one()]).is_err());
    }

    #[test]
    fn partition_coefficient_signs_at_low_order() {
        let (f, spectrum) = scalar_field(1, 1);
        let order1 = enumerate_skeletons(&f, &f.nonlinear_term_indices(), 1).unwrap();
        // Single vertex: G = −C = −1/λ.
        assert_eq!(
            partition_coefficient(&order1[0], &spectrum).unwrap(),
            CQ::zero() - CQ::one()
        );
        let order3 = enumerate_skeletons(&f, &f.nonlinear_term_indices(), 3).unwrap();
        let mut values: Vec<CQ> = order3
            .iter()
            .map(|s| partition_coefficient(s, &spectrum).unwrap())
            .collect();
        values.sort_by_key(|v| v.re.clone());
        // λ=1: four chains at −1/6 and the balanced tree at −1/3.
        assert_eq!(values[0], CQ::from_ratio(-1, 3));
        for v in &values[1..] {
            assert_eq!(*v, CQ::from_ratio(-1, 6));
        }
    }

    #[test]
    fn inverse_of_geometric_series_is_geometric_with_flipped_sign() {
        // f(y) = y/(1−ay) ⇒ f⁻¹(x) = x/(1+ax), coefficients (−a)^{k−1}.
        let (f, spectrum) = scalar_field(3, 2); // a = 2/3
        let n = 5;
        let fwd = linearizing_map(&f, &spectrum, n).unwrap();
        let inv = inverse_series(&fwd, n).unwrap();
        assert_eq!(inv.direction(), MapDirection::Inverse);
        let map = inv.to_polymap();
        let a = CQ::from_ratio(2, 3);
        let mut expected = CQ::one();
        for k in 1..=(n + 1) {
            assert_eq!(map.coefficient(0, &[k as u32]), expected, "degree {k}");
            expected = expected * (CQ::zero() - a.clone());
        }
    }

    #[test]
    fn composition_of_inverse_and_forward_is_identity() {
        let f: VectorField<CQ> = VectorField::new(
            2,
            vec![
                PolyTerm::new(0, vec![1, 0], CQ::from_ratio(2, 1)),
                PolyTerm::new(1, vec![0, 1], CQ::from_ratio(5, 1)),
                PolyTerm::new(0, vec![2, 0], CQ::from_ratio(1, 3)),
                PolyTerm::new(0, vec![1, 1], CQ::from_ratio(-1, 2)),
                PolyTerm::new(1, vec![0, 2], CQ::from_ratio(2, 7)),
            ],
        )
        .unwrap();
        let spectrum = vec![CQ::from_ratio(2, 1), CQ::from_ratio(5, 1)];
        let n = 4;
        let fwd = linearizing_map(&f, &spectrum, n).unwrap();
        let inv = inverse_series(&fwd, n).unwrap();
        let degree = complete_degree(&f, n);
        let composed =
            inv.to_polymap().compose(&fwd.to_polymap(), degree).unwrap();
        assert_eq!(composed.truncated(degree), PolyMap::identity(2));
    }

    #[test]
    fn deformed_initial_conditions_match_closed_form() {
        // c0 = x0/(1 + (T/λ)x0), truncated.
        let (f, spectrum) = scalar_field(1, 1);
        let n = 6;
        let fwd = linearizing_map(&f, &spectrum, n).unwrap();
        let x0 = CQ::from_ratio(1, 10);
        let c0 = deformed_initial_conditions(&fwd, &[x0.clone()], n).unwrap();
        // Truncated geometric: x0·Σ_{j≤n} (−x0)^j.
        let mut expected = CQ::zero();
        let mut term = x0.clone();
        for _ in 0..=n {
            expected = expected + term.clone();
            term = term * (CQ::zero() - x0.clone());
        }
        assert_eq!(c0[0], expected);
        // f(c0) returns to x0 up to the truncation tail.
        let back = fwd.evaluate(&c0).unwrap();
        let err = (back[0].clone() - x0).to_c64().norm();
        assert!(err < 1e-7, "tail {err}");
    }

    #[test]
    fn ansatz_residual_vanishes_formally() {
        let f: VectorField<CQ> = VectorField::new(
            2,
            vec![
                PolyTerm::new(0, vec![1, 0], CQ::from_ratio(2, 1)),
                PolyTerm::new(1, vec![0, 1], CQ::from_ratio(5, 1)),
                PolyTerm::new(0, vec![0, 2], CQ::from_ratio(1, 2)),
                PolyTerm::new(1, vec![1, 1], CQ::from_ratio(-2, 3)),
            ],
        )
        .unwrap();
        let spectrum = vec![CQ::from_ratio(2, 1), CQ::from_ratio(5, 1)];
        let series = linearizing_map(&f, &spectrum, 4).unwrap();
        let residual = ansatz_residual(&f, &spectrum, &series).unwrap();
        assert!(residual.is_zero(), "residual {residual:?}");
    }

    #[test]
    fn evolution_via_linearization_tracks_rk4() {
        let field: VectorField<C64> = VectorField::new(
            1,
            vec![
                PolyTerm::new(0, vec![1], C64::new(-1.0, 0.0)),
                PolyTerm::new(0, vec![2], C64::new(1.0, 0.0)),
            ],
        )
        .unwrap();
        let spectrum = vec![C64::new(-1.0, 0.0)];
        let x0 = [C64::new(0.2, 0.0)];
        let got = evolve_near_fixed_point(&field, &spectrum, &x0, 1.0, 10).unwrap();
        let traj = numeric::integrate(
            &field,
            &x0,
            1.0,
            &numeric::IntegratorConfig::rk4(1e-4),
        )
        .unwrap();
        assert!((got[0] - traj.final_state()[0]).norm() < 1e-7);
        // Exact closed form x(t) = 1/(1 + 4e^t) as an extra witness.
        let exact = 1.0 / (1.0 + 4.0 * 1f64.exp());
        assert!((got[0].re - exact).abs() < 1e-7);
    }

    #[test]
    fn linear_system_evolves_by_pure_exponentials() {
        let field: VectorField<C64> = VectorField::new(
            2,
            vec![
                PolyTerm::new(0, vec![1, 0], C64::new(-0.3, 1.0)),
                PolyTerm::new(1, vec![0, 1], C64::new(0.2, -0.5)),
            ],
        )
        .unwrap();
        let spectrum = vec![C64::new(-0.3, 1.0), C64::new(0.2, -0.5)];
        let x0 = [C64::new(0.1, 0.0), C64::new(-0.2, 0.1)];
        let t = 0.7;
        let got = evolve_near_fixed_point(&field, &spectrum, &x0, t, 5).unwrap();
        for i in 0..2 {
            let exact = x0[i] * (spectrum[i] * t).exp();
            assert!((got[i] - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn small_denominators_find_the_one_two_resonance() {
        let spectrum = [C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
        let scan = small_denominator_scan(&spectrum, 2);
        let (n, target, value) = &scan[0];
        assert_eq!(n, &vec![2, 0]);
        assert_eq!(*target, 1);
        assert!(value.norm() < 1e-15);
    }

    #[test]
    fn golden_ratio_spectrum_has_no_small_zero() {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let spectrum = [C64::new(1.0, 0.0), C64::new(phi, 0.0)];
        let scan = small_denominator_scan(&spectrum, 20);
        assert!(scan[0].2.norm() > 1e-9);
        assert!(empirical_diophantine_m(&spectrum, 20, 2.0).is_some());
    }

    #[test]
    fn opposite_eigenvalues_resonate_for_both_targets() {
        // λ = (1,−1): the smallest resonant monomials are x²y feeding x and
        // xy² feeding y; they enter the scan at |n|₁ = 3 and vanish exactly
        // for the matching target.
        let spectrum = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];
        let scan = small_denominator_scan(&spectrum, 3);
        let zeros: Vec<(Vec<u32>, usize)> = scan
            .iter()
            .take_while(|e| e.2.norm() < 1e-15)
            .map(|e| (e.0.clone(), e.1))
            .collect();
        assert!(zeros.contains(&(vec![2, 1], 0)));
        assert!(zeros.contains(&(vec![1, 2], 1)));
        assert_eq!(zeros.len(), 2);
        assert!(empirical_diophantine_m(&spectrum, 3, 2.0).is_none());
        // Within |n|₁ ≤ 2 every denominator stays at distance 1.
        let short = small_denominator_scan(&spectrum, 2);
        assert!((short[0].2.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_order_term_examples() {
        let spectrum = [C64::new(1.0, 0.0); 3];
        let p = PolyTerm::new(0, vec![2, 0, 0], C64::new(1.0, 0.0));
        let v = first_order_term(&spectrum, &p, 1.0);
        let e = 1f64.exp();
        assert!((v - C64::new(e * e - e, 0.0)).norm() < 1e-12);
        assert_eq!(first_order_term(&spectrum, &p, 0.0), C64::zero());
        // Resonant limit: λ_m + λ_n = λ_i.
        let res_spectrum = [C64::new(2.0, 0.0), C64::new(1.0, 0.0)];
        let res_p = PolyTerm::new(0, vec![0, 2], C64::new(3.0, 0.0));
        let v = first_order_term(&res_spectrum, &res_p, 0.8);
        let expected = 3.0 * 0.8 * (2.0f64 * 0.8).exp();
        assert!((v - C64::new(expected, 0.0)).norm() < 1e-12);
        // Quadrature agrees in both regimes.
        let q = first_order_term_quadrature(&spectrum, &p, 1.0).unwrap();
        assert!((first_order_term(&spectrum, &p, 1.0) - q).norm() < 1e-10);
        let qr = first_order_term_quadrature(&res_spectrum, &res_p, 0.8).unwrap();
        assert!((v - qr).norm() < 1e-9);
    }

    #[test]
    fn perturbation_bound_scales_linearly_in_m() {
        let field: VectorField<C64> =
            VectorField::new(1, vec![PolyTerm::new(0, vec![2], C64::new(1.0, 0.0))]).unwrap();
        let b1 = perturbation_radius_bound(&field, &DiophantineParams::new(1.0, 2.0, 10), 6)
            .unwrap();
        let b2 = perturbation_radius_bound(&field, &DiophantineParams::new(3.0, 2.0, 10), 6)
            .unwrap();
        assert!((b2 / b1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn perturbation_bound_is_monotone_in_truncation() {
        let field: VectorField<C64> =
            VectorField::new(1, vec![PolyTerm::new(0, vec![2], C64::new(1.0, 0.0))]).unwrap();
        let params = DiophantineParams::new(1.0, 3.0, 10);
        let mut prev = f64::INFINITY;
        for n in 1..=8 {
            let b = perturbation_radius_bound(&field, &params, n).unwrap();
            assert!(b <= prev + 1e-15, "n={n}: {b} > {prev}");
            prev = b;
        }
    }

    #[test]
    fn nu_zero_bound_relates_to_corrected_radius() {
        // At ν=0 the bound is (1/‖T‖)·(#diagrams)^{-1/N}; the corrected
        // radius for s=2 is 1/‖T‖. Their ratio must be the explicit count
        // factor, tying the two formulas together.
        let field: VectorField<C64> =
            VectorField::new(1, vec![PolyTerm::new(0, vec![2], C64::new(2.0, 0.0))]).unwrap();
        let n = 6;
        let bound =
            perturbation_radius_bound(&field, &DiophantineParams::new(1.0, 0.0, 10), n).unwrap();
        let report = crate::flow::radius_estimate(&field, 1.0).unwrap();
        let catalan_n = 132.0f64; // binary diagrams of order 6
        let expected_ratio = catalan_n.powf(-1.0 / n as f64);
        assert!((bound / report.corrected_bound - expected_ratio).abs() < 1e-12);
    }

    #[test]
    fn polymap_compose_and_differential_are_consistent() {
        // f(x,y) = (x + y², y), v = (x², xy): check (Df)·v by hand.
        let mut f: PolyMap<CQ> = PolyMap::identity(2);
        f.add_term(0, vec![0, 2], CQ::one());
        let mut v = PolyMap::zero(2);
        v.add_term(0, vec![2, 0], CQ::one());
        v.add_term(1, vec![1, 1], CQ::one());
        let dfv = f.differential_apply(&v, 4).unwrap();
        // Row 0: 1·v0 + 2y·v1 = x² + 2xy²; row 1: v1 = xy.
        assert_eq!(dfv.coefficient(0, &[2, 0]), CQ::one());
        assert_eq!(dfv.coefficient(0, &[1, 2]), CQ::from_ratio(2, 1));
        assert_eq!(dfv.coefficient(1, &[1, 1]), CQ::one());
        // Composition with identity is itself.
        let id = PolyMap::identity(2);
        assert_eq!(f.compose(&id, 4).unwrap(), f);
        assert_eq!(id.compose(&f, 4).unwrap(), f);
    }

    #[test]
    fn triangular_inverse_requires_identity_linear_part() {
        let mut f: PolyMap<CQ> = PolyMap::zero(1);
        f.add_term(0, vec![1], CQ::from_ratio(2, 1));
        assert!(f.inverse_triangular(3).is_err());
    }
}
