//! Polynomial vector fields in monomial normal form.
//!
//! A field `F` on `C^d` is a finite sum of terms `coeff * x^e` directed at a
//! target coordinate. Each homogeneous degree-`s` slice doubles as a symmetric
//! `(1, s)` tensor: the monomial coefficients determine the tensor entries up
//! to the multinomial symmetry factor, and [`VectorField::apply_component`]
//! evaluates that tensor multilinearly on `s` distinct argument vectors.
//!
//! The module also provides the tensor-algebra primitives built on top of the
//! slices: single-slot contraction, the slot-summed star product, the induced
//! commutator bracket, and a Frobenius upper bound for the operator norm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::scalar::{Scalar, C64};

/// One monomial term `coeff * x^exponents` feeding coordinate `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTerm<S> {
    pub target: usize,
    pub exponents: Vec<u32>,
    pub coeff: S,
}

impl<S: Scalar> PolyTerm<S> {
    pub fn new(target: usize, exponents: Vec<u32>, coeff: S) -> Self {
        PolyTerm { target, exponents, coeff }
    }

    /// Total degree of the monomial (the arity of the tensor slice it
    /// belongs to).
    pub fn degree(&self) -> usize {
        self.exponents.iter().map(|&e| e as usize).sum()
    }

    /// Slot labels in canonical (sorted) order, one per unit of exponent:
    /// `x1^2 x0` yields `[0, 1, 1]`.
    pub fn slot_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.degree());
        for (j, &e) in self.exponents.iter().enumerate() {
            for _ in 0..e {
                out.push(j);
            }
        }
        out
    }

    /// Human-readable form such as `x1 <- x0^2`.
    pub fn describe(&self) -> String {
        let mono: Vec<String> = self
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(j, &e)| if e == 1 { format!("x{j}") } else { format!("x{j}^{e}") })
            .collect();
        let mono = if mono.is_empty() { "1".to_string() } else { mono.join("*") };
        format!("x{} <- {}", self.target, mono)
    }
}

/// Number of distinct slot orderings of the monomial: `s! / prod(e_j!)`.
pub fn multinomial(exponents: &[u32]) -> u128 {
    let mut result: u128 = 1;
    let mut placed: u128 = 0;
    for &e in exponents {
        for k in 1..=e as u128 {
            placed += 1;
            result = result * placed / k;
        }
    }
    result
}

/// Polynomial vector field with terms kept in canonical order
/// (degree, then target, then exponent vector).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<S> {
    dimension: usize,
    terms: Vec<PolyTerm<S>>,
    spectrum: Option<Vec<S>>,
}

impl<S: Scalar> VectorField<S> {
    /// Builds a field, merging duplicate monomials and dropping zero
    /// coefficients.
    pub fn new(dimension: usize, terms: Vec<PolyTerm<S>>) -> Result<Self> {
        if dimension == 0 {
            return Err(FlowError::Dimension("dimension must be positive".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.exponents.len() != dimension {
                return Err(FlowError::schema_at(
                    i,
                    format!("exponent vector has length {}, expected {}", t.exponents.len(), dimension),
                ));
            }
            if t.target >= dimension {
                return Err(FlowError::schema_at(
                    i,
                    format!("target {} out of range for dimension {}", t.target, dimension),
                ));
            }
        }
        let mut merged: BTreeMap<(usize, usize, Vec<u32>), S> = BTreeMap::new();
        for t in terms {
            let key = (t.degree(), t.target, t.exponents.clone());
            match merged.get_mut(&key) {
                Some(c) => *c = c.clone() + t.coeff,
                None => {
                    merged.insert(key, t.coeff);
                }
            }
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|((_, target, exponents), coeff)| PolyTerm { target, exponents, coeff })
            .collect();
        Ok(VectorField { dimension, terms, spectrum: None })
    }

    /// Attaches a spectrum claim; it must agree with the degree-1 part of the
    /// field, which has to be diagonal.
    pub fn with_spectrum(mut self, spectrum: Vec<S>) -> Result<Self> {
        if spectrum.len() != self.dimension {
            return Err(FlowError::schema(format!(
                "spectrum has {} entries, dimension is {}",
                spectrum.len(),
                self.dimension
            )));
        }
        let mut diagonal = vec![S::zero(); self.dimension];
        for t in self.terms_of_degree(1) {
            let j = t.slot_indices()[0];
            if j != t.target {
                return Err(FlowError::schema(format!(
                    "spectrum given but the linear part is not diagonal ({})",
                    t.describe()
                )));
            }
            diagonal[t.target] = t.coeff.clone();
        }
        for i in 0..self.dimension {
            if diagonal[i] != spectrum[i] {
                return Err(FlowError::schema(format!(
                    "spectrum entry {i} does not match the diagonal linear coefficient"
                )));
            }
        }
        self.spectrum = Some(spectrum);
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terms(&self) -> &[PolyTerm<S>] {
        &self.terms
    }

    pub fn spectrum(&self) -> Option<&[S]> {
        self.spectrum.as_deref()
    }

    pub fn terms_of_degree(&self, degree: usize) -> impl Iterator<Item = &PolyTerm<S>> {
        self.terms.iter().filter(move |t| t.degree() == degree)
    }

    /// Indices (into `terms()`) of the degree >= 2 terms.
    pub fn nonlinear_term_indices(&self) -> Vec<usize> {
        self.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.degree() >= 2)
            .map(|(i, _)| i)
            .collect()
    }

    /// Set of degrees present in the field.
    pub fn arities(&self) -> std::collections::BTreeSet<usize> {
        self.terms.iter().map(|t| t.degree()).collect()
    }

    /// Pointwise evaluation `F(x)`.
    pub fn evaluate(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.dimension {
            return Err(FlowError::Dimension(format!(
                "point has dimension {}, field has {}",
                x.len(),
                self.dimension
            )));
        }
        let mut out = vec![S::zero(); self.dimension];
        for t in &self.terms {
            let mut v = t.coeff.clone();
            for (j, &e) in t.exponents.iter().enumerate() {
                for _ in 0..e {
                    v = v * x[j].clone();
                }
            }
            out[t.target] = out[t.target].clone() + v;
        }
        Ok(out)
    }

    /// Multilinear application of the degree-`s` tensor slice to `s`
    /// argument vectors (polarization of the monomial form). With all
    /// arguments equal this reproduces the degree-`s` part of `evaluate`.
    pub fn apply_component(&self, degree: usize, args: &[Vec<S>]) -> Result<Vec<S>> {
        if args.len() != degree {
            return Err(FlowError::Dimension(format!(
                "component of degree {degree} applied to {} arguments",
                args.len()
            )));
        }
        for a in args {
            if a.len() != self.dimension {
                return Err(FlowError::Dimension("argument dimension mismatch".into()));
            }
        }
        let terms: Vec<&PolyTerm<S>> = self.terms_of_degree(degree).collect();
        if terms.is_empty() {
            return Err(FlowError::MissingComponent { arity: degree });
        }
        let mut out = vec![S::zero(); self.dimension];
        for t in terms {
            let weight =
                t.coeff.clone() * S::from_ratio(1, multinomial(&t.exponents) as i64);
            let mut remaining = t.exponents.clone();
            let mut acc = S::zero();
            polarized_sum(&mut remaining, args, 0, S::one(), &mut acc);
            out[t.target] = out[t.target].clone() + weight * acc;
        }
        Ok(out)
    }

    /// Frobenius-type upper bound for the operator norm of the degree-`s`
    /// slice, valid for the induced multilinear norm.
    pub fn component_norm_upper(&self, degree: usize) -> f64 {
        let mut sum = 0.0;
        for t in self.terms_of_degree(degree) {
            sum += t.coeff.to_c64().norm_sqr() / multinomial(&t.exponents) as f64;
        }
        sum.sqrt()
    }

    /// Sum of the per-degree bounds; dominates `|F(x)|` on the unit ball.
    pub fn operator_norm_upper(&self) -> f64 {
        self.arities().iter().map(|&s| self.component_norm_upper(s)).sum()
    }
}

fn polarized_sum<S: Scalar>(
    remaining: &mut [u32],
    args: &[Vec<S>],
    slot: usize,
    partial: S,
    acc: &mut S,
) {
    if slot == args.len() {
        *acc = acc.clone() + partial;
        return;
    }
    for j in 0..remaining.len() {
        if remaining[j] > 0 {
            remaining[j] -= 1;
            let next = partial.clone() * args[slot][j].clone();
            polarized_sum(remaining, args, slot + 1, next, acc);
            remaining[j] += 1;
        }
    }
}

/// Star product `U * V`: the sum over the slots of `U` of `V` contracted
/// into that slot. In coordinates this is the directional derivative
/// `(V . grad) U`, component-wise `sum_j V^j d_j U^i`.
pub fn star_product<S: Scalar>(u: &VectorField<S>, v: &VectorField<S>) -> Result<VectorField<S>> {
    if u.dimension() != v.dimension() {
        return Err(FlowError::Dimension("star product of fields with different dimensions".into()));
    }
    let d = u.dimension();
    let mut terms = Vec::new();
    for tu in u.terms() {
        for (j, &e) in tu.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            for tv in v.terms().iter().filter(|t| t.target == j) {
                let mut exps = tu.exponents.clone();
                exps[j] -= 1;
                for (l, &ev) in tv.exponents.iter().enumerate() {
                    exps[l] += ev;
                }
                terms.push(PolyTerm::new(
                    tu.target,
                    exps,
                    tu.coeff.clone() * tv.coeff.clone() * S::from_usize(e as usize),
                ));
            }
        }
    }
    VectorField::new(d, terms)
}

/// Commutator bracket `[U, V] = U * V - V * U` of the star product.
/// For linear fields with matrices `A`, `B` this evaluates to the matrix
/// commutator `AB - BA` acting on `x`.
pub fn bracket<S: Scalar>(u: &VectorField<S>, v: &VectorField<S>) -> Result<VectorField<S>> {
    let uv = star_product(u, v)?;
    let vu = star_product(v, u)?;
    let mut terms = uv.terms().to_vec();
    terms.extend(vu.terms().iter().map(|t| PolyTerm::new(t.target, t.exponents.clone(), -t.coeff.clone())));
    VectorField::new(u.dimension(), terms)
}

/// Contraction of `inner`'s output into one lower slot of `outer`.
///
/// Both arguments are homogeneous tensor slices given as term lists. Because
/// the slices are symmetric the result does not depend on which slot is
/// chosen; `slot` is validated against the arity and the shared value
/// `(1/s) (inner . grad) outer` is returned, a slice of degree
/// `s_outer + s_inner - 1`.
pub fn contract_at<S: Scalar>(
    outer: &[PolyTerm<S>],
    slot: usize,
    inner: &[PolyTerm<S>],
) -> Result<Vec<PolyTerm<S>>> {
    let s_outer = homogeneous_degree(outer)?;
    if s_outer == 0 {
        return Err(FlowError::Invalid("cannot contract into a degree-0 tensor".into()));
    }
    if slot >= s_outer {
        return Err(FlowError::Invalid(format!("slot {slot} out of range for arity {s_outer}")));
    }
    homogeneous_degree(inner)?;
    let dim = outer[0].exponents.len();
    let mut merged: BTreeMap<(usize, Vec<u32>), S> = BTreeMap::new();
    for to in outer {
        for (j, &e) in to.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            for ti in inner.iter().filter(|t| t.target == j) {
                if ti.exponents.len() != dim {
                    return Err(FlowError::Dimension("contract_at dimension mismatch".into()));
                }
                let mut exps = to.exponents.clone();
                exps[j] -= 1;
                for (l, &ev) in ti.exponents.iter().enumerate() {
                    exps[l] += ev;
                }
                let c = to.coeff.clone()
                    * ti.coeff.clone()
                    * S::from_ratio(e as i64, s_outer as i64);
                let key = (to.target, exps);
                match merged.get_mut(&key) {
                    Some(v) => *v = v.clone() + c,
                    None => {
                        merged.insert(key, c);
                    }
                }
            }
        }
    }
    Ok(merged
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((target, exponents), coeff)| PolyTerm { target, exponents, coeff })
        .collect())
}

fn homogeneous_degree<S: Scalar>(terms: &[PolyTerm<S>]) -> Result<usize> {
    let mut deg = None;
    for t in terms {
        match deg {
            None => deg = Some(t.degree()),
            Some(d) if d != t.degree() => {
                return Err(FlowError::Invalid("term list is not homogeneous".into()))
            }
            _ => {}
        }
    }
    deg.ok_or_else(|| FlowError::Invalid("empty tensor slice".into()))
}

// ---------------------------------------------------------------------------
// Canonical JSON encoding
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FieldFileTerm {
    target: usize,
    exponents: Vec<u32>,
    coeff: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldFile {
    dimension: usize,
    terms: Vec<FieldFileTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum: Option<Vec<[f64; 2]>>,
}

/// Parses the canonical JSON field description.
///
/// Duplicate monomials are merged by coefficient addition. Errors carry the
/// index of the offending term. In the exact domain the `f64` coefficients
/// convert losslessly.
pub fn parse_field<S: Scalar>(json: &str) -> Result<VectorField<S>> {
    let file: FieldFile =
        serde_json::from_str(json).map_err(|e| FlowError::schema(format!("invalid JSON: {e}")))?;
    for (i, t) in file.terms.iter().enumerate() {
        if !t.coeff[0].is_finite() || !t.coeff[1].is_finite() {
            return Err(FlowError::schema_at(i, "coefficient is not finite".to_string()));
        }
    }
    let terms = file
        .terms
        .iter()
        .map(|t| PolyTerm::new(t.target, t.exponents.clone(), S::from_f64_parts(t.coeff[0], t.coeff[1])))
        .collect();
    let field = VectorField::new(file.dimension, terms)?;
    match file.spectrum {
        Some(spec) => {
            for (i, s) in spec.iter().enumerate() {
                if !s[0].is_finite() || !s[1].is_finite() {
                    return Err(FlowError::schema(format!("spectrum entry {i} is not finite")));
                }
            }
            field.with_spectrum(spec.iter().map(|s| S::from_f64_parts(s[0], s[1])).collect())
        }
        None => Ok(field),
    }
}

/// Serializes a field back to the canonical JSON form (terms in canonical
/// order, so parse-serialize round-trips are stable).
pub fn serialize_field(field: &VectorField<C64>) -> String {
    let file = FieldFile {
        dimension: field.dimension(),
        terms: field
            .terms()
            .iter()
            .map(|t| FieldFileTerm {
                target: t.target,
                exponents: t.exponents.clone(),
                coeff: [t.coeff.re, t.coeff.im],
            })
            .collect(),
        spectrum: field
            .spectrum()
            .map(|s| s.iter().map(|z| [z.re, z.im]).collect()),
    };
    serde_json::to_string_pretty(&file).expect("field serialization cannot fail")
}
