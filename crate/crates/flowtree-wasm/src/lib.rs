//! Browser bindings: a thin JSON-string facade over the flowtree crate for
//! the static demo page in `www/`.
//!
//! Every exported function takes and returns strings; failures come back as
//! `{"error": "..."}` documents rather than thrown exceptions, so the page
//! needs no unwinding glue and the same functions are testable on the host
//! without a wasm toolchain.

use flowtree::{
    build_series, evaluate_series, linearizing_map, parse_field, radius_estimate,
    small_denominator_scan, VectorField, C64,
};

#[cfg(target_arch = "wasm32")]
use wasm_bindgen::prelude::wasm_bindgen;

fn error_doc(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": msg.to_string() }).to_string()
}

fn parse_x0(text: &str, dimension: usize) -> Result<Vec<C64>, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != dimension {
        return Err(format!("x0 has {} components, field dimension is {dimension}", parts.len()));
    }
    parts
        .iter()
        .map(|p| {
            let (re, im) = match p.split_once(':') {
                Some((r, i)) => (r, i),
                None => (*p, "0"),
            };
            match (re.trim().parse::<f64>(), im.trim().parse::<f64>()) {
                (Ok(re), Ok(im)) => Ok(C64::new(re, im)),
                _ => Err(format!("bad x0 component {p:?}")),
            }
        })
        .collect()
}

fn spectrum_from_field(field: &VectorField<C64>) -> Result<Vec<C64>, String> {
    if let Some(s) = field.spectrum() {
        return Ok(s.to_vec());
    }
    let mut diag = vec![C64::new(0.0, 0.0); field.dimension()];
    for term in field.terms() {
        if term.degree() != 1 {
            continue;
        }
        let j = term.exponents.iter().position(|&e| e == 1).expect("degree-1 term");
        if j != term.target {
            return Err(format!("linear part is not diagonal ({})", term.describe()));
        }
        diag[j] = term.coeff;
    }
    Ok(diag)
}

/// Evolution-series flow curve on `samples+1` grid points in [0, t_max],
/// with the corrected radius/time bound for the blow-up overlay. Stops the
/// curve at the first non-finite value and reports where.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn flow_curve(field_json: &str, x0_csv: &str, t_max: f64, order: usize, samples: usize) -> String {
    let field: VectorField<C64> = match parse_field(field_json) {
        Ok(f) => f,
        Err(e) => return error_doc(e),
    };
    let x0 = match parse_x0(x0_csv, field.dimension()) {
        Ok(v) => v,
        Err(e) => return error_doc(e),
    };
    if !(t_max.is_finite() && t_max > 0.0) || samples == 0 || order == 0 {
        return error_doc("need t_max > 0, samples > 0, order > 0");
    }
    let series = build_series(&field, order.min(14));
    let mut times = Vec::new();
    let mut components: Vec<Vec<f64>> = vec![Vec::new(); field.dimension()];
    let mut norms = Vec::new();
    let mut incomplete_at: Option<f64> = None;
    for k in 0..=samples.min(2000) {
        let tk = t_max * k as f64 / samples as f64;
        let x = match evaluate_series(&series, &x0, &C64::new(tk, 0.0)) {
            Ok(x) => x,
            Err(e) => return error_doc(e),
        };
        let norm = x.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        if !norm.is_finite() {
            incomplete_at = Some(tk);
            break;
        }
        times.push(tk);
        for (i, v) in x.iter().enumerate() {
            components[i].push(v.re);
        }
        norms.push(norm);
    }
    let x0_norm = x0.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let time_bound = radius_estimate(&field, x0_norm).ok().and_then(|r| r.time_bound);
    serde_json::json!({
        "times": times,
        "components": components,
        "norms": norms,
        "time_bound": time_bound,
        "incomplete_at": incomplete_at,
        "truncation": series.truncation(),
        "diagram_count": series.diagram_count(),
    })
    .to_string()
}

/// Linearizing-map coefficients near the origin; a resonance comes back as
/// an `{"error": ...}` document naming the offending sub-diagram.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn linearize_map(field_json: &str, order: usize) -> String {
    let field: VectorField<C64> = match parse_field(field_json) {
        Ok(f) => f,
        Err(e) => return error_doc(e),
    };
    let spectrum = match spectrum_from_field(&field) {
        Ok(s) => s,
        Err(e) => return error_doc(e),
    };
    let series = match linearizing_map(&field, &spectrum, order.clamp(1, 8)) {
        Ok(s) => s,
        Err(e) => return error_doc(e),
    };
    let terms: Vec<serde_json::Value> = series
        .terms()
        .iter()
        .map(|(skeleton, c)| {
            serde_json::json!({
                "skeleton": skeleton.to_text(),
                "target": skeleton.target(),
                "order": skeleton.order(),
                "open_counts": skeleton.open_counts(field.dimension()),
                "coeff": [c.re, c.im],
            })
        })
        .collect();
    serde_json::json!({
        "dimension": field.dimension(),
        "order": series.order(),
        "spectrum": spectrum.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>(),
        "terms": terms,
    })
    .to_string()
}

/// Sorted small denominators (λ, n−e_i) for 2 ≤ |n|₁ ≤ bound; the leading
/// entries show how close the spectrum is to resonance.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn denominator_scan(spectrum_json: &str, bound: usize) -> String {
    let pairs: Vec<[f64; 2]> = match serde_json::from_str(spectrum_json) {
        Ok(p) => p,
        Err(e) => return error_doc(format!("spectrum must be [[re,im],...]: {e}")),
    };
    if pairs.is_empty() || pairs.len() > 6 {
        return error_doc("spectrum must have 1 to 6 entries");
    }
    let bound = bound.clamp(2, 8);
    let spectrum: Vec<C64> = pairs.iter().map(|p| C64::new(p[0], p[1])).collect();
    let scan = small_denominator_scan(&spectrum, bound);
    let entries: Vec<serde_json::Value> = scan
        .iter()
        .take(60)
        .map(|(n, target, value)| {
            serde_json::json!({
                "n": n,
                "target": target,
                "value": [value.re, value.im],
                "norm": value.norm(),
            })
        })
        .collect();
    serde_json::json!({ "bound": bound, "entries": entries }).to_string()
}
