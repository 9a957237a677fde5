//! Contraction diagrams: planar rooted trees whose vertices carry tensor
//! arities, plus the index-labeled skeleton refinement.
//!
//! A vertex of arity `s` has `s` ordered slots; a slot either holds a child
//! vertex or stays open (an open slot is contracted with the initial point
//! when the diagram is evaluated). Children are ordered, so two trees that
//! differ only by a slot swap are distinct diagrams; with symmetric tensors
//! they evaluate equally and the planar count is what makes the reciprocal
//! tree-factorial weights sum to one order by order.
//!
//! Skeleton diagrams refine this: every vertex is a single monomial term of a
//! field and every edge carries a coordinate index, with a child's target
//! required to match the label of the slot it occupies.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::One;

use crate::error::{FlowError, Result};
use crate::field::VectorField;
use crate::scalar::{Q, Scalar};

// ---------------------------------------------------------------------------
// Diagrams
// ---------------------------------------------------------------------------

/// Planar rooted tree with arity-labeled vertices. Cheap to clone (shared
/// structure); ordering is the canonical depth-first lexicographic order on
/// (arity, children).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagram(Arc<DiagNode>);

#[derive(Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct DiagNode {
    arity: usize,
    slots: Vec<Option<Diagram>>,
}

impl Diagram {
    /// Single vertex of the given arity with all slots open.
    pub fn vertex(arity: usize) -> Self {
        Diagram(Arc::new(DiagNode { arity, slots: vec![None; arity] }))
    }

    /// Vertex with explicit slot contents; the arity is the slot count.
    pub fn with_slots(slots: Vec<Option<Diagram>>) -> Self {
        Diagram(Arc::new(DiagNode { arity: slots.len(), slots }))
    }

    pub fn arity(&self) -> usize {
        self.0.arity
    }

    pub fn slots(&self) -> &[Option<Diagram>] {
        &self.0.slots
    }

    /// Number of vertices.
    pub fn order(&self) -> usize {
        1 + self.0.slots.iter().flatten().map(|c| c.order()).sum::<usize>()
    }

    /// Number of open slots; always `1 + Σ (arity_v - 1)` over vertices.
    pub fn open_edges(&self) -> usize {
        self.0
            .slots
            .iter()
            .map(|s| match s {
                None => 1,
                Some(c) => c.open_edges(),
            })
            .sum()
    }

    /// Product over vertices of the order of the subtree rooted there.
    pub fn tree_factorial(&self) -> u128 {
        self.order_and_factorial().1
    }

    fn order_and_factorial(&self) -> (u128, u128) {
        let mut order: u128 = 1;
        let mut product: u128 = 1;
        for child in self.0.slots.iter().flatten() {
            let (o, f) = child.order_and_factorial();
            order += o;
            product *= f;
        }
        (order, order * product)
    }

    /// The exact weight `1 / D!` the diagram carries in the evolution series.
    pub fn coefficient(&self) -> Q {
        Q::new(BigInt::one(), BigInt::from(self.tree_factorial()))
    }

    /// One rooted sub-diagram per vertex (the subtree hanging there),
    /// depth-first from the root.
    pub fn subdiagrams(&self) -> Vec<Diagram> {
        let mut out = Vec::new();
        self.collect_subdiagrams(&mut out);
        out
    }

    fn collect_subdiagrams(&self, out: &mut Vec<Diagram>) {
        out.push(self.clone());
        for child in self.0.slots.iter().flatten() {
            child.collect_subdiagrams(out);
        }
    }

    /// Paths (slot index sequences from the root) to every non-root vertex;
    /// each path names the internal edge above that vertex.
    pub fn internal_edges(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_edges(&mut prefix, &mut out);
        out
    }

    fn collect_edges(&self, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for (k, slot) in self.0.slots.iter().enumerate() {
            if let Some(child) = slot {
                prefix.push(k);
                out.push(prefix.clone());
                child.collect_edges(prefix, out);
                prefix.pop();
            }
        }
    }

    /// Cuts the given internal edges; every cut slot becomes open and the
    /// detached subtree becomes a part of its own.
    pub fn cut(&self, edges: &std::collections::BTreeSet<Vec<usize>>) -> Vec<Diagram> {
        let mut parts = Vec::new();
        let mut prefix = Vec::new();
        let root = self.rebuild_cut(edges, &mut prefix, &mut parts);
        let mut all = vec![root];
        all.extend(parts);
        all
    }

    fn rebuild_cut(
        &self,
        edges: &std::collections::BTreeSet<Vec<usize>>,
        prefix: &mut Vec<usize>,
        parts: &mut Vec<Diagram>,
    ) -> Diagram {
        let mut slots = Vec::with_capacity(self.0.arity);
        for (k, slot) in self.0.slots.iter().enumerate() {
            match slot {
                None => slots.push(None),
                Some(child) => {
                    prefix.push(k);
                    if edges.contains(prefix) {
                        let part = child.rebuild_cut(edges, prefix, parts);
                        parts.push(part);
                        slots.push(None);
                    } else {
                        slots.push(Some(child.rebuild_cut(edges, prefix, parts)));
                    }
                    prefix.pop();
                }
            }
        }
        Diagram::with_slots(slots)
    }

    /// All `2^(#internal edges)` partitions into sub-diagrams.
    pub fn partitions(&self) -> Vec<DiagramPartition> {
        let edges = self.internal_edges();
        let mut out = Vec::with_capacity(1 << edges.len());
        for mask in 0u64..(1u64 << edges.len()) {
            let cutset: std::collections::BTreeSet<Vec<usize>> = edges
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, e)| e.clone())
                .collect();
            out.push(DiagramPartition { parts: self.cut(&cutset) });
        }
        out
    }

    /// Canonical text form, e.g. `T2(T2(x,x),x)`; arity-0 vertices print as
    /// `T0`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    fn write_text(&self, out: &mut String) {
        out.push('T');
        out.push_str(&self.0.arity.to_string());
        if self.0.arity > 0 {
            out.push('(');
            for (k, slot) in self.0.slots.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                match slot {
                    None => out.push('x'),
                    Some(c) => c.write_text(out),
                }
            }
            out.push(')');
        }
    }

    /// Parses the canonical text form; inverse of [`Diagram::to_text`].
    pub fn parse_text(text: &str) -> Result<Diagram> {
        let bytes = text.as_bytes();
        let mut pos = 0usize;
        let d = parse_node(bytes, &mut pos)?;
        if pos != bytes.len() {
            return Err(FlowError::DiagramParse { msg: "trailing input".into(), at: pos });
        }
        Ok(d)
    }
}

fn parse_node(bytes: &[u8], pos: &mut usize) -> Result<Diagram> {
    if bytes.get(*pos) != Some(&b'T') {
        return Err(FlowError::DiagramParse { msg: "expected 'T'".into(), at: *pos });
    }
    *pos += 1;
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err(FlowError::DiagramParse { msg: "expected arity digits".into(), at: *pos });
    }
    let arity: usize = std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| FlowError::DiagramParse { msg: "arity out of range".into(), at: start })?;
    if arity == 0 {
        // Accept both `T0` and `T0()`.
        if bytes.get(*pos) == Some(&b'(') {
            if bytes.get(*pos + 1) != Some(&b')') {
                return Err(FlowError::DiagramParse {
                    msg: "arity-0 vertex cannot have children".into(),
                    at: *pos,
                });
            }
            *pos += 2;
        }
        return Ok(Diagram::vertex(0));
    }
    if bytes.get(*pos) != Some(&b'(') {
        return Err(FlowError::DiagramParse { msg: "expected '('".into(), at: *pos });
    }
    *pos += 1;
    let mut slots = Vec::with_capacity(arity);
    for k in 0..arity {
        if k > 0 {
            if bytes.get(*pos) != Some(&b',') {
                return Err(FlowError::DiagramParse { msg: "expected ','".into(), at: *pos });
            }
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'x') {
            *pos += 1;
            slots.push(None);
        } else {
            slots.push(Some(parse_node(bytes, pos)?));
        }
    }
    if bytes.get(*pos) != Some(&b')') {
        return Err(FlowError::DiagramParse { msg: "expected ')'".into(), at: *pos });
    }
    *pos += 1;
    Ok(Diagram::with_slots(slots))
}

/// One way of splitting a diagram along a subset of its internal edges.
#[derive(Debug, Clone)]
pub struct DiagramPartition {
    pub parts: Vec<Diagram>,
}

/// All planar rooted trees with `order` vertices and arities drawn from
/// `arities`, in canonical order.
pub fn enumerate_diagrams(
    arities: &std::collections::BTreeSet<usize>,
    order: usize,
) -> Vec<Diagram> {
    let mut memo: HashMap<usize, Vec<Diagram>> = HashMap::new();
    let mut result = enumerate_diagrams_memo(arities, order, &mut memo);
    result.sort();
    result
}

fn enumerate_diagrams_memo(
    arities: &std::collections::BTreeSet<usize>,
    order: usize,
    memo: &mut HashMap<usize, Vec<Diagram>>,
) -> Vec<Diagram> {
    if order == 0 {
        return Vec::new();
    }
    if let Some(hit) = memo.get(&order) {
        return hit.clone();
    }
    let mut out = Vec::new();
    for &s in arities {
        for comp in compositions(order - 1, s) {
            let mut slot_choices: Vec<Vec<Option<Diagram>>> = Vec::with_capacity(s);
            for &part in &comp {
                if part == 0 {
                    slot_choices.push(vec![None]);
                } else {
                    slot_choices.push(
                        enumerate_diagrams_memo(arities, part, memo)
                            .into_iter()
                            .map(Some)
                            .collect(),
                    );
                }
            }
            cartesian(&slot_choices, &mut |slots| out.push(Diagram::with_slots(slots.to_vec())));
        }
    }
    memo.insert(order, out.clone());
    out
}

/// Ordered decompositions of `total` into `parts` non-negative summands.
pub(crate) fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    let mut current = vec![0usize; parts];
    fn rec(total: usize, idx: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if idx + 1 == current.len() {
            current[idx] = total;
            out.push(current.clone());
            return;
        }
        for v in 0..=total {
            current[idx] = v;
            rec(total - v, idx + 1, current, out);
        }
    }
    rec(total, 0, &mut current, &mut out);
    out
}

fn cartesian<T: Clone>(choices: &[Vec<T>], emit: &mut impl FnMut(&[T])) {
    let mut picked: Vec<T> = Vec::with_capacity(choices.len());
    fn rec<T: Clone>(choices: &[Vec<T>], idx: usize, picked: &mut Vec<T>, emit: &mut impl FnMut(&[T])) {
        if idx == choices.len() {
            emit(picked);
            return;
        }
        for c in &choices[idx] {
            picked.push(c.clone());
            rec(choices, idx + 1, picked, emit);
            picked.pop();
        }
    }
    rec(choices, 0, &mut picked, emit);
}

/// Bottom-up contraction of a diagram against a field: every open slot
/// contributes `x0`, every vertex applies the field's component of its arity
/// to its children's values.
pub fn evaluate_diagram<S: Scalar>(
    diagram: &Diagram,
    field: &VectorField<S>,
    x0: &[S],
) -> Result<Vec<S>> {
    let args: Vec<Vec<S>> = diagram
        .slots()
        .iter()
        .map(|slot| match slot {
            None => Ok(x0.to_vec()),
            Some(child) => evaluate_diagram(child, field, x0),
        })
        .collect::<Result<_>>()?;
    field.apply_component(diagram.arity(), &args)
}

// ---------------------------------------------------------------------------
// Skeleton diagrams
// ---------------------------------------------------------------------------

/// Diagram whose vertices are individual monomial terms of a field, with a
/// coordinate index on every edge. Slot `k` of a vertex carries the `k`-th
/// entry of the term's sorted slot labels, and a child in that slot must
/// target exactly that coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Skeleton(Arc<SkelNode>);

#[derive(Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct SkelNode {
    term_index: usize,
    target: usize,
    slot_labels: Vec<usize>,
    slots: Vec<Option<Skeleton>>,
}

impl Skeleton {
    /// Leaf skeleton: the term alone, every slot open.
    pub fn from_term<S: Scalar>(field: &VectorField<S>, term_index: usize) -> Result<Self> {
        let term = field
            .terms()
            .get(term_index)
            .ok_or_else(|| FlowError::Invalid(format!("term index {term_index} out of range")))?;
        let labels = term.slot_indices();
        let arity = labels.len();
        Ok(Skeleton(Arc::new(SkelNode {
            term_index,
            target: term.target,
            slot_labels: labels,
            slots: vec![None; arity],
        })))
    }

    /// Skeleton with explicit slot contents; children must target the labels
    /// of the slots they occupy.
    pub fn with_slots<S: Scalar>(
        field: &VectorField<S>,
        term_index: usize,
        slots: Vec<Option<Skeleton>>,
    ) -> Result<Self> {
        let leaf = Skeleton::from_term(field, term_index)?;
        if slots.len() != leaf.arity() {
            return Err(FlowError::Invalid("slot count does not match term arity".into()));
        }
        for (k, slot) in slots.iter().enumerate() {
            if let Some(child) = slot {
                if child.target() != leaf.0.slot_labels[k] {
                    return Err(FlowError::Invalid(format!(
                        "slot {k} carries index {}, child targets {}",
                        leaf.0.slot_labels[k],
                        child.target()
                    )));
                }
            }
        }
        Ok(Skeleton(Arc::new(SkelNode {
            term_index,
            target: leaf.0.target,
            slot_labels: leaf.0.slot_labels.clone(),
            slots,
        })))
    }

    pub fn term_index(&self) -> usize {
        self.0.term_index
    }

    /// Output coordinate of the root edge.
    pub fn target(&self) -> usize {
        self.0.target
    }

    pub fn arity(&self) -> usize {
        self.0.slot_labels.len()
    }

    pub fn slot_labels(&self) -> &[usize] {
        &self.0.slot_labels
    }

    pub fn slots(&self) -> &[Option<Skeleton>] {
        &self.0.slots
    }

    pub fn order(&self) -> usize {
        1 + self.0.slots.iter().flatten().map(|c| c.order()).sum::<usize>()
    }

    /// Multiset of open-edge coordinate indices as a count vector `n`.
    pub fn open_counts(&self, dimension: usize) -> Vec<u32> {
        let mut n = vec![0u32; dimension];
        self.accumulate_open(&mut n);
        n
    }

    fn accumulate_open(&self, n: &mut [u32]) {
        for (k, slot) in self.0.slots.iter().enumerate() {
            match slot {
                None => n[self.0.slot_labels[k]] += 1,
                Some(child) => child.accumulate_open(n),
            }
        }
    }

    /// `λ(S)`: sum of the open-edge eigenvalues minus the root eigenvalue.
    /// Equals the sum of per-vertex λ values, hence additive under
    /// contraction.
    pub fn lambda<S: Scalar>(&self, spectrum: &[S]) -> S {
        let mut acc = S::zero() - spectrum[self.0.target].clone();
        let n = self.open_counts(spectrum.len());
        for (j, &count) in n.iter().enumerate() {
            for _ in 0..count {
                acc = acc + spectrum[j].clone();
            }
        }
        acc
    }

    /// λ of every rooted sub-skeleton, depth-first (root first), paired with
    /// the vertex path.
    pub fn rooted_lambdas<S: Scalar>(&self, spectrum: &[S]) -> Vec<(Vec<usize>, S)> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_rooted_lambdas(spectrum, &mut prefix, &mut out);
        out
    }

    fn collect_rooted_lambdas<S: Scalar>(
        &self,
        spectrum: &[S],
        prefix: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, S)>,
    ) -> S {
        // Per-vertex identity: every slot label counts, because a filled
        // slot's child subtracts the same eigenvalue back via its target.
        let mut acc = S::zero() - spectrum[self.0.target].clone();
        for &label in &self.0.slot_labels {
            acc = acc + spectrum[label].clone();
        }
        let slot_at = out.len();
        out.push((prefix.clone(), S::zero())); // placeholder, filled below
        for (k, slot) in self.0.slots.iter().enumerate() {
            if let Some(child) = slot {
                prefix.push(k);
                let child_lambda = child.collect_rooted_lambdas(spectrum, prefix, out);
                prefix.pop();
                acc = acc + child_lambda;
            }
        }
        out[slot_at].1 = acc.clone();
        acc
    }

    /// Product of the term coefficients over all vertices.
    pub fn coefficient_product<S: Scalar>(&self, field: &VectorField<S>) -> S {
        let mut c = field.terms()[self.0.term_index].coeff.clone();
        for child in self.0.slots.iter().flatten() {
            c = c * child.coefficient_product(field);
        }
        c
    }

    /// Term indices used by the skeleton, deduplicated and sorted.
    pub fn used_terms(&self) -> Vec<usize> {
        let mut v = Vec::new();
        self.collect_used(&mut v);
        v.sort_unstable();
        v.dedup();
        v
    }

    fn collect_used(&self, v: &mut Vec<usize>) {
        v.push(self.0.term_index);
        for child in self.0.slots.iter().flatten() {
            child.collect_used(v);
        }
    }

    /// Paths to every non-root vertex.
    pub fn internal_edges(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_edges(&mut prefix, &mut out);
        out
    }

    fn collect_edges(&self, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for (k, slot) in self.0.slots.iter().enumerate() {
            if let Some(child) = slot {
                prefix.push(k);
                out.push(prefix.clone());
                child.collect_edges(prefix, out);
                prefix.pop();
            }
        }
    }

    /// Sub-skeleton rooted at the vertex reached by `path`.
    pub fn subtree_at(&self, path: &[usize]) -> Result<Skeleton> {
        let mut node = self;
        for &k in path {
            node = node
                .0
                .slots
                .get(k)
                .and_then(|s| s.as_ref())
                .ok_or_else(|| FlowError::Invalid(format!("no vertex at path {path:?}")))?;
        }
        Ok(node.clone())
    }

    /// Detaches the subtree at `path` (which must name a non-root vertex):
    /// returns the remainder (slot opened) and the detached part.
    pub fn detach_at(&self, path: &[usize]) -> Result<(Skeleton, Skeleton)> {
        if path.is_empty() {
            return Err(FlowError::Invalid("cannot detach the root".into()));
        }
        let part = self.subtree_at(path)?;
        let rest = self.rebuild_detached(path)?;
        Ok((rest, part))
    }

    fn rebuild_detached(&self, path: &[usize]) -> Result<Skeleton> {
        let k = path[0];
        let mut slots = self.0.slots.clone();
        let child = slots
            .get(k)
            .and_then(|s| s.clone())
            .ok_or_else(|| FlowError::Invalid(format!("no child in slot {k}")))?;
        if path.len() == 1 {
            slots[k] = None;
        } else {
            slots[k] = Some(child.rebuild_detached(&path[1..])?);
        }
        Ok(Skeleton(Arc::new(SkelNode {
            term_index: self.0.term_index,
            target: self.0.target,
            slot_labels: self.0.slot_labels.clone(),
            slots,
        })))
    }

    /// Paths to every open slot (vertex path with the slot index appended),
    /// with the coordinate label the slot carries.
    pub fn open_slots(&self) -> Vec<(Vec<usize>, usize)> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_open_slots(&mut prefix, &mut out);
        out
    }

    fn collect_open_slots(&self, prefix: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, usize)>) {
        for (k, slot) in self.0.slots.iter().enumerate() {
            prefix.push(k);
            match slot {
                None => out.push((prefix.clone(), self.0.slot_labels[k])),
                Some(child) => child.collect_open_slots(prefix, out),
            }
            prefix.pop();
        }
    }

    /// Contraction `P ⋆ Q`: plugs `sub` into the open slot at `slot_path`.
    /// The slot label must equal `sub`'s target.
    pub fn attach_at(&self, slot_path: &[usize], sub: &Skeleton) -> Result<Skeleton> {
        if slot_path.is_empty() {
            return Err(FlowError::Invalid("empty slot path".into()));
        }
        let k = slot_path[0];
        if k >= self.arity() {
            return Err(FlowError::Invalid(format!("slot {k} out of range")));
        }
        let mut slots = self.0.slots.clone();
        if slot_path.len() == 1 {
            match &slots[k] {
                Some(_) => return Err(FlowError::Invalid("slot already filled".into())),
                None => {
                    if self.0.slot_labels[k] != sub.target() {
                        return Err(FlowError::Invalid(format!(
                            "slot carries index {}, sub-diagram targets {}",
                            self.0.slot_labels[k],
                            sub.target()
                        )));
                    }
                    slots[k] = Some(sub.clone());
                }
            }
        } else {
            let child = slots[k]
                .clone()
                .ok_or_else(|| FlowError::Invalid("path crosses an open slot".into()))?;
            slots[k] = Some(child.attach_at(&slot_path[1..], sub)?);
        }
        Ok(Skeleton(Arc::new(SkelNode {
            term_index: self.0.term_index,
            target: self.0.target,
            slot_labels: self.0.slot_labels.clone(),
            slots,
        })))
    }

    /// Cuts the given internal edges, opening each cut slot.
    pub fn cut(&self, edges: &std::collections::BTreeSet<Vec<usize>>) -> Vec<Skeleton> {
        let mut parts = Vec::new();
        let mut prefix = Vec::new();
        let root = self.rebuild_cut(edges, &mut prefix, &mut parts);
        let mut all = vec![root];
        all.extend(parts);
        all
    }

    fn rebuild_cut(
        &self,
        edges: &std::collections::BTreeSet<Vec<usize>>,
        prefix: &mut Vec<usize>,
        parts: &mut Vec<Skeleton>,
    ) -> Skeleton {
        let mut slots = Vec::with_capacity(self.arity());
        for (k, slot) in self.0.slots.iter().enumerate() {
            match slot {
                None => slots.push(None),
                Some(child) => {
                    prefix.push(k);
                    if edges.contains(prefix) {
                        let part = child.rebuild_cut(edges, prefix, parts);
                        parts.push(part);
                        slots.push(None);
                    } else {
                        slots.push(Some(child.rebuild_cut(edges, prefix, parts)));
                    }
                    prefix.pop();
                }
            }
        }
        Skeleton(Arc::new(SkelNode {
            term_index: self.0.term_index,
            target: self.0.target,
            slot_labels: self.0.slot_labels.clone(),
            slots,
        }))
    }

    /// All `2^(#internal edges)` partitions.
    pub fn partitions(&self) -> Vec<Vec<Skeleton>> {
        let edges = self.internal_edges();
        let mut out = Vec::with_capacity(1 << edges.len());
        for mask in 0u64..(1u64 << edges.len()) {
            let cutset: std::collections::BTreeSet<Vec<usize>> = edges
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, e)| e.clone())
                .collect();
            out.push(self.cut(&cutset));
        }
        out
    }

    /// Compact text form `V{term}(...)` with open slots shown as their
    /// coordinate, e.g. `V1(V0(x0,x0),x0)`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    fn write_text(&self, out: &mut String) {
        out.push('V');
        out.push_str(&self.0.term_index.to_string());
        if self.arity() > 0 {
            out.push('(');
            for (k, slot) in self.0.slots.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                match slot {
                    None => {
                        out.push('x');
                        out.push_str(&self.0.slot_labels[k].to_string());
                    }
                    Some(c) => c.write_text(out),
                }
            }
            out.push(')');
        }
    }

    /// Human-readable nested form naming each vertex by its term.
    pub fn describe<S: Scalar>(&self, field: &VectorField<S>) -> String {
        let mut s = String::new();
        self.write_description(field, &mut s);
        s
    }

    fn write_description<S: Scalar>(&self, field: &VectorField<S>, out: &mut String) {
        out.push('[');
        out.push_str(&field.terms()[self.0.term_index].describe());
        out.push(']');
        if self.arity() > 0 {
            out.push('(');
            for (k, slot) in self.0.slots.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                match slot {
                    None => out.push_str(&format!("x{}", self.0.slot_labels[k])),
                    Some(c) => c.write_description(field, out),
                }
            }
            out.push(')');
        }
    }

    /// Evaluates the skeleton at `x0`: the scalar output of the root edge,
    /// placed in the target coordinate.
    pub fn evaluate<S: Scalar>(&self, field: &VectorField<S>, x0: &[S]) -> Result<Vec<S>> {
        if x0.len() != field.dimension() {
            return Err(FlowError::Dimension("x0 dimension mismatch".into()));
        }
        let mut out = vec![S::zero(); field.dimension()];
        out[self.0.target] = self.evaluate_scalar(field, x0);
        Ok(out)
    }

    fn evaluate_scalar<S: Scalar>(&self, field: &VectorField<S>, x0: &[S]) -> S {
        let mut v = field.terms()[self.0.term_index].coeff.clone();
        for (k, slot) in self.0.slots.iter().enumerate() {
            v = v * match slot {
                None => x0[self.0.slot_labels[k]].clone(),
                Some(child) => child.evaluate_scalar(field, x0),
            };
        }
        v
    }
}

/// All skeletons of the exact order `n` whose vertices are drawn from
/// `term_indices`, any root target, in canonical order.
pub fn enumerate_skeletons<S: Scalar>(
    field: &VectorField<S>,
    term_indices: &[usize],
    n: usize,
) -> Result<Vec<Skeleton>> {
    let mut en = SkeletonEnumerator::new(field, term_indices)?;
    let mut out = en.of_order(n);
    out.sort();
    Ok(out)
}

/// Skeletons of every order `1..=max_order`.
pub fn enumerate_skeletons_up_to<S: Scalar>(
    field: &VectorField<S>,
    term_indices: &[usize],
    max_order: usize,
) -> Result<Vec<Skeleton>> {
    let mut en = SkeletonEnumerator::new(field, term_indices)?;
    let mut out = Vec::new();
    for n in 1..=max_order {
        let mut level = en.of_order(n);
        level.sort();
        out.extend(level);
    }
    Ok(out)
}

struct SkeletonEnumerator {
    // (term_index, target, slot labels) per admitted term
    shapes: Vec<(usize, usize, Vec<usize>)>,
    memo: HashMap<(usize, usize), Vec<Skeleton>>,
}

impl SkeletonEnumerator {
    fn new<S: Scalar>(field: &VectorField<S>, term_indices: &[usize]) -> Result<Self> {
        let mut shapes = Vec::with_capacity(term_indices.len());
        for &i in term_indices {
            let t = field
                .terms()
                .get(i)
                .ok_or_else(|| FlowError::Invalid(format!("term index {i} out of range")))?;
            shapes.push((i, t.target, t.slot_indices()));
        }
        Ok(SkeletonEnumerator { shapes, memo: HashMap::new() })
    }

    fn of_order(&mut self, n: usize) -> Vec<Skeleton> {
        let mut out = Vec::new();
        let shapes = self.shapes.clone();
        for (term_index, target, labels) in &shapes {
            out.extend(self.rooted(*term_index, *target, labels, n));
        }
        out
    }

    fn with_target(&mut self, target: usize, n: usize) -> Vec<Skeleton> {
        if let Some(hit) = self.memo.get(&(target, n)) {
            return hit.clone();
        }
        let mut out = Vec::new();
        let shapes = self.shapes.clone();
        for (term_index, t_target, labels) in &shapes {
            if *t_target == target {
                out.extend(self.rooted(*term_index, *t_target, labels, n));
            }
        }
        self.memo.insert((target, n), out.clone());
        out
    }

    fn rooted(&mut self, term_index: usize, target: usize, labels: &[usize], n: usize) -> Vec<Skeleton> {
        if n == 0 {
            return Vec::new();
        }
        let arity = labels.len();
        let mut out = Vec::new();
        for comp in compositions(n - 1, arity) {
            let mut slot_choices: Vec<Vec<Option<Skeleton>>> = Vec::with_capacity(arity);
            let mut feasible = true;
            for (k, &part) in comp.iter().enumerate() {
                if part == 0 {
                    slot_choices.push(vec![None]);
                } else {
                    let subs = self.with_target(labels[k], part);
                    if subs.is_empty() {
                        feasible = false;
                        break;
                    }
                    slot_choices.push(subs.into_iter().map(Some).collect());
                }
            }
            if !feasible {
                continue;
            }
            cartesian(&slot_choices, &mut |slots| {
                out.push(Skeleton(Arc::new(SkelNode {
                    term_index,
                    target,
                    slot_labels: labels.to_vec(),
                    slots: slots.to_vec(),
                })));
            });
        }
        out
    }
}

/// λ of a single term: monomial eigenvalue sum minus the target eigenvalue.
pub fn lambda_of_term<S: Scalar>(term: &crate::field::PolyTerm<S>, spectrum: &[S]) -> S {
    let mut acc = S::zero() - spectrum[term.target].clone();
    for (j, &e) in term.exponents.iter().enumerate() {
        for _ in 0..e {
            acc = acc + spectrum[j].clone();
        }
    }
    acc
}
