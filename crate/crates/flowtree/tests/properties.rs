//! Property tests for the structural invariants that should hold on *every*
//! diagram and field, not just the hand-picked fixtures in the unit tests.

use num_traits::Zero;
use proptest::collection::vec;
use proptest::prelude::*;

use flowtree::{
    bracket, enumerate_skeletons_up_to, evaluate_diagram, Diagram, PolyTerm, Scalar, VectorField,
    CQ,
};

fn cq(n: i64, d: i64) -> CQ {
    CQ::from_ratio(n, d)
}

fn arb_diagram() -> impl Strategy<Value = Diagram> {
    let leaf = (0usize..=3).prop_map(Diagram::vertex);
    leaf.prop_recursive(3, 24, 3, |inner| {
        vec(prop_oneof![Just(None), inner.prop_map(Some)], 0..=3)
            .prop_map(Diagram::with_slots)
    })
}

fn vertex_arities(d: &Diagram) -> Vec<usize> {
    let mut out = vec![d.arity()];
    for slot in d.slots().iter().flatten() {
        out.extend(vertex_arities(slot));
    }
    out
}

/// Rational coefficients that stay small enough for exact arithmetic to be fast.
fn arb_coeff() -> impl Strategy<Value = CQ> {
    ((-5i64..=5).prop_filter("nonzero", |n| *n != 0), 1i64..=3).prop_map(|(n, d)| cq(n, d))
}

fn arb_field() -> impl Strategy<Value = VectorField<CQ>> {
    // Planar fields with degree ≤ 2 monomials; at least one term survives.
    let monos: Vec<(usize, Vec<u32>)> = (0..2usize)
        .flat_map(|t| {
            [vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
                .into_iter()
                .map(move |e| (t, e))
        })
        .collect();
    vec(proptest::option::of(arb_coeff()), monos.len()).prop_filter_map(
        "at least one nonzero term",
        move |coeffs| {
            let terms: Vec<PolyTerm<CQ>> = monos
                .iter()
                .zip(coeffs)
                .filter_map(|((t, e), c)| c.map(|c| PolyTerm::new(*t, e.clone(), c)))
                .collect();
            match VectorField::new(2, terms) {
                Ok(f) if !f.terms().is_empty() => Some(f),
                _ => None,
            }
        },
    )
}

fn negate(f: &VectorField<CQ>) -> VectorField<CQ> {
    let terms = f
        .terms()
        .iter()
        .map(|t| PolyTerm::new(t.target, t.exponents.clone(), CQ::zero() - t.coeff.clone()))
        .collect();
    VectorField::new(f.dimension(), terms).unwrap()
}

fn add(a: &VectorField<CQ>, b: &VectorField<CQ>) -> VectorField<CQ> {
    let mut terms = a.terms().to_vec();
    terms.extend_from_slice(b.terms());
    VectorField::new(a.dimension(), terms).unwrap()
}

proptest! {
    #[test]
    fn diagram_text_round_trips(d in arb_diagram()) {
        let text = d.to_text();
        let back = Diagram::parse_text(&text).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn open_edges_count_vertex_contributions(d in arb_diagram()) {
        let expected: i64 =
            1 + vertex_arities(&d).iter().map(|&s| s as i64 - 1).sum::<i64>();
        prop_assert!(expected >= 0);
        prop_assert_eq!(d.open_edges(), expected as usize);
    }

    #[test]
    fn tree_factorial_is_recursive_product(d in arb_diagram()) {
        let children: u128 = d
            .slots()
            .iter()
            .flatten()
            .map(Diagram::tree_factorial)
            .product();
        prop_assert_eq!(d.tree_factorial(), d.order() as u128 * children);
    }

    #[test]
    fn diagram_evaluation_is_homogeneous(
        d in arb_diagram(),
        num in (-4i64..=4).prop_filter("nonzero", |n| *n != 0),
    ) {
        // Every arity a vertex can take must exist in the field.
        let field = VectorField::new(1, (0..=3u32)
            .map(|s| PolyTerm::new(0, vec![s], cq(1, 2)))
            .collect::<Vec<_>>()).unwrap();
        let c = cq(num, 3);
        let x = cq(1, 2);
        let base = evaluate_diagram(&d, &field, &[x.clone()]).unwrap();
        let scaled = evaluate_diagram(&d, &field, &[x * c.clone()]).unwrap();
        let mut pow = CQ::from_ratio(1, 1);
        for _ in 0..d.open_edges() {
            pow = pow * c.clone();
        }
        prop_assert_eq!(scaled[0].clone(), base[0].clone() * pow);
    }

    #[test]
    fn lambda_is_additive_under_attachment(host_pick in 0usize..64, sub_pick in 0usize..64) {
        let field = VectorField::new(2, vec![
            PolyTerm::new(0, vec![2, 0], cq(1, 1)),
            PolyTerm::new(1, vec![1, 1], cq(1, 1)),
            PolyTerm::new(0, vec![0, 2], cq(1, 1)),
        ]).unwrap();
        let spectrum = [cq(2, 1), cq(-3, 1)];
        let indices: Vec<usize> = vec![0, 1, 2];
        let pool = enumerate_skeletons_up_to(&field, &indices, 3).unwrap();
        let host = &pool[host_pick % pool.len()];
        let sub = &pool[sub_pick % pool.len()];
        // A slot accepts only a subtree targeting the coordinate it carries.
        let slot = host
            .open_slots()
            .into_iter()
            .find(|(_, label)| *label == sub.target());
        prop_assume!(slot.is_some());
        let attached = host.attach_at(&slot.unwrap().0, sub).unwrap();
        prop_assert_eq!(
            attached.lambda(&spectrum),
            host.lambda(&spectrum) + sub.lambda(&spectrum)
        );
    }

    #[test]
    fn bracket_is_antisymmetric(u in arb_field(), v in arb_field()) {
        let uv = bracket(&u, &v).unwrap();
        let vu = bracket(&v, &u).unwrap();
        prop_assert_eq!(uv, negate(&vu));
    }

    #[test]
    fn bracket_satisfies_jacobi(u in arb_field(), v in arb_field(), w in arb_field()) {
        let uv_w = bracket(&bracket(&u, &v).unwrap(), &w).unwrap();
        let vw_u = bracket(&bracket(&v, &w).unwrap(), &u).unwrap();
        let wu_v = bracket(&bracket(&w, &u).unwrap(), &v).unwrap();
        let total = add(&add(&uv_w, &vw_u), &wu_v);
        prop_assert!(total.terms().is_empty(), "Jacobi residue: {:?}", total.terms());
    }
}
