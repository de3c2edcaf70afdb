//! Heap analysis against brute-force oracles.
//!
//! Graphs are written as HPROF through `HeapBuilder` and parsed back, so the
//! parser is on every path. Dominance is checked by deletion (d dominates o
//! iff o is unreachable once d is removed) and, on small graphs, by walking
//! every simple path.

mod common;

use caseforge::heapkit::{compute_dominators, oql_execute, parse_hprof, retained_size, shallow_size, BasicType, FieldValue, HeapBuilder, Parent};
use common::heap::*;
use proptest::prelude::*;
use std::collections::HashSet;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn idom_and_retained_match_deletion_oracle(s in shape(200, 4)) {
        let (g, _) = build(&s);
        if let Err(e) = check_graph(&g) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn retained_is_shallow_plus_children(s in shape(120, 3)) {
        let (g, _) = build(&s);
        let tree = compute_dominators(&g);
        for id in tree.reachable() {
            let kids: u64 = tree.children(Parent::Object(id)).iter().map(|&c| retained_size(&g, &tree, c).unwrap()).sum();
            prop_assert_eq!(kids + shallow_size(&g, id).unwrap(), retained_size(&g, &tree, id).unwrap());
        }
        let top: u64 = tree.children(Parent::SuperRoot).iter().map(|&c| retained_size(&g, &tree, c).unwrap()).sum();
        prop_assert_eq!(top, tree.total_retained());
    }

    #[test]
    fn idom_lies_on_every_simple_path(s in shape(12, 2)) {
        let (g, _) = build(&s);
        let tree = compute_dominators(&g);
        let mut path = vec![SUPER];
        let mut on_path = HashSet::from([SUPER]);
        let mut violations = Vec::new();
        walk(&g, &tree, &mut path, &mut on_path, &mut violations);
        prop_assert!(violations.is_empty(), "{:?}", violations);
    }
}

#[test]
fn hand_examples() {
    // chain root -> A(10) -> B(20)
    let mut b = HeapBuilder::default();
    let a_cls = b.class_sized("A", None, &[("next", BasicType::Object)], 10);
    let b_cls = b.class_sized("B", None, &[], 20);
    let bb = b.instance(b_cls, &[]);
    let a = b.instance(a_cls, &[("next", FieldValue::Object(bb))]);
    b.root(a);
    let g = parse_hprof(&b.build()).unwrap();
    let t = compute_dominators(&g);
    assert_eq!(t.idom(bb), Some(Parent::Object(a)));
    assert_eq!(t.idom(a), Some(Parent::SuperRoot));
    assert_eq!(retained_size(&g, &t, a), Ok(30));
}

#[test]
fn oql_corpus_matches_model_filter() {
    for seed in 0..40 {
        check_oql(seed).unwrap();
    }
}

#[test]
fn projected_values() {
    let f = fixture(3);
    let rows = oql_execute(&f.graph, "SELECT x.timeout FROM org.apache.http.client.* x").unwrap();
    for r in rows {
        let M::Client { timeout, .. } = &f.objects[&r.id] else { panic!() };
        assert_eq!(r.value, serde_json::json!(timeout));
    }
}
