mod common;

use ilp_forge::context::{pack_context, render_prompt, SegmentRole, Template};
use ilp_forge::graph::{build_graph, EdgeKind};
use ilp_forge::model::DocumentSet;
use proptest::prelude::*;

use common::load_fixture;

const REQUEST: &str =
    "Fully based on the file, generate a function in python for take-right API mentioned in the document?";

#[test]
fn take_right_prompt_puts_drop_before_the_request() {
    let set = load_fixture("take-right");
    let graph = build_graph(&set);
    let bundle = pack_context(&set, &graph, "take-right", 4000).unwrap();
    let roles: Vec<(SegmentRole, &str)> = bundle
        .segments
        .iter()
        .map(|s| (s.role, s.name.as_str()))
        .collect();
    let drop = roles
        .iter()
        .position(|r| *r == (SegmentRole::HardDep, "drop"))
        .unwrap();
    let spec = roles
        .iter()
        .position(|r| r.0 == SegmentRole::StepSpec)
        .unwrap();
    assert!(drop < spec, "{roles:?}");

    let prompt = render_prompt(
        &bundle,
        &Template::builtin("fully-based").unwrap(),
        "python",
    );
    let request = prompt.find(REQUEST).expect("verbatim request sentence");
    let description = prompt.find("removes the first *n* elements").unwrap();
    assert!(description < request);
}

fn hard_edges(set: &DocumentSet) -> Vec<(String, String)> {
    build_graph(set)
        .edges_of(&EdgeKind::HARD)
        .map(|e| (e.from.0.clone(), e.to.0.clone()))
        .collect()
}

/// Among hard-dep segments a dependency precedes everything that needs it.
fn assert_dependencies_first(
    set: &DocumentSet,
    target: &str,
    budget: usize,
) -> Result<(), TestCaseError> {
    let graph = build_graph(set);
    let bundle = pack_context(set, &graph, target, budget).unwrap();
    prop_assert!(bundle.total_cost() <= budget);
    let deps: Vec<&str> = bundle
        .segments
        .iter()
        .filter(|s| s.role == SegmentRole::HardDep)
        .map(|s| s.name.as_str())
        .collect();
    for (from, to) in hard_edges(set) {
        if let (Some(a), Some(b)) = (
            deps.iter().position(|n| *n == from),
            deps.iter().position(|n| *n == to),
        ) {
            prop_assert!(b < a, "{to} should precede {from} in {deps:?}");
        }
    }
    Ok(())
}

#[test]
fn extended_add_bundle_covers_the_dag() {
    let set = load_fixture("extended-add");
    let graph = build_graph(&set);
    let bundle = pack_context(&set, &graph, "add", 100_000).unwrap();
    let mut names: Vec<&str> = bundle.segments.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        bundle.segments.last().unwrap().role,
        SegmentRole::TargetAnnotation
    );
    assert_eq!(bundle.segments.last().unwrap().name, "add");
    names.sort();
    names.dedup();
    assert_eq!(
        names,
        vec!["add", "add-rat", "extended-+", "make-rat", "pairs?"]
    );
    let deps: Vec<&str> = bundle
        .segments
        .iter()
        .filter(|s| s.role == SegmentRole::HardDep)
        .map(|s| s.name.as_str())
        .collect();
    let ext = deps.iter().position(|n| *n == "extended-+").unwrap();
    for leaf in ["add-rat", "make-rat", "pairs?"] {
        assert!(deps.iter().position(|n| *n == leaf).unwrap() < ext);
    }
    assert_dependencies_first(&set, "add", 100_000).unwrap();
}

#[test]
fn tiny_budget_is_still_a_valid_bundle() {
    let set = load_fixture("extended-add");
    let bundle = pack_context(&set, &build_graph(&set), "add", 1).unwrap();
    assert!(bundle.total_cost() <= 1);
    assert!(bundle.segments.iter().all(|s| s.cost <= 1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn budget_and_order_hold_for_any_budget(
        budget in 1usize..1500,
        pick in prop::sample::select(vec![
            ("extended-add", "add"),
            ("extended-add", "extended-+"),
            ("take-right", "take-right"),
            ("g1-reference", "take-right"),
            ("web-of-ideas", "sum-core"),
        ]),
    ) {
        let set = load_fixture(pick.0);
        assert_dependencies_first(&set, pick.1, budget)?;
    }
}
