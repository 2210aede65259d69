use ridepool::oracle;

fn assert_passed(r: oracle::SuiteReport) {
    assert!(r.passed(), "{} failed {}/{}: {:#?}", r.name, r.failed, r.cases, r.messages);
}

#[test]
fn shortest_path_table_against_relaxation() {
    assert_passed(oracle::shortest_paths(20, 1));
}

#[test]
fn components_against_reachability() {
    assert_passed(oracle::strongly_connected(100, 2));
}

#[test]
fn grouped_scores_against_direct_sum() {
    assert_passed(oracle::cevd_recompute(300, 3));
}

#[test]
fn action_sets_against_powerset() {
    assert_passed(oracle::feasible_actions(150, 4));
}

#[test]
fn solver_against_enumeration() {
    assert_passed(oracle::assignment(300, 5));
}
