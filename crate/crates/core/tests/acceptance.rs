use uwcap::acceptance::run_acceptance;
use uwcap::config::default_config;

#[test]
fn acceptance_criteria() {
    let config = default_config();
    let report = run_acceptance(&config, |c| println!("{}", c.line())).expect("acceptance run");
    let failed: Vec<u8> = report.criteria.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    println!("{} of {} criteria passed", report.criteria.len() - failed.len(), report.criteria.len());
    assert_eq!(report.criteria.len(), 11);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
