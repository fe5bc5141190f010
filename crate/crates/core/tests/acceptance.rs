use scatterwave::verification::{run_battery, BatteryConfig, CRITERIA};

// Criterion 8 asks for an r^2 >= 0.9 exponential fit of the error trace on
// Omega_3. At desk scale the trace reaches the lattice floor (~1e-6 of the
// initial norm) within the first period, so the fit is poor. It is run as
// stated and its failure is reported.
const KNOWN_SHORTFALLS: [usize; 1] = [8];

fn main() {
    let ids: Vec<usize> = CRITERIA.iter().map(|c| c.0).collect();
    let outcomes = run_battery(&BatteryConfig::desk(), &ids, |o| println!("{}", o.summary()));
    assert_eq!(outcomes.len(), ids.len());
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    println!("{passed}/{} criteria pass", outcomes.len());
    let unexpected: Vec<usize> = outcomes
        .iter()
        .filter(|o| o.error.is_some() || !(o.passed() || KNOWN_SHORTFALLS.contains(&o.id)))
        .map(|o| o.id)
        .collect();
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
