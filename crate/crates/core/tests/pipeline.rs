use frailtime_core::analysis1d::{profile_1d, ProfileOptions};
use frailtime_core::dataio::{build_dataset, parse_formula, resolve_censoring, Table};
use frailtime_core::simulate::{simulate_dataset, truth_vector, CovariateSpec, SimSpec};
use frailtime_core::{fit, FitOptions, FitReport, LikelihoodContext, ParamBounds, TimeGrid, DEFAULT_CATEGORY_MAX, DEFAULT_CATEGORY_MIN};

fn spec(seed: u64) -> SimSpec {
    SimSpec {
        truth: truth_vector(&[-1.2, -1.0, -1.4], &[0.5, -0.8], 0.4, 0.3, &[0.2, 0.5, 0.3]).unwrap(),
        grid: TimeGrid::new(vec![0.0, 1.0, 2.5, 4.0]).unwrap(),
        units_per_group: vec![30; 8],
        covariates: vec!["sex:bernoulli(0.5)".parse::<CovariateSpec>().unwrap(), "score:normal".parse().unwrap()],
        frailty_override: None,
        seed,
    }
}

#[test]
fn simulated_csv_round_trips_into_an_equivalent_dataset() {
    let sim = simulate_dataset(&spec(3)).unwrap();
    let mut buf = Vec::new();
    sim.write_csv(&mut buf).unwrap();
    let table = Table::from_reader(buf.as_slice()).unwrap();
    let formula = parse_formula("time_to_event ~ sex + score + cluster(group)").unwrap();
    let from_csv = build_dataset(&table, &formula, false).unwrap();
    let status = frailtime_core::dataio::read_status(&table, "status").unwrap();
    let grid = sim.truth.time_axis.clone();
    let from_csv = from_csv.with_event(resolve_censoring(&sim.time, grid.end(), Some(&status)).unwrap());

    let a = LikelihoodContext::new(from_csv, grid.clone()).unwrap();
    let b = LikelihoodContext::new(sim.to_dataset(), grid).unwrap();
    let p = sim.truth.params.clone();
    let (la, lb) = (a.loglik_values(&p).unwrap(), b.loglik_values(&p).unwrap());
    assert!((la - lb).abs() <= 1e-9 * lb.abs(), "{la} vs {lb}");
}

#[test]
fn fit_is_deterministic_and_self_consistent() {
    let sim = simulate_dataset(&spec(9)).unwrap();
    let grid = sim.truth.time_axis.clone();
    let options = FitOptions { seed: 4, n_extrarun: 10, ..FitOptions::default() };
    let r1 = fit(sim.to_dataset(), grid.clone(), DEFAULT_CATEGORY_MIN, DEFAULT_CATEGORY_MAX, &options).unwrap();
    let r2 = fit(sim.to_dataset(), grid.clone(), DEFAULT_CATEGORY_MIN, DEFAULT_CATEGORY_MAX, &options).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.optimal_params.values().len(), 3 + 2 + 2 + 3);
    assert!(r1.bounds.contains(r1.optimal_params.values()));
    assert!(r1.n_run >= 2 && r1.n_run <= 10 + 10);

    let ctx = LikelihoodContext::new(sim.to_dataset(), grid).unwrap();
    assert_eq!(ctx.loglik(&r1.optimal_params).unwrap(), r1.loglik);

    // the optimum is at least as good as the truth
    let truth = ctx.loglik_values(&sim.truth.params).unwrap();
    assert!(r1.loglik >= truth - 1e-6, "{} < {truth}", r1.loglik);

    let report = FitReport::new(&r1, &parse_formula("t ~ sex + score + cluster(group)").unwrap());
    report.check().unwrap();
    let back: FitReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn fixed_profile_peaks_near_the_fit() {
    let sim = simulate_dataset(&spec(21)).unwrap();
    let grid = sim.truth.time_axis.clone();
    let options = FitOptions { seed: 1, n_extrarun: 10, ..FitOptions::default() };
    let fitted = fit(sim.to_dataset(), grid.clone(), DEFAULT_CATEGORY_MIN, DEFAULT_CATEGORY_MAX, &options).unwrap();
    let ctx = LikelihoodContext::new(sim.to_dataset(), grid).unwrap();
    let bounds = ParamBounds::expand(DEFAULT_CATEGORY_MIN, DEFAULT_CATEGORY_MAX, ctx.layout()).unwrap();
    let index = ctx.layout().range(frailtime_core::Category::Beta).start + 1;
    let prof = profile_1d(&ctx, &bounds, index, Some(&fitted.optimal_params), &ProfileOptions::default()).unwrap();
    let it = &prof.iterations[0];
    assert!(it.ll_star >= fitted.loglik - 1e-6);
    assert!((it.x_star - fitted.optimal_params.values()[index]).abs() < 1e-3);
}
