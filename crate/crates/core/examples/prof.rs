use copulabc::drf::ForestConfig;
use copulabc::inference::{analyze_detailed, fit_joint, summarize, AnalysisConfig, MarginalMethod};
use copulabc::models::ModelSpec;
use copulabc::rng::{derive_seed, stream_rng};

fn main() {
    let model = ModelSpec::poisson_mixture();
    let truth = vec![3.0, 0.0];
    let seed_r = derive_seed(2_024, 0);
    let mut obs_rng = stream_rng(seed_r, 0);
    let data = model.simulate(&truth, 50, &mut obs_rng).unwrap();
    let s_x = model.summaries(&data).unwrap();
    eprintln!("s_x = {s_x:?}");
    let table = copulabc::reftable::build(
        std::slice::from_ref(&model),
        &[1.0],
        1_500,
        30,
        derive_seed(seed_r, 1),
    )
    .unwrap();
    let forest = ForestConfig {
        trees: 150,
        seed: derive_seed(seed_r, 2),
        ..ForestConfig::default()
    };
    let res = analyze_detailed(
        &table,
        std::slice::from_ref(&model),
        &s_x,
        &AnalysisConfig {
            forest,
            marginal: None,
            extra_draws: None,
        },
    );
    match &res {
        Ok(a) => eprintln!("analyze ok: mean λ {}", a.report.params[0].mean),
        Err(e) => eprintln!("analyze ERR: {e}"),
    }

    // Rebuild the joint fit by hand to inspect candidate densities.
    let mut forests = Vec::new();
    for k in 0..2 {
        let cfg = ForestConfig {
            trees: 150,
            seed: derive_seed(derive_seed(seed_r, 2), (k + 1) as u64),
            ..ForestConfig::default()
        };
        let y = table.theta_column(1, k).unwrap();
        let f = copulabc::drf::train(&table.summaries_matrix(), &y, &cfg).unwrap();
        forests.push(f);
    }
    let summ = summarize(&forests, &table, 1, &s_x).unwrap();
    for s in &summ {
        eprintln!(
            "{}: mean {:.4} sd {:.4} q [{:.4},{:.4},{:.4},{:.4},{:.4}]",
            s.name, s.mean, s.sd, s.quantiles[0], s.quantiles[1], s.quantiles[2], s.quantiles[3], s.quantiles[4]
        );
    }
    let fit = fit_joint(
        &forests,
        &table,
        1,
        &s_x,
        MarginalMethod::Histogram,
        Some(&model.space),
    )
    .unwrap();
    eprintln!(
        "copula: {:?}, pseudo dropped {}",
        fit.copula.as_ref().map(|c| (c.params.nu(), c.gaussian_limit)),
        fit.pseudo_dropped
    );
    let mut finite = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut worst_example = None;
    for i in 0..table.len() {
        let th = [
            table.theta_column(1, 0).unwrap()[i],
            table.theta_column(1, 1).unwrap()[i],
        ];
        let ld = fit.posterior.log_density(&th);
        if ld.is_finite() {
            finite += 1;
            if ld > best {
                best = ld;
            }
        } else if worst_example.is_none() {
            worst_example = Some((i, th));
        }
    }
    eprintln!("finite candidates: {finite}/1500, best log density {best:.3}");
    if let Some((i, th)) = worst_example {
        eprintln!("first -inf candidate: row {i} θ = {th:?}");
    }
    // Probe near the posterior center.
    for th in [[3.0, 0.0], [3.0, 0.4], [2.8, 0.2], [5.0, 1.0]] {
        eprintln!("log density at {th:?}: {}", fit.posterior.log_density(&th));
    }
}
