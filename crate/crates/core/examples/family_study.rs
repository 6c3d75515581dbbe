//! Runs the pipeline on default synthetic areas and prints per-family
//! registration shares and per-method accuracy.
//!
//! cargo run --release -p ltlf-core --example family_study -- [seeds...]

use std::collections::BTreeMap;
use std::time::Instant;

use ltlf_core::config::RunConfig;
use ltlf_core::metrics::{evaluate, ForecastOutcome};
use ltlf_core::pipeline::{registration_share, run_pipeline, Inputs, METHODS};
use ltlf_core::synthetic::{generate, Family, SyntheticSpec};

fn main() {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![1, 2, 3, 4, 5] } else { seeds };
    for seed in seeds {
        let t0 = Instant::now();
        let spec = SyntheticSpec::default_area(seed);
        let data = generate(&spec).expect("generate");
        let inputs = Inputs {
            histories: data.histories.clone(),
            area: data.area.clone(),
            transfers: data.transfers.clone(),
            scenario: data.scenario.clone(),
            truth: Some(data.truth.clone()),
        };
        let cfg = RunConfig {
            seed,
            ..RunConfig::default()
        };
        let r = run_pipeline(&inputs, &cfg, None).expect("pipeline");
        println!("seed {seed}: {:.1}s", t0.elapsed().as_secs_f64());
        for p in &r.preps {
            println!("  {} k={}", p.season, p.n_clusters());
        }
        let mut fam: BTreeMap<Family, Vec<&str>> = BTreeMap::new();
        for l in &data.labels {
            fam.entry(l.family).or_default().push(&l.feeder_id);
        }
        for (f, ids) in &fam {
            if let Some(k) = f.intended() {
                let shares: Vec<String> = ltlf_core::seqdata::ConfigKind::ALL
                    .iter()
                    .map(|c| format!("{c}={:.2}", registration_share(&r.registry, ids, *c)))
                    .collect();
                let mut ratios = (0.0, 0.0, 0usize);
                for ((_, id), e) in &r.registry.entries {
                    if id.split('+').any(|x| ids.contains(&x)) {
                        ratios.0 += e.index.interval / e.index.recursive;
                        ratios.1 += e.index.multiyear / e.index.recursive;
                        ratios.2 += 1;
                    }
                }
                let n = ratios.2.max(1) as f64;
                println!(
                    "  family {f} (wants {k}): {}  P_int/P_rec={:.3} P_my/P_rec={:.3}",
                    shares.join(" "),
                    ratios.0 / n,
                    ratios.1 / n
                );
            }
        }
        let outcomes = r.outcomes.as_ref().unwrap();
        let line: Vec<String> = METHODS
            .iter()
            .filter_map(|m| r.amape(m).map(|a| format!("{m}={a:.2}")))
            .collect();
        println!("  amape {}", line.join(" "));
        for (f, ids) in &fam {
            let mut s = format!("  {f:<10}");
            for m in ["ssl", "recursive", "interval", "multiyear", "bottom_up", "ar2", "trf"] {
                let pick = |yi: usize| -> f64 {
                    let g: Vec<ForecastOutcome> = outcomes
                        .iter()
                        .filter(|o| {
                            o.config == m
                                && (yi == 0 || o.year_index == yi)
                                && o.feeder_id.split('+').any(|x| ids.contains(&x))
                        })
                        .cloned()
                        .collect();
                    evaluate(&g).map(|x| x.amape).unwrap_or(f64::NAN)
                };
                s += &format!(" {m}={:.2}[{:.2}/{:.2}]", pick(0), pick(1), pick(3));
            }
            println!("{s}");
        }
    }
}
