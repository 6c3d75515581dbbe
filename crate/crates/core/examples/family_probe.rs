//! Trains and selects on the summer feeders of the default synthetic area,
//! optionally restricted to some families, with family knobs overridden
//! from the command line.
//!
//! cargo run --release -p ltlf-core --example family_probe -- seed=1 families=smooth,saturated smooth_gain=0.08

use ltlf_core::config::RunConfig;
use ltlf_core::domain::Season;
use ltlf_core::metrics::{evaluate, ForecastOutcome};
use ltlf_core::pipeline::{registration_share, run_pipeline, Inputs};
use ltlf_core::seqdata::ConfigKind;
use ltlf_core::synthetic::{generate, Family, SyntheticSpec};

fn main() {
    let mut seed = 1u64;
    let mut keep: Vec<Family> = vec![Family::Smooth, Family::Volatile, Family::Saturated];
    let mut spec = SyntheticSpec::default_area(seed);
    let mut cfg = RunConfig {
        baselines: false,
        ..RunConfig::default()
    };
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        let f = |v: &str| v.parse::<f64>().expect("number");
        let fp = &mut spec.family_params;
        match k {
            "seed" => seed = v.parse().unwrap(),
            "families" => keep = v.split(',').map(|x| x.parse().unwrap()).collect(),
            "mix" => {
                let x: Vec<f64> = v.split(',').map(f).collect();
                spec.family_mix = [x[0], x[1], x[2]];
            }
            "smooth_trend" => fp.smooth_trend = f(v),
            "smooth_gain" => fp.smooth_gain = f(v),
            "smooth_noise" => fp.smooth_noise = f(v),
            "volatile_lo" => fp.volatile_trend.0 = f(v),
            "volatile_hi" => fp.volatile_trend.1 = f(v),
            "volatile_gain" => fp.volatile_gain = f(v),
            "volatile_noise" => fp.volatile_noise = f(v),
            "saturated_noise" => fp.saturated_noise = f(v),
            "event_rate" => fp.event_rate = f(v),
            "event_size" => fp.event_size = f(v),
            "smooth_neg" => fp.smooth_negative_share = f(v),
            "neg" => fp.negative_share = f(v),
            "sat_rate" => fp.saturated_event_rate = f(v),
            "sat_size" => fp.saturated_event_size = f(v),
            "temp" => {
                let x: Vec<f64> = v.split(',').map(f).collect();
                spec.temperature_sensitivity = [x[0], x[1], x[2]];
            }
            "size" => {
                let x: Vec<f64> = v.split(',').map(f).collect();
                spec.peak_range = (x[0], x[1]);
            }
            "k" => {
                cfg.k_min = v.parse().unwrap();
                cfg.k_max = cfg.k_min;
            }
            "epochs" => cfg.max_epochs = v.parse().unwrap(),
            "lr" => cfg.learning_rate = f(v),
            "dropout" => cfg.dropout = f(v),
            "hidden" => cfg.hidden_size = v.parse().unwrap(),
            "baselines" => cfg.baselines = v.parse().unwrap(),
            other => panic!("unknown knob {other}"),
        }
    }
    spec.seed = seed;
    cfg.seed = seed;
    let t0 = std::time::Instant::now();
    let data = generate(&spec).unwrap();
    let ids: Vec<String> = data
        .labels
        .iter()
        .filter(|l| keep.contains(&l.family))
        .map(|l| l.feeder_id.clone())
        .collect();
    let inputs = Inputs {
        histories: data
            .histories
            .iter()
            .filter(|h| h.season == Season::Summer && ids.contains(&h.feeder_id))
            .cloned()
            .collect(),
        area: data.area.clone(),
        transfers: data
            .transfers
            .iter()
            .filter(|t| ids.contains(&t.from_feeder) && ids.contains(&t.to_feeder))
            .cloned()
            .collect(),
        scenario: data.scenario.clone(),
        truth: Some(data.truth.iter().filter(|t| ids.contains(&t.feeder_id)).cloned().collect()),
    };
    let r = run_pipeline(&inputs, &cfg, None).unwrap();
    println!("{:.1}s clusters={}", t0.elapsed().as_secs_f64(), r.preps[0].n_clusters());
    let epochs: Vec<String> = r
        .models
        .iter()
        .map(|m| format!("{}/{}/{}", m.bundle.recursive.best_epoch, m.bundle.intervals.last().unwrap().best_epoch, m.bundle.multiyear.best_epoch))
        .collect();
    println!("best epochs {}", epochs.join(" "));
    let outcomes = r.outcomes.as_ref().unwrap();
    for fam in &keep {
        let fids: Vec<&str> = data
            .labels
            .iter()
            .filter(|l| l.family == *fam)
            .map(|l| l.feeder_id.as_str())
            .collect();
        let shares: Vec<String> = ConfigKind::ALL
            .iter()
            .map(|c| format!("{c}={:.2}", registration_share(&r.registry, &fids, *c)))
            .collect();
        let (mut a, mut b, mut n) = (0.0, 0.0, 0.0);
        for ((_, id), e) in &r.registry.entries {
            if id.split('+').any(|x| fids.contains(&x)) {
                a += e.index.interval / e.index.recursive;
                b += e.index.multiyear / e.index.recursive;
                n += 1.0;
            }
        }
        println!("{fam}: {} P_int/P_rec={:.3} P_my/P_rec={:.3}", shares.join(" "), a / n, b / n);
        let mut s = String::from("   test");
        for m in ["ssl", "recursive", "interval", "multiyear", "bottom_up", "ar2", "orf", "trf", "tnf"] {
            let pick = |yi: usize| -> f64 {
                let g: Vec<ForecastOutcome> = outcomes
                    .iter()
                    .filter(|o| o.config == m && (yi == 0 || o.year_index == yi) && o.feeder_id.split('+').any(|x| fids.contains(&x)))
                    .cloned()
                    .collect();
                if g.is_empty() {
                    return f64::NAN;
                }
                evaluate(&g).map(|x| x.amape).unwrap_or(f64::NAN)
            };
            let v = pick(0);
            if !v.is_nan() {
                s += &format!(" {m}={v:.2}[{:.2}/{:.2}]", pick(1), pick(3));
            }
        }
        println!("{s}");
    }
}
