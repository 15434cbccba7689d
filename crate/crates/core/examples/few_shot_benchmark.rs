//! Desk-scale few-shot comparison on synthetic two-sensor data: pretrained
//! encoder vs. from-scratch training vs. the intra-negatives ablation, one
//! label per class, several seeds.
//!
//! cargo run --release --example few_shot_benchmark -- [key=value ...]
//!
//! Keys: reps, users, spuc (samples per user per class), timesteps, noise,
//! corr, budget, plus any training config key (tau, epochs_pretrain, ...).

use std::collections::BTreeMap;
use std::time::Instant;

use mesen::data::{generate_synthetic, partition_users, split_by_user, SynthSpec};
use mesen::eval::{run_grid, ExperimentGrid, GridData, Method};
use mesen::default_config;

fn main() -> mesen::Result<()> {
    let mut opts: BTreeMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_owned(), v.to_owned())))
        .collect();
    let mut take = |key: &str, default: f64| -> f64 {
        opts.remove(key).map_or(default, |v| v.parse().expect("numeric option"))
    };
    let reps = take("reps", 5.0) as usize;
    let budget = take("budget", 1.0) as usize;
    let mut spec = SynthSpec::two_modality(
        6,
        take("users", 12.0) as usize,
        take("spuc", 30.0) as usize,
        3,
        take("timesteps", 32.0) as usize,
    );
    spec.noise_sigma = take("noise", 0.1);
    spec.correlation_strength = take("corr", 0.9);
    let data_seed = take("data_seed", 1.0) as u64;

    let ds = generate_synthetic(&spec, data_seed)?;
    let (train_users, test_users) = partition_users(&ds, 0.25);
    let split = split_by_user(&ds, &train_users, &test_users, data_seed)?;
    println!(
        "{} paired windows: {} train, {} test",
        ds.len(),
        split.train.len(),
        split.test.len()
    );

    let mut config = default_config(6, 32)?;
    config.encoder_width = 16;
    config.epochs_pretrain = 30;
    config.epochs_finetune = 100;
    config.pretrain_batch = 64;
    config.tau_hat = 2.0;
    // Remaining options are config keys.
    let overrides: String = opts.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let config = config.merge_toml(&overrides)?;

    let grid = ExperimentGrid {
        methods: vec![Method::Mesen, Method::Labeltrain, Method::IntraNegativesAblation],
        label_budgets: vec![budget],
        repetitions: reps,
        modalities: vec!["acc".into()],
        workers: 0,
    };
    let started = Instant::now();
    let data = GridData {
        train: split.train,
        test: split.test,
    };
    let results = run_grid(&data, &grid, &config)?;
    print!("{}", results.to_text());
    let acc = |m: Method| -> Vec<f64> {
        results
            .cells
            .iter()
            .filter(|c| c.method == m)
            .map(|c| c.metrics.accuracy)
            .collect()
    };
    let (mesen, intra) = (acc(Method::Mesen), acc(Method::IntraNegativesAblation));
    let wins = mesen.iter().zip(&intra).filter(|(a, b)| a > b).count();
    println!("per-seed mesen    {:?}", mesen.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("per-seed intra    {:?}", intra.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("per-seed baseline {:?}", acc(Method::Labeltrain).iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("mesen beats intra-negatives on {wins}/{reps} seeds");
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
