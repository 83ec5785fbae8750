use std::fmt;
use std::fs;
use std::path::Path;

use neurofuzz_core::corpus::{load_dir, load_images};
use neurofuzz_core::coverage::profile_dataset;
use neurofuzz_core::fuzz::{fuzz_loop, quant_diff_repeated, read_run, write_run, Budget, RunData};
use neurofuzz_core::{load_model, Error, FuzzConfig, NeuronProfile};

use crate::FuzzArgs;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files.
    Input(String),
    /// A broken invariant inside the fuzzer.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => f.write_str(m),
            CliError::Internal(m) => write!(f, "internal: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::EmptyPool => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

type Result<T = ()> = std::result::Result<T, CliError>;

fn write_text(path: &Path, text: &str) -> Result {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn profile(model: &Path, data: &Path, out: &Path) -> Result {
    let model = load_model(model)?;
    let images = load_images(data)?;
    let profile = profile_dataset(&model, &images)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Input(format!("{}: {e}", parent.display())))?;
    }
    profile.write(out)?;

    println!("inputs {}", images.len());
    println!("neurons {}", model.neuron_count());
    for nl in model.neuron_layers() {
        let stats = &profile.stats()[nl.range()];
        let low = stats.iter().map(|s| s.low).fold(f32::INFINITY, f32::min);
        let high = stats.iter().map(|s| s.high).fold(f32::NEG_INFINITY, f32::max);
        println!(
            "layer {} {}: {} neurons, values in [{low:.6}, {high:.6}]",
            nl.layer,
            model.layers()[nl.layer].kind(),
            nl.len
        );
    }
    Ok(())
}

fn set<T>(dst: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *dst = v;
    }
}

fn fuzz_config(args: &FuzzArgs) -> Result<FuzzConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => FuzzConfig::default(),
    };
    if let Some(kind) = args.criterion {
        cfg.criterion.kind = kind;
    }
    match (args.budget_iters, args.budget_secs) {
        (None, None) => {}
        (iterations, None) => cfg.budget.iterations = iterations,
        (None, seconds) => cfg.budget = Budget { iterations: None, seconds },
        (iterations, seconds) => cfg.budget = Budget { iterations, seconds },
    }
    set(&mut cfg.rng_seed, args.rng_seed);
    set(&mut cfg.batch_size, args.batch_size);
    set(&mut cfg.criterion.k_sections, args.k_sections);
    set(&mut cfg.criterion.top_k, args.top_k);
    set(&mut cfg.criterion.overflow_buckets, args.overflow_buckets);
    set(&mut cfg.mutation.try_num, args.try_num);
    set(&mut cfg.schedule.k, args.trials);
    set(&mut cfg.schedule.sample_size, args.sample_size);
    set(&mut cfg.criterion.t, args.threshold);
    set(&mut cfg.mutation.alpha, args.alpha);
    set(&mut cfg.mutation.beta, args.beta);
    set(&mut cfg.schedule.gamma, args.gamma);
    set(&mut cfg.schedule.p_min, args.p_min);
    if args.unguided {
        cfg.guided = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn fuzz(args: &FuzzArgs) -> Result {
    let cfg = fuzz_config(args)?;
    if cfg.criterion.kind.needs_profile() && args.profile.is_none() {
        return Err(CliError::Input(format!(
            "criterion {} requires --profile",
            cfg.criterion.kind
        )));
    }
    if fs::read_dir(&args.out).is_ok_and(|mut d| d.next().is_some()) {
        return Err(CliError::Input(format!("output directory {} is not empty", args.out.display())));
    }

    let model = load_model(&args.model)?;
    let profile = args.profile.as_deref().map(NeuronProfile::read).transpose()?;
    let seeds = load_dir(&args.seeds)?;
    let outcome = fuzz_loop(&model, profile.as_ref(), &seeds, &cfg, false)?;
    write_run(&args.out, &outcome, args.save_pool)?;

    let r = &outcome.report;
    println!("criterion {}", cfg.criterion.kind);
    println!("seeds {} in {} batches", r.initial.seeds, r.initial.batches);
    println!("initial coverage {}", r.initial.coverage);
    println!("final coverage {}", r.totals.final_coverage);
    println!("iterations {}", r.totals.iterations);
    println!("failed tests {}", r.totals.failed_tests);
    println!("pool batches {}", r.totals.pool_batches);
    Ok(())
}

pub fn quantdiff(model: &Path, ratio: f64, rng_seed: u64, tests: &Path, out: &Path, repeats: usize) -> Result {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CliError::Input(format!("--ratio {ratio} is outside [0, 1]")));
    }
    let model = load_model(model)?;
    let tests = load_dir(tests)?;
    if tests.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let report = quant_diff_repeated(&model, ratio, rng_seed, &tests, repeats)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_text(out, &text)?;

    println!("tests {}", report.tests);
    for run in &report.runs {
        println!("rng_seed {} disagreements {}", run.rng_seed, run.disagreements.len());
    }
    println!("mean disagreements {:.4}", report.mean);
    Ok(())
}

pub fn eval(model: &Path, tests: &Path) -> Result {
    let model = load_model(model)?;
    let tests = load_dir(tests)?;
    if tests.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let images: Vec<_> = tests.iter().map(|s| s.image.clone()).collect();
    let correct = model
        .predict_images(&images)?
        .iter()
        .zip(&tests)
        .filter(|(p, s)| **p == s.label)
        .count();
    println!("accuracy {:.4} ({correct}/{})", correct as f64 / tests.len() as f64, tests.len());
    Ok(())
}

/// Checks `summary.json` against totals re-aggregated from `report.jsonl`.
fn check_totals(run: &RunData) -> Result {
    let s = &run.summary;
    let failed: usize = run.records.iter().map(|r| r.failed).sum();
    let added = run
        .records
        .iter()
        .filter(|r| r.gain || (!s.guided && r.mutants > 0))
        .count();
    let last = run.records.last().map_or(s.initial.coverage, |r| r.coverage);
    let mut problems = Vec::new();
    if failed != s.totals.failed_tests {
        problems.push(format!("failed tests {failed} vs summary {}", s.totals.failed_tests));
    }
    if s.initial.batches + added != s.totals.pool_batches {
        problems.push(format!(
            "pool batches {} vs summary {}",
            s.initial.batches + added,
            s.totals.pool_batches
        ));
    }
    if last != s.totals.final_coverage {
        problems.push(format!("final coverage {last} vs summary {}", s.totals.final_coverage));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(format!("report.jsonl disagrees with summary.json: {}", problems.join("; "))))
    }
}

pub fn report(dir: &Path, plot_data: Option<&Path>, every: Option<u64>) -> Result {
    let run = read_run(dir)?;
    check_totals(&run)?;
    let s = &run.summary;
    let n = run.records.len() as u64;
    let every = every.unwrap_or_else(|| n.div_ceil(20)).max(1);

    println!("criterion {} ({})", s.criterion, if s.guided { "guided" } else { "unguided" });
    println!("{:>10}  {:>8}", "iteration", "coverage");
    println!("{:>10}  {}", 0, s.initial.coverage);
    for r in &run.records {
        if r.iteration % every == 0 || r.iteration == n {
            println!("{:>10}  {}", r.iteration, r.coverage);
        }
    }
    println!("iterations {n}");
    println!("gains {}", run.records.iter().filter(|r| r.gain).count());
    println!("failed tests {}", s.totals.failed_tests);
    println!("pool batches {}", s.totals.pool_batches);
    println!("initial coverage {}", s.initial.coverage);
    println!("final coverage {}", s.totals.final_coverage);

    if let Some(path) = plot_data {
        let mut text = String::from("# iteration coverage\n");
        text.push_str(&format!("0 {}\n", s.initial.coverage));
        for r in &run.records {
            text.push_str(&format!("{} {}\n", r.iteration, r.coverage));
        }
        write_text(path, &text)?;
    }
    Ok(())
}
