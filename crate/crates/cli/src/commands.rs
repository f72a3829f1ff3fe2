use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use farecombo::construct::{LabeledDay, MarketStats, HORIZON_BUCKETS};
use farecombo::domain::AirportId;
use farecombo::embed::{
    build_traces, nearest_neighbors, region_cosine_means, table_csv, train_skipgram, EmbeddingTable,
};
use farecombo::eval::{self, EvalError};
use farecombo::pipeline::{
    production_gap_report, rules_csv, run_pipeline, run_summary_csv, stability_csv, staleness_csv,
    staleness_experiment, sweep_training_window, window_csv, PipelineError,
};
use farecombo::simgen::World;
use farecombo::zoo::{auc_csv, evaluate_zoo, train_zoo};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::store::{self, OutputLock};
use crate::{Common, DataArgs, EvalArgs, PipelineArgs};

/// Resolved config plus the loaded world, for commands that read simulated data.
struct Loaded {
    config: ExperimentConfig,
    world: World,
    data: PathBuf,
}

fn load(common: &Common, data: &DataArgs) -> Result<Loaded, CliError> {
    let mut config = ExperimentConfig::load(common.config.as_deref())?.with_seed(common.seed);
    let data = data.data.clone().unwrap_or_else(|| common.out.clone());
    let world = store::load_world(&data)?;
    // The world on disk decides the simulation settings.
    config.sim = world.config.clone();
    config.validate()?;
    Ok(Loaded { config, world, data })
}

fn write_resolved(out: &Path, command: &str, config: &ExperimentConfig) -> Result<(), CliError> {
    store::write_text(&out.join(format!("{command}.config.toml")), &config.to_toml()?)
}

fn label_range(loaded: &Loaded, days: std::ops::Range<u32>) -> Result<Vec<LabeledDay>, CliError> {
    let top_k = loaded.config.experiments.top_k;
    days.map(|d| {
        let gt = store::load_day(&loaded.data, d)?;
        loaded.world.label_day(&gt, top_k).map_err(|e| CliError::CorruptData {
            path: store::ground_truth_path(&loaded.data, d).display().to_string(),
            reason: e.to_string(),
        })
    })
    .collect()
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let config = ExperimentConfig::load(common.config.as_deref())?.with_seed(common.seed);
    config.validate()?;
    let out = &common.out;
    let _lock = OutputLock::acquire(out)?;
    let world = World::generate(config.sim.clone()).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    store::write_json(&out.join(store::WORLD_FILE), &world)?;
    let mut labeled = Vec::with_capacity(world.config.n_days as usize);
    for d in 0..world.config.n_days {
        let gt = world.generate_day(d).map_err(|e| CliError::Failed(e.to_string()))?;
        store::write_day(out, &gt)?;
        labeled.push(
            world.label_day(&gt, config.experiments.top_k).map_err(|e| CliError::Failed(e.to_string()))?,
        );
    }
    let prone: Vec<bool> = world.catalog.airlines().iter().map(|a| a.is_combo_prone()).collect();
    let stats = MarketStats::compute(&labeled, &prone);
    store::write_json(&out.join("summary.json"), &stats)?;
    write_resolved(out, "simulate", &config)?;
    print!("{}", market_summary(&world, &stats));
    Ok(())
}

fn market_summary(world: &World, stats: &MarketStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "days {}  queries {}  instances {}", stats.n_days, stats.n_queries, stats.n_instances);
    let _ = writeln!(s, "positive instance rate {:.4}", stats.positive_rate);
    let _ = writeln!(
        s,
        "competitive combinations {}  touching combo-prone airlines {:.1}%",
        stats.competitive_combos,
        100.0 * stats.prone_combo_share
    );
    let buckets: Vec<String> = HORIZON_BUCKETS
        .iter()
        .zip(stats.horizon_share)
        .map(|(b, share)| format!("{b}d {:.1}%", 100.0 * share))
        .collect();
    let _ = writeln!(s, "queries with a competitive combination by horizon: {}", buckets.join("  "));
    let mut shares: Vec<(usize, f64)> = stats.airline_leg_share.iter().copied().enumerate().collect();
    shares.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top: Vec<String> = shares
        .iter()
        .take(5)
        .map(|&(a, share)| {
            let al = &world.catalog.airlines()[a];
            let tag = if al.is_combo_prone() { "*" } else { "" };
            format!("{}{tag} {:.1}%", al.code, 100.0 * share)
        })
        .collect();
    let _ = writeln!(s, "combination legs by airline (* combo-prone): {}", top.join("  "));
    s
}

pub fn eval_models(common: &Common, args: &EvalArgs) -> Result<(), CliError> {
    let mut loaded = load(common, &args.data)?;
    if let Some(w) = args.window {
        loaded.config.experiments.eval_window_days = w;
    }
    loaded.config.validate()?;
    if let Some(b) = args.budget {
        if !(b > 0.0 && b <= 1.0) {
            return Err(CliError::InvalidConfig(format!("--budget {b} must lie in (0, 1]")));
        }
    }
    let out = &common.out;
    let _lock = OutputLock::acquire(out)?;
    let w = loaded.config.experiments.eval_window_days;
    let n = loaded.world.config.n_days as usize;
    if n <= w {
        return Err(CliError::InsufficientHistory { needed: w + 1, available: n });
    }
    let mut days = label_range(&loaded, (n - 1 - w) as u32..n as u32)?;
    let target = days.pop().expect("window is non-empty");
    let cat = &loaded.world.catalog;
    let zoo = train_zoo(&days, cat.n_airports(), cat.n_airlines(), &loaded.config.models)?;
    let results = evaluate_zoo(&zoo, &target, loaded.config.models.curve_cap)?;

    store::write_text(&out.join("models_auc.csv"), &auc_csv(&results))?;
    for r in &results {
        let name = r.label().replace('/', "-");
        store::write_text(&out.join("curves").join(format!("{name}.csv")), &eval::curve_csv(&r.curve))?;
    }
    if let Some(budget) = args.budget {
        let mut csv = String::from("model,feature_mode,budget,threshold,cost,recall\n");
        for r in &results {
            let mode = r.feature_mode.map_or(String::new(), |m| m.to_string());
            match eval::pick_budget(&r.curve, budget) {
                Ok(d) => {
                    let _ = writeln!(csv, "{},{mode},{budget},{},{:.6},{:.6}", r.model, d.threshold, d.cost, d.recall);
                }
                Err(EvalError::BudgetTooSmall(_)) => {
                    let _ = writeln!(csv, "{},{mode},{budget},,,", r.model);
                }
                Err(e) => return Err(CliError::Failed(e.to_string())),
            }
        }
        store::write_text(&out.join("models_budget.csv"), &csv)?;
    }
    if args.export_models {
        for s in &zoo.scorers {
            let name = match s.feature_mode() {
                Some(m) if s.kind() == farecombo::models::ModelKind::RandomForest => format!("{}-{m}", s.kind()),
                _ => s.kind().to_string(),
            };
            store::write_json(&out.join("models").join(format!("{name}.json")), &s.envelope())?;
        }
    }
    write_resolved(out, "eval-models", &loaded.config)?;

    println!(
        "trained on days {}..{}, evaluated on day {} (positive rate {:.4})",
        days[0].day,
        target.day - 1,
        target.day,
        target.positive_rate()
    );
    for r in &results {
        println!("{:<32} {:>6.2}", r.label(), r.auc);
    }
    Ok(())
}

pub fn pipeline(common: &Common, args: &PipelineArgs) -> Result<(), CliError> {
    let mut loaded = load(common, &args.data)?;
    let p = &mut loaded.config.pipeline;
    if let Some(b) = args.budget {
        p.budget = b;
    }
    if let Some(w) = args.window {
        p.train_window_days = w;
    }
    if let Some(m) = args.feature_mode {
        p.model.feature_mode = m.into();
    }
    loaded.config.validate()?;
    let out = &common.out;
    let _lock = OutputLock::acquire(out)?;
    let n = loaded.world.config.n_days;
    let days = label_range(&loaded, 0..n)?;
    let cfg = &loaded.config;
    let n_airports = loaded.world.catalog.n_airports();
    let run = run_pipeline(&days, n_airports, &cfg.models, &cfg.pipeline)?;

    store::write_text(&out.join("run_summary.csv"), &run_summary_csv(&run))?;
    for d in &run.days {
        let dir = store::day_dir(out, d.report.day);
        store::write_text(&dir.join("rules.csv"), &rules_csv(&d.served, &loaded.world.catalog))?;
        store::write_json(&dir.join("report.json"), &d.report)?;
    }
    match production_gap_report(&run) {
        Ok(rows) => {
            let mut csv = String::from("day,offline_recall,served_recall,relative_gap\n");
            for r in rows {
                let _ = writeln!(csv, "{},{:.6},{:.6},{:.6}", r.day, r.offline_recall, r.served_recall, r.relative_gap);
            }
            store::write_text(&out.join("production_gap.csv"), &csv)?;
        }
        Err(PipelineError::NoServedDays) => {}
        Err(e) => return Err(e.into()),
    }
    if args.stability {
        store::write_text(&out.join("stability.csv"), &stability_csv(&run))?;
    }
    let spec = cfg.pipeline.model;
    let w = cfg.pipeline.train_window_days;
    if args.staleness {
        let report = staleness_experiment(&days, w, cfg.experiments.staleness_horizon, spec, n_airports, &cfg.models)?;
        store::write_text(&out.join("staleness.csv"), &staleness_csv(&report))?;
        println!("staleness: mean daily-minus-one-off AUC over the last 3 days {:+.2}", report.tail_gap(3).unwrap_or(0.0));
    }
    if args.window_sweep {
        let (fit, skipped): (Vec<usize>, Vec<usize>) =
            cfg.experiments.window_sizes.iter().partition(|&&s| s < days.len());
        if !skipped.is_empty() {
            eprintln!("window sweep: skipping sizes {skipped:?}, which exceed the {} available days", days.len() - 1);
        }
        let points =
            sweep_training_window(&days, &fit, cfg.experiments.window_total_queries, spec, n_airports, &cfg.models)?;
        store::write_text(&out.join("window_sweep.csv"), &window_csv(&points))?;
    }
    write_resolved(out, "pipeline", cfg)?;

    let released = run.days.iter().filter(|d| d.report.released).count();
    println!("{} days run, {released} released", run.days.len());
    for d in &run.days {
        let r = &d.report;
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "day {:>2}  {}  rules {:>4}  served recall {}  cost {:.3}",
            r.day,
            if r.released { "released" } else { "held    " },
            r.rules_served,
            fmt(r.served_recall),
            r.served_cost
        );
    }
    if released == 0 {
        return Err(CliError::NothingReleased);
    }
    Ok(())
}

pub fn embed(common: &Common, args: &DataArgs) -> Result<(), CliError> {
    let loaded = load(common, args)?;
    let out = &common.out;
    let _lock = OutputLock::acquire(out)?;
    let mut queries = Vec::new();
    for d in 0..loaded.world.config.n_days {
        queries.extend(store::load_day(&loaded.data, d)?.records.into_iter().map(|r| r.query));
    }
    let cat = &loaded.world.catalog;
    let corpus = build_traces(queries.iter());
    let table = train_skipgram(&corpus, cat.n_airports(), &loaded.config.models.skipgram)?.table;
    let code = |id: AirportId| cat.airport(id).map_or_else(|| id.0.to_string(), |a| a.code.clone());
    store::write_text(&out.join("embeddings.csv"), &table_csv(&table, code))?;
    let k = loaded.config.experiments.embed_neighbors;
    store::write_text(&out.join("neighbors.csv"), &neighbors_csv(&table, k, &code)?)?;
    write_resolved(out, "embed", &loaded.config)?;

    println!("{} traces over {} airports, dimension {}", corpus.sequences.len(), table.len(), table.dim);
    let regions: Vec<u32> = cat.airports().iter().map(|a| a.region_id).collect();
    if loaded.world.config.n_regions > 1 {
        let (intra, inter) = region_cosine_means(&table, &regions);
        println!("mean cosine within regions {intra:.3}, across regions {inter:.3}");
    }
    let mut by_pop: Vec<_> = cat.airports().iter().collect();
    by_pop.sort_by(|a, b| b.popularity_weight.total_cmp(&a.popularity_weight).then(a.id.cmp(&b.id)));
    for a in by_pop.iter().take(loaded.config.experiments.embed_sample_airports) {
        let nn = nearest_neighbors(&table, a.id, k)?;
        let list: Vec<String> = nn
            .iter()
            .map(|&(b, c)| format!("{}(r{}) {c:.3}", code(b), regions[b.index()]))
            .collect();
        println!("{} (r{}): {}", a.code, a.region_id, list.join(", "));
    }
    Ok(())
}

fn neighbors_csv(
    table: &EmbeddingTable,
    k: usize,
    code: &impl Fn(AirportId) -> String,
) -> Result<String, CliError> {
    let mut csv = String::from("airport,rank,neighbor,cosine\n");
    for i in 0..table.len() {
        let a = AirportId(i as u16);
        for (rank, (b, c)) in nearest_neighbors(table, a, k)?.into_iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{c:.6}", code(a), rank + 1, code(b));
        }
    }
    Ok(csv)
}
