//! `tracetree`: compose problems, collect reasoning traces, build
//! thought-trees, train the correctness classifier, and drive the z-score
//! retry intervention.
//!
//! Stages communicate through JSONL artifacts in the output directory, so
//! each subcommand can run standalone or the whole chain can run at once
//! via `pipeline`. Exit codes: 0 success, 1 per-record failures occurred,
//! 2 configuration error.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tracetree_core::features::{self, FeatureSchema, Group, FeatureVector};
use tracetree_core::forest::{
    self, evaluate, feature_importance, partial_dependence, random_feature_ablation,
    split_protocol, subset_eval, train, tune_max_depth, FeatureSubset, ForestModel, SplitMode,
    TrainConfig,
};
use tracetree_core::forge::{BaseProblem, ComposedProblem};
use tracetree_core::gateway::{
    BackoffConfig, FixtureStore, Gateway, HttpTransport, Mode, ModelEndpoint, Role, SplitPolicy,
};
use tracetree_core::harness::judge::pass_at_1;
use tracetree_core::harness::pipeline::{
    self, composed_problem_set, judge_answer, run_pipeline, LevelSpec, PipelineConfig, PoolSource,
};
use tracetree_core::harness::report::render_text;
use tracetree_core::harness::store::{
    read_jsonl, write_jsonl, write_text, FeatureRecord, FlagRecord, ProblemRecord, SegmentRecord,
    Timestamps, TraceRecord, TreeRecord, VerdictRecord,
};
use tracetree_core::harness::synthetic::SyntheticModel;
use tracetree_core::harness::{family_id, language_id, source_identifiers, ProblemMeta};
use tracetree_core::intervene::{
    fit_stats, flag, run_intervention, FlaggedCase, InterventionMode, WatchSpec,
};
use tracetree_core::segment::{detect_code_spans, segment_sentences, split_sentences};
use tracetree_core::tree::{build_tree, Annotator};

#[derive(Parser)]
#[command(name = "tracetree", version, about)]
struct Cli {
    /// TOML config with all module settings; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Live => Mode::Live,
            ModeArg::Record => Mode::Record,
            ModeArg::Replay => Mode::Replay,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    L1Transfer,
    PooledOracle,
}

impl From<ProtocolArg> for SplitMode {
    fn from(p: ProtocolArg) -> SplitMode {
        match p {
            ProtocolArg::L1Transfer => SplitMode::L1Transfer,
            ProtocolArg::PooledOracle => SplitMode::PooledOracle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InterventionModeArg {
    OracleFiltered,
    Blind,
}

#[derive(Subcommand)]
enum Command {
    /// Compose problems from a pool and render their prompts.
    Compose {
        /// "bundled" or a path to a JSONL file of base problems.
        #[arg(long)]
        pool: Option<String>,
        /// Compose only this level (with --limit); default: config levels.
        #[arg(long)]
        level: Option<usize>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Ask the trace model for a completion per composed problem.
    Generate {
        /// Override the trace model name.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Split stored traces into atomic segments.
    Segment,
    /// Label segments and build thought-trees.
    Annotate {
        /// Annotation model name, or "fallback" for the keyword rules.
        #[arg(long)]
        annotator: Option<String>,
    },
    /// Extract feature vectors and judge every trace.
    Featurize,
    /// Train the forest under a split protocol.
    Train {
        #[arg(long, value_enum, default_value = "l1-transfer")]
        protocol: ProtocolArg,
        /// Comma-separated depths; 0 means unbounded.
        #[arg(long)]
        depth_grid: Option<String>,
    },
    /// Evaluate the stored model on a protocol's test partitions.
    Evaluate {
        #[arg(long, value_enum, default_value = "l1-transfer")]
        protocol: ProtocolArg,
    },
    /// Partial dependence of the failure probability on a feature.
    Pdp {
        /// Feature name or index; default: top six by importance.
        #[arg(long)]
        feature: Option<String>,
    },
    /// Random feature sampling plus the fixed subset evaluations.
    Ablate {
        /// Comma-separated subset sizes; 0 means all features.
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Fit stats over correct traces, flag anomalies, retry flagged ones.
    Intervene {
        /// Comma-separated name:+/- pairs overriding the watch list.
        #[arg(long)]
        watch: Option<String>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<InterventionModeArg>,
    },
    /// Print a run summary from the stored artifacts.
    Report,
    /// Run every stage end to end.
    Pipeline,
    /// Record scripted-model fixtures so replay runs work offline.
    MakeFixtures {
        /// Seed salt for the scripted answers.
        #[arg(long, default_value_t = 11)]
        salt: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            PipelineConfig::from_toml(&body).map_err(|e| anyhow!(e.to_string()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    config.validate().map_err(|e| anyhow!(e.to_string()))?;
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = load_config(&cli)?;
    let out = config.out_dir.clone();
    match cli.command {
        Command::Compose { pool, level, limit, seed } => {
            if let Some(pool) = pool {
                config.pool = Some(match pool.as_str() {
                    "bundled" => PoolSource::Bundled,
                    path => PoolSource::File { path: PathBuf::from(path) },
                });
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(level) = level {
                config.compose.levels = vec![LevelSpec {
                    level,
                    limit: limit.unwrap_or(20),
                }];
            } else if let Some(limit) = limit {
                for spec in &mut config.compose.levels {
                    spec.limit = limit;
                }
            }
            let problems = composed_problem_set(&config).map_err(|e| anyhow!(e.to_string()))?;
            write_stage_problems(&out, &problems)?;
            println!("composed {} problems into {}", problems.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate { model, mode } => {
            if let Some(model) = model {
                config.gateway.trace_model.model_name = model;
            }
            if let Some(mode) = mode {
                config.gateway.mode = mode.into();
            }
            let problems = read_stage_problems(&out)?;
            let gateway = http_gateway(&config);
            let endpoint = trace_endpoint(&config)?;
            let mode = config.gateway.mode;
            let mut records = Vec::new();
            let mut failures = 0usize;
            for (problem, _) in &problems {
                match gateway.complete(&endpoint, &problem.prompt_text, mode) {
                    Ok(completion) => records.push(TraceRecord {
                        trace_id: TraceRecord::derive_id(
                            &problem.id,
                            &endpoint.model_name,
                            &completion.raw_text,
                        ),
                        problem_id: problem.id.clone(),
                        model_id: endpoint.model_name.clone(),
                        level: problem.level,
                        raw_text: completion.raw_text,
                        reasoning_trace: completion.reasoning_trace,
                        final_answer: completion.final_answer,
                        truncated: completion.truncated,
                        timestamps: Timestamps {
                            generated_unix: completion.created_unix,
                        },
                    }),
                    Err(e) => {
                        log::warn!("generation failed for {}: {e}", problem.id);
                        failures += 1;
                    }
                }
            }
            write_jsonl(&out.join("traces.jsonl"), &records)?;
            println!("generated {} traces ({failures} failures)", records.len());
            Ok(exit_for_failures(failures))
        }
        Command::Segment => {
            let traces: Vec<TraceRecord> = read_jsonl(&out.join("traces.jsonl"))?;
            let mut records: Vec<SegmentRecord> = Vec::new();
            for trace in &traces {
                for seg in segments_of(&config, &trace.reasoning_trace) {
                    records.push(SegmentRecord {
                        trace_id: trace.trace_id.clone(),
                        index: seg.index,
                        text: seg.text,
                        span: [seg.span.0, seg.span.1],
                        starts_with_marker: seg.starts_with_marker,
                    });
                }
            }
            write_jsonl(&out.join("segments.jsonl"), &records)?;
            println!("segmented {} traces into {} segments", traces.len(), records.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Annotate { annotator } => {
            if let Some(name) = &annotator {
                if name != "fallback" {
                    config.gateway.annotator.model_name = name.clone();
                }
            }
            let problems = read_stage_problems(&out)?;
            let traces: Vec<TraceRecord> = read_jsonl(&out.join("traces.jsonl"))?;
            let by_problem: BTreeMap<&str, &(ComposedProblem, Vec<BaseProblem>)> =
                problems.iter().map(|p| (p.0.id.as_str(), p)).collect();
            let gateway = http_gateway(&config);
            let endpoint = annotation_endpoint(&config)?;
            let use_fallback = annotator.as_deref() == Some("fallback");
            let mut records = Vec::new();
            for trace in &traces {
                let (_, chain) = by_problem
                    .get(trace.problem_id.as_str())
                    .ok_or_else(|| anyhow!("trace {} references unknown problem", trace.trace_id))?;
                let idents: BTreeSet<String> = chain
                    .iter()
                    .flat_map(|p| source_identifiers(&p.source_text))
                    .collect();
                let segments = segments_of(&config, &trace.reasoning_trace);
                let ann = if use_fallback {
                    Annotator::Fallback
                } else {
                    Annotator::Model {
                        source: &gateway,
                        endpoint: &endpoint,
                        mode: config.gateway.mode,
                    }
                };
                let tree = build_tree(&segments, &ann, &idents);
                records.push(TreeRecord::from_tree(&trace.trace_id, &tree));
            }
            write_jsonl(&out.join("trees.jsonl"), &records)?;
            println!("annotated {} trees", records.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Featurize => {
            let problems = read_stage_problems(&out)?;
            let traces: Vec<TraceRecord> = read_jsonl(&out.join("traces.jsonl"))?;
            let trees: Vec<TreeRecord> = read_jsonl(&out.join("trees.jsonl"))?;
            let tree_by_trace: BTreeMap<&str, &TreeRecord> =
                trees.iter().map(|t| (t.trace_id.as_str(), t)).collect();
            let by_problem: BTreeMap<&str, &(ComposedProblem, Vec<BaseProblem>)> =
                problems.iter().map(|p| (p.0.id.as_str(), p)).collect();
            let schema = FeatureSchema::canonical();
            let mut feature_records = Vec::new();
            let mut verdict_records = Vec::new();
            let mut failures = 0usize;
            for trace in &traces {
                let Some((problem, chain)) = by_problem.get(trace.problem_id.as_str()) else {
                    log::warn!("trace {} references unknown problem", trace.trace_id);
                    failures += 1;
                    continue;
                };
                let refs: Vec<&BaseProblem> = chain.iter().collect();
                let idents: BTreeSet<String> = chain
                    .iter()
                    .flat_map(|p| source_identifiers(&p.source_text))
                    .collect();
                let spans = detect_code_spans(&trace.reasoning_trace);
                let sentences = split_sentences(&trace.reasoning_trace, &spans);
                let segments = segment_sentences(&sentences, &config.segmenter);
                // Rebuild the thought-tree from its stored record.
                let tree = match tree_by_trace.get(trace.trace_id.as_str()) {
                    Some(record) => tree_from_record(record, &segments),
                    None => build_tree(&segments, &Annotator::Fallback, &idents),
                };
                let head = &chain[0];
                let meta = ProblemMeta {
                    family_id: family_id(head.family),
                    source_lang_id: language_id(&effective_source_language(head)),
                    target_lang_id: language_id(&head.metadata_value("target_language")),
                    is_fortran: head
                        .metadata_value("target_language")
                        .eq_ignore_ascii_case("fortran"),
                    composition_level: problem.level as u32,
                    source_identifiers: idents,
                    final_answer_present: !trace.final_answer.trim().is_empty(),
                };
                let labels: Vec<_> = tree.nodes.iter().map(|n| n.label.value).collect();
                match features::extract(
                    &trace.trace_id,
                    &trace.reasoning_trace,
                    &segments,
                    &sentences,
                    &tree,
                    &labels,
                    &meta,
                    &config.features,
                ) {
                    Ok(vector) => feature_records.push(FeatureRecord {
                        trace_id: vector.trace_id,
                        values: vector.values,
                    }),
                    Err(e) => {
                        log::warn!("feature extraction failed for {}: {e}", trace.trace_id);
                        failures += 1;
                        continue;
                    }
                }
                let verdict = judge_answer(problem, &refs, &trace.final_answer);
                verdict_records.push(VerdictRecord {
                    trace_id: trace.trace_id.clone(),
                    problem_id: problem.id.clone(),
                    level: problem.level,
                    status: verdict.status,
                    error_kind: verdict.error_kind,
                    detail: verdict.detail,
                });
            }
            write_jsonl(&out.join("features.jsonl"), &feature_records)?;
            write_jsonl(&out.join("verdicts.jsonl"), &verdict_records)?;
            write_text(
                &out.join("schema.json"),
                &serde_json::to_string_pretty(&schema.sidecar())?,
            )?;
            println!(
                "featurized {} traces ({failures} failures)",
                feature_records.len()
            );
            Ok(exit_for_failures(failures))
        }
        Command::Train { protocol, depth_grid } => {
            let (x, y, levels, _ids) = load_dataset(&out)?;
            let schema = FeatureSchema::canonical();
            let grid = match depth_grid {
                Some(text) => parse_depth_grid(&text)?,
                None => config
                    .forest
                    .depth_grid
                    .iter()
                    .map(|&d| if d == 0 { None } else { Some(d) })
                    .collect(),
            };
            let base = base_train_config(&config);
            let plan = split_protocol(&levels, protocol.into(), config.seed)
                .map_err(|e| anyhow!(e.to_string()))?;
            let x_train = forest::select_rows(&x, &plan.train);
            let y_train = forest::select_labels(&y, &plan.train);
            let chosen = if y_train.contains(&0) && y_train.contains(&1) {
                tune_max_depth(&x_train, &y_train, &grid, config.forest.val_fraction, config.seed, &base)?
            } else {
                None
            };
            let model = train(
                &x_train,
                &y_train,
                &TrainConfig { max_depth: chosen, ..base },
                &schema.hash(),
            )?;
            write_text(&out.join("model.json"), &serde_json::to_string(&model)?)?;
            let mut per_level = BTreeMap::new();
            for (level, rows) in &plan.test {
                if rows.is_empty() {
                    continue;
                }
                let metrics = evaluate(
                    &model,
                    &forest::select_rows(&x, rows),
                    &forest::select_labels(&y, rows),
                )?;
                per_level.insert(*level as usize, metrics);
            }
            let key = match protocol {
                ProtocolArg::L1Transfer => "l1_transfer",
                ProtocolArg::PooledOracle => "pooled_oracle",
            };
            update_metrics(
                &out.join("metrics.json"),
                key,
                serde_json::json!({
                    "chosen_depth": chosen,
                    "train_rows": plan.train.len(),
                    "per_level": per_level,
                }),
            )?;
            println!(
                "trained {key} model (depth {:?}) on {} rows; levels evaluated: {:?}",
                chosen,
                plan.train.len(),
                per_level.keys().collect::<Vec<_>>()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { protocol } => {
            let (x, y, levels, _ids) = load_dataset(&out)?;
            let model = load_model(&out)?;
            let plan = split_protocol(&levels, protocol.into(), config.seed)
                .map_err(|e| anyhow!(e.to_string()))?;
            for (level, rows) in &plan.test {
                if rows.is_empty() {
                    continue;
                }
                let metrics = evaluate(
                    &model,
                    &forest::select_rows(&x, rows),
                    &forest::select_labels(&y, rows),
                )?;
                println!(
                    "L{level}: acc {:.3}  w-f1 {:.3}  inc-f1 {:.3}  cor-f1 {:.3}  support {:?}",
                    metrics.accuracy,
                    metrics.weighted_f1,
                    metrics.f1_incorrect,
                    metrics.f1_correct,
                    metrics.support
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Pdp { feature } => {
            let (x, _, _, _) = load_dataset(&out)?;
            let model = load_model(&out)?;
            let schema = FeatureSchema::canonical();
            let indices: Vec<usize> = match feature {
                Some(spec) => {
                    let index = schema
                        .index_of(&spec)
                        .or_else(|| spec.parse::<usize>().ok().filter(|&i| i < schema.len()))
                        .ok_or_else(|| anyhow!("unknown feature '{spec}'"))?;
                    vec![index]
                }
                None => {
                    let imp = feature_importance(&model);
                    let mut ranked: Vec<usize> = (0..schema.len()).collect();
                    ranked.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
                    ranked.into_iter().take(6).collect()
                }
            };
            let mut csv = String::from("feature,name,grid_value,failure_prob\n");
            for index in indices {
                for (value, failure) in partial_dependence(&model, &x, index, 20)? {
                    csv.push_str(&format!("{index},{},{value},{failure}\n", schema.names()[index]));
                }
            }
            write_text(&out.join("pdp.csv"), &csv)?;
            println!("wrote {}", out.join("pdp.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate { ks, trials } => {
            let (x, y, _, _) = load_dataset(&out)?;
            let schema = FeatureSchema::canonical();
            let d = schema.len();
            let ks: Vec<usize> = match ks {
                Some(text) => text
                    .split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|e| anyhow!("bad k '{t}': {e}")))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .map(|k| if k == 0 { d } else { k })
                    .collect(),
                None => config
                    .ablation
                    .ks
                    .iter()
                    .map(|&k| if k == 0 { d } else { k })
                    .collect(),
            };
            let trials = trials.unwrap_or(config.ablation.trials);
            let base = base_train_config(&config);
            let report = random_feature_ablation(&x, &y, &ks, trials, config.seed, &base)?;
            let mut csv = String::from("k,mean_accuracy,std_accuracy\n");
            for point in &report {
                csv.push_str(&format!("{},{},{}\n", point.k, point.mean_accuracy, point.std_accuracy));
                println!("k={}: mean {:.3} +/- {:.3}", point.k, point.mean_accuracy, point.std_accuracy);
            }
            write_text(&out.join("ablation.csv"), &csv)?;
            for (name, columns) in [
                ("length_only", schema.group_indices(Group::Length)),
                ("non_tree", schema.non_tree_indices()),
            ] {
                let subset = subset_eval(&x, &y, name, &columns, config.seed, &base)?;
                println!(
                    "subset {name} ({} cols): acc {:.3}",
                    subset.columns, subset.metrics.accuracy
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Intervene { watch, theta, mode } => {
            let problems = read_stage_problems(&out)?;
            let traces: Vec<TraceRecord> = read_jsonl(&out.join("traces.jsonl"))?;
            let verdicts: Vec<VerdictRecord> = read_jsonl(&out.join("verdicts.jsonl"))?;
            let feature_records: Vec<FeatureRecord> = read_jsonl(&out.join("features.jsonl"))?;
            let schema = FeatureSchema::canonical();
            let verdict_by_trace: BTreeMap<&str, &VerdictRecord> =
                verdicts.iter().map(|v| (v.trace_id.as_str(), v)).collect();
            let trace_by_id: BTreeMap<&str, &TraceRecord> =
                traces.iter().map(|t| (t.trace_id.as_str(), t)).collect();
            let by_problem: BTreeMap<&str, &(ComposedProblem, Vec<BaseProblem>)> =
                problems.iter().map(|p| (p.0.id.as_str(), p)).collect();

            let vectors: Vec<FeatureVector> = feature_records
                .iter()
                .map(|r| FeatureVector {
                    trace_id: r.trace_id.clone(),
                    values: r.values.clone(),
                })
                .collect();
            let passed = |trace_id: &str| {
                verdict_by_trace
                    .get(trace_id)
                    .map(|v| v.status == tracetree_core::harness::judge::VerdictStatus::Pass)
                    .unwrap_or(false)
            };
            let correct_l1: Vec<&FeatureVector> = vectors
                .iter()
                .filter(|v| {
                    trace_by_id
                        .get(v.trace_id.as_str())
                        .map(|t| t.level == 1)
                        .unwrap_or(false)
                        && passed(&v.trace_id)
                })
                .collect();
            if correct_l1.is_empty() {
                bail!("no correct level-1 traces to fit the reference statistics");
            }
            let stats = fit_stats("correct_l1", &correct_l1).map_err(|e| anyhow!(e.to_string()))?;
            let watch_spec = WatchSpec {
                entries: match watch {
                    Some(text) => parse_watch(&text)?,
                    None => WatchSpec::default_watch(&schema).entries,
                },
                theta: theta.unwrap_or(config.intervention.theta),
            };
            watch_spec.validate(&schema).map_err(|e| anyhow!(e.to_string()))?;
            let intervention_mode = match mode {
                Some(InterventionModeArg::Blind) => InterventionMode::Blind,
                Some(InterventionModeArg::OracleFiltered) => InterventionMode::OracleFiltered,
                None => config.intervention.mode,
            };
            let mut flag_records = Vec::new();
            let mut cases = Vec::new();
            for vector in &vectors {
                let report = flag(vector, &stats, &watch_spec, &schema)
                    .map_err(|e| anyhow!(e.to_string()))?;
                if report.flagged {
                    if let Some(trace) = trace_by_id.get(vector.trace_id.as_str()) {
                        if let Some((problem, _)) = by_problem.get(trace.problem_id.as_str()) {
                            cases.push(FlaggedCase {
                                trace_id: vector.trace_id.clone(),
                                problem_id: problem.id.clone(),
                                base_prompt: problem.prompt_text.clone(),
                                truly_incorrect: Some(!passed(&vector.trace_id)),
                            });
                        }
                    }
                }
                flag_records.push(FlagRecord {
                    trace_id: vector.trace_id.clone(),
                    flagged: report.flagged,
                    triggers: report.triggers,
                });
            }
            let gateway = http_gateway(&config);
            let endpoint = trace_endpoint(&config)?;
            let mut judge = |problem_id: &str, answer: &str| -> std::result::Result<bool, String> {
                let (problem, chain) = by_problem
                    .get(problem_id)
                    .ok_or_else(|| format!("unknown problem {problem_id}"))?;
                let refs: Vec<&BaseProblem> = chain.iter().collect();
                Ok(judge_answer(problem, &refs, answer).passed())
            };
            let result = run_intervention(
                &cases,
                &gateway,
                &endpoint,
                config.gateway.mode,
                intervention_mode,
                &mut judge,
            );
            write_jsonl(&out.join("flags.jsonl"), &flag_records)?;
            write_text(&out.join("stats.json"), &serde_json::to_string_pretty(&stats)?)?;
            write_text(
                &out.join("intervention.json"),
                &serde_json::to_string_pretty(&result)?,
            )?;
            match result.intervention_pass_at_1 {
                Some(rate) => println!(
                    "intervention: {}/{} recovered ({rate:.2})",
                    result.recovered_count, result.flagged_count
                ),
                None => println!("intervention: nothing flagged"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report => {
            let report_path = out.join("report.json");
            if report_path.is_file() {
                let report: pipeline::PipelineReport =
                    serde_json::from_str(&std::fs::read_to_string(&report_path)?)?;
                print!("{}", render_text(&report));
                return Ok(ExitCode::SUCCESS);
            }
            // Stage-by-stage flow: summarize whatever artifacts exist.
            let verdicts_path = out.join("verdicts.jsonl");
            if verdicts_path.is_file() {
                let verdicts: Vec<VerdictRecord> = read_jsonl(&verdicts_path)?;
                let mut by_level: BTreeMap<usize, Vec<tracetree_core::Verdict>> = BTreeMap::new();
                for v in &verdicts {
                    let verdict = match v.status {
                        tracetree_core::harness::judge::VerdictStatus::Pass => {
                            tracetree_core::Verdict::pass()
                        }
                        tracetree_core::harness::judge::VerdictStatus::Fail => {
                            tracetree_core::Verdict::fail("")
                        }
                        tracetree_core::harness::judge::VerdictStatus::Error => {
                            tracetree_core::Verdict::error(
                                v.error_kind.unwrap_or(
                                    tracetree_core::harness::judge::ErrorKind::Runtime,
                                ),
                                "",
                            )
                        }
                    };
                    by_level.entry(v.level).or_default().push(verdict);
                }
                println!("pass@1 by level:");
                for (level, vs) in &by_level {
                    if let Some(rate) = pass_at_1(vs) {
                        println!("  L{level}: {rate:.3} ({} traces)", vs.len());
                    }
                }
            }
            let metrics_path = out.join("metrics.json");
            if metrics_path.is_file() {
                println!("metrics.json:");
                println!("{}", std::fs::read_to_string(&metrics_path)?);
            }
            let intervention_path = out.join("intervention.json");
            if intervention_path.is_file() {
                println!("intervention.json:");
                println!("{}", std::fs::read_to_string(&intervention_path)?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Pipeline => {
            let outcome = run_pipeline(&config, HttpTransport::new())
                .map_err(|e| anyhow!(e.to_string()))?;
            print!("{}", render_text(&outcome.report));
            Ok(exit_for_failures(outcome.report.per_record_failures))
        }
        Command::MakeFixtures { salt } => {
            let model = SyntheticModel::for_pipeline(&config, salt)
                .map_err(|e| anyhow!(e.to_string()))?;
            let mut record_config = config.clone();
            record_config.gateway.mode = Mode::Record;
            let outcome =
                run_pipeline(&record_config, model).map_err(|e| anyhow!(e.to_string()))?;
            println!(
                "recorded fixtures for {} problems into {}",
                outcome.report.problems,
                record_config.gateway.fixture_dir.display()
            );
            print!("{}", render_text(&outcome.report));
            Ok(exit_for_failures(outcome.report.per_record_failures))
        }
    }
}

fn exit_for_failures(failures: usize) -> ExitCode {
    if failures > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn http_gateway(config: &PipelineConfig) -> Gateway<HttpTransport> {
    Gateway::new(
        HttpTransport::new(),
        FixtureStore::new(&config.gateway.fixture_dir),
        SplitPolicy::markers(&config.gateway.split_open, &config.gateway.split_close),
    )
    .with_backoff(BackoffConfig {
        attempts: config.gateway.backoff_attempts,
        base_secs: config.gateway.backoff_base_secs,
        factor: 2.0,
    })
}

fn trace_endpoint(config: &PipelineConfig) -> Result<ModelEndpoint> {
    let c = &config.gateway.trace_model;
    let mut ep = ModelEndpoint::new(&c.base_url, &c.model_name, Role::TraceGeneration, c.temperature, c.max_tokens)
        .map_err(|e| anyhow!(e.to_string()))?;
    ep.api_key_env = c.api_key_env.clone();
    Ok(ep)
}

fn annotation_endpoint(config: &PipelineConfig) -> Result<ModelEndpoint> {
    let c = &config.gateway.annotator;
    let mut ep = ModelEndpoint::new(&c.base_url, &c.model_name, Role::Annotation, c.temperature, c.max_tokens)
        .map_err(|e| anyhow!(e.to_string()))?;
    ep.api_key_env = c.api_key_env.clone();
    Ok(ep)
}

fn base_train_config(config: &PipelineConfig) -> TrainConfig {
    TrainConfig {
        n_estimators: config.forest.n_estimators,
        max_depth: None,
        min_samples_leaf: config.forest.min_samples_leaf,
        features_per_split: FeatureSubset::Sqrt,
        bootstrap: true,
        seed: config.seed,
    }
}

fn effective_source_language(head: &BaseProblem) -> String {
    let explicit = head.metadata_value("source_language");
    if explicit.is_empty() {
        head.subject_language.clone()
    } else {
        explicit
    }
}

fn segments_of(config: &PipelineConfig, trace: &str) -> Vec<tracetree_core::Segment> {
    let spans = detect_code_spans(trace);
    let sentences = split_sentences(trace, &spans);
    segment_sentences(&sentences, &config.segmenter)
}

/// Write `problems.jsonl` (the declared external format) plus
/// `pool.jsonl`, the full base-problem records downstream stages join
/// against (metadata included).
fn write_stage_problems(out: &Path, problems: &[(ComposedProblem, Vec<BaseProblem>)]) -> Result<()> {
    let records: Vec<ProblemRecord> = problems
        .iter()
        .map(|(p, chain)| {
            let refs: Vec<&BaseProblem> = chain.iter().collect();
            ProblemRecord::assemble(p, &refs)
        })
        .collect();
    write_jsonl(&out.join("problems.jsonl"), &records)?;
    let mut pool: Vec<BaseProblem> = Vec::new();
    let mut seen = BTreeSet::new();
    for (_, chain) in problems {
        for base in chain {
            if seen.insert(base.id.clone()) {
                pool.push(base.clone());
            }
        }
    }
    write_jsonl(&out.join("pool.jsonl"), &pool)?;
    Ok(())
}

fn read_stage_problems(out: &Path) -> Result<Vec<(ComposedProblem, Vec<BaseProblem>)>> {
    let records: Vec<ProblemRecord> = read_jsonl(&out.join("problems.jsonl"))
        .context("problems.jsonl missing; run `tracetree compose` first")?;
    let pool: Vec<BaseProblem> = read_jsonl(&out.join("pool.jsonl"))
        .context("pool.jsonl missing; run `tracetree compose` first")?;
    let by_id: BTreeMap<&str, &BaseProblem> = pool.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut problems = Vec::with_capacity(records.len());
    for record in &records {
        let chain: Vec<BaseProblem> = record
            .chain
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|p| (*p).clone())
                    .ok_or_else(|| anyhow!("pool.jsonl lacks problem {id}"))
            })
            .collect::<Result<_>>()?;
        problems.push((
            ComposedProblem {
                id: record.id.clone(),
                chain: record.chain.clone(),
                level: record.level,
                prompt_text: record.prompt.clone(),
                oracle: record.oracle.clone(),
            },
            chain,
        ));
    }
    Ok(problems)
}

/// Rebuild a thought-tree from its stored record plus the segment texts.
fn tree_from_record(
    record: &TreeRecord,
    segments: &[tracetree_core::Segment],
) -> tracetree_core::ThoughtTree {
    let mut tree = tracetree_core::ThoughtTree::default();
    for node in &record.nodes {
        tree.nodes.push(tracetree_core::ThoughtNode {
            id: node.id.clone(),
            segment_index: node.segment_index,
            label: tracetree_core::tree::SemanticLabel {
                value: node.label,
                provenance: node.label_provenance,
            },
            parent_id: node.parent_id.clone(),
            relation: node.relation,
            repaired: node.repaired,
        });
        tree.texts.push(
            segments
                .get(node.segment_index)
                .map(|s| s.text.clone())
                .unwrap_or_default(),
        );
    }
    tree
}

fn load_dataset(out: &Path) -> Result<(Vec<Vec<f64>>, Vec<u8>, Vec<u32>, Vec<String>)> {
    let features: Vec<FeatureRecord> = read_jsonl(&out.join("features.jsonl"))
        .context("features.jsonl missing; run `tracetree featurize` first")?;
    let verdicts: Vec<VerdictRecord> = read_jsonl(&out.join("verdicts.jsonl"))
        .context("verdicts.jsonl missing; run `tracetree featurize` first")?;
    let verdict_by_trace: BTreeMap<&str, &VerdictRecord> =
        verdicts.iter().map(|v| (v.trace_id.as_str(), v)).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut levels = Vec::new();
    let mut ids = Vec::new();
    for record in &features {
        let verdict = verdict_by_trace.get(record.trace_id.as_str()).ok_or_else(|| {
            anyhow!(
                "feature row {} has no verdict (missing level tag)",
                record.trace_id
            )
        })?;
        x.push(record.values.clone());
        y.push((verdict.status == tracetree_core::harness::judge::VerdictStatus::Pass) as u8);
        levels.push(verdict.level as u32);
        ids.push(record.trace_id.clone());
    }
    if x.is_empty() {
        bail!("dataset is empty");
    }
    Ok((x, y, levels, ids))
}

fn load_model(out: &Path) -> Result<ForestModel> {
    let body = std::fs::read_to_string(out.join("model.json"))
        .context("model.json missing; run `tracetree train` first")?;
    Ok(serde_json::from_str(&body)?)
}

fn parse_depth_grid(text: &str) -> Result<Vec<Option<usize>>> {
    text.split(',')
        .map(|t| {
            let d: usize = t.trim().parse().map_err(|e| anyhow!("bad depth '{t}': {e}"))?;
            Ok(if d == 0 { None } else { Some(d) })
        })
        .collect()
}

fn parse_watch(text: &str) -> Result<Vec<(String, i8)>> {
    text.split(',')
        .map(|entry| {
            let entry = entry.trim();
            let (name, dir) = entry
                .rsplit_once(':')
                .ok_or_else(|| anyhow!("watch entry '{entry}' is not name:+ or name:-"))?;
            let dir = match dir {
                "+" | "+1" => 1i8,
                "-" | "-1" => -1i8,
                other => bail!("watch direction '{other}' must be + or -"),
            };
            Ok((name.to_string(), dir))
        })
        .collect()
}

fn update_metrics(path: &Path, key: &str, value: serde_json::Value) -> Result<()> {
    let mut doc: serde_json::Value = if path.is_file() {
        serde_json::from_str(&std::fs::read_to_string(path)?)?
    } else {
        serde_json::json!({})
    };
    doc.as_object_mut()
        .ok_or_else(|| anyhow!("metrics.json is not an object"))?
        .insert(key.to_string(), value);
    write_text(path, &serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
