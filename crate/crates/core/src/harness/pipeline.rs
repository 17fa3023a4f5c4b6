//! End-to-end pipeline: compose problems, collect traces, build trees,
//! extract features, train and analyze the classifier, flag and retry.
//!
//! Every stage writes its artifact under the output directory and the run
//! manifest lists them all. Given replay mode and an intact fixture
//! directory, two runs of the same config produce byte-identical artifact
//! sets; all randomness flows from the single config seed.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::features::{self, FeatureSchema, FeatureVector, Group, TraceFeatureConfig};
use crate::forest::{
    self, evaluate, feature_importance, partial_dependence, random_feature_ablation,
    split_protocol, subset_eval, train, tune_max_depth, AblationPoint, FeatureSubset, Metrics,
    SplitMode, SplitPlan, SubsetReport, TrainConfig,
};
use crate::forge::{
    compose_with_templates, enumerate_compositions, BaseProblem, ComposedProblem, Family,
};
use crate::gateway::{
    fixture_key, BackoffConfig, FixtureStore, Gateway, GatewayError, Mode, ModelEndpoint, Role,
    SplitPolicy, Transport,
};
use crate::harness::judge::{
    decode_fim_answer, judge_execution, judge_fim, judge_translation, pass_at_1, resolve_expected,
    ErrorKind, Verdict,
};
use crate::harness::store::{
    self, FeatureRecord, FlagRecord, ProblemRecord, SegmentRecord, Timestamps, TraceRecord,
    TreeRecord, VerdictRecord,
};
use crate::harness::{family_id, language_id, source_identifiers, ProblemMeta};
use crate::hashing::mix_seed_str;
use crate::intervene::{
    self, fit_stats, flag, FlaggedCase, InterventionMode, InterventionResult,
    WatchSpec,
};
use crate::segment::{detect_code_spans, segment_sentences, split_sentences, SegmentConfig};
use crate::tree::{build_tree, Annotator, Provenance, ThoughtTree};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {detail}")]
    Config { detail: String },
    #[error("fixture miss in replay mode for key {key}")]
    FixtureMiss { key: String },
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("forest stage failed: {0}")]
    Forest(#[from] forest::ForestError),
    #[error("intervention stage failed: {0}")]
    Intervene(#[from] intervene::InterveneError),
}

/// Where base problems come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum PoolSource {
    /// The bundled mini-corpus.
    Bundled,
    /// A JSONL file of serialized base problems.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub level: usize,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeStageConfig {
    pub template_set: String,
    pub levels: Vec<LevelSpec>,
}

impl Default for ComposeStageConfig {
    fn default() -> Self {
        Self {
            template_set: "default".to_string(),
            levels: vec![
                LevelSpec { level: 1, limit: 20 },
                LevelSpec { level: 2, limit: 12 },
                LevelSpec { level: 3, limit: 8 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub api_key_env: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".to_string(),
            model_name: "scripted".to_string(),
            temperature: 0.7,
            max_tokens: 4096,
            api_key_env: None,
        }
    }
}

impl EndpointConfig {
    fn endpoint(&self, role: Role) -> Result<ModelEndpoint, PipelineError> {
        let mut ep = ModelEndpoint::new(
            &self.base_url,
            &self.model_name,
            role,
            self.temperature,
            self.max_tokens,
        )
        .map_err(|e| PipelineError::Config { detail: e.to_string() })?;
        ep.api_key_env = self.api_key_env.clone();
        Ok(ep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayStageConfig {
    pub mode: Mode,
    pub fixture_dir: PathBuf,
    pub max_in_flight: usize,
    pub split_open: String,
    pub split_close: String,
    pub backoff_attempts: u32,
    pub backoff_base_secs: f64,
    pub trace_model: EndpointConfig,
    pub annotator: EndpointConfig,
}

impl Default for GatewayStageConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Replay,
            fixture_dir: PathBuf::from("fixtures"),
            max_in_flight: 4,
            split_open: "<think>".to_string(),
            split_close: "</think>".to_string(),
            backoff_attempts: 5,
            backoff_base_secs: 1.0,
            trace_model: EndpointConfig {
                model_name: "scripted-tracegen".to_string(),
                ..Default::default()
            },
            annotator: EndpointConfig {
                model_name: "scripted-annotator".to_string(),
                temperature: 0.2,
                max_tokens: 512,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestStageConfig {
    pub n_estimators: usize,
    /// Depth grid; 0 means unbounded.
    pub depth_grid: Vec<usize>,
    pub min_samples_leaf: usize,
    pub val_fraction: f64,
}

impl Default for ForestStageConfig {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            depth_grid: vec![2, 4, 6, 8, 12, 0],
            min_samples_leaf: 1,
            val_fraction: 0.25,
        }
    }
}

impl ForestStageConfig {
    fn grid(&self) -> Vec<Option<usize>> {
        self.depth_grid
            .iter()
            .map(|&d| if d == 0 { None } else { Some(d) })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationStageConfig {
    /// Subset sizes; 0 means all features.
    pub ks: Vec<usize>,
    pub trials: usize,
}

impl Default for AblationStageConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 5, 10, 20, 0],
            trials: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionStageConfig {
    pub theta: f64,
    pub mode: InterventionMode,
    /// Override of the watched features; `None` uses the schema defaults.
    pub watch: Option<Vec<(String, i8)>>,
}

impl Default for InterventionStageConfig {
    fn default() -> Self {
        Self {
            theta: 1.96,
            mode: InterventionMode::OracleFiltered,
            watch: None,
        }
    }
}

/// All module configs in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub pool: Option<PoolSource>,
    pub compose: ComposeStageConfig,
    pub gateway: GatewayStageConfig,
    pub segmenter: SegmentConfig,
    pub features: TraceFeatureConfig,
    pub forest: ForestStageConfig,
    pub ablation: AblationStageConfig,
    pub intervention: InterventionStageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            pool: None,
            compose: Default::default(),
            gateway: Default::default(),
            segmenter: Default::default(),
            features: Default::default(),
            forest: Default::default(),
            ablation: Default::default(),
            intervention: Default::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(body: &str) -> Result<Self, PipelineError> {
        toml::from_str(body).map_err(|e| PipelineError::Config { detail: e.to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.compose.levels.is_empty() {
            return Err(PipelineError::Config {
                detail: "compose.levels must not be empty".into(),
            });
        }
        if self.segmenter.min_chars >= self.segmenter.max_chars {
            return Err(PipelineError::Config {
                detail: "segmenter.min_chars must be below max_chars".into(),
            });
        }
        if self.forest.depth_grid.is_empty() {
            return Err(PipelineError::Config {
                detail: "forest.depth_grid must not be empty".into(),
            });
        }
        if self.ablation.trials == 0 {
            return Err(PipelineError::Config {
                detail: "ablation.trials must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Config snapshot plus the artifact map; the reproducibility contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub schema_hash: String,
    pub config: PipelineConfig,
    pub artifacts: BTreeMap<String, String>,
}

/// Metrics for one split protocol, keyed by composition level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMetrics {
    pub chosen_depth: Option<usize>,
    pub train_rows: usize,
    pub per_level: BTreeMap<usize, Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub problems: usize,
    pub traces: usize,
    pub per_record_failures: usize,
    pub truncated_traces: usize,
    pub fallback_labels: usize,
    pub repaired_nodes: usize,
    pub pass_at_1_by_level: BTreeMap<usize, f64>,
    pub l1_transfer: ProtocolMetrics,
    pub pooled_oracle: ProtocolMetrics,
    pub subsets: Vec<SubsetReport>,
    pub ablation: Vec<AblationPoint>,
    pub intervention: InterventionResult,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub manifest: RunManifest,
    pub report: PipelineReport,
}

struct TraceBundle {
    record: TraceRecord,
    problem_index: usize,
    tree: ThoughtTree,
    features: FeatureVector,
    verdict: Verdict,
}

/// Run every stage. See the module docs for the artifact list.
pub fn run_pipeline<T: Transport>(
    config: &PipelineConfig,
    transport: T,
) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::Config {
        detail: format!("cannot create output dir {}: {e}", out.display()),
    })?;
    let schema = FeatureSchema::canonical();
    let mut artifacts: BTreeMap<String, String> = BTreeMap::new();
    let register = |name: &str, artifacts: &mut BTreeMap<String, String>| {
        artifacts.insert(name.to_string(), name.to_string());
        out.join(name)
    };

    // Stage: compose.
    let mut problems = composed_problem_set(config)?;
    let mut per_record_failures = 0usize;
    // Resolve oracle expectations once per problem; failures are recorded
    // and the problem keeps judging on the fly (which will re-report).
    for (problem, chain) in problems.iter_mut() {
        let refs: Vec<&BaseProblem> = chain.iter().collect();
        match resolve_expected(problem, &refs) {
            Ok(expected) => problem.oracle.expected = Some(expected),
            Err(e) => {
                log::warn!("oracle resolution failed for {}: {e}", problem.id);
                per_record_failures += 1;
            }
        }
    }
    let problem_records: Vec<ProblemRecord> = problems
        .iter()
        .map(|(p, chain)| {
            let refs: Vec<&BaseProblem> = chain.iter().collect();
            ProblemRecord::assemble(p, &refs)
        })
        .collect();
    store::write_jsonl(&register("problems.jsonl", &mut artifacts), &problem_records)?;

    // Stage: generate traces.
    let policy = SplitPolicy::markers(&config.gateway.split_open, &config.gateway.split_close);
    let gateway = Gateway::new(transport, FixtureStore::new(&config.gateway.fixture_dir), policy)
        .with_backoff(BackoffConfig {
            attempts: config.gateway.backoff_attempts,
            base_secs: config.gateway.backoff_base_secs,
            factor: 2.0,
        });
    let trace_endpoint = config.gateway.trace_model.endpoint(Role::TraceGeneration)?;
    let annotator_endpoint = config.gateway.annotator.endpoint(Role::Annotation)?;
    let mode = config.gateway.mode;

    let mut bundles: Vec<TraceBundle> = Vec::new();
    for (index, (problem, _chain)) in problems.iter().enumerate() {
        let completion = match gateway.complete(&trace_endpoint, &problem.prompt_text, mode) {
            Ok(c) => c,
            Err(GatewayError::FixtureMiss { key }) if mode == Mode::Replay => {
                return Err(PipelineError::FixtureMiss { key });
            }
            Err(e) => {
                log::warn!("trace generation failed for {}: {e}", problem.id);
                per_record_failures += 1;
                continue;
            }
        };
        let trace_id = TraceRecord::derive_id(
            &problem.id,
            &trace_endpoint.model_name,
            &completion.raw_text,
        );
        let record = TraceRecord {
            trace_id,
            problem_id: problem.id.clone(),
            model_id: trace_endpoint.model_name.clone(),
            level: problem.level,
            raw_text: completion.raw_text.clone(),
            reasoning_trace: completion.reasoning_trace.clone(),
            final_answer: completion.final_answer.clone(),
            truncated: completion.truncated,
            timestamps: Timestamps {
                generated_unix: completion.created_unix,
            },
        };
        bundles.push(TraceBundle {
            record,
            problem_index: index,
            tree: ThoughtTree::default(),
            features: FeatureVector {
                trace_id: String::new(),
                values: vec![],
            },
            verdict: Verdict::fail("not judged yet"),
        });
    }
    let trace_records: Vec<TraceRecord> = bundles.iter().map(|b| b.record.clone()).collect();
    store::write_jsonl(&register("traces.jsonl", &mut artifacts), &trace_records)?;

    // Stages: segment, annotate, featurize, judge.
    let mut segment_records: Vec<SegmentRecord> = Vec::new();
    let mut tree_records: Vec<TreeRecord> = Vec::new();
    let mut feature_records: Vec<FeatureRecord> = Vec::new();
    let mut verdict_records: Vec<VerdictRecord> = Vec::new();
    let annotator = Annotator::Model {
        source: &gateway,
        endpoint: &annotator_endpoint,
        mode,
    };
    for bundle in bundles.iter_mut() {
        let (problem, chain) = &problems[bundle.problem_index];
        let refs: Vec<&BaseProblem> = chain.iter().collect();
        let trace_text = bundle.record.reasoning_trace.clone();
        let idents = chain
            .iter()
            .flat_map(|p| source_identifiers(&p.source_text))
            .collect::<std::collections::BTreeSet<String>>();

        let code_spans = detect_code_spans(&trace_text);
        let sentences = split_sentences(&trace_text, &code_spans);
        let segments = segment_sentences(&sentences, &config.segmenter);
        for seg in &segments {
            segment_records.push(SegmentRecord {
                trace_id: bundle.record.trace_id.clone(),
                index: seg.index,
                text: seg.text.clone(),
                span: [seg.span.0, seg.span.1],
                starts_with_marker: seg.starts_with_marker.clone(),
            });
        }
        bundle.tree = build_tree(&segments, &annotator, &idents);
        tree_records.push(TreeRecord::from_tree(&bundle.record.trace_id, &bundle.tree));

        let head = &chain[0];
        let meta = ProblemMeta {
            family_id: family_id(head.family),
            source_lang_id: language_id(&problem_source_language(head)),
            target_lang_id: language_id(&head.metadata_value("target_language")),
            is_fortran: head.metadata_value("target_language").eq_ignore_ascii_case("fortran"),
            composition_level: problem.level as u32,
            source_identifiers: idents,
            final_answer_present: !bundle.record.final_answer.trim().is_empty(),
        };
        let labels: Vec<crate::tree::LabelValue> =
            bundle.tree.nodes.iter().map(|n| n.label.value).collect();
        match features::extract(
            &bundle.record.trace_id,
            &trace_text,
            &segments,
            &sentences,
            &bundle.tree,
            &labels,
            &meta,
            &config.features,
        ) {
            Ok(v) => {
                feature_records.push(FeatureRecord {
                    trace_id: v.trace_id.clone(),
                    values: v.values.clone(),
                });
                bundle.features = v;
            }
            Err(e) => {
                log::warn!("feature extraction failed for {}: {e}", bundle.record.trace_id);
                per_record_failures += 1;
                continue;
            }
        }

        bundle.verdict = judge_answer(problem, &refs, &bundle.record.final_answer);
        verdict_records.push(VerdictRecord {
            trace_id: bundle.record.trace_id.clone(),
            problem_id: problem.id.clone(),
            level: problem.level,
            status: bundle.verdict.status,
            error_kind: bundle.verdict.error_kind,
            detail: bundle.verdict.detail.clone(),
        });
    }
    store::write_jsonl(&register("segments.jsonl", &mut artifacts), &segment_records)?;
    store::write_jsonl(&register("trees.jsonl", &mut artifacts), &tree_records)?;
    store::write_jsonl(&register("features.jsonl", &mut artifacts), &feature_records)?;
    store::write_jsonl(&register("verdicts.jsonl", &mut artifacts), &verdict_records)?;
    store::write_text(
        &register("schema.json", &mut artifacts),
        &serde_json::to_string_pretty(&schema.sidecar()).expect("sidecar serializes"),
    )?;

    // Assemble the dataset.
    let usable: Vec<&TraceBundle> = bundles
        .iter()
        .filter(|b| b.features.values.len() == schema.len())
        .collect();
    let x: Vec<Vec<f64>> = usable.iter().map(|b| b.features.values.clone()).collect();
    let y: Vec<u8> = usable.iter().map(|b| b.verdict.passed() as u8).collect();
    let levels: Vec<u32> = usable
        .iter()
        .map(|b| problems[b.problem_index].0.level as u32)
        .collect();
    if x.is_empty() {
        return Err(PipelineError::Config {
            detail: "no usable traces survived the pipeline".into(),
        });
    }

    let mut pass_at_1_by_level: BTreeMap<usize, f64> = BTreeMap::new();
    {
        let mut by_level: BTreeMap<usize, Vec<Verdict>> = BTreeMap::new();
        for b in &usable {
            by_level
                .entry(problems[b.problem_index].0.level)
                .or_default()
                .push(b.verdict.clone());
        }
        for (level, verdicts) in by_level {
            if let Some(rate) = pass_at_1(&verdicts) {
                pass_at_1_by_level.insert(level, rate);
            }
        }
    }

    // Stage: train + evaluate under both protocols.
    let base_train = TrainConfig {
        n_estimators: config.forest.n_estimators,
        max_depth: None,
        min_samples_leaf: config.forest.min_samples_leaf,
        features_per_split: FeatureSubset::Sqrt,
        bootstrap: true,
        seed: mix_seed_str(config.seed, "forest"),
    };
    let grid = config.forest.grid();
    let (l1_metrics, l1_model) = run_protocol(
        SplitMode::L1Transfer,
        &x,
        &y,
        &levels,
        &grid,
        config.forest.val_fraction,
        config.seed,
        &base_train,
        &schema,
    )?;
    let (pooled_metrics, _) = run_protocol(
        SplitMode::PooledOracle,
        &x,
        &y,
        &levels,
        &grid,
        config.forest.val_fraction,
        config.seed,
        &base_train,
        &schema,
    )?;
    store::write_text(
        &register("model.json", &mut artifacts),
        &serde_json::to_string(&l1_model).expect("model serializes"),
    )?;

    // Stage: importance + PDP over the top-six features.
    let importance = feature_importance(&l1_model);
    let mut importance_csv = String::from("index,name,importance\n");
    for (i, v) in importance.iter().enumerate() {
        importance_csv.push_str(&format!("{i},{},{v}\n", schema.names()[i]));
    }
    store::write_text(&register("importance.csv", &mut artifacts), &importance_csv)?;

    let mut ranked: Vec<usize> = (0..schema.len()).collect();
    ranked.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    let mut pdp_csv = String::from("feature,name,grid_value,failure_prob\n");
    for &feature in ranked.iter().take(6) {
        let curve = partial_dependence(&l1_model, &x, feature, 20)?;
        for (value, failure) in curve {
            pdp_csv.push_str(&format!("{feature},{},{value},{failure}\n", schema.names()[feature]));
        }
    }
    store::write_text(&register("pdp.csv", &mut artifacts), &pdp_csv)?;

    // Stage: ablations.
    let d = schema.len();
    let ks: Vec<usize> = config
        .ablation
        .ks
        .iter()
        .map(|&k| if k == 0 { d } else { k })
        .collect();
    let ablation = random_feature_ablation(
        &x,
        &y,
        &ks,
        config.ablation.trials,
        mix_seed_str(config.seed, "ablation"),
        &base_train,
    )?;
    let mut ablation_csv = String::from("k,mean_accuracy,std_accuracy\n");
    for point in &ablation {
        ablation_csv.push_str(&format!(
            "{},{},{}\n",
            point.k, point.mean_accuracy, point.std_accuracy
        ));
    }
    store::write_text(&register("ablation.csv", &mut artifacts), &ablation_csv)?;
    let subsets = vec![
        subset_eval(
            &x,
            &y,
            "length_only",
            &schema.group_indices(Group::Length),
            mix_seed_str(config.seed, "subset"),
            &base_train,
        )?,
        subset_eval(
            &x,
            &y,
            "non_tree",
            &schema.non_tree_indices(),
            mix_seed_str(config.seed, "subset"),
            &base_train,
        )?,
    ];

    // Stage: correlation.
    if x.len() >= 2 {
        let corr = crate::harness::correlation(&x);
        let mut corr_csv = String::from("feature");
        for name in schema.names() {
            corr_csv.push(',');
            corr_csv.push_str(name);
        }
        corr_csv.push('\n');
        for (i, row) in corr.iter().enumerate() {
            corr_csv.push_str(schema.names()[i]);
            for v in row {
                corr_csv.push_str(&format!(",{v}"));
            }
            corr_csv.push('\n');
        }
        store::write_text(&register("correlation.csv", &mut artifacts), &corr_csv)?;
    }

    // Stage: z-score stats over correct level-1 traces, flag everything.
    let correct_l1: Vec<&FeatureVector> = usable
        .iter()
        .filter(|b| problems[b.problem_index].0.level == 1 && b.verdict.passed())
        .map(|b| &b.features)
        .collect();
    let watch = match &config.intervention.watch {
        Some(entries) => WatchSpec {
            entries: entries.clone(),
            theta: config.intervention.theta,
        },
        None => WatchSpec {
            theta: config.intervention.theta,
            ..WatchSpec::default_watch(&schema)
        },
    };
    watch.validate(&schema)?;
    let (stats, flag_records, intervention) = if correct_l1.is_empty() {
        log::warn!("no correct level-1 traces; skipping z-score flagging and intervention");
        (
            None,
            Vec::new(),
            InterventionResult {
                mode: config.intervention.mode,
                flagged_count: 0,
                recovered_count: 0,
                intervention_pass_at_1: None,
                retries: vec![],
            },
        )
    } else {
        let stats = fit_stats("correct_l1", &correct_l1)?;
        let mut flag_records = Vec::new();
        let mut cases = Vec::new();
        for bundle in &usable {
            let report = flag(&bundle.features, &stats, &watch, &schema)?;
            if report.flagged {
                let (problem, _) = &problems[bundle.problem_index];
                cases.push(FlaggedCase {
                    trace_id: bundle.record.trace_id.clone(),
                    problem_id: problem.id.clone(),
                    base_prompt: problem.prompt_text.clone(),
                    truly_incorrect: Some(!bundle.verdict.passed()),
                });
            }
            flag_records.push(FlagRecord {
                trace_id: bundle.record.trace_id.clone(),
                flagged: report.flagged,
                triggers: report.triggers,
            });
        }
        let problem_lookup: BTreeMap<&str, &(ComposedProblem, Vec<BaseProblem>)> =
            problems.iter().map(|entry| (entry.0.id.as_str(), entry)).collect();
        let mut judge_retry = |problem_id: &str, answer: &str| -> Result<bool, String> {
            let (problem, chain) = problem_lookup
                .get(problem_id)
                .ok_or_else(|| format!("unknown problem {problem_id}"))?;
            let refs: Vec<&BaseProblem> = chain.iter().collect();
            Ok(judge_answer(problem, &refs, answer).passed())
        };
        let intervention = intervene::run_intervention(
            &cases,
            &gateway,
            &trace_endpoint,
            mode,
            config.intervention.mode,
            &mut judge_retry,
        );
        (Some(stats), flag_records, intervention)
    };
    store::write_jsonl(&register("flags.jsonl", &mut artifacts), &flag_records)?;
    if let Some(stats) = &stats {
        store::write_text(
            &register("stats.json", &mut artifacts),
            &serde_json::to_string_pretty(stats).expect("stats serialize"),
        )?;
    }
    store::write_text(
        &register("intervention.json", &mut artifacts),
        &serde_json::to_string_pretty(&intervention).expect("result serializes"),
    )?;

    // Reports and manifest.
    let fallback_labels = bundles
        .iter()
        .flat_map(|b| b.tree.nodes.iter())
        .filter(|n| n.label.provenance == Provenance::Fallback)
        .count();
    let repaired_nodes = bundles
        .iter()
        .flat_map(|b| b.tree.nodes.iter())
        .filter(|n| n.repaired)
        .count();
    let report = PipelineReport {
        problems: problems.len(),
        traces: bundles.len(),
        per_record_failures,
        truncated_traces: bundles.iter().filter(|b| b.record.truncated).count(),
        fallback_labels,
        repaired_nodes,
        pass_at_1_by_level,
        l1_transfer: l1_metrics,
        pooled_oracle: pooled_metrics,
        subsets,
        ablation,
        intervention,
    };
    let metrics_doc = serde_json::json!({
        "l1_transfer": report.l1_transfer,
        "pooled_oracle": report.pooled_oracle,
        "subsets": report.subsets,
        "pass_at_1_by_level": report.pass_at_1_by_level,
    });
    store::write_text(
        &register("metrics.json", &mut artifacts),
        &serde_json::to_string_pretty(&metrics_doc).expect("metrics serialize"),
    )?;
    store::write_text(
        &register("report.json", &mut artifacts),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    let manifest = RunManifest {
        seed: config.seed,
        schema_hash: schema.hash(),
        config: config.clone(),
        artifacts,
    };
    store::write_text(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(PipelineOutcome { manifest, report })
}

fn problem_source_language(head: &BaseProblem) -> String {
    let explicit = head.metadata_value("source_language");
    if explicit.is_empty() {
        head.subject_language.clone()
    } else {
        explicit
    }
}

/// Judge one answer according to the problem's family.
pub fn judge_answer(
    problem: &ComposedProblem,
    chain: &[&BaseProblem],
    answer: &str,
) -> Verdict {
    match chain[0].family {
        Family::Execution => judge_execution(problem, chain, answer),
        Family::FillInMiddle => match decode_fim_answer(answer, problem.level) {
            Ok(completions) => judge_fim(problem, chain, &completions),
            Err(detail) => Verdict::error(ErrorKind::Parse, detail),
        },
        Family::Translation => judge_translation(problem, chain, answer),
    }
}

/// The exact problem set a pipeline run will generate traces for: every
/// configured level enumerated under its derived seed and re-rendered with
/// the configured template set. Exposed so fixture tooling can script
/// answers for precisely these prompts.
pub fn composed_problem_set(
    config: &PipelineConfig,
) -> Result<Vec<(ComposedProblem, Vec<BaseProblem>)>, PipelineError> {
    let pool = load_pool(config)?;
    let by_id: BTreeMap<String, BaseProblem> =
        pool.iter().map(|p| (p.id.clone(), p.clone())).collect();
    let mut problems: Vec<(ComposedProblem, Vec<BaseProblem>)> = Vec::new();
    for spec in &config.compose.levels {
        let found = enumerate_compositions(
            &pool,
            spec.level,
            spec.limit,
            mix_seed_str(config.seed, &format!("compose_l{}", spec.level)),
        );
        for composed in found {
            let chain: Vec<BaseProblem> = composed
                .chain
                .iter()
                .map(|id| by_id[id].clone())
                .collect();
            // Re-render under the configured template set.
            let refs: Vec<&BaseProblem> = chain.iter().collect();
            let composed = compose_with_templates(&refs, &config.compose.template_set)
                .map_err(|e| PipelineError::Config { detail: e.to_string() })?;
            problems.push((composed, chain));
        }
    }
    Ok(problems)
}

fn load_pool(config: &PipelineConfig) -> Result<Vec<BaseProblem>, PipelineError> {
    match config.pool.clone().unwrap_or(PoolSource::Bundled) {
        PoolSource::Bundled => Ok(super::corpus::mini_corpus()),
        PoolSource::File { path } => {
            let problems: Vec<BaseProblem> = store::read_jsonl(&path)?;
            if problems.is_empty() {
                return Err(PipelineError::Config {
                    detail: format!("pool file {} is empty", path.display()),
                });
            }
            Ok(problems)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_protocol(
    mode: SplitMode,
    x: &[Vec<f64>],
    y: &[u8],
    levels: &[u32],
    grid: &[Option<usize>],
    val_fraction: f64,
    seed: u64,
    base: &TrainConfig,
    schema: &FeatureSchema,
) -> Result<(ProtocolMetrics, crate::forest::ForestModel), PipelineError> {
    let plan: SplitPlan = split_protocol(levels, mode, seed)?;
    let x_train = forest::select_rows(x, &plan.train);
    let y_train = forest::select_labels(y, &plan.train);
    let chosen_depth = if y_train.iter().any(|&l| l == 0) && y_train.iter().any(|&l| l == 1) {
        tune_max_depth(&x_train, &y_train, grid, val_fraction, seed, base)?
    } else {
        None
    };
    let model = train(
        &x_train,
        &y_train,
        &TrainConfig {
            max_depth: chosen_depth,
            ..*base
        },
        &schema.hash(),
    )?;
    let mut per_level = BTreeMap::new();
    for (&level, rows) in &plan.test {
        if rows.is_empty() {
            continue;
        }
        let metrics = evaluate(
            &model,
            &forest::select_rows(x, rows),
            &forest::select_labels(y, rows),
        )?;
        per_level.insert(level as usize, metrics);
    }
    Ok((
        ProtocolMetrics {
            chosen_depth,
            train_rows: plan.train.len(),
            per_level,
        },
        model,
    ))
}

/// Compute the fixture key a trace request would use; lets tools check
/// fixture coverage before a replay run.
pub fn trace_fixture_key(config: &PipelineConfig, prompt: &str) -> Result<String, PipelineError> {
    let endpoint = config.gateway.trace_model.endpoint(Role::TraceGeneration)?;
    Ok(fixture_key(&endpoint, prompt))
}
