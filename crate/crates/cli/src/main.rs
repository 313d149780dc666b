//! `kbagym` command-line entry point.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kbagym_core::config::RunConfig;
use kbagym_core::grpo::{group_advantages, grpo_objective, Group};
use kbagym_core::kb::{KbFormat, KnowledgeBase};
use kbagym_core::metrics::{aggregate, results_csv, score_question, Prediction, RhitsMode};
use kbagym_core::pipeline::{balance_dataset, export_sft, rejection_filter};
use kbagym_core::policy::{PolicyConfig, DEFAULT_EXHAUSTED_OUTPUT};
use kbagym_core::protocol::{read_jsonl, to_jsonl, QuestionRecord, Trajectory};
use kbagym_core::reward::{total_reward, RewardBreakdown};
use kbagym_core::rollout::{unix_now, Environment, EpisodeRecord, RunManifest};
use kbagym_core::sparql::{render_results, run_query, SparqlError};
use kbagym_core::tools::{run_tool, ToolName};
use kbagym_core::util::sha256_hex;
use serde::Serialize;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "kbagym", version, about = "Agentic question answering over a local knowledge base")]
struct Cli {
    /// JSON run config; flags override its values.
    #[arg(long, global = true, env = "KBAGYM_CONFIG")]
    config: Option<PathBuf>,
    /// Report errors on stderr as JSON.
    #[arg(long, global = true)]
    json_errors: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for rollout.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-base utilities.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Runs one SPARQL query and prints the rendered observation.
    Query {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        sparql: String,
    },
    /// Invokes one tool and prints its observation.
    Tools {
        #[command(flatten)]
        kb: KbArgs,
        #[command(subcommand)]
        tool: ToolCommand,
    },
    /// Runs episodes over a dataset; writes trajectories and a manifest.
    Rollout {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Replay script, overriding the configured policy.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        group_size: Option<usize>,
        /// Training step used for the reward phase.
        #[arg(long, default_value_t = 0)]
        global_step: u64,
    },
    /// Scores trajectories against gold answers.
    Score {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        global_step: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keeps correct, grounded candidates and balances categories.
    Filter {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Category target as `name=count`; repeatable.
        #[arg(long = "target", value_parser = parse_target)]
        targets: Vec<(String, usize)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders trajectories into loss-masked training segments.
    SftExport {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group-relative advantages, or the full objective for a groups file.
    GrpoAdvantage {
        /// Comma-separated group rewards.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "groups")]
        rewards: Vec<f64>,
        /// JSON list of `{rewards, logprobs}` groups.
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Scores predictions; writes a JSON report and per-question CSV.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Rhits::Expectation)]
        rhits: Rhits,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Per-step reward, length, turn and invalid-call means from manifests.
    Curves {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Parses a knowledge base and prints its statistics.
    Validate {
        #[command(flatten)]
        kb: KbArgs,
    },
}

#[derive(Subcommand)]
enum ToolCommand {
    SearchTypes {
        #[arg(long)]
        query: String,
    },
    SearchGraphPatterns {
        #[arg(long)]
        sparql: String,
        #[arg(long)]
        semantic: Option<String>,
    },
    ExecuteSparql {
        #[arg(long)]
        sparql: String,
    },
}

#[derive(Args, Clone)]
struct KbArgs {
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    kb_format: Option<KbFormat>,
    #[arg(long)]
    label_predicate: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rhits {
    Expectation,
    Sampled,
}

fn parse_target(s: &str) -> std::result::Result<(String, usize), String> {
    let (name, n) = s.split_once('=').ok_or("expected name=count")?;
    let n = n.parse().map_err(|e| format!("bad count {n:?}: {e}"))?;
    Ok((name.to_string(), n))
}

#[derive(Debug, Error)]
enum Failure {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation",
            Failure::Runtime(_) => "runtime",
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

type Result<T> = std::result::Result<T, Failure>;

fn report(failure: &Failure, json: bool) {
    if json {
        let v = serde_json::json!({"error": failure.kind(), "message": failure.to_string(), "exit_code": failure.code()});
        eprintln!("{v}");
    } else {
        eprintln!("error: {failure}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if json_errors {
                report(&Failure::Validation(e.kind().to_string()), true);
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f, json_errors);
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::resolve(cli.config.as_deref()).map_err(invalid)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(p) = cli.parallelism {
        config.rollout.parallelism = p;
    }
    match cli.command {
        Command::Kb {
            command: KbCommand::Validate { kb },
        } => {
            apply_kb(&mut config, &kb);
            config.validate().map_err(invalid)?;
            let kb = load_kb(&config)?;
            let summary = serde_json::json!({
                "triples": kb.len(),
                "terms": kb.term_count(),
                "labels": kb.label_count(),
                "fingerprint": kb.fingerprint(),
            });
            println!("{summary}");
            Ok(())
        }
        Command::Query { kb, sparql } => {
            apply_kb(&mut config, &kb);
            config.validate().map_err(invalid)?;
            let kb = load_kb(&config)?;
            match run_query(&sparql, &kb, &config.tools.limits) {
                Ok(rs) => {
                    println!("{}", render_results(&rs, &kb, config.tools.max_result_items));
                    Ok(())
                }
                Err(e @ SparqlError::Parse { .. }) => Err(invalid(e)),
                Err(e) => Err(runtime(e)),
            }
        }
        Command::Tools { kb, tool } => {
            apply_kb(&mut config, &kb);
            config.validate().map_err(invalid)?;
            let kb = load_kb(&config)?;
            let (name, args) = match tool {
                ToolCommand::SearchTypes { query } => (ToolName::SearchTypes, vec![("query", query)]),
                ToolCommand::SearchGraphPatterns { sparql, semantic } => {
                    let mut a = vec![("sparql", sparql)];
                    a.extend(semantic.map(|s| ("semantic", s)));
                    (ToolName::SearchGraphPatterns, a)
                }
                ToolCommand::ExecuteSparql { sparql } => (ToolName::ExecuteSparql, vec![("sparql", sparql)]),
            };
            let args: BTreeMap<String, String> = args.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            println!("{}", run_tool(&kb, name, &args, &config.tools));
            Ok(())
        }
        Command::Rollout {
            kb,
            dataset,
            replay,
            out_dir,
            max_steps,
            group_size,
            global_step,
        } => {
            apply_kb(&mut config, &kb);
            set(&mut config.dataset_path, dataset);
            set(&mut config.output_dir, out_dir);
            if let Some(script) = replay {
                config.policy = Some(PolicyConfig::Replay {
                    script,
                    exhausted_output: DEFAULT_EXHAUSTED_OUTPUT.to_string(),
                });
            }
            if let Some(n) = max_steps {
                config.rollout.max_steps = n;
            }
            if let Some(n) = group_size {
                config.rollout.group_size = n;
            }
            rollout(&config, global_step)
        }
        Command::Score {
            trajectories,
            dataset,
            global_step,
            out,
        } => {
            set(&mut config.dataset_path, dataset);
            config.validate().map_err(invalid)?;
            let questions = load_dataset(&config)?;
            let trajs: Vec<Trajectory> = read_jsonl(&trajectories).map_err(|e| input_error(&trajectories, e))?;
            let mut lines = Vec::with_capacity(trajs.len());
            for t in &trajs {
                let q = questions
                    .get(t.question_id.as_str())
                    .ok_or_else(|| invalid(format!("trajectory {} names unknown question {}", t.id, t.question_id)))?;
                lines.push(ScoreLine {
                    id: t.id.clone(),
                    question_id: t.question_id.clone(),
                    breakdown: score(&config, t, q, global_step)?,
                });
            }
            emit(out.as_deref(), &to_jsonl(&lines))
        }
        Command::Filter {
            candidates,
            dataset,
            targets,
            out,
        } => {
            set(&mut config.dataset_path, dataset);
            config.category_targets.extend(targets);
            config.validate().map_err(invalid)?;
            filter(&config, &candidates, &out)
        }
        Command::SftExport { trajectories, out } => {
            config.validate().map_err(invalid)?;
            let trajs: Vec<Trajectory> = read_jsonl(&trajectories).map_err(|e| input_error(&trajectories, e))?;
            let examples: Vec<_> = trajs.iter().map(|t| export_sft(t, &config.templates)).collect();
            emit(out.as_deref(), &to_jsonl(&examples))
        }
        Command::GrpoAdvantage { rewards, groups } => {
            config.grpo.validate().map_err(invalid)?;
            let value = match groups {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| input_error(&path, e))?;
                    let groups: Vec<Group> = serde_json::from_str(&text).map_err(|e| input_error(&path, e))?;
                    let advantages = groups
                        .iter()
                        .map(|g| group_advantages(&g.rewards, &config.grpo))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(invalid)?;
                    let objective = grpo_objective(&groups, &config.grpo).map_err(invalid)?;
                    serde_json::json!({"advantages": advantages, "objective": objective})
                }
                None => serde_json::json!(group_advantages(&rewards, &config.grpo).map_err(invalid)?),
            };
            println!("{value}");
            Ok(())
        }
        Command::Eval {
            predictions,
            dataset,
            rhits,
            out_dir,
        } => {
            set(&mut config.dataset_path, dataset);
            set(&mut config.output_dir, out_dir);
            config.validate().map_err(invalid)?;
            let mode = match rhits {
                Rhits::Expectation => RhitsMode::Expectation,
                Rhits::Sampled => RhitsMode::Sampled { seed: config.seed },
            };
            evaluate(&config, &predictions, mode)
        }
        Command::Curves { manifests, out } => curves(&manifests, out.as_deref()),
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn apply_kb(config: &mut RunConfig, args: &KbArgs) {
    set(&mut config.kb_path, args.kb.clone());
    if let Some(f) = args.kb_format {
        config.kb_format = f;
    }
    if let Some(l) = &args.label_predicate {
        config.label_predicate = l.clone();
    }
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    invalid(format!("{}: {e}", path.display()))
}

fn load_kb(config: &RunConfig) -> Result<KnowledgeBase> {
    let path = config.kb_path.as_ref().ok_or_else(|| invalid("no knowledge base given (--kb)"))?;
    KnowledgeBase::load_with(path, config.kb_format, &config.label_predicate).map_err(|e| input_error(path, e))
}

fn load_questions(config: &RunConfig) -> Result<Vec<QuestionRecord>> {
    let path = config
        .dataset_path
        .as_ref()
        .ok_or_else(|| invalid("no dataset given (--dataset)"))?;
    let records: Vec<QuestionRecord> = read_jsonl(path).map_err(|e| input_error(path, e))?;
    let mut ids = HashSet::new();
    for r in &records {
        if !ids.insert(r.id.as_str()) {
            return Err(input_error(path, format!("duplicate question id {}", r.id)));
        }
        if r.golden_answers.iter().all(|a| a.trim().is_empty()) {
            return Err(input_error(path, format!("question {} has no gold answers", r.id)));
        }
    }
    Ok(records)
}

fn load_dataset(config: &RunConfig) -> Result<HashMap<String, QuestionRecord>> {
    Ok(load_questions(config)?.into_iter().map(|q| (q.id.clone(), q)).collect())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(runtime),
    }
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| invalid("no output directory given (--out-dir)"))?;
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

#[derive(Serialize)]
struct ScoreLine {
    id: String,
    question_id: String,
    #[serde(flatten)]
    breakdown: RewardBreakdown,
}

fn score(config: &RunConfig, t: &Trajectory, q: &QuestionRecord, global_step: u64) -> Result<RewardBreakdown> {
    let prompt = config.templates.build_prompt(&q.question, &q.topic_entities);
    let prompt_text = format!("{}\n{}", prompt.system_text, prompt.user_text);
    total_reward(t, &q.golden_answers, &config.reward, global_step, Some(&prompt_text)).map_err(invalid)
}

fn rollout(config: &RunConfig, global_step: u64) -> Result<()> {
    config.validate().map_err(invalid)?;
    let started_at = unix_now();
    let kb = load_kb(config)?;
    let questions = load_questions(config)?;
    let dataset_path = config.dataset_path.as_ref().expect("checked by load_questions");
    let dataset_bytes = std::fs::read(dataset_path).map_err(|e| input_error(dataset_path, e))?;
    let policy = config
        .policy
        .as_ref()
        .ok_or_else(|| invalid("no policy configured (--replay or config.policy)"))?
        .build()
        .map_err(invalid)?;
    let dir = output_dir(config)?;
    let env = Environment {
        kb: &kb,
        policy: policy.as_ref(),
        templates: &config.templates,
        tools: &config.tools,
        config: &config.rollout,
    };
    log::info!("running {} questions x {} episodes", questions.len(), config.rollout.group_size);
    let outcomes = env.run_dataset(&questions);
    let by_id: HashMap<&str, &QuestionRecord> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut episodes = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        let q = by_id[o.trajectory.question_id.as_str()];
        let reward = score(config, &o.trajectory, q, global_step)?.total;
        episodes.push(EpisodeRecord::from_outcome(o, Some(reward)));
    }
    let trajectories: Vec<&Trajectory> = outcomes.iter().map(|o| &o.trajectory).collect();
    let path = dir.join("trajectories.jsonl");
    std::fs::write(&path, to_jsonl(&trajectories)).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let manifest = RunManifest {
        config: config.to_value(),
        kb_fingerprint: kb.fingerprint(),
        dataset_fingerprint: sha256_hex(&dataset_bytes),
        global_step,
        started_at,
        finished_at: unix_now(),
        episodes,
    };
    manifest.write(dir.join("manifest.json")).map_err(runtime)?;
    let failures = outcomes.iter().filter(|o| o.error.is_some()).count();
    println!(
        "{}",
        serde_json::json!({"episodes": outcomes.len(), "policy_failures": failures, "out_dir": dir})
    );
    Ok(())
}

fn filter(config: &RunConfig, candidates: &Path, out: &Path) -> Result<()> {
    let questions = load_dataset(config)?;
    let trajs: Vec<Trajectory> = read_jsonl(candidates).map_err(|e| input_error(candidates, e))?;
    let mut by_question: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for t in trajs {
        if !questions.contains_key(&t.question_id) {
            return Err(input_error(candidates, format!("unknown question {}", t.question_id)));
        }
        by_question.entry(t.question_id.clone()).or_default().push(t);
    }
    let mut kept: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for (qid, cands) in &by_question {
        let k = rejection_filter(cands, &questions[qid], config.max_per_question);
        if !k.is_empty() {
            kept.insert(qid.clone(), k);
        }
    }
    let kept_count: usize = kept.values().map(Vec::len).sum();
    let (trajectories, realized) = if config.category_targets.is_empty() {
        (kept.into_values().flatten().collect::<Vec<_>>(), None)
    } else {
        let categories: BTreeMap<String, String> = questions
            .iter()
            .filter_map(|(id, q)| q.category.clone().map(|c| (id.clone(), c)))
            .collect();
        let b = balance_dataset(&kept, &categories, &config.category_targets, config.seed).map_err(invalid)?;
        (b.trajectories, Some(b.realized))
    };
    emit(Some(out), &to_jsonl(&trajectories))?;
    println!(
        "{}",
        serde_json::json!({"candidates_questions": by_question.len(), "kept": kept_count, "written": trajectories.len(), "realized": realized})
    );
    Ok(())
}

fn evaluate(config: &RunConfig, predictions: &Path, mode: RhitsMode) -> Result<()> {
    let questions = load_questions(config)?;
    let preds: Vec<Prediction> = read_jsonl(predictions).map_err(|e| input_error(predictions, e))?;
    let known: HashSet<&str> = questions.iter().map(|q| q.id.as_str()).collect();
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    for p in &preds {
        if !known.contains(p.id.as_str()) {
            return Err(input_error(predictions, format!("prediction for unknown question {}", p.id)));
        }
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(input_error(predictions, format!("duplicate prediction for {}", p.id)));
        }
    }
    let mut results = Vec::with_capacity(questions.len());
    for q in &questions {
        let answers = match by_id.get(q.id.as_str()) {
            Some(p) => p.answers.clone(),
            None => {
                log::warn!("no prediction for {}; scored as empty", q.id);
                Vec::new()
            }
        };
        results.push(score_question(&q.id, &answers, &q.golden_answers, q.category.clone(), mode).map_err(invalid)?);
    }
    let report = aggregate(&results);
    let dir = output_dir(config)?;
    let report_json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
    };
    write("report.json", report_json.clone() + "\n")?;
    write("results.csv", results_csv(&results))?;
    println!("{report_json}");
    Ok(())
}

fn curves(manifests: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut steps: BTreeMap<u64, Vec<EpisodeRecord>> = BTreeMap::new();
    for path in manifests {
        let text = std::fs::read_to_string(path).map_err(|e| input_error(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| input_error(path, e))?;
        steps.entry(m.global_step).or_default().extend(m.episodes);
    }
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let mut csv = String::from("step,episodes,reward,response_chars,turns,invalid_calls\n");
    for (step, eps) in &steps {
        csv.push_str(&format!(
            "{step},{},{},{},{},{}\n",
            eps.len(),
            mean(eps.iter().filter_map(|e| e.reward).collect()),
            mean(eps.iter().map(|e| e.response_chars as f64).collect()),
            mean(eps.iter().map(|e| e.turns as f64).collect()),
            mean(eps.iter().map(|e| e.invalid_calls as f64).collect()),
        ));
    }
    emit(out, &csv)
}
