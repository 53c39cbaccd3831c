use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::io::{read_json, read_text, to_json_bytes, to_jsonl, write_atomic, RecordLine, TrajectoryLine};
use super::{gen_corpus, render_svg, sweep, task_seed, CorpusConfig, CorpusFile, HarnessError, SweepReport, Task, TaskSet};
use crate::aup::{format_curve, AupConfig};
use crate::denoiser::{
    fit_order_policy, ngram_train, Denoiser, OracleDenoiser, OracleParams, OrderPolicy,
    PolicyDenoiser,
};
use crate::engine::EngineConfig;
use crate::seed;
use crate::sequence::{emit_records, record_teacher_trajectory, Schedule, TokenSeq, Vocab};

/// Records one teacher trajectory of length `n` per task. Each line pairs
/// the teacher's unmasking order with the task reference padded with EOS.
pub fn record_trajectories(
    teacher: &dyn Denoiser,
    tasks: &TaskSet,
    n: usize,
    seed: u64,
) -> Result<Vec<TrajectoryLine>, HarnessError> {
    tasks.validate(Some(n))?;
    let vocab = tasks.vocab;
    tasks
        .tasks
        .par_iter()
        .map(|task| {
            let mut truth = task.reference.clone();
            truth.resize(n, vocab.eos_id);
            let traj = record_teacher_trajectory(
                teacher,
                &task.prompt,
                n,
                task_seed(seed, task),
                Some(&truth),
                &vocab,
            )?;
            Ok(TrajectoryLine {
                prompt: task.prompt.clone(),
                truth,
                order: traj.order,
                teacher: Some(traj.truth.into_tokens()),
                vocab,
            })
        })
        .collect()
}

/// Builds `count` distillation records per trajectory line.
pub fn build_records(
    lines: &[TrajectoryLine],
    schedule: &Schedule,
    count: usize,
    seed: u64,
) -> Result<Vec<RecordLine>, HarnessError> {
    let vocab = lines
        .first()
        .map(|l| l.vocab)
        .ok_or_else(|| HarnessError::Data("no trajectories".into()))?;
    if let Some(i) = lines.iter().position(|l| l.vocab != vocab) {
        return Err(HarnessError::Data(format!(
            "trajectory {i}: vocabulary differs from the first trajectory"
        )));
    }
    let pairs: Vec<_> = lines
        .iter()
        .map(|l| (l.prompt.clone(), TokenSeq::new(l.truth.clone())))
        .collect();
    let trajs: Vec<_> = lines.iter().map(TrajectoryLine::trajectory).collect();
    let records = emit_records(&pairs, &trajs, schedule, count, seed, &vocab)?;
    Ok(records.iter().map(|r| RecordLine::from_record(r, &vocab)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusStage {
    /// Generate a corpus with these settings.
    Generate(CorpusConfig),
    /// Read a corpus file written by `corpus gen`.
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelStage {
    Oracle {
        #[serde(default)]
        params: OracleParams,
    },
    Ngram { order: usize, smoothing: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillStage {
    pub records_per_trajectory: usize,
    pub schedule: Schedule,
}

impl Default for DistillStage {
    fn default() -> Self {
        DistillStage {
            records_per_trajectory: 4,
            schedule: Schedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Relative to the config file's directory.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub corpus: CorpusStage,
    pub model: ModelStage,
    #[serde(default)]
    pub distill: DistillStage,
    #[serde(default = "default_g")]
    pub policy_range: (f64, f64),
    #[serde(default)]
    pub engine: EngineConfig,
    pub taus: Vec<f64>,
    #[serde(default)]
    pub aup: AupConfig,
}

fn default_g() -> (f64, f64) {
    (OrderPolicy::DEFAULT_G_MIN, OrderPolicy::DEFAULT_G_MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub aggregation: String,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub output_dir: PathBuf,
    pub base_aup: f64,
    pub policy_aup: f64,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Outputs {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.entries.push(ManifestEntry {
            name: name.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

/// Splits training sequences the same way tasks were split.
fn training_tasks(corpus: &CorpusFile) -> TaskSet {
    let prompt_len = corpus.config.prompt_len.unwrap_or(corpus.config.length / 2);
    let tasks = corpus
        .sequences
        .iter()
        .map(|s| {
            let t = s.tokens();
            let cut = prompt_len.min(t.len().saturating_sub(1));
            Task {
                prompt: t[..cut].to_vec(),
                reference: t[cut..].to_vec(),
            }
        })
        .collect();
    TaskSet {
        vocab: corpus.vocab,
        tasks,
    }
}

/// Runs corpus, model, trajectory, distill, policy, sweep and aup stages,
/// writing every artifact and a manifest of hashes and seeds into the
/// output directory. Errors name the stage that failed.
pub fn run_pipeline(config_path: &Path) -> Result<PipelineSummary, HarnessError> {
    let config_text = read_text(config_path).map_err(|e| e.at("config"))?;
    let config: PipelineConfig = serde_json::from_str(&config_text)
        .map_err(|e| HarnessError::Parse {
            path: config_path.to_path_buf(),
            message: e.to_string(),
        })
        .map_err(|e| e.at("config"))?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let mut out = Outputs {
        dir: base_dir.join(&config.output_dir),
        entries: Vec::new(),
    };
    let mut seeds = BTreeMap::new();
    seeds.insert("pipeline".to_string(), config.seed);

    let corpus = (|| -> Result<CorpusFile, HarnessError> {
        let corpus = match &config.corpus {
            CorpusStage::Generate(c) => gen_corpus(c)?,
            CorpusStage::Path(p) => read_json(&base_dir.join(p))?,
        };
        corpus.task_set().validate(Some(config.engine.max_len))?;
        out.write("corpus.json", &to_json_bytes(&corpus))?;
        Ok(corpus)
    })()
    .map_err(|e| e.at("corpus"))?;
    seeds.insert("corpus".into(), corpus.config.seed);
    let vocab: Vocab = corpus.vocab;

    let model: std::sync::Arc<dyn Denoiser> = (|| -> Result<_, HarnessError> {
        Ok(match &config.model {
            ModelStage::Oracle { params } => {
                let d = OracleDenoiser::new(*params, vocab)?;
                out.write("model.json", &to_json_bytes(params))?;
                std::sync::Arc::new(d) as std::sync::Arc<dyn Denoiser>
            }
            ModelStage::Ngram { order, smoothing } => {
                let d = ngram_train(&corpus.sequences, *order, *smoothing, &vocab)?;
                out.write("model.json", &to_json_bytes(&d.to_file()))?;
                std::sync::Arc::new(d)
            }
        })
    })()
    .map_err(|e| e.at("model"))?;
    if let ModelStage::Oracle { params } = &config.model {
        seeds.insert("oracle".into(), params.seed);
    }

    let traj_seed = seed::derive(config.seed, &[1]);
    seeds.insert("trajectory".into(), traj_seed);
    let lines = (|| {
        let train = training_tasks(&corpus);
        let lines = record_trajectories(model.as_ref(), &train, config.engine.max_len, traj_seed)?;
        out.write("trajectories.jsonl", &to_jsonl(&lines))?;
        Ok(lines)
    })()
    .map_err(|e: HarnessError| e.at("trajectory"))?;

    let distill_seed = seed::derive(config.seed, &[2]);
    seeds.insert("distill".into(), distill_seed);
    let records = (|| {
        let records = build_records(
            &lines,
            &config.distill.schedule,
            config.distill.records_per_trajectory,
            distill_seed,
        )?;
        out.write("records.jsonl", &to_jsonl(&records))?;
        records
            .iter()
            .map(|r| r.to_record().map_err(HarnessError::Data))
            .collect::<Result<Vec<_>, _>>()
    })()
    .map_err(|e: HarnessError| e.at("distill"))?;

    let policy = (|| {
        let (g_min, g_max) = config.policy_range;
        let policy = fit_order_policy(&records, &vocab, g_min, g_max)?;
        out.write("policy.json", &to_json_bytes(&policy))?;
        Ok(policy)
    })()
    .map_err(|e: HarnessError| e.at("policy"))?;

    seeds.insert("engine".into(), config.engine.seed);
    let (base, wrapped) = (|| -> Result<(SweepReport, SweepReport), HarnessError> {
        let tasks = corpus.task_set();
        let base = sweep(model.as_ref(), &tasks, &config.taus, &config.engine, &config.aup)?;
        let student = PolicyDenoiser::new(model.clone(), policy.clone())?;
        let wrapped = sweep(&student, &tasks, &config.taus, &config.engine, &config.aup)?;
        out.write("sweep_base.json", &to_json_bytes(&base))?;
        out.write("sweep_policy.json", &to_json_bytes(&wrapped))?;
        out.write("curve_base.csv", format_curve(&base.curve).as_bytes())?;
        out.write("curve_policy.csv", format_curve(&wrapped.curve).as_bytes())?;
        let svg = render_svg(&[("base", &base.curve), ("policy", &wrapped.curve)]);
        out.write("curves.svg", svg.as_bytes())?;
        Ok((base, wrapped))
    })()
    .map_err(|e| e.at("sweep"))?;

    let summary = serde_json::json!({
        "alpha": config.aup.alpha,
        "base": base.aup.score,
        "policy": wrapped.aup.score,
        "delta": wrapped.aup.score - base.aup.score,
    });
    out.write("aup.json", &to_json_bytes(&summary))
        .map_err(|e| e.at("aup"))?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        aggregation: "micro".into(),
        seeds,
        artifacts: out.entries.clone(),
    };
    write_atomic(&out.dir.join("manifest.json"), &to_json_bytes(&manifest))
        .map_err(|e| e.at("manifest"))?;
    Ok(PipelineSummary {
        output_dir: out.dir,
        base_aup: base.aup.score,
        policy_aup: wrapped.aup.score,
        manifest,
    })
}
