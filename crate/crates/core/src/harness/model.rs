use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::io::read_json;
use super::HarnessError;
use crate::denoiser::{
    Denoiser, NGramDenoiser, NGramModelFile, OracleDenoiser, OracleParams, OrderPolicy,
    PolicyDenoiser, ScriptFile, ScriptedDenoiser,
};
use crate::sequence::Vocab;

/// Command-line model description: `oracle:<params.json>`,
/// `ngram:<model.json>`, `scripted:<script.json>` or
/// `policy:<base spec>+<policy.json>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Oracle(PathBuf),
    NGram(PathBuf),
    Scripted(PathBuf),
    Policy { base: Box<ModelSpec>, policy: PathBuf },
}

impl FromStr for ModelSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("unrecognised model spec `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        Ok(match kind {
            "oracle" => ModelSpec::Oracle(rest.into()),
            "ngram" => ModelSpec::NGram(rest.into()),
            "scripted" => ModelSpec::Scripted(rest.into()),
            "policy" => {
                let (base, policy) = rest.rsplit_once('+').ok_or_else(bad)?;
                if policy.is_empty() {
                    return Err(bad());
                }
                ModelSpec::Policy {
                    base: Box::new(base.parse()?),
                    policy: policy.into(),
                }
            }
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Oracle(p) => write!(f, "oracle:{}", p.display()),
            ModelSpec::NGram(p) => write!(f, "ngram:{}", p.display()),
            ModelSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            ModelSpec::Policy { base, policy } => write!(f, "policy:{base}+{}", policy.display()),
        }
    }
}

fn check_vocab(path: &Path, got: &Vocab, want: &Vocab) -> Result<(), HarnessError> {
    if got != want {
        return Err(HarnessError::Data(format!(
            "{}: model vocabulary {got:?} does not match task vocabulary {want:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Loads the model a spec describes for tasks over `vocab`.
pub fn load_model(spec: &ModelSpec, vocab: &Vocab) -> Result<Arc<dyn Denoiser>, HarnessError> {
    Ok(match spec {
        ModelSpec::Oracle(p) => {
            let params: OracleParams = read_json(p)?;
            Arc::new(OracleDenoiser::new(params, *vocab)?)
        }
        ModelSpec::NGram(p) => {
            let file: NGramModelFile = read_json(p)?;
            check_vocab(p, &file.vocab, vocab)?;
            Arc::new(NGramDenoiser::from_file(file)?)
        }
        ModelSpec::Scripted(p) => {
            let file: ScriptFile = read_json(p)?;
            Arc::new(ScriptedDenoiser::from_file(&file)?)
        }
        ModelSpec::Policy { base, policy } => {
            let base = load_model(base, vocab)?;
            let policy: OrderPolicy = read_json(policy)?;
            Arc::new(PolicyDenoiser::new(base, policy)?)
        }
    })
}
