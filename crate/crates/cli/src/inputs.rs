use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

use routekit::datamodel::{select_labels, LabelMatrix, LabelTable, LlmProfile, PromptRecord};
use routekit::features::LlmFeature;
use routekit::routing::PoolEntry;
use routekit::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        field: "json".into(),
        message: e.to_string(),
    })
}

/// Reads feature documents (one JSON object per line) from every file, in
/// order. An LLM may appear only once across all files.
pub fn load_features(paths: &[impl AsRef<Path>]) -> Result<Vec<LlmFeature>> {
    let mut out: Vec<LlmFeature> = Vec::new();
    let mut seen = HashSet::new();
    for path in paths {
        let path = path.as_ref();
        for (i, line) in read_text(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: LlmFeature = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                field: "feature".into(),
                message: e.to_string(),
            })?;
            f.validate()?;
            if !seen.insert(f.llm_id.clone()) {
                return Err(Error::Consistency(format!(
                    "LLM {:?} has more than one feature document",
                    f.llm_id
                )));
            }
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err(Error::Validation("no LLM features given".into()));
    }
    Ok(out)
}

/// Attaches pool costs to features, keeping feature order.
pub fn pool_entries(features: Vec<LlmFeature>, pool: &[LlmProfile]) -> Result<Vec<PoolEntry>> {
    let cost: HashMap<&str, f64> = pool.iter().map(|p| (p.id.as_str(), p.cost)).collect();
    features
        .into_iter()
        .map(|f| {
            let c = *cost
                .get(f.llm_id.as_str())
                .ok_or_else(|| Error::Consistency(format!("pool has no cost for LLM {:?}", f.llm_id)))?;
            Ok(PoolEntry::new(f, c))
        })
        .collect()
}

/// The requested LLM ids (each must be in `available`), or all of `available`.
pub fn chosen_ids(requested: &[String], available: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(available.to_vec());
    }
    let have: HashSet<&str> = available.iter().map(String::as_str).collect();
    if let Some(missing) = requested.iter().find(|id| !have.contains(id.as_str())) {
        return Err(Error::Consistency(format!("unknown LLM {missing:?}")));
    }
    Ok(requested.to_vec())
}

/// Label columns for `ids`, rows in prompt order.
pub fn labels_for(table: &LabelTable, prompts: &[PromptRecord], ids: &[String]) -> Result<LabelMatrix> {
    let pool: Vec<LlmProfile> = ids
        .iter()
        .map(|id| LlmProfile {
            id: id.clone(),
            cost: 0.0,
        })
        .collect();
    select_labels(table, prompts, &pool)
}

/// Pool entries restricted to `ids` (all when empty), in pool order.
pub fn restrict_pool(pool: Vec<LlmProfile>, ids: &[String]) -> Result<Vec<LlmProfile>> {
    let all: Vec<String> = pool.iter().map(|p| p.id.clone()).collect();
    let keep: HashSet<String> = chosen_ids(ids, &all)?.into_iter().collect();
    Ok(pool.into_iter().filter(|p| keep.contains(&p.id)).collect())
}

pub fn embeddings(prompts: &[PromptRecord]) -> Vec<Vec<f64>> {
    prompts.iter().map(|p| p.embedding.clone()).collect()
}
