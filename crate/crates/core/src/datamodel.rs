//! Core data types, dataset file formats, and reproducible splits.
//!
//! File formats:
//!
//! - prompts: JSON lines, `{"id": str, "embedding": [float, ...]}`
//! - labels: CSV, header `prompt_id,<llm_id_1>,...,<llm_id_M>`, cells are
//!   losses in `[0, 1]` or empty for a missing label
//! - pool: CSV, header `llm_id,cost`
//! - pairwise: CSV, header `prompt_id,llm_a,llm_b,outcome` with outcome one of
//!   `a_wins`, `b_wins`, `tie`

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A prompt as the router sees it: an identifier and its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub embedding: Vec<f64>,
}

/// An LLM's identity and per-prompt inference cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmProfile {
    pub id: String,
    pub cost: f64,
}

/// Prompts × LLMs matrix of losses in `[0, 1]` with a mask of observed entries.
///
/// Storage is row-major. Unobserved entries hold `0.0` in `losses` so that
/// structural equality only depends on what was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    n_prompts: usize,
    n_llms: usize,
    losses: Vec<f64>,
    mask: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(n_prompts: usize, n_llms: usize, losses: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let len = n_prompts * n_llms;
        if losses.len() != len || mask.len() != len {
            return Err(Error::Argument(format!(
                "label storage has {} losses and {} mask entries, expected {len}",
                losses.len(),
                mask.len()
            )));
        }
        let mut losses = losses;
        for (i, (loss, &observed)) in losses.iter_mut().zip(&mask).enumerate() {
            if observed {
                check_loss(*loss).map_err(|msg| {
                    Error::Validation(format!(
                        "label at row {}, column {}: {msg}",
                        i / n_llms.max(1),
                        i % n_llms.max(1)
                    ))
                })?;
            } else {
                *loss = 0.0;
            }
        }
        Ok(Self {
            n_prompts,
            n_llms,
            losses,
            mask,
        })
    }

    /// Builds a matrix from rows of optional losses.
    pub fn from_rows(rows: &[Vec<Option<f64>>], n_llms: usize) -> Result<Self> {
        let mut losses = Vec::with_capacity(rows.len() * n_llms);
        let mut mask = Vec::with_capacity(rows.len() * n_llms);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_llms {
                return Err(Error::Argument(format!(
                    "row {r} has {} entries, expected {n_llms}",
                    row.len()
                )));
            }
            for v in row {
                losses.push(v.unwrap_or(0.0));
                mask.push(v.is_some());
            }
        }
        Self::new(rows.len(), n_llms, losses, mask)
    }

    /// A fully observed matrix.
    pub fn dense(n_prompts: usize, n_llms: usize, losses: Vec<f64>) -> Result<Self> {
        let mask = vec![true; losses.len()];
        Self::new(n_prompts, n_llms, losses, mask)
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    pub fn n_llms(&self) -> usize {
        self.n_llms
    }

    pub fn get(&self, prompt: usize, llm: usize) -> Option<f64> {
        let i = prompt * self.n_llms + llm;
        self.mask[i].then(|| self.losses[i])
    }

    pub fn is_observed(&self, prompt: usize, llm: usize) -> bool {
        self.mask[prompt * self.n_llms + llm]
    }

    /// One LLM's losses in prompt order.
    pub fn column(&self, llm: usize) -> Vec<Option<f64>> {
        (0..self.n_prompts).map(|r| self.get(r, llm)).collect()
    }

    pub fn row(&self, prompt: usize) -> Vec<Option<f64>> {
        (0..self.n_llms).map(|c| self.get(prompt, c)).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Mean observed loss of one LLM, `None` if the column is fully masked.
    pub fn column_mean(&self, llm: usize) -> Option<f64> {
        let (sum, n) = (0..self.n_prompts)
            .filter_map(|r| self.get(r, llm))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

fn check_loss(v: f64) -> std::result::Result<(), String> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(format!("loss {v} outside [0, 1]"));
    }
    Ok(())
}

/// Outcome of a pairwise comparison between `llm_a` and `llm_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AWins,
    BWins,
    Tie,
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "a_wins" => Ok(Outcome::AWins),
            "b_wins" => Ok(Outcome::BWins),
            "tie" => Ok(Outcome::Tie),
            other => Err(format!("unknown outcome {other:?} (expected a_wins, b_wins or tie)")),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::AWins => "a_wins",
            Outcome::BWins => "b_wins",
            Outcome::Tie => "tie",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseRecord {
    pub prompt_id: String,
    pub llm_a: String,
    pub llm_b: String,
    pub outcome: Outcome,
}

/// Disjoint train/validation/test prompt indices plus a train/test split of
/// the LLM pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train_llms: Vec<usize>,
    pub test_llms: Vec<usize>,
    pub seed: u64,
}

/// A consistent prompts / labels / pool triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub prompts: Vec<PromptRecord>,
    pub labels: LabelMatrix,
    pub pool: Vec<LlmProfile>,
}

impl Dataset {
    /// Checks the cross-object invariants.
    pub fn new(prompts: Vec<PromptRecord>, labels: LabelMatrix, pool: Vec<LlmProfile>) -> Result<Self> {
        validate_prompts(&prompts)?;
        validate_pool(&pool)?;
        if labels.n_prompts() != prompts.len() || labels.n_llms() != pool.len() {
            return Err(Error::Consistency(format!(
                "labels are {}x{} but there are {} prompts and {} LLMs",
                labels.n_prompts(),
                labels.n_llms(),
                prompts.len(),
                pool.len()
            )));
        }
        Ok(Self { prompts, labels, pool })
    }

    pub fn load(prompts_path: &Path, labels_path: &Path, pool_path: &Path) -> Result<Self> {
        let (prompts, labels, pool) = load_dataset(prompts_path, labels_path, pool_path)?;
        Ok(Self { prompts, labels, pool })
    }

    pub fn save(&self, prompts_path: &Path, labels_path: &Path, pool_path: &Path) -> Result<()> {
        save_prompts(prompts_path, &self.prompts)?;
        save_labels(labels_path, &self.prompts, &self.pool, &self.labels)?;
        save_pool(pool_path, &self.pool)
    }

    pub fn embeddings(&self) -> Vec<Vec<f64>> {
        self.prompts.iter().map(|p| p.embedding.clone()).collect()
    }

    pub fn llm_index(&self, id: &str) -> Option<usize> {
        self.pool.iter().position(|p| p.id == id)
    }

    /// Sub-dataset over the given prompt and LLM indices.
    pub fn subset(&self, prompt_idx: &[usize], llm_idx: &[usize]) -> Result<Self> {
        let labels = restrict(&self.labels, prompt_idx, llm_idx)?;
        Ok(Self {
            prompts: prompt_idx.iter().map(|&i| self.prompts[i].clone()).collect(),
            labels,
            pool: llm_idx.iter().map(|&j| self.pool[j].clone()).collect(),
        })
    }
}

fn validate_prompts(prompts: &[PromptRecord]) -> Result<()> {
    let dim = prompts.first().map(|p| p.embedding.len());
    let mut seen = HashSet::new();
    for p in prompts {
        if Some(p.embedding.len()) != dim {
            return Err(Error::Consistency(format!(
                "prompt {:?} has embedding dimension {}, expected {}",
                p.id,
                p.embedding.len(),
                dim.unwrap_or(0)
            )));
        }
        if p.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "prompt {:?} has a non-finite embedding value",
                p.id
            )));
        }
        if !seen.insert(p.id.as_str()) {
            return Err(Error::Consistency(format!("duplicate prompt id {:?}", p.id)));
        }
    }
    Ok(())
}

fn validate_pool(pool: &[LlmProfile]) -> Result<()> {
    let mut seen = HashSet::new();
    for llm in pool {
        if !llm.cost.is_finite() || llm.cost < 0.0 {
            return Err(Error::Validation(format!(
                "LLM {:?} has invalid cost {}",
                llm.id, llm.cost
            )));
        }
        if !seen.insert(llm.id.as_str()) {
            return Err(Error::Consistency(format!("duplicate LLM id {:?}", llm.id)));
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::parse(path, line, "record", err.to_string())
}

/// Reads the prompts JSON-lines file.
pub fn load_prompts(path: &Path) -> Result<Vec<PromptRecord>> {
    let reader = BufReader::new(open(path)?);
    let mut prompts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PromptRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i as u64 + 1, "prompt", e.to_string()))?;
        if let Some(bad) = record.embedding.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{}:{}: embedding[{bad}] is not finite",
                path.display(),
                i + 1
            )));
        }
        prompts.push(record);
    }
    validate_prompts(&prompts)?;
    Ok(prompts)
}

pub fn load_pool(path: &Path) -> Result<Vec<LlmProfile>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "llm_id" || &headers[1] != "cost" {
        return Err(Error::parse(path, 1, "header", "expected \"llm_id,cost\""));
    }
    let mut pool = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cost: f64 = rec[1]
            .parse()
            .map_err(|_| Error::parse(path, line, "cost", format!("not a number: {:?}", &rec[1])))?;
        if !cost.is_finite() || cost < 0.0 {
            return Err(Error::Validation(format!(
                "{}:{line}: cost {cost} must be a non-negative number",
                path.display()
            )));
        }
        pool.push(LlmProfile {
            id: rec[0].to_string(),
            cost,
        });
    }
    validate_pool(&pool)?;
    Ok(pool)
}

/// Raw contents of a labels CSV: prompt ids, LLM ids from the header, and
/// one row of optional losses per prompt id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub prompt_ids: Vec<String>,
    pub llm_ids: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn load_label_table(path: &Path) -> Result<LabelTable> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || &headers[0] != "prompt_id" {
        return Err(Error::parse(path, 1, "header", "first column must be \"prompt_id\""));
    }
    let llm_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for id in &llm_ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::parse(path, 1, id.clone(), "duplicate LLM column"));
        }
    }
    let mut prompt_ids = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(llm_ids.len());
        for (field, cell) in llm_ids.iter().zip(rec.iter().skip(1)) {
            if cell.is_empty() {
                row.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, line, field.clone(), format!("not a number: {cell:?}")))?;
            check_loss(v).map_err(|msg| Error::Validation(format!("{}:{line}: {field}: {msg}", path.display())))?;
            row.push(Some(v));
        }
        prompt_ids.push(rec[0].to_string());
        rows.push(row);
    }
    Ok(LabelTable {
        prompt_ids,
        llm_ids,
        rows,
    })
}

/// Loads a dataset and aligns the labels to the prompt order (rows) and the
/// pool order (columns).
///
/// Every prompt needs exactly one label row and every pool LLM exactly one
/// label column; anything else is a consistency error.
pub fn load_dataset(
    prompts_path: &Path,
    labels_path: &Path,
    pool_path: &Path,
) -> Result<(Vec<PromptRecord>, LabelMatrix, Vec<LlmProfile>)> {
    let prompts = load_prompts(prompts_path)?;
    let pool = load_pool(pool_path)?;
    let table = load_label_table(labels_path)?;
    let labels = align_labels(&table, &prompts, &pool)?;
    Ok((prompts, labels, pool))
}

/// Reorders a label table to the given prompts and LLMs. Unlike
/// [`select_labels`], a label column naming an LLM outside `pool` is a
/// consistency error.
pub fn align_labels(table: &LabelTable, prompts: &[PromptRecord], pool: &[LlmProfile]) -> Result<LabelMatrix> {
    let pool_ids: HashSet<&str> = pool.iter().map(|p| p.id.as_str()).collect();
    if let Some(unknown) = table.llm_ids.iter().find(|id| !pool_ids.contains(id.as_str())) {
        return Err(Error::Consistency(format!("labels reference unknown LLM {unknown:?}")));
    }
    select_labels(table, prompts, pool)
}

/// Picks the label columns for `pool` (ignoring any other columns) in prompt
/// order.
pub fn select_labels(table: &LabelTable, prompts: &[PromptRecord], pool: &[LlmProfile]) -> Result<LabelMatrix> {
    let col_of: HashMap<&str, usize> = table
        .llm_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let cols = pool
        .iter()
        .map(|llm| {
            col_of
                .get(llm.id.as_str())
                .copied()
                .ok_or_else(|| Error::Consistency(format!("no label column for LLM {:?}", llm.id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut row_of: HashMap<&str, usize> = HashMap::with_capacity(table.prompt_ids.len());
    for (i, id) in table.prompt_ids.iter().enumerate() {
        if row_of.insert(id.as_str(), i).is_some() {
            return Err(Error::Consistency(format!("duplicate label row for prompt {id:?}")));
        }
    }
    let prompt_ids: HashSet<&str> = prompts.iter().map(|p| p.id.as_str()).collect();
    if let Some(unknown) = table.prompt_ids.iter().find(|id| !prompt_ids.contains(id.as_str())) {
        return Err(Error::Consistency(format!(
            "labels reference unknown prompt {unknown:?}"
        )));
    }

    let mut rows = Vec::with_capacity(prompts.len());
    for p in prompts {
        let r = *row_of
            .get(p.id.as_str())
            .ok_or_else(|| Error::Consistency(format!("no label row for prompt {:?}", p.id)))?;
        rows.push(cols.iter().map(|&c| table.rows[r][c]).collect());
    }
    LabelMatrix::from_rows(&rows, pool.len())
}

pub fn load_pairwise(path: &Path) -> Result<Vec<PairwiseRecord>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    // An empty file has no header at all.
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let expected = ["prompt_id", "llm_a", "llm_b", "outcome"];
    if headers.iter().ne(expected) {
        return Err(Error::parse(
            path,
            1,
            "header",
            "expected \"prompt_id,llm_a,llm_b,outcome\"",
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let outcome: Outcome = rec[3].parse().map_err(|msg| Error::parse(path, line, "outcome", msg))?;
        if rec[1] == rec[2] {
            return Err(Error::Validation(format!(
                "{}:{line}: llm_a and llm_b are both {:?}",
                path.display(),
                &rec[1]
            )));
        }
        out.push(PairwiseRecord {
            prompt_id: rec[0].to_string(),
            llm_a: rec[1].to_string(),
            llm_b: rec[2].to_string(),
            outcome,
        });
    }
    Ok(out)
}

pub fn save_prompts(path: &Path, prompts: &[PromptRecord]) -> Result<()> {
    let mut w = create(path)?;
    for p in prompts {
        let line = serde_json::to_string(p).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_pool(path: &Path, pool: &[LlmProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["llm_id", "cost"]).map_err(io)?;
    for llm in pool {
        w.write_record([llm.id.as_str(), &llm.cost.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_labels(path: &Path, prompts: &[PromptRecord], pool: &[LlmProfile], labels: &LabelMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let header: Vec<&str> = std::iter::once("prompt_id")
        .chain(pool.iter().map(|p| p.id.as_str()))
        .collect();
    w.write_record(&header).map_err(io)?;
    for (r, p) in prompts.iter().enumerate() {
        let mut rec = vec![p.id.clone()];
        rec.extend(
            labels
                .row(r)
                .into_iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_pairwise(path: &Path, records: &[PairwiseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["prompt_id", "llm_a", "llm_b", "outcome"]).map_err(io)?;
    for r in records {
        w.write_record([r.prompt_id.as_str(), &r.llm_a, &r.llm_b, &r.outcome.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Splits prompts into train/validation/test and LLMs into train/test.
///
/// Prompt set sizes are `floor(fraction * n_prompts)`; prompts left over are
/// dropped. The LLM training share is `round(llm_train_fraction * n_llms)`
/// clamped to `[1, n_llms - 1]` so both sides are non-empty. Prompts are
/// shuffled on stream 0 and LLMs on stream 1 of the seeded generator.
pub fn make_split(
    n_prompts: usize,
    n_llms: usize,
    fractions: (f64, f64, f64),
    llm_train_fraction: f64,
    seed: u64,
) -> Result<SplitSpec> {
    let (f_train, f_val, f_test) = fractions;
    for (name, f) in [("train", f_train), ("val", f_val), ("test", f_test)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Argument(format!("{name} fraction {f} outside [0, 1]")));
        }
    }
    if f_train + f_val + f_test > 1.0 + 1e-12 {
        return Err(Error::Argument(format!(
            "split fractions sum to {} > 1",
            f_train + f_val + f_test
        )));
    }
    if !(llm_train_fraction > 0.0 && llm_train_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "llm_train_fraction {llm_train_fraction} outside (0, 1)"
        )));
    }
    if n_prompts < 3 {
        return Err(Error::Argument(format!("need at least 3 prompts, got {n_prompts}")));
    }
    if n_llms < 2 {
        return Err(Error::Argument(format!("need at least 2 LLMs, got {n_llms}")));
    }

    let size = |f: f64| (f * n_prompts as f64 + 1e-9).floor() as usize;
    let (n_train, n_val, n_test) = (size(f_train), size(f_val), size(f_test));
    let mut order: Vec<usize> = (0..n_prompts).collect();
    rng::fisher_yates(&mut order, &mut rng::seeded(seed, 0));
    let train_idx = order[..n_train].to_vec();
    let val_idx = order[n_train..n_train + n_val].to_vec();
    let test_idx = order[n_train + n_val..n_train + n_val + n_test].to_vec();

    let n_llm_train = ((llm_train_fraction * n_llms as f64).round() as usize).clamp(1, n_llms - 1);
    let mut llms: Vec<usize> = (0..n_llms).collect();
    rng::fisher_yates(&mut llms, &mut rng::seeded(seed, 1));
    let train_llms = llms[..n_llm_train].to_vec();
    let test_llms = llms[n_llm_train..].to_vec();

    Ok(SplitSpec {
        train_idx,
        val_idx,
        test_idx,
        train_llms,
        test_llms,
        seed,
    })
}

/// Submatrix with rows `prompt_idx` and columns `llm_idx`, in those orders.
pub fn restrict(labels: &LabelMatrix, prompt_idx: &[usize], llm_idx: &[usize]) -> Result<LabelMatrix> {
    if let Some(&bad) = prompt_idx.iter().find(|&&i| i >= labels.n_prompts) {
        return Err(Error::Argument(format!(
            "prompt index {bad} out of range for {} prompts",
            labels.n_prompts
        )));
    }
    if let Some(&bad) = llm_idx.iter().find(|&&j| j >= labels.n_llms) {
        return Err(Error::Argument(format!(
            "LLM index {bad} out of range for {} LLMs",
            labels.n_llms
        )));
    }
    let mut losses = Vec::with_capacity(prompt_idx.len() * llm_idx.len());
    let mut mask = Vec::with_capacity(losses.capacity());
    for &r in prompt_idx {
        for &c in llm_idx {
            let i = r * labels.n_llms + c;
            losses.push(labels.losses[i]);
            mask.push(labels.mask[i]);
        }
    }
    Ok(LabelMatrix {
        n_prompts: prompt_idx.len(),
        n_llms: llm_idx.len(),
        losses,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;
    use tempfile::TempDir;

    fn write(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn fixture(dir: &TempDir, labels: &str) -> Result<(Vec<PromptRecord>, LabelMatrix, Vec<LlmProfile>)> {
        let prompts = write(
            dir,
            "prompts.jsonl",
            "{\"id\": \"p1\", \"embedding\": [0.0, 1.0]}\n{\"id\": \"p2\", \"embedding\": [1.0, 0.5]}\n",
        );
        let pool = write(dir, "pool.csv", "llm_id,cost\nA,1.0\nB,10\n");
        let labels = write(dir, "labels.csv", labels);
        load_dataset(&prompts, &labels, &pool)
    }

    #[test]
    fn loads_two_by_two_fixture() {
        let dir = TempDir::new().unwrap();
        let (prompts, labels, pool) = fixture(&dir, "prompt_id,A,B\np1,1,0\np2,0,\n").unwrap();
        assert_eq!(prompts.len(), 2);
        assert_eq!(pool.len(), 2);
        assert_eq!((labels.n_prompts(), labels.n_llms()), (2, 2));
        assert_eq!(labels.get(0, 0), Some(1.0));
        assert_eq!(labels.get(1, 1), None);
    }

    #[test]
    fn label_columns_and_rows_are_aligned_to_pool_and_prompts() {
        let dir = TempDir::new().unwrap();
        let (_, labels, _) = fixture(&dir, "prompt_id,B,A\np2,0.25,0.5\np1,0.75,1\n").unwrap();
        assert_eq!(labels.row(0), vec![Some(1.0), Some(0.75)]);
        assert_eq!(labels.row(1), vec![Some(0.5), Some(0.25)]);
    }

    #[test]
    fn unknown_llm_column_is_a_consistency_error() {
        let dir = TempDir::new().unwrap();
        let err = fixture(&dir, "prompt_id,A,B,C\np1,1,0,0\np2,0,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Consistency(_)), "{err}");
    }

    #[test]
    fn out_of_range_loss_is_a_validation_error() {
        let dir = TempDir::new().unwrap();
        let err = fixture(&dir, "prompt_id,A,B\np1,1.5,0\np2,0,1\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_cell_names_line_and_field() {
        let dir = TempDir::new().unwrap();
        let err = fixture(&dir, "prompt_id,A,B\np1,1,0\np2,zero,1\n").unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "A");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn embedding_dimension_mismatch_is_rejected() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "p.jsonl",
            "{\"id\": \"a\", \"embedding\": [0.0]}\n{\"id\": \"b\", \"embedding\": [0.0, 1.0]}\n",
        );
        assert!(matches!(load_prompts(&p), Err(Error::Consistency(_))));
    }

    #[test]
    fn missing_label_row_is_a_consistency_error() {
        let dir = TempDir::new().unwrap();
        let err = fixture(&dir, "prompt_id,A,B\np1,1,0\n").unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn pairwise_parsing() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "pw.csv",
            "prompt_id,llm_a,llm_b,outcome\np1,modelA,modelB,a_wins\n",
        );
        let recs = load_pairwise(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].outcome, Outcome::AWins);

        let p = write(
            &dir,
            "draw.csv",
            "prompt_id,llm_a,llm_b,outcome\np1,modelA,modelB,draw\n",
        );
        assert!(matches!(load_pairwise(&p), Err(Error::Parse { .. })));

        let p = write(
            &dir,
            "same.csv",
            "prompt_id,llm_a,llm_b,outcome\np1,modelA,modelA,tie\n",
        );
        assert!(matches!(load_pairwise(&p), Err(Error::Validation(_))));

        let p = write(&dir, "empty.csv", "");
        assert!(load_pairwise(&p).unwrap().is_empty());
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let s = make_split(10, 3, (0.6, 0.1, 0.3), 0.66, 7).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (6, 1, 3));
        let all: HashSet<usize> = s
            .train_idx
            .iter()
            .chain(&s.val_idx)
            .chain(&s.test_idx)
            .copied()
            .collect();
        assert_eq!(all.len(), 10);
        assert_eq!((s.train_llms.len(), s.test_llms.len()), (2, 1));
        assert_eq!(s, make_split(10, 3, (0.6, 0.1, 0.3), 0.66, 7).unwrap());
    }

    #[test]
    fn split_drops_remainder() {
        let s = make_split(7, 2, (0.6, 0.1, 0.3), 0.5, 1).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (4, 0, 2));
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(matches!(
            make_split(10, 3, (0.6, 0.3, 0.3), 0.5, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            make_split(2, 3, (0.5, 0.0, 0.5), 0.5, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            make_split(10, 1, (0.5, 0.0, 0.5), 0.5, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn splits_differ_across_seeds() {
        let splits: HashSet<Vec<usize>> = (0..100)
            .map(|seed| {
                let s = make_split(10, 2, (0.6, 0.1, 0.3), 0.5, seed).unwrap();
                s.train_idx
                    .iter()
                    .chain(&s.val_idx)
                    .chain(&s.test_idx)
                    .copied()
                    .collect()
            })
            .collect();
        assert_eq!(splits.len(), 100);
    }

    fn sample_matrix() -> LabelMatrix {
        let rows: Vec<Vec<Option<f64>>> = (0..4)
            .map(|r| {
                (0..3)
                    .map(|c| {
                        if (r + c) % 5 == 4 {
                            None
                        } else {
                            Some((r * 3 + c) as f64 / 12.0)
                        }
                    })
                    .collect()
            })
            .collect();
        LabelMatrix::from_rows(&rows, 3).unwrap()
    }

    #[test]
    fn restrict_cases() {
        let m = sample_matrix();
        assert_eq!(restrict(&m, &[0, 1, 2, 3], &[0, 1, 2]).unwrap(), m);
        let sub = restrict(&m, &[0, 2], &[1]).unwrap();
        assert_eq!((sub.n_prompts(), sub.n_llms()), (2, 1));
        assert_eq!(sub.column(0), vec![m.get(0, 1), m.get(2, 1)]);
        let empty = restrict(&m, &[], &[0, 1]).unwrap();
        assert_eq!((empty.n_prompts(), empty.n_llms()), (0, 2));
        assert!(matches!(restrict(&m, &[4], &[0]), Err(Error::Argument(_))));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = TempDir::new().unwrap();
        let ds = Dataset::new(
            vec![
                PromptRecord {
                    id: "x".into(),
                    embedding: vec![0.1, -3.25e-7],
                },
                PromptRecord {
                    id: "y".into(),
                    embedding: vec![1.0 / 3.0, 2.0],
                },
            ],
            LabelMatrix::from_rows(&[vec![Some(0.1), None], vec![Some(1.0 / 7.0), Some(0.0)]], 2).unwrap(),
            vec![
                LlmProfile {
                    id: "a".into(),
                    cost: 0.3,
                },
                LlmProfile {
                    id: "b".into(),
                    cost: 12.5,
                },
            ],
        )
        .unwrap();
        let paths = ["p.jsonl", "l.csv", "c.csv"].map(|n| dir.path().join(n));
        ds.save(&paths[0], &paths[1], &paths[2]).unwrap();
        let back = Dataset::load(&paths[0], &paths[1], &paths[2]).unwrap();
        assert_eq!(back, ds);
    }

    proptest! {
        #[test]
        fn restrict_composes(
            a in proptest::collection::vec(0usize..4, 0..6),
            b in proptest::collection::vec(0usize..3, 0..5),
            a2 in proptest::collection::vec(0usize..64, 0..6),
            b2 in proptest::collection::vec(0usize..64, 0..5),
        ) {
            let m = sample_matrix();
            let inner = restrict(&m, &a, &b).unwrap();
            let a2: Vec<usize> = if a.is_empty() { vec![] } else { a2.iter().map(|i| i % a.len()).collect() };
            let b2: Vec<usize> = if b.is_empty() { vec![] } else { b2.iter().map(|i| i % b.len()).collect() };
            let twice = restrict(&inner, &a2, &b2).unwrap();
            let composed_a: Vec<usize> = a2.iter().map(|&i| a[i]).collect();
            let composed_b: Vec<usize> = b2.iter().map(|&j| b[j]).collect();
            prop_assert_eq!(twice, restrict(&m, &composed_a, &composed_b).unwrap());
        }

        #[test]
        fn labels_round_trip_through_csv(
            cells in proptest::collection::vec(proptest::option::of(0.0f64..=1.0), 6),
        ) {
            let dir = TempDir::new().unwrap();
            let prompts: Vec<PromptRecord> = (0..3)
                .map(|i| PromptRecord { id: format!("p{i}"), embedding: vec![i as f64] })
                .collect();
            let pool = vec![
                LlmProfile { id: "a".into(), cost: 1.0 },
                LlmProfile { id: "b".into(), cost: 2.0 },
            ];
            let rows: Vec<Vec<Option<f64>>> = cells.chunks(2).map(|c| c.to_vec()).collect();
            let labels = LabelMatrix::from_rows(&rows, 2).unwrap();
            let ds = Dataset::new(prompts, labels, pool).unwrap();
            let paths = ["p.jsonl", "l.csv", "c.csv"].map(|n| dir.path().join(n));
            ds.save(&paths[0], &paths[1], &paths[2]).unwrap();
            prop_assert_eq!(Dataset::load(&paths[0], &paths[1], &paths[2]).unwrap(), ds);
        }
    }
}
