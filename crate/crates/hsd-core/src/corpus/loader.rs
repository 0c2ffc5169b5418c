//! File loading and corpus snapshots.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{ColumnMap, LabeledCorpus, Sample, SplitTag, TaskSpec};
use crate::error::{Error, Result};

/// What `load_dataset` observed besides the corpus itself.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub rows: usize,
    /// set when the descriptor declared a size for this split and it differs
    pub declared_size_mismatch: Option<(usize, usize)>,
    pub warnings: Vec<String>,
}

fn resolve_column(headers: &csv::StringRecord, name: &str, path: &str) -> Result<usize> {
    if let Some(idx) = name.strip_prefix('#') {
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::config(format!("bad positional column {name:?}")))?;
        if idx >= headers.len() {
            return Err(Error::config(format!(
                "column {name} out of range in {path} ({} columns)",
                headers.len()
            )));
        }
        return Ok(idx);
    }
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::config(format!("missing column {name:?} in {path}")))
}

/// Load a delimiter-separated file with a header row into a corpus,
/// preserving file order. The column map supplies the delimiter and must
/// cover the id, the text and every subtask label column; cells for
/// subtasks other than the active one are carried along so sibling-task
/// audits stay possible.
pub fn load_dataset(
    path: &Path,
    task: &TaskSpec,
    columns: &ColumnMap,
    split: SplitTag,
) -> Result<(LabeledCorpus, LoadReport)> {
    task.validate()?;
    if !columns.labels.contains_key(&task.subtask) {
        return Err(Error::config(format!(
            "column map does not cover subtask {:?}",
            task.subtask
        )));
    }
    let display = path.display().to_string();
    let delimiter = columns.delimiter;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        // tweet dumps carry stray quotes; only real csv gets quote handling
        .quoting(delimiter == b',')
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot open {display}: {e}")))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::config(format!("cannot read header of {display}: {e}")))?
        .clone();
    let id_idx = resolve_column(&headers, &columns.id, &display)?;
    let text_idx = resolve_column(&headers, &columns.text, &display)?;
    let mut label_cols: BTreeMap<String, (usize, &BTreeMap<String, String>)> = BTreeMap::new();
    for (subtask, (col, aliases)) in &columns.labels {
        label_cols.insert(
            subtask.clone(),
            (resolve_column(&headers, col, &display)?, aliases),
        );
    }

    let mut corpus = LabeledCorpus::new(task.clone(), split);
    let mut report = LoadReport::default();
    let mut seen_ids = std::collections::HashSet::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(Error::row(&display, line, format!("unreadable row: {e}")));
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record
            .get(id_idx)
            .ok_or_else(|| Error::row(&display, line, "missing id cell"))?
            .trim()
            .to_string();
        if id.is_empty() {
            return Err(Error::row(&display, line, "empty id"));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(Error::row(&display, line, format!("duplicate id {id:?}")));
        }
        let text = record
            .get(text_idx)
            .ok_or_else(|| Error::row(&display, line, "missing text cell"))?
            .to_string();
        if text.trim().is_empty() {
            return Err(Error::row(&display, line, "empty text"));
        }
        let mut sample = Sample::new(id, text);
        for (subtask, (idx, aliases)) in &label_cols {
            if let Some(cell) = record.get(*idx) {
                let cell = cell.trim();
                if cell.is_empty() {
                    continue;
                }
                let canonical = aliases.get(cell).map(String::as_str).unwrap_or(cell);
                sample.labels.insert(subtask.clone(), canonical.to_string());
            }
        }
        corpus.samples.push(sample);
        report.rows += 1;
    }

    let split_name = split.to_string();
    if let Some(&declared) = task.declared_split_sizes.get(&split_name) {
        if declared != corpus.len() {
            report.declared_size_mismatch = Some((declared, corpus.len()));
            report.warnings.push(format!(
                "{display}: declared {split_name} size {declared} but loaded {} rows",
                corpus.len()
            ));
        }
    }
    Ok((corpus, report))
}

/// Write a corpus snapshot: a TSV (`id`, `text`, one column per labeled
/// subtask) plus a `<stem>.task.toml` sidecar carrying the task spec and
/// split tag, so snapshots are self-describing.
pub fn write_snapshot(corpus: &LabeledCorpus, path: &Path) -> Result<()> {
    let mut subtasks: Vec<String> = corpus
        .samples
        .iter()
        .flat_map(|s| s.labels.keys().cloned())
        .collect();
    subtasks.sort();
    subtasks.dedup();
    if subtasks.is_empty() {
        subtasks.push(corpus.task.subtask.clone());
    }

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "id\ttext")?;
    for st in &subtasks {
        write!(out, "\t{st}")?;
    }
    writeln!(out)?;
    for s in &corpus.samples {
        debug_assert!(!s.text.contains('\t') && !s.text.contains('\n'));
        write!(out, "{}\t{}", s.id, s.text)?;
        for st in &subtasks {
            write!(out, "\t{}", s.label(st).unwrap_or(""))?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    #[derive(serde::Serialize)]
    struct Sidecar<'a> {
        task: &'a TaskSpec,
        split: SplitTag,
    }
    let sidecar = toml::to_string_pretty(&Sidecar {
        task: &corpus.task,
        split: corpus.split,
    })
    .map_err(|e| Error::config(format!("serialize task sidecar: {e}")))?;
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".task.toml");
    std::path::PathBuf::from(p)
}

/// Read a snapshot written by [`write_snapshot`].
pub fn load_snapshot(path: &Path) -> Result<LabeledCorpus> {
    #[derive(serde::Deserialize)]
    struct Sidecar {
        task: TaskSpec,
        split: SplitTag,
    }
    let sidecar = sidecar_path(path);
    let sidecar_text = std::fs::read_to_string(&sidecar).map_err(|e| {
        Error::config(format!(
            "cannot read snapshot sidecar {}: {e}",
            sidecar.display()
        ))
    })?;
    let sidecar: Sidecar = toml::from_str(&sidecar_text).map_err(|e| {
        Error::config(format!(
            "cannot parse {}: {e}",
            sidecar_path(path).display()
        ))
    })?;

    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::config(format!("{display}: empty snapshot")))?;
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.len() < 3 || columns[0] != "id" || columns[1] != "text" {
        return Err(Error::config(format!(
            "{display}: not a corpus snapshot (header {header:?})"
        )));
    }
    let mut corpus = LabeledCorpus::new(sidecar.task, sidecar.split);
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(Error::row(
                &display,
                (i + 2) as u64,
                format!("expected {} cells, got {}", columns.len(), cells.len()),
            ));
        }
        let mut sample = Sample::new(cells[0], cells[1]);
        for (col, cell) in columns.iter().zip(cells.iter()).skip(2) {
            if !cell.is_empty() {
                sample.labels.insert(col.to_string(), cell.to_string());
            }
        }
        corpus.samples.push(sample);
    }
    Ok(corpus)
}
