//! JSONL / TSV readers and writers for the artifact formats.

use std::path::Path;

use anyhow::{Context, Result};

use mercat_core::eval::{EvalQuery, StsPair};
use mercat_core::retrieval::ItemDoc;
use mercat_core::training::TrainingPair;

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading {what} from {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(line)
            .with_context(|| format!("{}:{} invalid {what} record", path.display(), lineno + 1))?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_items(path: &Path) -> Result<Vec<ItemDoc>> {
    read_jsonl(path, "item")
}

pub fn read_pairs(path: &Path) -> Result<Vec<TrainingPair>> {
    read_jsonl(path, "training pair")
}

pub fn read_eval_queries(path: &Path) -> Result<Vec<EvalQuery>> {
    read_jsonl(path, "eval query")
}

/// STS pairs: `sentence_a \t sentence_b \t gold` per line.
pub fn read_sts_tsv(path: &Path) -> Result<Vec<StsPair>> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading sts pairs from {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(a), Some(b), Some(gold)) = (cols.next(), cols.next(), cols.next()) else {
            anyhow::bail!("{}:{} expected 3 tab-separated columns", path.display(), lineno + 1);
        };
        let gold: f64 = gold
            .trim()
            .parse()
            .with_context(|| format!("{}:{} bad gold score", path.display(), lineno + 1))?;
        out.push(StsPair::new(a, b, gold)?);
    }
    Ok(out)
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_string(path, &out)
}

pub fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    write_string(path, &body)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mercat_core::eval::FeedbackGrade;

    #[test]
    fn eval_query_jsonl_matches_documented_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.jsonl");
        let line = r#"{"query_id":"q1","text":"switch","candidates":[{"item_id":"a","grade":"purchase"},{"item_id":"b","grade":"view"}]}"#;
        write_string(&path, &format!("{line}\n")).unwrap();
        let queries = read_eval_queries(&path).unwrap();
        assert_eq!(queries.len(), 1);
        assert_eq!(queries[0].candidates[0].grade, FeedbackGrade::Purchase);
        // Round trip.
        write_jsonl(&path, &queries).unwrap();
        let again = read_eval_queries(&path).unwrap();
        assert_eq!(again, queries);
    }

    #[test]
    fn sts_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sts.tsv");
        write_string(&path, "alpha beta\tgamma\t3.5\nx\ty\t0\n").unwrap();
        let pairs = read_sts_tsv(&path).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].gold, 3.5);
        assert_eq!(pairs[1].gold, 0.0);
    }

    #[test]
    fn bad_records_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.jsonl");
        write_string(&path, "{\"item_id\":\"a\",\"title\":\"ok\"}\nnot json\n").unwrap();
        let err = read_items(&path).unwrap_err();
        assert!(format!("{err:#}").contains(":2"));
    }
}
