//! File formats: JSON for MDPs, policies and configs; JSON Lines for logged data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::empirical::LoggedTuple;
use crate::error::{OpeError, Result};
use crate::mdp::{Episode, EpisodeSet};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| OpeError::InvalidArgument(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        items.push(item);
    }
    Ok(items)
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// One episode per line.
pub fn read_episodes(path: &Path) -> Result<EpisodeSet> {
    read_jsonl(path)
}

pub fn write_episodes(episodes: &[Episode], path: &Path) -> Result<()> {
    write_jsonl(episodes, path)
}

/// One tuple per line.
pub fn read_tuples(path: &Path) -> Result<Vec<LoggedTuple>> {
    read_jsonl(path)
}

pub fn write_tuples(tuples: &[LoggedTuple], path: &Path) -> Result<()> {
    write_jsonl(tuples, path)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoggedData {
    Episodes(EpisodeSet),
    Tuples(Vec<LoggedTuple>),
}

/// Reads a JSON Lines file of either episodes or tuples, deciding by the
/// first record: episodes carry a `steps` field.
pub fn read_logged_data(path: &Path) -> Result<LoggedData> {
    let reader = BufReader::new(File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let first: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| OpeError::InvalidArgument(format!("{}: {e}", path.display())))?;
        return if first.get("steps").is_some() {
            Ok(LoggedData::Episodes(read_episodes(path)?))
        } else {
            Ok(LoggedData::Tuples(read_tuples(path)?))
        };
    }
    Err(OpeError::EmptyInput("data file has no records"))
}
