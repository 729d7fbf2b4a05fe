//! On-disk trace format.
//!
//! Chain `i` in a run directory is stored as
//!
//! * `chain{i}.trace.csv`: `iteration,k,alpha,scale,log_post`, preceded by
//!   a `# config_digest=<hex>` comment line;
//! * `chain{i}.assignments.rle`: one line per sample, `iteration` then the
//!   link offsets `c_j - j` run-length encoded as `value` or `value*count`;
//! * `chain{i}.params.jsonl`: one JSON array of cluster parameter vectors
//!   per sample (explicit-parameter samplers only);
//! * `chain{i}.meta.json`: run metadata and move counts.

use crate::error::{Error, Result};
use crate::partition::Assignments;
use crate::trace::{MoveTally, Sample, TraceMeta, TraceStore};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaFile {
    meta: TraceMeta,
    tally: MoveTally,
}

fn path(dir: &Path, chain: usize, ext: &str) -> PathBuf {
    dir.join(format!("chain{chain}.{ext}"))
}

fn create(p: &Path) -> Result<BufWriter<std::fs::File>> {
    Ok(BufWriter::new(std::fs::File::create(p)?))
}

fn open(p: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(p)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", p.display())))
}

/// Run-length encode link offsets.
pub fn encode_rle(c: &Assignments) -> String {
    let mut out = String::new();
    let offsets: Vec<i64> = c.as_slice().iter().enumerate().map(|(j, &l)| l as i64 - j as i64).collect();
    let mut k = 0;
    while k < offsets.len() {
        let v = offsets[k];
        let run = offsets[k..].iter().take_while(|&&o| o == v).count();
        if !out.is_empty() {
            out.push(' ');
        }
        if run > 1 {
            let _ = write!(out, "{v}*{run}");
        } else {
            let _ = write!(out, "{v}");
        }
        k += run;
    }
    out
}

pub fn decode_rle(s: &str) -> Result<Assignments> {
    let mut links = Vec::new();
    for tok in s.split_whitespace() {
        let (v, run) = match tok.split_once('*') {
            Some((v, r)) => (v, r.parse::<usize>().map_err(|_| bad_rle(tok))?),
            None => (tok, 1),
        };
        let v: i64 = v.parse().map_err(|_| bad_rle(tok))?;
        for _ in 0..run {
            let j = links.len() as i64 + v;
            if j < 0 {
                return Err(bad_rle(tok));
            }
            links.push(j as usize);
        }
    }
    Assignments::new(links).map_err(|e| Error::Data(format!("assignments: {e}")))
}

fn bad_rle(tok: &str) -> Error {
    Error::Data(format!("malformed run-length token '{tok}'"))
}

/// Write one chain's trace files into `dir`.
pub fn write_trace(dir: &Path, chain: usize, trace: &TraceStore) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = create(&path(dir, chain, "trace.csv"))?;
    writeln!(f, "# config_digest={}", trace.meta.config_digest)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["iteration", "k", "alpha", "scale", "log_post"])?;
    for s in &trace.samples {
        w.write_record([
            s.iteration.to_string(),
            s.k.to_string(),
            s.alpha.to_string(),
            s.scale.map(|v| v.to_string()).unwrap_or_default(),
            s.log_post.to_string(),
        ])?;
    }
    w.flush()?;

    let mut f = create(&path(dir, chain, "assignments.rle"))?;
    for s in &trace.samples {
        writeln!(f, "{} {}", s.iteration, encode_rle(&s.assignments))?;
    }
    f.flush()?;

    if !trace.meta.collapsed {
        let mut f = create(&path(dir, chain, "params.jsonl"))?;
        for s in &trace.samples {
            serde_json::to_writer(&mut f, &s.params)?;
            writeln!(f)?;
        }
        f.flush()?;
    }

    let meta = MetaFile {
        meta: trace.meta.clone(),
        tally: trace.tally.clone(),
    };
    let mut f = create(&path(dir, chain, "meta.json"))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.flush()?;
    Ok(())
}

/// Read back one chain's trace.
pub fn read_trace(dir: &Path, chain: usize) -> Result<TraceStore> {
    let meta: MetaFile = serde_json::from_reader(open(&path(dir, chain, "meta.json"))?)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(open(&path(dir, chain, "trace.csv"))?);
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("trace field '{}' is not a number", field(i))))
        };
        samples.push(Sample {
            iteration: num(0)? as usize,
            k: num(1)? as usize,
            alpha: num(2)?,
            scale: if field(3).is_empty() { None } else { Some(num(3)?) },
            log_post: num(4)?,
            assignments: Assignments::self_links(0),
            params: Vec::new(),
            imputed: Vec::new(),
        });
    }
    let lines = open(&path(dir, chain, "assignments.rle"))?.lines();
    let mut count = 0;
    for (s, line) in samples.iter_mut().zip(lines) {
        let line = line?;
        let (it, rle) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        if it.parse::<usize>().ok() != Some(s.iteration) {
            return Err(Error::Data(format!(
                "assignments line for iteration {it} does not match trace iteration {}",
                s.iteration
            )));
        }
        s.assignments = decode_rle(rle)?;
        count += 1;
    }
    if count != samples.len() {
        return Err(Error::Data(format!(
            "{} trace rows but {count} assignment lines",
            samples.len()
        )));
    }
    let params_path = path(dir, chain, "params.jsonl");
    if !meta.meta.collapsed && params_path.exists() {
        for (s, line) in samples.iter_mut().zip(open(&params_path)?.lines()) {
            s.params = serde_json::from_str(&line?)?;
        }
    }
    Ok(TraceStore {
        meta: meta.meta,
        samples,
        tally: meta.tally,
    })
}

/// Number of consecutive `chain{i}` traces in `dir`.
pub fn chain_count(dir: &Path) -> usize {
    (0..).take_while(|&i| path(dir, i, "meta.json").exists()).count()
}

pub fn read_all(dir: &Path) -> Result<Vec<TraceStore>> {
    let n = chain_count(dir);
    if n == 0 {
        return Err(Error::Data(format!("no traces found in {}", dir.display())));
    }
    (0..n).map(|i| read_trace(dir, i)).collect()
}

pub fn write_json<T: Serialize>(p: &Path, value: &T) -> Result<()> {
    if let Some(parent) = p.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = create(p)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}
