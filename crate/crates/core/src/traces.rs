//! Request trace generators, trace files and the partial-observation mask.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Catalog, FileId, Trace};
use crate::rng::RngStream;

/// Exact Zipf sampler over `0..n` using an inverse-CDF table.
///
/// File `i` (0-based) has probability proportional to `1 / (i + 1)^alpha`.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("zipf exponent {alpha} must be positive")));
        }
        if n == 0 {
            return Err(Error::domain("zipf support must be non-empty"));
        }
        let weights: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-alpha)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(ZipfSampler { cdf })
    }

    pub fn pmf(&self, i: usize) -> f64 {
        if i == 0 {
            self.cdf[0]
        } else {
            self.cdf[i] - self.cdf[i - 1]
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> FileId {
        let u = rng.next_f64();
        self.cdf.partition_point(|&c| c <= u) as FileId
    }
}

/// i.i.d. Zipf requests.
pub fn gen_zipf(catalog: Catalog, horizon: usize, alpha: f64, rng: &mut RngStream) -> Result<Trace> {
    check_horizon(horizon)?;
    let sampler = ZipfSampler::new(catalog.n_files(), alpha)?;
    let requests = (0..horizon).map(|_| sampler.sample(rng)).collect();
    Trace::new(catalog, requests)
}

/// Adversarially ordered trace whose per-file totals are multinomial with
/// Zipf probabilities.
///
/// Totals are drawn first, files are relabelled so that id 0 is the most
/// requested, and the requests are emitted as descending cycles over the files
/// that still have requests left.
pub fn gen_zipf_rr(
    catalog: Catalog,
    horizon: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Trace> {
    check_horizon(horizon)?;
    let sampler = ZipfSampler::new(catalog.n_files(), alpha)?;
    let mut counts = vec![0u64; catalog.n_files()];
    for _ in 0..horizon {
        counts[sampler.sample(rng) as usize] += 1;
    }
    Trace::new(catalog, zipf_rr_from_counts(&counts))
}

/// Emits the Zipf-RR ordering for given per-file totals.
///
/// Files are ranked by total (descending, lower original index first on ties)
/// and rank `r` becomes file id `r`. Each cycle then walks the ids that still
/// have requests left from the largest down to 0.
pub fn zipf_rr_from_counts(counts: &[u64]) -> Vec<FileId> {
    let mut ranked: Vec<u64> = counts.to_vec();
    ranked.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = ranked.iter().sum();
    let mut out = Vec::with_capacity(total as usize);
    let mut active = ranked.iter().take_while(|&&c| c > 0).count();
    let mut cycle = 0u64;
    while active > 0 {
        out.extend((0..active as FileId).rev());
        cycle += 1;
        while active > 0 && ranked[active - 1] <= cycle {
            active -= 1;
        }
    }
    out
}

/// Descending cycles `N-1, ..., 0, N-1, ...` truncated at `horizon`.
pub fn gen_round_robin(catalog: Catalog, horizon: usize) -> Result<Trace> {
    check_horizon(horizon)?;
    let n = catalog.n_files();
    let requests = (0..horizon).map(|t| (n - 1 - t % n) as FileId).collect();
    Trace::new(catalog, requests)
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        Err(Error::domain("trace length must be at least 1"))
    } else {
        Ok(())
    }
}

/// Per-request observation indicators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    bits: Vec<bool>,
}

impl ObservationMask {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn observed(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// i.i.d. Bernoulli(p) observation mask of length `horizon`.
pub fn bpo_mask(horizon: usize, p: f64, rng: &mut RngStream) -> Result<ObservationMask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("observation probability {p} is not in [0, 1]")));
    }
    Ok(ObservationMask {
        bits: (0..horizon).map(|_| rng.bernoulli(p)).collect(),
    })
}

/// Layout of a trace file on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceFormat {
    /// One decimal id per line. Lines starting with `#` are comments, except a
    /// leading `# n_files=N` header, which marks ids as already dense.
    Lines,
    /// CSV with a header row; ids are read from the named column.
    Csv { column: String },
}

/// A trace read from disk together with the raw id of every dense id.
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub trace: Trace,
    pub raw_ids: Vec<String>,
}

const HEADER_PREFIX: &str = "# n_files=";

pub fn load_trace(path: impl AsRef<Path>, format: &TraceFormat) -> Result<LoadedTrace> {
    let path = path.as_ref();
    match format {
        TraceFormat::Lines => load_lines(path),
        TraceFormat::Csv { column } => load_csv(path, column),
    }
}

#[derive(Default)]
struct Remapper {
    index: HashMap<String, FileId>,
    raw: Vec<String>,
}

impl Remapper {
    fn map(&mut self, raw: &str) -> FileId {
        if let Some(&id) = self.index.get(raw) {
            return id;
        }
        let id = self.raw.len() as FileId;
        self.index.insert(raw.to_owned(), id);
        self.raw.push(raw.to_owned());
        id
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn load_lines(path: &Path) -> Result<LoadedTrace> {
    let reader = BufReader::new(File::open(path)?);
    let mut dense_size: Option<usize> = None;
    let mut remap = Remapper::default();
    let mut requests = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let text = line.trim();
        if let Some(rest) = text.strip_prefix(HEADER_PREFIX) {
            if lineno != 1 {
                return Err(parse_error(path, lineno, "catalog header must be the first line"));
            }
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|e| parse_error(path, lineno, format!("bad catalog size: {e}")))?;
            dense_size = Some(n);
            continue;
        }
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let raw: u64 = text
            .parse()
            .map_err(|_| parse_error(path, lineno, format!("`{text}` is not a file id")))?;
        match dense_size {
            Some(n) => {
                if raw >= n as u64 {
                    return Err(parse_error(
                        path,
                        lineno,
                        format!("id {raw} outside declared catalog of {n} files"),
                    ));
                }
                requests.push(raw as FileId);
            }
            None => requests.push(remap.map(&raw.to_string())),
        }
    }
    if requests.is_empty() {
        return Err(Error::EmptyTrace(path.to_path_buf()));
    }
    let (n_files, raw_ids) = match dense_size {
        Some(n) => (n, (0..n).map(|i| i.to_string()).collect()),
        None => (remap.raw.len(), remap.raw),
    };
    Ok(LoadedTrace {
        trace: Trace::new(Catalog::new(n_files)?, requests)?,
        raw_ids,
    })
}

fn load_csv(path: &Path, column: &str) -> Result<LoadedTrace> {
    let mut reader = csv::Reader::from_path(path)?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| parse_error(path, 1, format!("no column named `{column}`")))?;
    let mut remap = Remapper::default();
    let mut requests = Vec::new();
    for record in reader.records() {
        let record = record?;
        let lineno = record.position().map_or(0, |p| p.line() as usize);
        let raw = record
            .get(col)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| parse_error(path, lineno, format!("missing value for `{column}`")))?;
        requests.push(remap.map(raw));
    }
    if requests.is_empty() {
        return Err(Error::EmptyTrace(path.to_path_buf()));
    }
    Ok(LoadedTrace {
        trace: Trace::new(Catalog::new(remap.raw.len())?, requests)?,
        raw_ids: remap.raw,
    })
}

/// Writes a trace in the line format with a dense-catalog header, so that
/// loading it back yields the same catalog and ids.
pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{HEADER_PREFIX}{}", trace.catalog().n_files())?;
    for f in trace.requests() {
        writeln!(w, "{f}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the dense-id to raw-id mapping as `dense_id,raw_id` CSV.
pub fn save_id_map(raw_ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dense_id", "raw_id"])?;
    for (i, raw) in raw_ids.iter().enumerate() {
        w.write_record([i.to_string().as_str(), raw.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Trace generators selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Zipf,
    ZipfRr,
    RoundRobin,
}

impl TraceKind {
    pub const ALL: [TraceKind; 3] = [TraceKind::Zipf, TraceKind::ZipfRr, TraceKind::RoundRobin];

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Zipf => "zipf",
            TraceKind::ZipfRr => "zipf-rr",
            TraceKind::RoundRobin => "round-robin",
        }
    }

    pub fn generate(
        self,
        catalog: Catalog,
        horizon: usize,
        alpha: f64,
        rng: &mut RngStream,
    ) -> Result<Trace> {
        match self {
            TraceKind::Zipf => gen_zipf(catalog, horizon, alpha, rng),
            TraceKind::ZipfRr => gen_zipf_rr(catalog, horizon, alpha, rng),
            TraceKind::RoundRobin => gen_round_robin(catalog, horizon),
        }
    }
}

impl std::str::FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TraceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown trace kind `{s}`")))
    }
}
