//! Monte Carlo samples of the Mandelbrot martingale `Yₙ`.
//!
//! Two engines are provided. [`simulate_tree`] draws independent exact
//! samples of `Y_depth` by walking each random tree depth-first.
//! [`iterate_pool`] applies the smoothing map to a pool of `M` values,
//! resampling children from the previous generation.
//!
//! # Random streams
//!
//! Work is split into fixed-size chunks. Chunk `c` draws from
//! `stream(seed, id)`, a ChaCha8 generator keyed by `seed` with stream
//! number `id`:
//!
//! * tree chunk `c`: `id = c`;
//! * pool iteration `k` (0-based), chunk `c`: `id = ((k + 1) << 32) | c`.
//!
//! The chunk layout depends only on the sample count, so batches are
//! bit-identical for any `worker_count`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::offspring::{lookup, parse_params, OffspringLaw};
use crate::weights::WeightLaw;

/// Largest admissible expected tree size `b^depth`.
pub const MAX_TREE_SIZE: f64 = 1e8;
/// Smallest admissible pool.
pub const MIN_POOL_SIZE: usize = 10_000;
/// Samples per chunk in tree mode.
pub const TREE_CHUNK: usize = 1024;
/// Pool slots per chunk.
pub const POOL_CHUNK: usize = 8192;
/// Magic bytes opening a binary batch file.
pub const BINARY_MAGIC: [u8; 8] = *b"SMFXBAT1";

// A single tree may visit this many times its expected size before we give
// up; heavy-tailed offspring laws can otherwise run away.
const NODE_BUDGET_FACTOR: f64 = 64.0;
const NODE_BUDGET_FLOOR: f64 = 1e6;

/// The random stream for work item `id` under `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn pool_stream_id(iteration: usize, chunk: usize) -> u64 {
    ((iteration as u64 + 1) << 32) | chunk as u64
}

/// A user-supplied weight law.
///
/// Samples must be nonnegative with `E W = 1`.
pub trait WeightSampler: Send + Sync + fmt::Debug {
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    /// The normalisation `b` the weights were built for.
    fn b(&self) -> f64;
    /// Stable text used in the spec hash.
    fn label(&self) -> String;
    /// `E W²`, if known.
    fn second_moment(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum WeightSource {
    PowerLaw(WeightLaw),
    Custom(Arc<dyn WeightSampler>),
}

impl WeightSource {
    fn b(&self) -> f64 {
        match self {
            WeightSource::PowerLaw(w) => w.b(),
            WeightSource::Custom(c) => c.b(),
        }
    }

    #[inline]
    fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match self {
            WeightSource::PowerLaw(w) => w.sample(rng),
            WeightSource::Custom(c) => c.sample(rng),
        }
    }

    pub fn second_moment(&self) -> Option<f64> {
        match self {
            WeightSource::PowerLaw(w) => Some(w.moment(2)),
            WeightSource::Custom(c) => c.second_moment(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            WeightSource::PowerLaw(w) => format!("weights:alpha={}", w.alpha()),
            WeightSource::Custom(c) => format!("custom:{}", c.label()),
        }
    }
}

impl From<WeightLaw> for WeightSource {
    fn from(w: WeightLaw) -> Self {
        WeightSource::PowerLaw(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Exact samples of `Y_depth`.
    Tree { depth: u32 },
    /// `iterations` sweeps of the smoothing map over `pool_size` slots.
    Pool { pool_size: usize, iterations: usize },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Tree { depth } => write!(f, "tree:depth={depth}"),
            Method::Pool {
                pool_size,
                iterations,
            } => write!(f, "pool:size={pool_size},iterations={iterations}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `tree:depth=12`, `pool:M=200000,K=50` and the
    /// `pool:size=..,iterations=..` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let params = parse_params(body)?;
        let has = |k: &str| params.iter().any(|(key, _)| key == k);
        match name.trim().to_ascii_lowercase().as_str() {
            "tree" => Ok(Method::Tree {
                depth: lookup(&params, "depth", "tree")?,
            }),
            "pool" => {
                let size_key = if has("m") { "m" } else { "size" };
                let iter_key = if has("k") { "k" } else { "iterations" };
                Ok(Method::Pool {
                    pool_size: lookup(&params, size_key, "pool")?,
                    iterations: lookup(&params, iter_key, "pool")?,
                })
            }
            other => Err(Error::Parse(format!(
                "unknown method '{other}' (expected tree:depth=.. or pool:M=..,K=..)"
            ))),
        }
    }
}

/// One instance of the fixed-point equation plus simulation settings.
#[derive(Debug, Clone)]
pub struct CascadeSpec {
    offspring: OffspringLaw,
    weights: WeightSource,
    method: Method,
    seed: u64,
    worker_count: usize,
}

impl CascadeSpec {
    pub fn new(
        offspring: OffspringLaw,
        weights: impl Into<WeightSource>,
        method: Method,
        seed: u64,
        worker_count: usize,
    ) -> Result<Self> {
        let weights = weights.into();
        let b = offspring.mean();
        if (weights.b() - b).abs() > 1e-12 * b {
            return Err(Error::Constraint(format!(
                "weights built for b = {} but offspring mean is {b}",
                weights.b()
            )));
        }
        if worker_count < 1 {
            return Err(Error::Constraint("worker_count ≥ 1 required".into()));
        }
        match method {
            Method::Tree { depth } => {
                let size = b.powf(f64::from(depth));
                if size > MAX_TREE_SIZE {
                    return Err(Error::Resource(format!(
                        "expected tree size b^depth = {size:.3e} exceeds {MAX_TREE_SIZE:e} (b = {b}, depth = {depth})"
                    )));
                }
            }
            Method::Pool { pool_size, .. } => {
                if pool_size < MIN_POOL_SIZE {
                    return Err(Error::Constraint(format!(
                        "pool_size ≥ {MIN_POOL_SIZE} required, got {pool_size}"
                    )));
                }
            }
        }
        Ok(CascadeSpec {
            offspring,
            weights,
            method,
            seed,
            worker_count,
        })
    }

    pub fn offspring(&self) -> &OffspringLaw {
        &self.offspring
    }
    pub fn weights(&self) -> &WeightSource {
        &self.weights
    }
    pub fn method(&self) -> Method {
        self.method
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn worker_count(&self) -> usize {
        self.worker_count
    }
    pub fn b(&self) -> f64 {
        self.offspring.mean()
    }

    /// Canonical description; excludes the seed and worker count.
    pub fn canonical(&self) -> String {
        format!(
            "offspring={};weights={};method={}",
            self.offspring,
            self.weights.label(),
            self.method
        )
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.worker_count)
            .build()
            .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec_hash: String,
    pub seed: u64,
}

// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Simulated values of `Y` with running totals.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    values: Vec<f64>,
    zero_count: usize,
    sum: f64,
    sum_sq: f64,
    provenance: Provenance,
}

impl SampleBatch {
    /// Wraps `values`, recomputing the accumulators.
    pub fn from_values(values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let mut s = CompensatedSum::default();
        let mut s2 = CompensatedSum::default();
        let mut zeros = 0;
        for &v in &values {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("sample values must be finite and ≥ 0, got {v}")));
            }
            if v == 0.0 {
                zeros += 1;
            }
            s.add(v);
            s2.add(v * v);
        }
        Ok(SampleBatch {
            values,
            zero_count: zeros,
            sum: s.value(),
            sum_sq: s2.value(),
            provenance,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn count(&self) -> usize {
        self.values.len()
    }
    pub fn zero_count(&self) -> usize {
        self.zero_count
    }
    pub fn sum(&self) -> f64 {
        self.sum
    }
    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }
    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn provenance(spec: &CascadeSpec) -> Provenance {
    Provenance {
        spec_hash: spec.hash(),
        seed: spec.seed,
    }
}

/// `count` independent samples of `Y_depth`, with `Y₀ ≡ 1`.
pub fn simulate_tree(spec: &CascadeSpec, count: usize) -> Result<SampleBatch> {
    let Method::Tree { depth } = spec.method else {
        return Err(Error::Constraint(format!(
            "simulate_tree needs a tree method, got {}",
            spec.method
        )));
    };
    let b = spec.b();
    let budget = (NODE_BUDGET_FACTOR * b.powf(f64::from(depth))).max(NODE_BUDGET_FLOOR) as u64;
    let chunks = count.div_ceil(TREE_CHUNK);
    let pool = spec.thread_pool()?;
    let parts: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream(spec.seed, c as u64);
                let n = TREE_CHUNK.min(count - c * TREE_CHUNK);
                let mut stack = Vec::new();
                (0..n)
                    .map(|_| tree_sample(spec, depth, budget, &mut rng, &mut stack))
                    .collect()
            })
            .collect()
    });
    let mut values = Vec::with_capacity(count);
    for p in parts {
        values.extend(p?);
    }
    SampleBatch::from_values(values, provenance(spec))
}

// Sum over the nodes at level `depth` of the product of W/b along the path.
// Subtrees behind a zero weight are pruned.
fn tree_sample<R: RngCore>(
    spec: &CascadeSpec,
    depth: u32,
    budget: u64,
    rng: &mut R,
    stack: &mut Vec<(u32, f64)>,
) -> Result<f64> {
    if depth == 0 {
        return Ok(1.0);
    }
    let inv_b = 1.0 / spec.b();
    let mut total = CompensatedSum::default();
    let mut nodes: u64 = 0;
    stack.clear();
    stack.push((0, 1.0));
    while let Some((level, w)) = stack.pop() {
        let n = spec.offspring.sample(rng);
        nodes += n;
        if nodes > budget {
            return Err(Error::Resource(format!(
                "tree exceeded its node budget of {budget} (depth {depth})"
            )));
        }
        if level + 1 == depth {
            let mut s = 0.0;
            for _ in 0..n {
                s += spec.weights.sample(rng);
            }
            total.add(w * inv_b * s);
        } else {
            for _ in 0..n {
                let wj = spec.weights.sample(rng);
                if wj > 0.0 {
                    stack.push((level + 1, w * wj * inv_b));
                }
            }
        }
    }
    Ok(total.value())
}

/// Runs the pool iteration and returns the final generation.
///
/// Children of generation `k+1` are drawn uniformly with replacement from
/// generation `k` divided by its empirical mean. Without that rescaling the
/// sampling error in the pool mean performs a random walk that grows with
/// the iteration count. The returned generation is not rescaled.
pub fn iterate_pool(spec: &CascadeSpec) -> Result<SampleBatch> {
    let Method::Pool {
        pool_size,
        iterations,
    } = spec.method
    else {
        return Err(Error::Constraint(format!(
            "iterate_pool needs a pool method, got {}",
            spec.method
        )));
    };
    let inv_b = 1.0 / spec.b();
    let pool = spec.thread_pool()?;
    let mut prev = vec![1.0; pool_size];
    let mut next = vec![0.0; pool_size];
    for k in 0..iterations {
        let mut mean = CompensatedSum::default();
        prev.iter().for_each(|&v| mean.add(v));
        let mean = mean.value() / pool_size as f64;
        if !(mean > 0.0) {
            return Err(Error::Convergence(format!(
                "pool died out at iteration {k}: every slot is 0"
            )));
        }
        let scale = inv_b / mean;
        let src = &prev;
        pool.install(|| {
            next.par_chunks_mut(POOL_CHUNK)
                .enumerate()
                .for_each(|(c, out)| {
                    let mut rng = stream(spec.seed, pool_stream_id(k, c));
                    for slot in out.iter_mut() {
                        let n = spec.offspring.sample(&mut rng);
                        let mut s = 0.0;
                        for _ in 0..n {
                            let w = spec.weights.sample(&mut rng);
                            let j = rng.random_range(0..pool_size);
                            if w > 0.0 {
                                s += w * src[j];
                            }
                        }
                        *slot = s * scale;
                    }
                });
        });
        std::mem::swap(&mut prev, &mut next);
    }
    SampleBatch::from_values(prev, provenance(spec))
}

/// Dispatches on the spec's method. `count` is ignored for pools.
pub fn simulate(spec: &CascadeSpec, count: usize) -> Result<SampleBatch> {
    match spec.method {
        Method::Tree { .. } => simulate_tree(spec, count),
        Method::Pool { .. } => iterate_pool(spec),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub t: f64,
    pub value: f64,
    pub se: f64,
}

/// Moments, zero fraction and the empirical Laplace transform of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub zero_fraction: f64,
    pub zero_fraction_se: f64,
    pub laplace: Vec<LaplacePoint>,
}

// Mean and standard error of f over the values.
fn mean_and_se(values: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mut s = CompensatedSum::default();
    values.iter().for_each(|&v| s.add(f(v)));
    let mean = s.value() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut d = CompensatedSum::default();
    values.iter().for_each(|&v| {
        let e = f(v) - mean;
        d.add(e * e);
    });
    (mean, (d.value() / (n - 1.0) / n).sqrt())
}

pub fn batch_stats(batch: &SampleBatch, t_grid: &[f64]) -> Result<BatchSummary> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("batch is empty".into()));
    }
    if let Some(&t) = t_grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("Laplace grid needs finite t ≥ 0, got {t}")));
    }
    let v = batch.values();
    let n = v.len() as f64;
    let (mean, mean_se) = mean_and_se(v, |x| x);
    let (second_moment, second_moment_se) = mean_and_se(v, |x| x * x);
    let zero_fraction = batch.zero_count() as f64 / n;
    let zero_fraction_se = (zero_fraction * (1.0 - zero_fraction) / n).sqrt();
    let laplace = t_grid
        .iter()
        .map(|&t| {
            let (value, se) = mean_and_se(v, |x| (-t * x).exp());
            LaplacePoint { t, value, se }
        })
        .collect();
    Ok(BatchSummary {
        count: v.len(),
        mean,
        mean_se,
        second_moment,
        second_moment_se,
        zero_fraction,
        zero_fraction_se,
        laplace,
    })
}

/// Sidecar record written next to a persisted batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub spec_hash: String,
    pub seed: u64,
    pub count: usize,
    pub zero_count: usize,
    pub offspring: String,
    pub weights: String,
    pub method: Method,
    pub worker_count: usize,
}

impl BatchMetadata {
    pub fn new(spec: &CascadeSpec, batch: &SampleBatch) -> Self {
        BatchMetadata {
            spec_hash: batch.provenance.spec_hash.clone(),
            seed: batch.provenance.seed,
            count: batch.count(),
            zero_count: batch.zero_count(),
            offspring: spec.offspring.to_string(),
            weights: spec.weights.label(),
            method: spec.method,
            worker_count: spec.worker_count,
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serialises `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// 16-byte header (magic, little-endian u64 count) then little-endian f64s.
pub fn encode_binary(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * values.len());
    out.extend_from_slice(&BINARY_MAGIC);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_binary(path: &Path, batch: &SampleBatch) -> Result<()> {
    write_atomic(path, &encode_binary(batch.values()))
}

pub fn read_binary(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_binary(&bytes)
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 16 || bytes[..8] != BINARY_MAGIC {
        return Err(Error::Parse("not a sample batch file (bad magic)".into()));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != count.saturating_mul(8) {
        return Err(Error::Parse(format!(
            "header announces {count} values but body holds {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// One value per line under a `y` header; `{:?}` keeps full precision.
pub fn write_csv(path: &Path, batch: &SampleBatch) -> Result<()> {
    let mut buf = BufWriter::new(Vec::with_capacity(20 * batch.count()));
    writeln!(buf, "y")?;
    for v in batch.values() {
        writeln!(buf, "{v:?}")?;
    }
    let bytes = buf.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_csv(path: &Path) -> Result<Vec<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "y") {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|_| Error::Parse(format!("line {}: not a number: {line}", i + 1)))?,
        );
    }
    Ok(out)
}
