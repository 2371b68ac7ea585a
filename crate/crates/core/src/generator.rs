//! Library-stratified dataset generation.
//!
//! Samples come from a selection chain. The first candidate takes one
//! component from each of `n` distinct random libraries; every later
//! candidate re-draws between zero and `floor(n * p)` positions of its
//! predecessor. Candidates that fail to build are dropped but the chain still
//! advances from them, so the sequence of candidates depends only on the
//! seed, the corpus and `(n, p)`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{corpus_fingerprint, Corpus};
use crate::model::{
    build_project, ground_truth_similarity, render_blueprint, Blueprint, BuildStatus, ComponentSpec, LabelSet,
    ModelError, SampleRecord,
};
use crate::toolchain::{ToolError, ToolchainConfig};

pub const RNG_ALGORITHM: &str = "chacha8";
pub const MANIFEST_FILE: &str = "manifest.json";

// Keeps floor(n * p) exact when n * p lands a rounding error below an integer.
const FLOOR_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("corpus has {libraries} libraries but n = {n}")]
    CorpusTooSmall { n: usize, libraries: usize },
    #[error("library #{0} has no components")]
    EmptyLibrary(usize),
    #[error("gave up after {attempts} attempts with {built} of {wanted} samples built (partial manifest at {})", manifest.display())]
    Exhausted {
        attempts: usize,
        built: usize,
        wanted: usize,
        manifest: PathBuf,
    },
    #[error("n must satisfy 0 <= n <= {libraries}, got {n}")]
    Capacity { n: u64, libraries: u64 },
    #[error("manifest {}: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GenerateError {
    pub fn is_environment(&self) -> bool {
        matches!(
            self,
            GenerateError::Tool(ToolError::Missing { .. }) | GenerateError::Model(ModelError::ToolMissing { .. })
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub p: f64,
    pub count: usize,
    pub seed: u64,
    pub max_attempts: usize,
    pub rng: String,
}

impl GeneratorConfig {
    /// A config with the default attempt budget of four times `count`.
    pub fn new(n: usize, p: f64, count: usize, seed: u64) -> Result<Self, GenerateError> {
        let config = Self {
            n,
            p,
            count,
            seed,
            max_attempts: count.saturating_mul(4),
            rng: RNG_ALGORITHM.to_owned(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_max_attempts(mut self, max_attempts: usize) -> Result<Self, GenerateError> {
        self.max_attempts = max_attempts;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::Config(m.to_owned()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad("p must lie in [0, 1]");
        }
        if self.count == 0 {
            return bad("count must be positive");
        }
        if self.max_attempts < self.count {
            return bad("max_attempts must be at least count");
        }
        if self.rng != RNG_ALGORITHM {
            return Err(GenerateError::Config(format!("unsupported rng `{}`", self.rng)));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// A component chosen by position: library index, then component index
/// within that library.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pick {
    pub library: usize,
    pub component: usize,
}

fn check_sizes(library_sizes: &[usize], n: usize) -> Result<(), GenerateError> {
    if n == 0 {
        return Err(GenerateError::Config("n must be positive".into()));
    }
    if n > library_sizes.len() {
        return Err(GenerateError::CorpusTooSmall {
            n,
            libraries: library_sizes.len(),
        });
    }
    if let Some(i) = library_sizes.iter().position(|&s| s == 0) {
        return Err(GenerateError::EmptyLibrary(i));
    }
    Ok(())
}

/// `n` distinct libraries chosen uniformly, one uniform component from each.
pub fn select_initial<R: Rng + ?Sized>(
    library_sizes: &[usize],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Pick>, GenerateError> {
    check_sizes(library_sizes, n)?;
    let libraries = index::sample(rng, library_sizes.len(), n);
    Ok(libraries
        .iter()
        .map(|library| Pick {
            library,
            component: rng.random_range(0..library_sizes[library]),
        })
        .collect())
}

/// Uniform draw from `0..=floor(n * p)`.
pub fn replacement_count<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> usize {
    let max = ((n as f64) * p + FLOOR_EPSILON).floor() as usize;
    rng.random_range(0..=max.min(n))
}

/// Re-draws a random number of positions of `current`. Each replaced
/// position gets a library not used by any other position (possibly the one
/// it had) and a uniform component of it.
pub fn mutate_selection<R: Rng + ?Sized>(
    current: &[Pick],
    library_sizes: &[usize],
    p: f64,
    rng: &mut R,
) -> Result<Vec<Pick>, GenerateError> {
    check_sizes(library_sizes, current.len())?;
    let mut next = current.to_vec();
    let r = replacement_count(current.len(), p, rng);
    if r == 0 {
        return Ok(next);
    }
    for position in index::sample(rng, current.len(), r) {
        let taken: HashSet<usize> = next
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != position)
            .map(|(_, pick)| pick.library)
            .collect();
        let free: Vec<usize> = (0..library_sizes.len()).filter(|l| !taken.contains(l)).collect();
        let library = free[rng.random_range(0..free.len())];
        next[position] = Pick {
            library,
            component: rng.random_range(0..library_sizes[library]),
        };
    }
    Ok(next)
}

/// The candidate sequence for a config, without building anything.
pub struct SelectionChain<'a> {
    library_sizes: &'a [usize],
    p: f64,
    rng: ChaCha8Rng,
    current: Option<Vec<Pick>>,
    n: usize,
}

impl<'a> SelectionChain<'a> {
    pub fn new(library_sizes: &'a [usize], config: &GeneratorConfig) -> Result<Self, GenerateError> {
        config.validate()?;
        check_sizes(library_sizes, config.n)?;
        Ok(Self {
            library_sizes,
            p: config.p,
            rng: config.rng(),
            current: None,
            n: config.n,
        })
    }

    pub fn next_candidate(&mut self) -> Vec<Pick> {
        let next = match &self.current {
            None => select_initial(self.library_sizes, self.n, &mut self.rng),
            Some(cur) => mutate_selection(cur, self.library_sizes, self.p, &mut self.rng),
        }
        .expect("sizes checked at construction");
        self.current = Some(next.clone());
        next
    }
}

/// Paths are relative to the dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: String,
    pub components: Vec<String>,
    pub labels: LabelSet,
    pub binary: String,
    pub build_log: String,
}

impl ManifestSample {
    pub fn to_record(&self, dataset_dir: &Path) -> SampleRecord {
        SampleRecord {
            id: self.id.clone(),
            component_ids: self.components.clone(),
            labels: self.labels.clone(),
            artifact_path: dataset_dir.join(&self.binary),
            build_status: BuildStatus::Ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: GeneratorConfig,
    pub corpus_fingerprint: String,
    pub samples: Vec<ManifestSample>,
    pub discarded_count: usize,
}

impl DatasetManifest {
    pub fn load(dataset_dir: &Path) -> Result<Self, GenerateError> {
        let path = dataset_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| GenerateError::Manifest {
            path,
            reason: e.to_string(),
        })
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("manifest serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, dataset_dir: &Path) -> Result<PathBuf, GenerateError> {
        fs::create_dir_all(dataset_dir)?;
        let path = dataset_dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_json())?;
        Ok(path)
    }
}

/// How candidates are turned into binaries.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub blueprint: Blueprint,
    pub toolchain: ToolchainConfig,
    /// Concurrent builds per wave.
    pub jobs: usize,
}

impl BuildOptions {
    pub fn new(blueprint: Blueprint, toolchain: ToolchainConfig) -> Self {
        Self {
            blueprint,
            toolchain,
            jobs: 1,
        }
    }

    fn timeout(&self) -> Duration {
        self.toolchain.timeout()
    }
}

struct Built {
    artifact: Option<PathBuf>,
    log: String,
}

fn build_candidate(
    corpus: &Corpus,
    components: &[&ComponentSpec],
    opts: &BuildOptions,
    work: &Path,
) -> Result<Built, GenerateError> {
    let project = render_blueprint(&opts.blueprint, components, corpus, work)?;
    let outcome = build_project(&opts.blueprint, &project, &opts.toolchain, opts.timeout())?;
    Ok(Built {
        artifact: outcome.artifact,
        log: outcome.log,
    })
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:05}")
}

/// Walks the selection chain until `config.count` candidates have built,
/// writing `bin/`, `logs/` and the manifest under `out_dir`.
///
/// Builds run in waves of `opts.jobs` consecutive candidates; results are
/// taken in chain order, so the output does not depend on scheduling.
pub fn generate(
    corpus: &Corpus,
    config: &GeneratorConfig,
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<DatasetManifest, GenerateError> {
    config.validate()?;
    opts.toolchain.check_compiler()?;
    let sizes = corpus.library_sizes();
    let mut chain = SelectionChain::new(&sizes, config)?;

    let bin = out_dir.join("bin");
    let logs = out_dir.join("logs");
    let work = out_dir.join(".work");
    fs::create_dir_all(&bin)?;
    fs::create_dir_all(&logs)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;

    let mut manifest = DatasetManifest {
        config: config.clone(),
        corpus_fingerprint: corpus_fingerprint(corpus),
        samples: Vec::with_capacity(config.count),
        discarded_count: 0,
    };
    let mut attempts = 0;

    while manifest.samples.len() < config.count && attempts < config.max_attempts {
        let wave_len = opts
            .jobs
            .max(1)
            .min(config.count - manifest.samples.len())
            .min(config.max_attempts - attempts);
        let wave: Vec<(usize, Vec<Pick>)> = (0..wave_len).map(|i| (attempts + i, chain.next_candidate())).collect();
        let results: Vec<Result<Built, GenerateError>> = pool.install(|| {
            wave.par_iter()
                .map(|(idx, picks)| {
                    let components: Vec<&ComponentSpec> =
                        picks.iter().map(|p| corpus.component(p.library, p.component)).collect();
                    build_candidate(corpus, &components, opts, &work.join(format!("c{idx}")))
                })
                .collect()
        });
        attempts += wave_len;

        for ((idx, picks), result) in wave.iter().zip(results) {
            let built = result?;
            let components: Vec<&ComponentSpec> = picks
                .iter()
                .map(|p| corpus.component(p.library, p.component))
                .collect();
            match built.artifact {
                Some(artifact) if manifest.samples.len() < config.count => {
                    let id = sample_id(manifest.samples.len());
                    let record = SampleRecord::planned(&id, &components)?;
                    let binary = format!("bin/{id}");
                    let build_log = format!("logs/{id}.txt");
                    fs::copy(&artifact, out_dir.join(&binary))?;
                    fs::write(out_dir.join(&build_log), &built.log)?;
                    manifest.samples.push(ManifestSample {
                        id,
                        components: record.component_ids,
                        labels: record.labels,
                        binary,
                        build_log,
                    });
                }
                Some(_) => {}
                None => {
                    log::debug!("candidate {idx} failed to build");
                    fs::write(logs.join(format!("discarded-c{idx}.txt")), &built.log)?;
                    manifest.discarded_count += 1;
                }
            }
            fs::remove_dir_all(work.join(format!("c{idx}"))).ok();
        }
    }
    fs::remove_dir_all(&work).ok();

    let path = manifest.save(out_dir)?;
    if manifest.samples.len() < config.count {
        return Err(GenerateError::Exhausted {
            attempts,
            built: manifest.samples.len(),
            wanted: config.count,
            manifest: path,
        });
    }
    Ok(manifest)
}

/// log10 of the binomial coefficient C(library_count, n).
pub fn capacity_lower_bound(library_count: u64, n: u64) -> Result<f64, GenerateError> {
    use statrs::function::gamma::ln_gamma;
    if n > library_count {
        return Err(GenerateError::Capacity {
            n,
            libraries: library_count,
        });
    }
    if n == 0 || n == library_count {
        return Ok(0.0);
    }
    let (l, k) = (library_count as f64, n as f64);
    let ln = ln_gamma(l + 1.0) - ln_gamma(k + 1.0) - ln_gamma(l - k + 1.0);
    Ok(ln / std::f64::consts::LN_10)
}

/// Every unordered pair of samples with its ground-truth similarity, ids
/// ordered within and across pairs.
pub fn ground_truth_matrix(manifest: &DatasetManifest) -> Result<Vec<(String, String, f64)>, ModelError> {
    let mut samples: Vec<&ManifestSample> = manifest.samples.iter().collect();
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let mut pairs = Vec::with_capacity(samples.len() * samples.len().saturating_sub(1) / 2);
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            pairs.push((a.id.clone(), b.id.clone(), ground_truth_similarity(&a.labels, &b.labels)?));
        }
    }
    Ok(pairs)
}
