//! Component extraction from static libraries.
//!
//! Every exported function seeds one probe program that references only that
//! export and links the library with dead-code elimination enabled. The
//! functions of the library that survive in the probe binary become the
//! component's labels. The archive is then rewritten with every global symbol
//! prefixed, so that components from different libraries link together.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::elf::{self, Archive, ElfError, SymbolBinding, SymbolType};
use crate::model::{ArchiveRef, ComponentSpec, Label, LabelSet, ModelError};
use crate::recipe::LibraryRecipe;
use crate::toolchain::{describe, run_with_timeout, ToolError, ToolchainConfig};

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("bad archive {}: {reason}", path.display())]
    BadArchive { path: PathBuf, reason: String },
    #[error("no exports in library `{0}`")]
    NoExports(String),
    #[error("`{export}` is not an export of library `{library}`")]
    UnknownExport { library: String, export: String },
    #[error("library `{0}` yielded no components")]
    NoComponents(String),
    #[error("invalid rename prefix `{0}`")]
    InvalidPrefix(String),
    #[error("rename collision: `{0}` already exists in the archive")]
    RenameCollision(String),
    #[error("toolchain unavailable: {0}")]
    Toolchain(#[from] ToolError),
    #[error("{tool} failed:\n{log}")]
    ToolFailed { tool: String, log: String },
    #[error("recipe {}: {reason}", path.display())]
    Recipe { path: PathBuf, reason: String },
    #[error("building library `{name}` failed:\n{log}")]
    RecipeBuild { name: String, log: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SliceError {
    /// Failures caused by the environment rather than by the input library.
    pub fn is_environment(&self) -> bool {
        matches!(
            self,
            SliceError::Toolchain(ToolError::Missing { .. })
                | SliceError::Model(ModelError::ToolMissing { .. })
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkippedExport {
    pub name: String,
    pub reason: String,
}

/// Exported functions of a library, sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExportList {
    pub exports: Vec<String>,
    /// Global function-like symbols that cannot seed a slice.
    pub skipped: Vec<SkippedExport>,
}

/// Symbol facts about an archive gathered in one pass.
#[derive(Clone, Debug, Default)]
pub struct ArchiveSymbols {
    /// Every defined function symbol, any binding.
    pub functions: BTreeSet<String>,
    /// Every defined global or weak symbol, any type.
    pub defined_globals: BTreeSet<String>,
    /// Every symbol name mentioned anywhere, defined or not.
    pub all_names: BTreeSet<String>,
    pub exports: ExportList,
}

fn bad_archive(path: &Path, reason: impl Into<String>) -> SliceError {
    SliceError::BadArchive {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads every member's symbol table and cross-checks the archive index.
pub fn scan_archive(path: &Path) -> Result<ArchiveSymbols, SliceError> {
    let data = std::fs::read(path)?;
    let archive = Archive::parse(&data).map_err(|e| bad_archive(path, e.to_string()))?;

    let mut out = ArchiveSymbols::default();
    let mut strong_defs: BTreeMap<String, String> = BTreeMap::new();
    let mut exports = BTreeSet::new();
    let mut skipped = BTreeMap::new();
    let mut member_globals: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();

    for member in &archive.members {
        if !elf::is_elf(member.data) {
            return Err(bad_archive(path, ElfError::NotElf(member.name.clone()).to_string()));
        }
        let symbols = elf::parse_elf_symbols(member.data)
            .map_err(|e| bad_archive(path, format!("{}: {e}", member.name)))?;
        for sym in symbols {
            if sym.name.is_empty() || matches!(sym.kind, SymbolType::Section | SymbolType::File) {
                continue;
            }
            out.all_names.insert(sym.name.clone());
            if !sym.defined {
                continue;
            }
            if sym.is_defined_function() {
                out.functions.insert(sym.name.clone());
            }
            if !sym.is_global() {
                continue;
            }
            out.defined_globals.insert(sym.name.clone());
            member_globals
                .entry(member.header_offset)
                .or_default()
                .insert(sym.name.clone());
            match sym.kind {
                SymbolType::Func => {
                    if sym.name.contains('@') {
                        skipped.insert(sym.name.clone(), "versioned symbol".to_string());
                        continue;
                    }
                    if sym.binding == SymbolBinding::Global {
                        if let Some(first) = strong_defs.insert(sym.name.clone(), member.name.clone()) {
                            return Err(bad_archive(
                                path,
                                format!(
                                    "`{}` is defined in both {first} and {} (ambiguous)",
                                    sym.name, member.name
                                ),
                            ));
                        }
                    }
                    exports.insert(sym.name.clone());
                }
                SymbolType::GnuIfunc => {
                    skipped.insert(sym.name.clone(), "indirect function".to_string());
                }
                _ => {}
            }
        }
    }

    for (name, offset) in &archive.symbol_index {
        let indexed = member_globals.get(offset).is_some_and(|g| g.contains(name));
        if !indexed {
            return Err(bad_archive(
                path,
                format!("index names `{name}` but its member does not define it"),
            ));
        }
    }

    out.exports = ExportList {
        exports: exports.into_iter().collect(),
        skipped: skipped
            .into_iter()
            .map(|(name, reason)| SkippedExport { name, reason })
            .collect(),
    };
    Ok(out)
}

/// All global, defined, function-typed symbols of the library.
pub fn enumerate_exports(lib: &LibraryRecipe) -> Result<ExportList, SliceError> {
    let scan = scan_archive(&lib.archive_path)?;
    if scan.exports.exports.is_empty() {
        return Err(SliceError::NoExports(lib.name.clone()));
    }
    Ok(scan.exports)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SliceStatus {
    Built,
    Discarded { reason: String },
}

/// Outcome of one probe build.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SliceResult {
    pub export_name: String,
    pub status: SliceStatus,
    /// Library functions present in the probe binary. Empty unless built.
    pub surviving_functions: BTreeSet<String>,
    pub binary_size: u64,
}

impl SliceResult {
    fn discarded(export: &str, reason: impl Into<String>) -> Self {
        Self {
            export_name: export.to_owned(),
            status: SliceStatus::Discarded {
                reason: reason.into(),
            },
            surviving_functions: BTreeSet::new(),
            binary_size: 0,
        }
    }

    pub fn is_built(&self) -> bool {
        self.status == SliceStatus::Built
    }
}

fn probe_source(export: &str) -> String {
    format!(
        "extern void {export}(void);\n\
         \n\
         int main(void)\n\
         {{\n    ((void (*)(void)){export})();\n    return 0;\n}}\n"
    )
}

/// Builds a program that references only `export` and reports which library
/// functions the linker kept.
pub fn probe_build(lib: &LibraryRecipe, export: &str, toolchain: &ToolchainConfig) -> Result<SliceResult, SliceError> {
    let scan = scan_archive(&lib.archive_path)?;
    if !scan.exports.exports.iter().any(|e| e == export) {
        return Err(SliceError::UnknownExport {
            library: lib.name.clone(),
            export: export.to_owned(),
        });
    }
    probe_with(lib, export, &scan.functions, toolchain)
}

fn probe_with(
    lib: &LibraryRecipe,
    export: &str,
    library_functions: &BTreeSet<String>,
    toolchain: &ToolchainConfig,
) -> Result<SliceResult, SliceError> {
    let work = tempfile::tempdir()?;
    let stub = work.path().join("probe.c");
    let binary = work.path().join("probe");
    std::fs::write(&stub, probe_source(export))?;
    let archive = std::fs::canonicalize(&lib.archive_path)?;

    let strategy = toolchain.slicing_strategy;
    let mut cmd = toolchain.compiler();
    cmd.args(strategy.compile_flags())
        .arg("-o")
        .arg(&binary)
        .arg(&stub)
        .arg(&archive)
        .args(strategy.link_flags())
        .args(&toolchain.linker_flags)
        .current_dir(work.path());
    let out = run_with_timeout(&mut cmd, toolchain.timeout())?;
    if out.timed_out() {
        return Ok(SliceResult::discarded(
            export,
            format!("timeout after {}s", toolchain.timeout_s),
        ));
    }
    if !out.success() {
        let first = out.log.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        return Ok(SliceResult::discarded(export, format!("build failed: {first}")));
    }

    let symbols = elf::read_binary_symbols(&binary).map_err(|e| bad_archive(&binary, e.to_string()))?;
    let surviving: BTreeSet<String> = symbols
        .iter()
        .filter(|s| s.is_defined_function())
        .map(|s| base_name(&s.name))
        .filter(|name| library_functions.contains(*name))
        .map(str::to_owned)
        .collect();
    if !surviving.contains(export) {
        return Ok(SliceResult::discarded(export, "seed export absent from the probe binary"));
    }
    Ok(SliceResult {
        export_name: export.to_owned(),
        status: SliceStatus::Built,
        surviving_functions: surviving,
        binary_size: std::fs::metadata(&binary)?.len(),
    })
}

/// Optimizers emit clones such as `f.isra.0` or `f.cold`; C identifiers
/// never contain a dot, so everything after the first one is a suffix.
fn base_name(symbol: &str) -> &str {
    symbol.split('.').next().unwrap_or(symbol)
}

/// `h` followed by the first 8 hex digits of the archive's SHA-256.
pub fn default_prefix(archive_bytes: &[u8]) -> String {
    let digest = hex::encode(Sha256::digest(archive_bytes));
    format!("h{}", &digest[..8])
}

fn valid_prefix(prefix: &str) -> bool {
    let mut chars = prefix.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn renamed(prefix: &str, symbol: &str) -> String {
    format!("{prefix}_{symbol}")
}

/// Writes a copy of the archive to `out` with every defined global symbol
/// `s` renamed to `<prefix>_s`. References to symbols the archive does not
/// define are left alone. Embedded LTO sections are dropped so the copy is
/// plain object code.
pub fn rename_symbols(
    lib: &LibraryRecipe,
    prefix: &str,
    toolchain: &ToolchainConfig,
    out: &Path,
) -> Result<PathBuf, SliceError> {
    if !valid_prefix(prefix) {
        return Err(SliceError::InvalidPrefix(prefix.to_owned()));
    }
    let scan = scan_archive(&lib.archive_path)?;
    let mut map = String::new();
    for sym in &scan.defined_globals {
        let new = renamed(prefix, sym);
        if scan.all_names.contains(&new) {
            return Err(SliceError::RenameCollision(new));
        }
        map.push_str(&format!("{sym} {new}\n"));
    }

    let work = tempfile::tempdir()?;
    let map_file = work.path().join("redefine.map");
    std::fs::write(&map_file, map)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut cmd = toolchain.objcopy();
    cmd.arg("-D")
        .arg(format!("--redefine-syms={}", map_file.display()))
        .arg("--remove-section=.gnu.lto_*")
        .arg("--remove-section=.gnu.debuglto_*")
        .arg(&lib.archive_path)
        .arg(out);
    let result = run_with_timeout(&mut cmd, toolchain.timeout())?;
    if !result.success() {
        return Err(SliceError::ToolFailed {
            tool: describe(&cmd),
            log: result.log,
        });
    }
    Ok(out.to_path_buf())
}

/// Everything extraction learned about one library.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub library: LibraryRecipe,
    pub prefix: String,
    pub source_ref: ArchiveRef,
    pub renamed_archive: Vec<u8>,
    pub components: Vec<ComponentSpec>,
    /// One result per export, in export-name order.
    pub slices: Vec<SliceResult>,
    pub skipped: Vec<SkippedExport>,
}

impl Extraction {
    pub fn discarded(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        let probes = self.slices.iter().filter_map(|s| match &s.status {
            SliceStatus::Discarded { reason } => Some((s.export_name.as_str(), reason.as_str())),
            SliceStatus::Built => None,
        });
        let skipped = self.skipped.iter().map(|s| (s.name.as_str(), s.reason.as_str()));
        probes.chain(skipped)
    }
}

/// Probes every export (up to `jobs` at a time), keeps the ones that built
/// and packages them as components of the renamed archive.
///
/// Exports whose slices coincide still yield one component each.
pub fn extract_components(
    lib: &LibraryRecipe,
    toolchain: &ToolchainConfig,
    jobs: usize,
) -> Result<Extraction, SliceError> {
    let scan = scan_archive(&lib.archive_path)?;
    if scan.exports.exports.is_empty() {
        return Err(SliceError::NoExports(lib.name.clone()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let slices: Vec<SliceResult> = pool.install(|| {
        scan.exports
            .exports
            .par_iter()
            .map(|export| probe_with(lib, export, &scan.functions, toolchain))
            .collect::<Result<_, _>>()
    })?;

    if !slices.iter().any(SliceResult::is_built) {
        return Err(SliceError::NoComponents(lib.name.clone()));
    }

    let source_bytes = std::fs::read(&lib.archive_path)?;
    let prefix = default_prefix(&source_bytes);
    let work = tempfile::tempdir()?;
    let renamed_path = rename_symbols(lib, &prefix, toolchain, &work.path().join("renamed.a"))?;
    let renamed_archive = std::fs::read(renamed_path)?;
    let archive_ref = ArchiveRef::from_bytes(&renamed_archive);

    let mut components = Vec::new();
    for slice in slices.iter().filter(|s| s.is_built()) {
        let labels = slice
            .surviving_functions
            .iter()
            .map(|f| Label::new(&lib.name, f))
            .collect::<Result<LabelSet, _>>()?;
        let export_name = renamed(&prefix, &slice.export_name);
        let stub = crate::model::stub_source_for(&export_name);
        components.push(ComponentSpec::new(
            format!("{}.{}", lib.name, slice.export_name),
            &lib.name,
            &slice.export_name,
            export_name,
            labels,
            stub,
            archive_ref.clone(),
        )?);
    }

    Ok(Extraction {
        library: lib.clone(),
        prefix,
        source_ref: ArchiveRef::from_bytes(&source_bytes),
        renamed_archive,
        components,
        slices,
        skipped: scan.exports.skipped,
    })
}
