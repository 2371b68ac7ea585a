#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use synthsim_core::corpus::{write_component_archive, Corpus};
use synthsim_core::recipe::{LibraryRecipe, Recipe};
use synthsim_core::slicer::{extract_components, Extraction};
use synthsim_core::toolchain::ToolchainConfig;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn recipe_paths() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
}

/// Panics unless a C compiler is present; set HELIX_SKIP_TOOLCHAIN=1 to
/// skip toolchain tests instead.
pub fn toolchain_or_skip() -> Option<ToolchainConfig> {
    let tc = ToolchainConfig::from_env();
    match tc.check_compiler() {
        Ok(()) => Some(tc),
        Err(e) if std::env::var_os("HELIX_SKIP_TOOLCHAIN").is_some() => {
            eprintln!("skipping: {e}");
            None
        }
        Err(e) => panic!("C toolchain required: {e}"),
    }
}

pub fn build_library(name: &str, tc: &ToolchainConfig, work: &Path) -> LibraryRecipe {
    let recipe = Recipe::load(&fixtures_dir().join(format!("{name}.toml"))).unwrap();
    recipe.prepare(tc, &work.join(name)).unwrap()
}

pub fn extract_all(tc: &ToolchainConfig, work: &Path) -> Vec<Extraction> {
    recipe_paths()
        .iter()
        .map(|p| {
            let recipe = Recipe::load(p).unwrap();
            let lib = recipe.prepare(tc, &work.join("build").join(&recipe.name)).unwrap();
            extract_components(&lib, tc, 1).unwrap()
        })
        .collect()
}

/// Extracts every fixture library into `work/corpus` and loads the result.
pub fn fixture_corpus(tc: &ToolchainConfig, work: &Path) -> Corpus {
    let root = work.join("corpus");
    for ex in extract_all(tc, work) {
        write_component_archive(&ex, &root, false).unwrap();
    }
    Corpus::load(&root).unwrap()
}

/// `export -> reached functions`; `None` marks an export that cannot link.
pub fn callgraph(name: &str) -> BTreeMap<String, Option<BTreeSet<String>>> {
    let path = fixtures_dir().join("libs").join(name).join("callgraph.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Symbol names `nm` reports for a file, with their type letters.
pub fn nm(path: &Path) -> Vec<(char, String)> {
    let out = Command::new("nm").arg(path).output().expect("nm runs");
    assert!(out.status.success());
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace().rev();
            let name = parts.next()?;
            let kind = parts.next()?.chars().next()?;
            (!name.ends_with(':')).then(|| (kind, name.to_owned()))
        })
        .collect()
}
