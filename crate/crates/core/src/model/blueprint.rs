use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use serde::Deserialize;

use super::{ArchiveRef, BuildStatus, ComponentSpec, ModelError};
use crate::toolchain::{describe, run_with_timeout, ToolError, ToolchainConfig};

const STUBS: &str = "{{stubs}}";
const CALLS: &str = "{{calls}}";
const ARCHIVES: &str = "{{archives}}";

const C_ENTRY: &str = "\
/* Generated sample entry point. */
{{stubs}}

int main(void)
{
{{calls}}
    return 0;
}
";

const SH_BUILD: &str = "\
#!/bin/sh
set -e
${CC:-cc} $CFLAGS -o sample main.c {{archives}} $LDFLAGS
";

const CMAKE_BUILD: &str = "\
cmake_minimum_required(VERSION 3.10)
project(sample C)
add_executable(sample main.c)
target_link_libraries(sample
{{archives}})
";

/// Project layout template that turns a component list into a program.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct Blueprint {
    pub id: String,
    pub entry_file: String,
    #[serde(skip)]
    pub entry_template: String,
    pub build_file: String,
    #[serde(skip)]
    pub build_template: String,
    /// Argument vector run inside the rendered project.
    pub build_command: Vec<String>,
    /// Path of the built program relative to the project root.
    pub artifact: String,
}

impl Blueprint {
    pub const BUILTIN: [&'static str; 2] = ["cc-c", "cmake-c"];

    pub fn builtin(id: &str) -> Option<Self> {
        match id {
            "cc-c" => Some(Self {
                id: id.into(),
                entry_file: "main.c".into(),
                entry_template: C_ENTRY.into(),
                build_file: "build.sh".into(),
                build_template: SH_BUILD.into(),
                build_command: vec!["sh".into(), "build.sh".into()],
                artifact: "sample".into(),
            }),
            "cmake-c" => Some(Self {
                id: id.into(),
                entry_file: "main.c".into(),
                entry_template: C_ENTRY.into(),
                build_file: "CMakeLists.txt".into(),
                build_template: CMAKE_BUILD.into(),
                build_command: vec![
                    "sh".into(),
                    "-c".into(),
                    "cmake -S . -B build && cmake --build build".into(),
                ],
                artifact: "build/sample".into(),
            }),
            _ => None,
        }
    }

    /// Loads `blueprint.toml` plus the two template files it names from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(dir.join("blueprint.toml"))?;
        let mut bp: Blueprint = toml::from_str(&text).map_err(|e| {
            ModelError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        bp.entry_template = fs::read_to_string(dir.join(format!("{}.in", bp.entry_file)))?;
        bp.build_template = fs::read_to_string(dir.join(format!("{}.in", bp.build_file)))?;
        bp.validate()?;
        Ok(bp)
    }

    fn validate(&self) -> Result<(), ModelError> {
        for (template, marker) in [
            (&self.entry_template, STUBS),
            (&self.entry_template, CALLS),
            (&self.build_template, ARCHIVES),
        ] {
            if !template.contains(marker) {
                return Err(ModelError::BadBlueprint(self.id.clone(), marker));
            }
        }
        if self.build_command.is_empty() {
            return Err(ModelError::BadBlueprint(self.id.clone(), "build_command"));
        }
        Ok(())
    }

    fn archive_directive(&self, rel: &str) -> String {
        if self.build_file == "CMakeLists.txt" {
            format!("    ${{CMAKE_CURRENT_SOURCE_DIR}}/{rel}\n")
        } else {
            format!("{rel} ")
        }
    }
}

/// Resolves content-addressed archive references to files.
pub trait ArchiveSource {
    fn archive_path(&self, reference: &ArchiveRef) -> Option<PathBuf>;
}

impl ArchiveSource for BTreeMap<ArchiveRef, PathBuf> {
    fn archive_path(&self, reference: &ArchiveRef) -> Option<PathBuf> {
        self.get(reference).cloned()
    }
}

/// A rendered, not yet built, project.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectDir {
    pub root: PathBuf,
    pub entry: PathBuf,
    pub build_script: PathBuf,
    pub stubs: Vec<PathBuf>,
    pub archives: Vec<PathBuf>,
}

/// Writes a buildable project for `components` into `dest`.
///
/// The entry point includes each component's stub and calls it in list
/// order; the build script links one archive per component.
pub fn render_blueprint(
    bp: &Blueprint,
    components: &[&ComponentSpec],
    archives: &dyn ArchiveSource,
    dest: &Path,
) -> Result<ProjectDir, ModelError> {
    bp.validate()?;
    if components.is_empty() {
        return Err(ModelError::NoComponents);
    }
    let mut seen = HashSet::new();
    for c in components {
        if !seen.insert(c.id()) {
            return Err(ModelError::DuplicateComponent(c.id().to_owned()));
        }
    }

    fs::create_dir_all(dest.join("stubs"))?;
    fs::create_dir_all(dest.join("archives"))?;

    let mut includes = String::new();
    let mut calls = String::new();
    let mut directives = String::new();
    let mut stubs = Vec::with_capacity(components.len());
    let mut archive_files = Vec::with_capacity(components.len());

    for c in components {
        let stub_rel = format!("stubs/{}.stub.c", c.id());
        fs::write(dest.join(&stub_rel), c.stub_source())?;
        stubs.push(dest.join(&stub_rel));
        includes.push_str(&format!("#include \"{stub_rel}\"\n"));
        calls.push_str(&format!("    {}();\n", c.stub_symbol()));

        let missing = || ModelError::MissingArchive {
            component: c.id().to_owned(),
            reference: c.archive_ref().to_string(),
        };
        let src = archives.archive_path(c.archive_ref()).ok_or_else(missing)?;
        let bytes = fs::read(&src).map_err(|_| missing())?;
        if ArchiveRef::from_bytes(&bytes) != *c.archive_ref() {
            return Err(missing());
        }
        let archive_rel = format!("archives/lib{}.a", c.library_id());
        let target = dest.join(&archive_rel);
        if !archive_files.contains(&target) {
            fs::write(&target, &bytes)?;
        }
        archive_files.push(target);
        directives.push_str(&bp.archive_directive(&archive_rel));
    }

    let entry_src = bp
        .entry_template
        .replace(STUBS, includes.trim_end())
        .replace(CALLS, calls.trim_end_matches('\n'));
    let build_src = bp.build_template.replace(ARCHIVES, directives.trim_end_matches(' '));
    let entry = dest.join(&bp.entry_file);
    let build_script = dest.join(&bp.build_file);
    fs::write(&entry, entry_src)?;
    fs::write(&build_script, build_src)?;

    Ok(ProjectDir {
        root: dest.to_path_buf(),
        entry,
        build_script,
        stubs,
        archives: archive_files,
    })
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub status: BuildStatus,
    pub artifact: Option<PathBuf>,
    pub log: String,
}

/// Runs the blueprint's build command inside a rendered project.
///
/// Compiler and flags come from `toolchain` via `CC`, `CFLAGS` and
/// `LDFLAGS`. A missing build tool is an error; a failing build is an
/// outcome.
pub fn build_project(
    bp: &Blueprint,
    project: &ProjectDir,
    toolchain: &ToolchainConfig,
    timeout: Duration,
) -> Result<BuildOutcome, ModelError> {
    let mut cmd = Command::new(&bp.build_command[0]);
    cmd.args(&bp.build_command[1..]).current_dir(&project.root);
    for (key, value) in toolchain.sample_env() {
        cmd.env(key, value);
    }
    let header = format!("$ {}\n", describe(&cmd));
    let out = run_with_timeout(&mut cmd, timeout).map_err(|e| match e {
        ToolError::Missing { command, source } => ModelError::ToolMissing { command, source },
        ToolError::Io(e) => ModelError::Io(e),
    })?;
    let mut log = header + &out.log;
    if out.timed_out() {
        log.push_str(&format!("\nbuild timed out after {}s\n", timeout.as_secs()));
    }
    let artifact = project.root.join(&bp.artifact);
    let built = out.success() && fs::metadata(&artifact).is_ok_and(|m| m.len() > 0);
    Ok(BuildOutcome {
        status: if built { BuildStatus::Ok } else { BuildStatus::Failed },
        artifact: built.then_some(artifact),
        log,
    })
}
