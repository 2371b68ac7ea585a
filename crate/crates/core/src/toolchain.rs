//! External compiler, archiver and object-copy invocations.

use std::ffi::OsStr;
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

pub const CC_ENV: &str = "HELIX_CC";
pub const OBJCOPY_ENV: &str = "HELIX_OBJCOPY";
pub const DEFAULT_TIMEOUT_S: u64 = 60;

/// How dead code is removed from probe builds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicingStrategy {
    /// Per-function sections plus linker section garbage collection.
    #[default]
    GcSections,
    /// Link-time optimization.
    Lto,
}

impl SlicingStrategy {
    pub fn compile_flags(self) -> &'static [&'static str] {
        match self {
            SlicingStrategy::GcSections => &["-ffunction-sections", "-fdata-sections"],
            SlicingStrategy::Lto => &["-flto", "-O2"],
        }
    }

    pub fn link_flags(self) -> &'static [&'static str] {
        match self {
            SlicingStrategy::GcSections => &["-Wl,--gc-sections"],
            SlicingStrategy::Lto => &["-flto", "-O2"],
        }
    }

    /// Flags for compiling library sources that will later be sliced. LTO
    /// objects keep regular code next to the IR so renaming and non-LTO
    /// links still work.
    pub fn library_cflags(self) -> Vec<&'static str> {
        let mut flags = self.compile_flags().to_vec();
        if self == SlicingStrategy::Lto {
            flags.push("-ffat-lto-objects");
        }
        flags
    }
}

impl std::str::FromStr for SlicingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gc_sections" | "gc-sections" => Ok(SlicingStrategy::GcSections),
            "lto" => Ok(SlicingStrategy::Lto),
            other => Err(format!("unknown slicing strategy `{other}` (gc-sections, lto)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolchainConfig {
    pub compiler_cmd: String,
    pub objcopy_cmd: String,
    pub ar_cmd: String,
    pub linker_flags: Vec<String>,
    pub slicing_strategy: SlicingStrategy,
    pub timeout_s: u64,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        Self {
            compiler_cmd: "cc".into(),
            objcopy_cmd: "objcopy".into(),
            ar_cmd: "ar".into(),
            linker_flags: Vec::new(),
            slicing_strategy: SlicingStrategy::default(),
            timeout_s: DEFAULT_TIMEOUT_S,
        }
    }
}

impl ToolchainConfig {
    /// Defaults with `HELIX_CC` / `HELIX_OBJCOPY` overrides applied.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(cc) = std::env::var(CC_ENV) {
            if !cc.trim().is_empty() {
                cfg.compiler_cmd = cc;
            }
        }
        if let Ok(objcopy) = std::env::var(OBJCOPY_ENV) {
            if !objcopy.trim().is_empty() {
                cfg.objcopy_cmd = objcopy;
            }
        }
        cfg
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_s.max(1))
    }

    pub fn compiler(&self) -> Command {
        command_from(&self.compiler_cmd)
    }

    pub fn objcopy(&self) -> Command {
        command_from(&self.objcopy_cmd)
    }

    /// Runs `<compiler> --version`; fails if the command cannot be spawned
    /// or exits unsuccessfully.
    pub fn check_compiler(&self) -> Result<(), ToolError> {
        let mut cmd = self.compiler();
        cmd.arg("--version");
        let out = run_with_timeout(&mut cmd, Duration::from_secs(30))?;
        if out.success() {
            Ok(())
        } else {
            Err(ToolError::Missing {
                command: self.compiler_cmd.clone(),
                source: io::Error::other(out.log),
            })
        }
    }

    /// Environment for recipe build commands that produce library archives.
    pub fn library_env(&self) -> Vec<(&'static str, String)> {
        vec![
            ("CC", self.compiler_cmd.clone()),
            ("AR", self.ar_cmd.clone()),
            ("CFLAGS", self.slicing_strategy.library_cflags().join(" ")),
        ]
    }

    /// Environment for blueprint builds of samples.
    ///
    /// Renamed archives hold plain object code only, so samples link with
    /// section garbage collection whatever the slicing strategy.
    pub fn sample_env(&self) -> Vec<(&'static str, String)> {
        let mut ldflags = vec!["-Wl,--gc-sections".to_string()];
        ldflags.extend(self.linker_flags.iter().cloned());
        vec![
            ("CC", self.compiler_cmd.clone()),
            ("CFLAGS", String::new()),
            ("LDFLAGS", ldflags.join(" ")),
        ]
    }
}

fn command_from(spec: &str) -> Command {
    let mut parts = spec.split_whitespace();
    let mut cmd = Command::new(parts.next().unwrap_or(spec));
    cmd.args(parts);
    cmd
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("tool `{command}` is not available: {source}")]
    Missing {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug)]
pub struct RunOutput {
    /// `None` when the process was killed after the timeout.
    pub status: Option<ExitStatus>,
    /// Interleaved stdout and stderr.
    pub log: String,
}

impl RunOutput {
    pub fn success(&self) -> bool {
        self.status.is_some_and(|s| s.success())
    }

    pub fn timed_out(&self) -> bool {
        self.status.is_none()
    }
}

/// Runs `cmd` to completion or until `timeout`, capturing its output.
pub fn run_with_timeout(cmd: &mut Command, timeout: Duration) -> Result<RunOutput, ToolError> {
    let mut log = tempfile::tempfile()?;
    cmd.stdin(Stdio::null())
        .stdout(Stdio::from(log.try_clone()?))
        .stderr(Stdio::from(log.try_clone()?));
    let program = cmd.get_program().to_string_lossy().into_owned();
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => ToolError::Missing {
            command: program.clone(),
            source: e,
        },
        _ => ToolError::Io(e),
    })?;
    let status = match child.wait_timeout(timeout)? {
        Some(status) => Some(status),
        None => {
            child.kill().ok();
            child.wait().ok();
            None
        }
    };
    Ok(RunOutput {
        status,
        log: read_log(&mut log)?,
    })
}

fn read_log(file: &mut File) -> io::Result<String> {
    file.seek(SeekFrom::Start(0))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Renders a command line for logs.
pub fn describe(cmd: &Command) -> String {
    std::iter::once(cmd.get_program())
        .chain(cmd.get_args())
        .map(OsStr::to_string_lossy)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Copies a directory tree.
pub(crate) fn copy_dir(from: &Path, to: &Path) -> io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}
