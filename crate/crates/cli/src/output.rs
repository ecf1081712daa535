use std::fs;
use std::path::{Path, PathBuf};

use cspr::io::{write_atomic, FileBlob};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;
use crate::{Format, GlobalArgs};

pub const MANIFEST_NAME: &str = "run-manifest.json";

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    format: Format,
    plot_data: bool,
    inputs: &'a [PathBuf],
    config: &'a T,
    outputs: Vec<&'a str>,
}

pub fn with_path(path: &Path, e: std::io::Error) -> CliError {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}

pub fn json_blob<T: Serialize>(name: &str, value: &T) -> Result<FileBlob, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(cspr::error::Error::from)?;
    bytes.push(b'\n');
    Ok(FileBlob::new(name, bytes))
}

/// Reads a config file into `T`, or returns the defaults when none is given.
/// Unknown keys are usage errors; an unreadable file is an input error.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read(path).map_err(|e| with_path(path, e))?;
    serde_json::from_slice(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Writes every output plus the run manifest under `--out-dir`.
///
/// Nothing is written until all outputs exist in memory, and no output may
/// land on one of the inputs.
pub fn commit<T: Serialize>(
    global: &GlobalArgs,
    command: &str,
    inputs: &[PathBuf],
    config: &T,
    mut blobs: Vec<FileBlob>,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        format: global.format,
        plot_data: global.plot_data,
        inputs,
        config,
        outputs: blobs.iter().map(|b| b.name.as_str()).collect(),
    };
    let manifest = json_blob(MANIFEST_NAME, &manifest)?;
    blobs.push(manifest);

    let dir = &global.out_dir;
    fs::create_dir_all(dir)?;
    // payloads sit next to their manifests as `<stem>.f64`
    let protected: Vec<PathBuf> = inputs
        .iter()
        .flat_map(|p| [p.clone(), p.with_extension("f64")])
        .filter_map(|p| fs::canonicalize(p).ok())
        .collect();
    for blob in &blobs {
        let target = dir.join(&blob.name);
        if let Ok(existing) = fs::canonicalize(&target) {
            if protected.contains(&existing) {
                return Err(CliError::Usage(format!(
                    "output {} would overwrite an input file",
                    target.display()
                )));
            }
        }
    }
    for blob in &blobs {
        write_atomic(&dir.join(&blob.name), &blob.bytes)?;
        log::info!("wrote {}", dir.join(&blob.name).display());
    }
    Ok(())
}
