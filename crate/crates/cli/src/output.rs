//! Artifact writing: JSON envelopes, CSV provenance headers, config hashes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA: u32 = 1;

/// First 128 bits of SHA-256 over the canonical JSON of the resolved settings.
/// Invocations share a hash exactly when their command, settings and seed agree.
pub fn config_hash<T: Serialize>(settings: &T) -> String {
    let bytes = serde_json::to_vec(settings).expect("settings serialize");
    Sha256::digest(&bytes)[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Where an artifact goes: a file, or stdout for `-`.
#[derive(Debug, Clone)]
pub enum Dest {
    Stdout,
    File(PathBuf),
}

impl Dest {
    /// `explicit` if given, otherwise `default_name` inside `out_dir`.
    pub fn resolve(explicit: Option<&Path>, out_dir: &Path, default_name: &str) -> Self {
        match explicit {
            Some(p) if p == Path::new("-") => Dest::Stdout,
            Some(p) => Dest::File(p.to_path_buf()),
            None => Dest::File(out_dir.join(default_name)),
        }
    }

    pub fn open(&self) -> Result<Box<dyn Write>, CliError> {
        match self {
            Dest::Stdout => Ok(Box::new(std::io::stdout().lock())),
            Dest::File(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                }
                let f = File::create(p).map_err(|e| CliError::io(p, e))?;
                Ok(Box::new(BufWriter::new(f)))
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Dest::Stdout => "stdout".into(),
            Dest::File(p) => p.display().to_string(),
        }
    }
}

/// Provenance shared by every artifact of one invocation.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &'static str, settings: &T, seed: Option<u64>) -> Self {
        Self { command, config_hash: config_hash(&(command, settings, seed)), seed }
    }

    /// Comment line placed above CSV headers; readers skip `#` lines.
    pub fn csv_comment(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!("# volredf schema={SCHEMA} command={} config_hash={} seed={seed}\n", self.command, self.config_hash)
    }
}

#[derive(Serialize)]
struct Metadata {
    created: String,
    version: &'static str,
}

#[derive(Serialize)]
struct Envelope<'a, S: Serialize, R: Serialize> {
    schema: u32,
    command: &'a str,
    config_hash: &'a str,
    seed: Option<u64>,
    config: &'a S,
    result: &'a R,
    /// Everything that varies between identical runs lives here.
    metadata: Metadata,
}

pub fn write_json<S: Serialize, R: Serialize>(dest: &Dest, prov: &Provenance, settings: &S, result: &R) -> Result<(), CliError> {
    let env = Envelope {
        schema: SCHEMA,
        command: prov.command,
        config_hash: &prov.config_hash,
        seed: prov.seed,
        config: settings,
        result,
        metadata: Metadata { created: chrono::Utc::now().to_rfc3339(), version: env!("CARGO_PKG_VERSION") },
    };
    let mut w = dest.open()?;
    serde_json::to_writer_pretty(&mut w, &env).map_err(|e| CliError::Config(format!("serialize: {e}")))?;
    writeln!(w).map_err(|e| CliError::io(Path::new(&dest.describe()), e))?;
    w.flush().map_err(|e| CliError::io(Path::new(&dest.describe()), e))?;
    Ok(())
}

/// Writes the provenance comment, then lets `body` fill in the CSV.
pub fn write_csv<F>(dest: &Dest, prov: &Provenance, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let mut w = dest.open()?;
    let name = dest.describe();
    w.write_all(prov.csv_comment().as_bytes()).map_err(|e| CliError::io(Path::new(&name), e))?;
    body(&mut w)?;
    w.flush().map_err(|e| CliError::io(Path::new(&name), e))?;
    Ok(())
}

/// A CSV table from a header and rows of already formatted fields.
pub fn write_table(dest: &Dest, prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    write_csv(dest, prov, |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(header).map_err(volredf::Error::from)?;
        for r in rows {
            wr.write_record(r).map_err(volredf::Error::from)?;
        }
        wr.flush().map_err(volredf::Error::from)?;
        Ok(())
    })
}

/// Fixed formatting so that reruns are byte-identical.
pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}
