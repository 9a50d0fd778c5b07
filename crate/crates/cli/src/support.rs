use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use govkit::certificates::{from_pem_many, Certificate};
use govkit::crypto::{self, KeyPair, PublicKey};

/// Usage and I/O problems. Both exit with status 2.
#[derive(Debug)]
pub struct CliError(pub String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

pub type CliResult = Result<Outcome, CliError>;

pub fn fail<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError(msg.into()))
}

/// What a command produced: a JSON payload and whether it amounts to a
/// denial or detection.
pub struct Outcome {
    pub payload: Value,
    pub flagged: bool,
    /// Replaces the generic rendering when not in JSON mode.
    pub text: Option<String>,
}

impl Outcome {
    pub fn ok(payload: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            payload: serde_json::to_value(payload)?,
            flagged: false,
            text: None,
        })
    }

    pub fn flagged(mut self, flagged: bool) -> Self {
        self.flagged = flagged;
        self
    }

    pub fn text(mut self, text: String) -> Self {
        self.text = Some(text);
        self
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.flagged)
    }
}

/// `key: value` lines for humans; nested keys are dotted.
pub fn render(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, x, out);
                }
            }
            Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
                let items: Vec<String> = a.iter().map(scalar).collect();
                out.push(format!("{prefix}: [{}]", items.join(", ")));
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}[{i}]"), x, out);
                }
            }
            _ => out.push(if prefix.is_empty() { scalar(v) } else { format!("{prefix}: {}", scalar(v)) }),
        }
    }
    fn scalar(v: &Value) -> String {
        match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
    let mut out = Vec::new();
    walk("", v, &mut out);
    out.join("\n")
}

pub fn now_ms(flag: Option<u64>) -> u64 {
    flag.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

/// `$GOVKIT_HOME`, else `~/.govkit`.
pub fn home() -> PathBuf {
    if let Some(h) = std::env::var_os("GOVKIT_HOME") {
        return PathBuf::from(h);
    }
    let base = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    base.join(".govkit")
}

pub fn or_home(path: Option<PathBuf>, name: &str) -> PathBuf {
    path.unwrap_or_else(|| home().join(name))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, data: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, data).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

pub fn read_certs(paths: &[PathBuf]) -> Result<Vec<Certificate>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let certs = from_pem_many(&read_text(p)?).map_err(|e| CliError(format!("{}: {e}", p.display())))?;
        if certs.is_empty() {
            return fail(format!("{}: no certificates", p.display()));
        }
        out.extend(certs);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
pub struct KeyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub public_key: PublicKey,
    /// 32-byte Ed25519 seed, hex.
    pub secret_key: String,
}

impl KeyFile {
    pub fn new(id: Option<String>, kp: &KeyPair) -> Self {
        Self {
            id,
            public_key: kp.public_key(),
            secret_key: hex::encode(kp.secret_bytes()),
        }
    }
}

pub fn read_key(path: &Path) -> Result<KeyPair, CliError> {
    let kf: KeyFile = read_json(path)?;
    let seed = hex::decode(kf.secret_key.trim()).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    let kp = crypto::generate_keypair(&seed).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    if kp.public_key() != kf.public_key {
        return fail(format!("{}: public key does not match secret key", path.display()));
    }
    Ok(kp)
}

/// Exclusive advisory lock on a sidecar file, held for the guard's
/// lifetime.
pub struct LedgerLock(#[allow(dead_code)] File);

pub fn lock_ledger(ledger: &Path) -> Result<LedgerLock, CliError> {
    let mut name = ledger.as_os_str().to_owned();
    name.push(".lock");
    let lock_path = PathBuf::from(name);
    if let Some(dir) = lock_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(|e| CliError(format!("{}: {e}", lock_path.display())))?;
    f.lock()
        .map_err(|e| CliError(format!("{}: {e}", lock_path.display())))?;
    Ok(LedgerLock(f))
}
