//! Advisory content-addressed cache for expansion results.
//!
//! Keys digest the description file bytes together with every input that
//! shapes the answer, so edits or version bumps miss cleanly. All I/O errors
//! are swallowed: the cache can only speed things up, never change them.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

pub fn cache_dir() -> PathBuf {
    match std::env::var_os("VQG_CACHE_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => std::env::temp_dir().join("vqg-cache"),
    }
}

/// Length-framed digest so part boundaries cannot be confused.
pub fn digest_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn lookup(key: &str) -> Option<String> {
    std::fs::read_to_string(cache_dir().join(format!("{key}.txt"))).ok()
}

pub fn store(key: &str, text: &str) {
    let dir = cache_dir();
    if std::fs::create_dir_all(&dir).is_err() {
        return;
    }
    let _ = std::fs::write(dir.join(format!("{key}.txt")), text);
}
