//! On-disk cache of solved certificates.
//!
//! Entries are keyed by a SHA-256 over the full source text (so any edit
//! outside a magic block invalidates them), the game options and the
//! encoded game itself. A missing, unreadable or mismatching entry just
//! means the game is solved again.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Compiled, GameOptions};
use crate::encode::Encoding;
use crate::solver::{CertDump, Solution};

pub fn cache_key(c: &Compiled, opts: &GameOptions, enc: &Encoding) -> String {
    let mut h = Sha256::new();
    h.update(b"tslsynth-cert-v1\0");
    for (path, text) in &c.source.files {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        h.update([0]);
    }
    h.update(c.source.entry.as_bytes());
    h.update([0]);
    h.update(opts.goal.as_deref().unwrap_or("").as_bytes());
    h.update([0]);
    h.update(opts.node_limit.to_le_bytes());
    let dump = serde_json::to_vec(&enc.game.dump()).expect("game dumps serialise");
    h.update(&dump);
    format!("{:x}", h.finalize())
}

fn entry(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.cert.json"))
}

pub fn load(dir: &Path, key: &str, enc: &mut Encoding) -> Option<Solution> {
    let text = std::fs::read(entry(dir, key)).ok()?;
    let dump: CertDump = serde_json::from_slice(&text).ok()?;
    dump.load(&mut enc.game).ok()
}

/// Best effort: a cache that cannot be written is skipped.
pub fn store(dir: &Path, key: &str, enc: &Encoding, sol: &Solution) {
    let dump = sol.export(&enc.game);
    if std::fs::create_dir_all(dir).is_err() {
        return;
    }
    let tmp = dir.join(format!("{key}.tmp{}", std::process::id()));
    if let Ok(bytes) = serde_json::to_vec(&dump) {
        if std::fs::write(&tmp, bytes).is_ok() {
            let _ = std::fs::rename(&tmp, entry(dir, key));
        }
    }
}
