//! Content-addressed result cache for `score`.
//!
//! The key hashes the three distributions and every solver setting that can
//! change a result, plus the crate version. Ids and metadata are left out.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::{Matrices, ReportRow};
use crate::config::SolverConfig;
use crate::model::QcaTriplet;

const KEY_DOMAIN: &[u8] = b"faithfulness-score-cache-v1";

pub fn cache_key(t: &QcaTriplet, cfg: &SolverConfig) -> String {
    let mut h = Sha256::new();
    h.update(KEY_DOMAIN);
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update((t.n_topics() as u64).to_le_bytes());
    for dist in [&t.p_q, &t.p_c, &t.p_a] {
        for p in dist.probs() {
            h.update(p.to_bits().to_le_bytes());
        }
    }
    for v in [
        cfg.tol_outer,
        cfg.tol_inner,
        cfg.epsilon_smooth,
        cfg.feasibility_tol,
    ] {
        h.update(v.to_bits().to_le_bytes());
    }
    for v in [cfg.max_outer_iters, cfg.max_inner_iters] {
        h.update((v as u64).to_le_bytes());
    }
    h.update(cfg.report_units.label().as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub row: ReportRow,
    pub matrices: Matrices,
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Returns the stored entry, or `None` on a miss. Unreadable or
    /// inconsistent files are reported and treated as misses.
    pub fn load(&self, key: &str) -> Option<CacheEntry> {
        let path = self.path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!(
                    "cache entry {} unreadable ({e}); recomputing",
                    path.display()
                );
                return None;
            }
        };
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.key == key => Some(entry),
            Ok(_) => {
                log::warn!(
                    "cache entry {} has a mismatched key; recomputing",
                    path.display()
                );
                None
            }
            Err(e) => {
                log::warn!(
                    "cache entry {} is corrupt ({e}); recomputing",
                    path.display()
                );
                None
            }
        }
    }

    pub fn store(&self, entry: &CacheEntry) -> std::io::Result<()> {
        let path = self.path(&entry.key);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(entry)?)?;
        fs::rename(tmp, path)
    }
}
