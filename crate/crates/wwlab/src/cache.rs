//! On-disk result cache, one `<hash>.json` per configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::error::{LabError, LabResult};
use crate::ops::{ResultRecord, VERSION};

#[derive(Debug)]
pub enum Lookup {
    Hit(Box<ResultRecord>),
    Miss,
    /// A record exists but was written by another library version.
    Stale { found_version: String },
    /// The file did not parse and was moved to the returned path.
    Quarantined(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> LabResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn lookup(&self, hash: &str) -> LabResult<Lookup> {
        let path = self.path_for(hash);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Lookup::Miss),
            Err(e) => return Err(LabError::io(&path, e)),
        };
        match serde_json::from_str::<ResultRecord>(&text) {
            Ok(rec) if rec.config_hash != hash => self.quarantine(&path, "hash does not match file name"),
            Ok(rec) if rec.version != VERSION => {
                info!(
                    "cached record {hash} was written by version {}, current is {VERSION}; recomputing",
                    rec.version
                );
                Ok(Lookup::Stale {
                    found_version: rec.version,
                })
            }
            Ok(rec) => Ok(Lookup::Hit(Box::new(rec))),
            Err(e) => self.quarantine(&path, &e.to_string()),
        }
    }

    fn quarantine(&self, path: &Path, why: &str) -> LabResult<Lookup> {
        let mut target = path.with_extension("json.corrupt");
        let mut i = 1;
        while target.exists() {
            target = path.with_extension(format!("json.corrupt.{i}"));
            i += 1;
        }
        fs::rename(path, &target).map_err(|e| LabError::io(path, e))?;
        warn!("corrupt cache record {} ({why}); moved to {}", path.display(), target.display());
        Ok(Lookup::Quarantined(target))
    }

    /// Writes to a temporary file in the same directory, then renames.
    pub fn store(&self, record: &ResultRecord) -> LabResult<PathBuf> {
        let path = self.path_for(&record.config_hash);
        let tmp = self
            .dir
            .join(format!(".{}.{}.tmp", record.config_hash, std::process::id()));
        let body = serde_json::to_vec_pretty(record)?;
        let mut file = fs::File::create(&tmp).map_err(|e| LabError::io(&tmp, e))?;
        file.write_all(&body).map_err(|e| LabError::io(&tmp, e))?;
        file.sync_all().map_err(|e| LabError::io(&tmp, e))?;
        drop(file);
        fs::rename(&tmp, &path).map_err(|e| LabError::io(&path, e))?;
        Ok(path)
    }

    /// Every readable record in the directory, sorted by hash.
    pub fn records(&self) -> LabResult<Vec<ResultRecord>> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| LabError::io(&self.dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(|e| LabError::io(&p, e))?;
            match serde_json::from_str::<ResultRecord>(&text) {
                Ok(r) => out.push(r),
                Err(e) => warn!("skipping unreadable record {}: {e}", p.display()),
            }
        }
        Ok(out)
    }
}

/// Whether a record came from the cache or was computed now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Cache,
    Computed,
}

/// Looks the configuration up and computes it on any kind of miss.
pub fn run_cached(cache: &Cache, cfg: &crate::config::ExperimentConfig) -> LabResult<(ResultRecord, Origin)> {
    let hash = cfg.hash();
    if let Lookup::Hit(rec) = cache.lookup(&hash)? {
        info!("served {hash} from cache");
        return Ok((*rec, Origin::Cache));
    }
    let rec = crate::ops::run_experiment(cfg)?;
    cache.store(&rec)?;
    Ok((rec, Origin::Computed))
}
