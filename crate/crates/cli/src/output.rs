//! Deterministic artifact writing: payload files are byte-identical for
//! identical config + seed (no timestamps inside); wall-clock metadata goes
//! to a sidecar. Writes are atomic (temp file + rename).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use branchfk::error::Result;
use serde::Serialize;

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    /// Precedence: BRANCHFK_OUT_DIR environment variable, then the flag.
    pub fn resolve(flag: &Path) -> Result<Self> {
        let dir = match std::env::var_os("BRANCHFK_OUT_DIR") {
            Some(env) => PathBuf::from(env),
            None => flag.to_path_buf(),
        };
        fs::create_dir_all(&dir)?;
        Ok(OutputDir { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!("{name}.tmp-{}", std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &target)?;
        Ok(target)
    }

    /// JSON payload with the resolved config and seed embedded; the
    /// timestamp goes into `<name>.meta.json` only.
    pub fn write_json<T: Serialize, C: Serialize>(
        &self,
        name: &str,
        config: &C,
        seed: Option<u64>,
        payload: &T,
    ) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Artifact<'a, T, C> {
            config: &'a C,
            #[serde(skip_serializing_if = "Option::is_none")]
            seed: Option<u64>,
            payload: &'a T,
        }
        let doc = Artifact { config, seed, payload };
        let text = serde_json::to_string_pretty(&doc).map_err(branchfk::Error::from)?;
        let path = self.write_atomic(name, text.as_bytes())?;
        self.write_meta(name)?;
        Ok(path)
    }

    /// CSV payload: `# config ...` and `# seed ...` header comments carry the
    /// provenance, deterministically.
    pub fn write_csv<C: Serialize>(
        &self,
        name: &str,
        config: &C,
        seed: Option<u64>,
        columns: &[&str],
        rows: impl Iterator<Item = Vec<String>>,
    ) -> Result<PathBuf> {
        let mut text = String::new();
        text.push_str(&format!(
            "# config {}\n",
            serde_json::to_string(config).map_err(branchfk::Error::from)?
        ));
        if let Some(s) = seed {
            text.push_str(&format!("# seed {s}\n"));
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let path = self.write_atomic(name, text.as_bytes())?;
        self.write_meta(name)?;
        Ok(path)
    }

    fn write_meta(&self, name: &str) -> Result<()> {
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = format!("{{\"artifact\": {name:?}, \"written_unix\": {stamp}}}\n");
        self.write_atomic(&format!("{name}.meta.json"), meta.as_bytes())?;
        Ok(())
    }
}

pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.12e}")
    }
}
