use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::simulate::Market;
use crate::error::{Result, VaError};

const MAGIC: &[u8; 8] = b"OMAVAPS1";

/// Simulated paths on an equally spaced time grid, stored row-major
/// (`n_paths` rows of `n_steps + 1` values).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    times: Vec<f64>,
    asset: Vec<f64>,
    variance: Option<Vec<f64>>,
    n_paths: usize,
    seed: u64,
    scheme: String,
}

/// One simulated path.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub times: &'a [f64],
    pub asset: &'a [f64],
    pub variance: Option<&'a [f64]>,
}

impl PathView<'_> {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn terminal(&self) -> f64 {
        self.asset[self.asset.len() - 1]
    }

    pub fn terminal_variance(&self) -> Option<f64> {
        self.variance.map(|v| v[v.len() - 1])
    }
}

impl PathSet {
    pub fn new(
        times: Vec<f64>,
        asset: Vec<f64>,
        variance: Option<Vec<f64>>,
        n_paths: usize,
        seed: u64,
        scheme: impl Into<String>,
    ) -> Result<Self> {
        if times.len() < 2 {
            return Err(VaError::invalid("times", "need at least one step"));
        }
        let du = times[1] - times[0];
        if !(du > 0.0) {
            return Err(VaError::invalid("times", "must be ascending"));
        }
        let tol = 1e-9 * du;
        if times.windows(2).any(|w| ((w[1] - w[0]) - du).abs() > tol) {
            return Err(VaError::invalid("times", "must be equally spaced"));
        }
        let width = times.len();
        if asset.len() != n_paths * width {
            return Err(VaError::invalid("asset", "shape does not match n_paths x times"));
        }
        if let Some(i) = asset.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(VaError::invalid("asset", format!("non-positive value {}", asset[i])).on_path(i / width));
        }
        if let Some(v) = &variance {
            if v.len() != asset.len() {
                return Err(VaError::invalid("variance", "shape does not match asset"));
            }
            if let Some(i) = v.iter().position(|&a| !(a >= 0.0) || !a.is_finite()) {
                return Err(VaError::invalid("variance", format!("negative value {}", v[i])).on_path(i / width));
            }
        }
        Ok(PathSet {
            times,
            asset,
            variance,
            n_paths,
            seed,
            scheme: scheme.into(),
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn has_variance(&self) -> bool {
        self.variance.is_some()
    }

    pub fn path(&self, m: usize) -> PathView<'_> {
        let w = self.times.len();
        PathView {
            times: &self.times,
            asset: &self.asset[m * w..(m + 1) * w],
            variance: self.variance.as_ref().map(|v| &v[m * w..(m + 1) * w]),
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = PathView<'_>> {
        (0..self.n_paths).map(move |m| self.path(m))
    }

    pub(crate) fn drop_variance(&mut self, scheme: &str) {
        self.variance = None;
        self.scheme = scheme.to_string();
    }

    /// The first `n` paths.
    pub fn head(&self, n: usize) -> Result<PathSet> {
        if n == 0 || n > self.n_paths {
            return Err(VaError::invalid("n_paths", format!("{n} not in 1..={}", self.n_paths)));
        }
        let w = self.times.len();
        PathSet::new(
            self.times.clone(),
            self.asset[..n * w].to_vec(),
            self.variance.as_ref().map(|v| v[..n * w].to_vec()),
            n,
            self.seed,
            self.scheme.clone(),
        )
    }

    /// One row per path and time: `path,step,time,asset,variance`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["path", "step", "time", "asset", "variance"])?;
        for m in 0..self.n_paths {
            let p = self.path(m);
            for (i, t) in p.times.iter().enumerate() {
                let var = p.variance.map(|v| format!("{:.16e}", v[i])).unwrap_or_default();
                w.write_record([
                    m.to_string(),
                    i.to_string(),
                    format!("{t:.16e}"),
                    format!("{:.16e}", p.asset[i]),
                    var,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, seed: u64, scheme: &str) -> Result<PathSet> {
        let mut r = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut asset = Vec::new();
        let mut variance = Vec::new();
        let mut has_variance = true;
        let mut n_paths = 0;
        let parse = |s: &str, what: &'static str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| VaError::Io(format!("{what}: {e}")))
        };
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(VaError::Io(format!("expected 5 columns, found {}", rec.len())));
            }
            let m: usize = rec[0].parse().map_err(|e| VaError::Io(format!("path: {e}")))?;
            let i: usize = rec[1].parse().map_err(|e| VaError::Io(format!("step: {e}")))?;
            if m == 0 {
                if i != times.len() {
                    return Err(VaError::Io("steps of path 0 out of order".into()));
                }
                times.push(parse(&rec[2], "time")?);
            }
            n_paths = n_paths.max(m + 1);
            asset.push(parse(&rec[3], "asset")?);
            if rec[4].trim().is_empty() {
                has_variance = false;
            } else {
                variance.push(parse(&rec[4], "variance")?);
            }
        }
        PathSet::new(times, asset, has_variance.then_some(variance), n_paths, seed, scheme)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        for v in [self.n_paths as u64, self.n_steps() as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[self.variance.is_some() as u8])?;
        w.write_all(&(self.scheme.len() as u32).to_le_bytes())?;
        w.write_all(self.scheme.as_bytes())?;
        let arrays = [Some(&self.times), Some(&self.asset), self.variance.as_ref()];
        for a in arrays.into_iter().flatten() {
            for x in a {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<PathSet> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(VaError::Io(format!("{} is not a path-set cache file", path.display())));
        }
        let mut u64_buf = [0u8; 8];
        let mut next_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            r.read_exact(&mut u64_buf)?;
            Ok(u64::from_le_bytes(u64_buf))
        };
        let n_paths = next_u64(&mut r)? as usize;
        let n_steps = next_u64(&mut r)? as usize;
        let seed = next_u64(&mut r)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut scheme = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut scheme)?;
        let scheme = String::from_utf8(scheme).map_err(|e| VaError::Io(e.to_string()))?;
        let read_f64s = |r: &mut BufReader<File>, n: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let width = n_steps + 1;
        let times = read_f64s(&mut r, width)?;
        let asset = read_f64s(&mut r, n_paths * width)?;
        let variance = if flag[0] == 1 {
            Some(read_f64s(&mut r, n_paths * width)?)
        } else {
            None
        };
        PathSet::new(times, asset, variance, n_paths, seed, scheme)
    }
}

/// Directory of binary path sets keyed by seed and a hash of the market and
/// grid parameters.
#[derive(Debug, Clone)]
pub struct PathCache {
    dir: PathBuf,
}

impl PathCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(PathCache { dir })
    }

    pub fn key(market: &Market, x0: f64, horizon: f64, n_steps: usize, n_paths: usize, seed: u64) -> String {
        let descriptor = format!(
            "{}|x0={x0:e}|horizon={horizon:e}|steps={n_steps}|paths={n_paths}",
            market.descriptor()
        );
        let digest = Sha256::digest(descriptor.as_bytes());
        let hex: String = digest.iter().take(16).map(|b| format!("{b:02x}")).collect();
        format!("{seed}-{hex}")
    }

    pub fn file(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.paths"))
    }

    pub fn get_or_simulate(
        &self,
        market: &Market,
        x0: f64,
        horizon: f64,
        n_steps: usize,
        n_paths: usize,
        seed: u64,
    ) -> Result<PathSet> {
        let file = self.file(&Self::key(market, x0, horizon, n_steps, n_paths, seed));
        if file.exists() {
            if let Ok(ps) = PathSet::read_binary(&file) {
                return Ok(ps);
            }
        }
        let ps = market.simulate(x0, horizon, n_steps, n_paths, seed)?;
        ps.write_binary(&file)?;
        Ok(ps)
    }
}
