//! Coupled sample pools and their append-only store.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SampleKey;

/// A forward model composed with a QoI.
pub trait SampleModel: Sync {
    /// QoI of the draw keyed by `key` evaluated at `level`, with the cost
    /// of the evaluation in seconds.
    fn evaluate(&self, key: SampleKey, level: u32) -> Result<(f64, f64)>;

    /// Short identifier recorded in pool provenance.
    fn id(&self) -> String;
}

/// One coupled evaluation: the fine level and, above the base, the next
/// coarser level on the same draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSample {
    pub level: u32,
    pub index: u64,
    pub seed: SampleKey,
    pub fine: f64,
    pub coarse: Option<f64>,
    /// Total cost of the sample, s.
    pub work: f64,
    /// Cost of the fine evaluation alone, s.
    pub fine_work: f64,
}

impl CorrectionSample {
    pub fn delta(&self) -> Option<f64> {
        self.coarse.map(|c| self.fine - c)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub qoi_kind: String,
    pub model: String,
    pub config_digest: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplePool {
    pub provenance: Provenance,
    levels: BTreeMap<u32, BTreeMap<u64, CorrectionSample>>,
}

impl SamplePool {
    pub fn new(provenance: Provenance) -> Self {
        Self { provenance, levels: BTreeMap::new() }
    }

    /// Inserts or replaces the sample with the same level and index.
    pub fn insert(&mut self, s: CorrectionSample) {
        self.levels.entry(s.level).or_default().insert(s.index, s);
    }

    pub fn get(&self, level: u32, index: u64) -> Option<&CorrectionSample> {
        self.levels.get(&level)?.get(&index)
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.levels.keys().copied()
    }

    /// Samples at `level` in ascending index order.
    pub fn samples(&self, level: u32) -> impl Iterator<Item = &CorrectionSample> + '_ {
        self.levels.get(&level).into_iter().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.levels.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, level: u32) -> usize {
        self.levels.get(&level).map_or(0, BTreeMap::len)
    }

    pub fn coupled_count(&self, level: u32) -> usize {
        self.samples(level).filter(|s| s.coarse.is_some()).count()
    }

    /// The first `n` samples at `level`, coupled ones only if `coupled`.
    pub fn first_samples(&self, level: u32, n: usize, coupled: bool) -> Result<Vec<&CorrectionSample>> {
        let v: Vec<_> =
            self.samples(level).filter(|s| !coupled || s.coarse.is_some()).take(n).collect();
        if v.len() < n {
            return Err(Error::InsufficientSamples { level, have: v.len(), need: n });
        }
        Ok(v)
    }

    pub fn fine_values(&self, level: u32, n: usize) -> Result<Vec<f64>> {
        Ok(self.first_samples(level, n, false)?.iter().map(|s| s.fine).collect())
    }

    pub fn corrections(&self, level: u32, n: usize) -> Result<Vec<f64>> {
        Ok(self.first_samples(level, n, true)?.iter().filter_map(|s| s.delta()).collect())
    }

    pub fn all_fine(&self, level: u32) -> Vec<f64> {
        self.samples(level).map(|s| s.fine).collect()
    }

    pub fn all_corrections(&self, level: u32) -> Vec<f64> {
        self.samples(level).filter_map(CorrectionSample::delta).collect()
    }

    pub fn total_work(&self) -> f64 {
        self.levels.values().flat_map(|m| m.values()).map(|s| s.work).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    qoi_kind: String,
    level: u32,
    index: u64,
    seed: SampleKey,
    fine: f64,
    coarse: Option<f64>,
    work_s: f64,
    fine_work_s: f64,
    timestamp: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    provenance: Provenance,
}

/// Line-delimited JSON file holding one record per sample. The first line
/// is the provenance header; later records for the same level and index
/// supersede earlier ones.
pub struct PoolStore {
    path: PathBuf,
    out: BufWriter<File>,
    qoi_kind: String,
}

impl PoolStore {
    /// Opens or creates the store at `path` and loads its samples.
    pub fn open(path: &Path, provenance: Provenance) -> Result<(Self, SamplePool)> {
        let mut pool = SamplePool::new(provenance.clone());
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        let mut torn = false;
        if exists {
            let bytes = std::fs::read(path)?;
            torn = bytes.last() != Some(&b'\n');
            let mut lines = BufReader::new(bytes.as_slice()).lines();
            let head: Header = serde_json::from_str(
                &lines.next().ok_or_else(|| Error::Parse("empty pool file".into()))??,
            )?;
            if head.provenance != provenance {
                return Err(invalid(format!(
                    "pool {} was written for {:?}, not {:?}",
                    path.display(),
                    head.provenance,
                    provenance
                )));
            }
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // a torn final line from an interrupted run is dropped
                let Ok(r) = serde_json::from_str::<Record>(&line) else {
                    continue;
                };
                pool.insert(CorrectionSample {
                    level: r.level,
                    index: r.index,
                    seed: r.seed,
                    fine: r.fine,
                    coarse: r.coarse,
                    work: r.work_s,
                    fine_work: r.fine_work_s,
                });
            }
        } else if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut out = BufWriter::new(file);
        if torn {
            out.write_all(b"\n")?;
        }
        if !exists {
            serde_json::to_writer(&mut out, &Header { provenance: provenance.clone() })?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        Ok((Self { path: path.to_path_buf(), out, qoi_kind: provenance.qoi_kind }, pool))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, s: &CorrectionSample) -> Result<()> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let r = Record {
            qoi_kind: self.qoi_kind.clone(),
            level: s.level,
            index: s.index,
            seed: s.seed,
            fine: s.fine,
            coarse: s.coarse,
            work_s: s.work,
            fine_work_s: s.fine_work,
            timestamp,
        };
        serde_json::to_writer(&mut self.out, &r)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    Fine,
    Coupled,
}

fn evaluate<M: SampleModel + ?Sized>(
    model: &M,
    key: SampleKey,
    have: Option<&CorrectionSample>,
    coupled: bool,
) -> Result<CorrectionSample> {
    let wrap = |e: Error| Error::Sample { key, source: Box::new(e) };
    let (fine, fine_work) = match have {
        Some(s) => (s.fine, s.fine_work),
        None => model.evaluate(key, key.level).map_err(wrap)?,
    };
    let (coarse, coarse_work) = if coupled {
        let (c, w) = model.evaluate(key, key.level - 1).map_err(wrap)?;
        (Some(c), w)
    } else {
        (None, 0.0)
    };
    let prior = have.map_or(0.0, |s| s.work - s.fine_work);
    Ok(CorrectionSample {
        level: key.level,
        index: key.index,
        seed: key,
        fine,
        coarse,
        work: fine_work + coarse_work + prior,
        fine_work,
    })
}

/// Makes sure samples `0..count` exist at `level` with the requested
/// coupling, evaluating only what is missing. New samples are persisted in
/// batches as they complete, in ascending index order.
#[allow(clippy::too_many_arguments)]
pub fn run_samples<M: SampleModel + ?Sized>(
    model: &M,
    run: u64,
    level: u32,
    kind: SampleKind,
    count: u64,
    pool: &mut SamplePool,
    mut store: Option<&mut PoolStore>,
    workers: usize,
) -> Result<()> {
    let coupled = kind == SampleKind::Coupled && level > 0;
    let todo: Vec<u64> = (0..count)
        .filter(|&i| match pool.get(level, i) {
            None => true,
            Some(s) => coupled && s.coarse.is_none(),
        })
        .collect();
    if todo.is_empty() {
        return Ok(());
    }
    let workers = workers.max(1);
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start workers: {e}")))?;
    for batch in todo.chunks(workers) {
        let done: Vec<Result<CorrectionSample>> = threads.install(|| {
            batch
                .par_iter()
                .map(|&i| evaluate(model, SampleKey::new(run, level, i), pool.get(level, i), coupled))
                .collect()
        });
        for s in done {
            let s = s?;
            if let Some(st) = store.as_deref_mut() {
                st.append(&s)?;
            }
            pool.insert(s);
        }
    }
    Ok(())
}
