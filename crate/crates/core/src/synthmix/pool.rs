use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use crate::audio_io::{decode_wav, probe_wav, resample, AudioClip};
use crate::error::{csv_error, Error, Result};
use crate::labels::Class;

/// One source recording available for mixing.
#[derive(Debug)]
pub struct SourceEntry {
    id: String,
    path: Option<PathBuf>,
    frames: u64,
    sample_rate_hz: u32,
    /// Decoded samples resampled to the pool's target rate.
    cache: OnceLock<Arc<Vec<f64>>>,
}

impl SourceEntry {
    /// A file-backed source; only the header is read here.
    pub fn from_file(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let (duration_s, rate) = probe_wav(&path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            id,
            frames: (duration_s * rate as f64).round() as u64,
            sample_rate_hz: rate,
            path: Some(path),
            cache: OnceLock::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate_hz as f64
    }

    /// Length after conversion to `target_hz`, matching [`resample`].
    pub fn len_at(&self, target_hz: u32) -> usize {
        let (src, dst) = (self.sample_rate_hz as u64, target_hz as u64);
        ((2 * self.frames * dst + src) / (2 * src)) as usize
    }
}

/// Per-class lists of mixing sources. Decoded audio is cached at the target
/// rate on first use, so a pool can be shared across rendering threads.
#[derive(Debug)]
pub struct SourcePool {
    classes: [Vec<SourceEntry>; 3],
    target_rate_hz: u32,
    /// Clips supplied in memory, kept so `load` can serve them without a file.
    memory: Vec<(Class, usize, Arc<AudioClip>)>,
}

impl SourcePool {
    pub fn new(target_rate_hz: u32) -> Self {
        Self {
            classes: Default::default(),
            target_rate_hz,
            memory: Vec::new(),
        }
    }

    pub fn target_rate_hz(&self) -> u32 {
        self.target_rate_hz
    }

    pub fn push_file(&mut self, class: Class, path: impl Into<PathBuf>) -> Result<()> {
        let entry = SourceEntry::from_file(path)?;
        self.classes[class.index()].push(entry);
        Ok(())
    }

    /// Adds an already-decoded clip (any sample rate).
    pub fn push_clip(&mut self, class: Class, clip: AudioClip) -> Result<()> {
        if clip.is_empty() {
            return Err(Error::EmptyInput(format!("source clip {}", clip.source_id())));
        }
        let list = &mut self.classes[class.index()];
        list.push(SourceEntry {
            id: clip.source_id().to_string(),
            path: None,
            frames: clip.len() as u64,
            sample_rate_hz: clip.sample_rate_hz(),
            cache: OnceLock::new(),
        });
        self.memory.push((class, list.len() - 1, Arc::new(clip)));
        Ok(())
    }

    /// Reads a `path,class` CSV; relative paths resolve against the CSV's directory.
    pub fn from_manifest(path: impl AsRef<Path>, target_rate_hz: u32) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::Schema(format!("{}: missing column '{name}'", path.display()))
            })
        };
        let (path_col, class_col) = (col("path")?, col("class")?);
        let mut pool = SourcePool::new(target_rate_hz);
        for (i, record) in reader.records().enumerate() {
            let line = i as u64 + 2;
            let record = record.map_err(|e| csv_error(path, e))?;
            let parse_err = |message: String| Error::Parse {
                file: path.display().to_string(),
                line,
                message,
            };
            let file = record.get(path_col).unwrap_or_default();
            let class: Class = record
                .get(class_col)
                .unwrap_or_default()
                .parse()
                .map_err(|e: Error| parse_err(e.to_string()))?;
            let resolved = base.join(file);
            pool.push_file(class, &resolved)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(pool)
    }

    pub fn sources(&self, class: Class) -> &[SourceEntry] {
        &self.classes[class.index()]
    }

    pub fn source(&self, class: Class, index: usize) -> Result<&SourceEntry> {
        self.classes[class.index()].get(index).ok_or_else(|| {
            Error::OutOfRange(format!("no {class} source with index {index}"))
        })
    }

    /// Samples of a source at the pool's target rate (cached).
    pub fn load(&self, class: Class, index: usize) -> Result<Arc<Vec<f64>>> {
        let entry = self.source(class, index)?;
        if let Some(cached) = entry.cache.get() {
            return Ok(cached.clone());
        }
        let clip = match &entry.path {
            Some(p) => decode_wav(p)?,
            None => self
                .memory
                .iter()
                .find(|(c, i, _)| *c == class && *i == index)
                .map(|(_, _, clip)| clip.as_ref().clone())
                .ok_or_else(|| Error::OutOfRange(format!("no data for {class} source {index}")))?,
        };
        let clip = resample(&clip, self.target_rate_hz)?;
        let samples = Arc::new(clip.into_samples());
        Ok(entry.cache.get_or_init(|| samples).clone())
    }
}
