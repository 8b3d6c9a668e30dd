use std::path::{Path, PathBuf};

use super::imageops::{from_rgb8, to_rgb8, Image};
use super::manifest::{parse_manifest, serialize_manifest, ManifestRecord, SpeakingLabel};
use super::wav::{read_wav, write_wav};
use super::{io_err, BoundingBox, DataError};

/// One utterance: aligned frames, waveform, per-frame boxes and labels.
#[derive(Debug, Clone)]
pub struct ClipSample {
    pub video_id: String,
    pub entity_id: String,
    pub frames: Vec<Image>,
    pub waveform: Vec<f64>,
    pub sample_rate: u32,
    pub fps: f64,
    pub face_boxes: Vec<BoundingBox>,
    pub body_boxes: Vec<BoundingBox>,
    pub labels: Vec<SpeakingLabel>,
}

impl ClipSample {
    /// Number of video frames.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Check the structural invariants: parallel per-frame vectors and a
    /// waveform covering at least `T/fps` minus half a frame period.
    pub fn validate(&self) -> Result<(), DataError> {
        let t = self.frames.len();
        if t == 0 {
            return Err(DataError::ClipInvariant("clip has no frames".into()));
        }
        if self.labels.len() != t || self.face_boxes.len() != t || self.body_boxes.len() != t {
            return Err(DataError::ClipInvariant(format!(
                "per-frame vectors disagree: {} frames, {} labels, {} face boxes, {} body boxes",
                t,
                self.labels.len(),
                self.face_boxes.len(),
                self.body_boxes.len()
            )));
        }
        if !(self.fps > 0.0) {
            return Err(DataError::ClipInvariant(format!("fps {} not positive", self.fps)));
        }
        let duration = self.waveform.len() as f64 / f64::from(self.sample_rate);
        let needed = (t as f64 - 0.5) / self.fps;
        if duration < needed {
            return Err(DataError::ClipInvariant(format!(
                "waveform covers {duration:.3}s but {needed:.3}s of video is annotated"
            )));
        }
        Ok(())
    }

    pub fn frame_timestamp(&self, t: usize) -> f64 {
        t as f64 / self.fps
    }

    /// Manifest rows for this clip.
    pub fn manifest_records(&self) -> Vec<ManifestRecord> {
        (0..self.len())
            .map(|t| ManifestRecord {
                video_id: self.video_id.clone(),
                frame_timestamp: self.frame_timestamp(t),
                entity_id: self.entity_id.clone(),
                label: self.labels[t],
                face_box: self.face_boxes[t],
                body_box: Some(self.body_boxes[t]),
            })
            .collect()
    }

    /// Write the clip as a directory: `frames/%05d.png`, `audio.wav`,
    /// `manifest.csv`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), DataError> {
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir).map_err(|e| io_err(&frames_dir, e))?;
        for (t, frame) in self.frames.iter().enumerate() {
            let path = frames_dir.join(format!("{t:05}.png"));
            to_rgb8(&frame.view()).save(&path).map_err(|e| DataError::Image {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        }
        write_wav(&dir.join("audio.wav"), &self.waveform, self.sample_rate)?;
        let manifest_path = dir.join("manifest.csv");
        std::fs::write(&manifest_path, serialize_manifest(&self.manifest_records()))
            .map_err(|e| io_err(&manifest_path, e))
    }

    /// Load a clip directory written by [`ClipSample::save_dir`].
    pub fn load_dir(dir: &Path) -> Result<Self, DataError> {
        let manifest_path = dir.join("manifest.csv");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
        let mut records = parse_manifest(&text)?;
        if records.is_empty() {
            return Err(DataError::ClipInvariant(format!(
                "{}: empty per-clip manifest",
                dir.display()
            )));
        }
        records.sort_by(|a, b| a.frame_timestamp.total_cmp(&b.frame_timestamp));
        let fps = if records.len() >= 2 {
            1.0 / (records[1].frame_timestamp - records[0].frame_timestamp)
        } else {
            25.0
        };
        let mut frames = Vec::with_capacity(records.len());
        for t in 0..records.len() {
            let path = dir.join("frames").join(format!("{t:05}.png"));
            let img = image::open(&path)
                .map_err(|e| DataError::Image {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?
                .to_rgb8();
            frames.push(from_rgb8(&img));
        }
        let (waveform, sample_rate) = read_wav(&dir.join("audio.wav"))?;
        let clip = ClipSample {
            video_id: records[0].video_id.clone(),
            entity_id: records[0].entity_id.clone(),
            frames,
            waveform,
            sample_rate,
            fps,
            face_boxes: records.iter().map(|r| r.face_box).collect(),
            body_boxes: records
                .iter()
                .map(|r| r.body_box.unwrap_or(r.face_box))
                .collect(),
            labels: records.iter().map(|r| r.label).collect(),
        };
        clip.validate()?;
        Ok(clip)
    }
}

/// A clip held in memory or referenced on disk.
#[derive(Debug, Clone)]
pub enum ClipSource {
    Loaded(ClipSample),
    OnDisk(PathBuf),
}

impl ClipSource {
    pub fn load(&self) -> Result<ClipSample, DataError> {
        match self {
            ClipSource::Loaded(c) => Ok(c.clone()),
            ClipSource::OnDisk(dir) => ClipSample::load_dir(dir),
        }
    }
}

/// An ordered set of clips.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub clips: Vec<ClipSource>,
}

impl Dataset {
    pub fn from_clips(clips: Vec<ClipSample>) -> Self {
        Dataset {
            clips: clips.into_iter().map(ClipSource::Loaded).collect(),
        }
    }

    /// Scan a dataset directory: every subdirectory containing a
    /// `manifest.csv` is one clip, ordered by name.
    pub fn open_dir(dir: &Path) -> Result<Self, DataError> {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.join("manifest.csv").is_file())
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(DataError::ClipInvariant(format!(
                "{}: no clip directories found",
                dir.display()
            )));
        }
        Ok(Dataset {
            clips: dirs.into_iter().map(ClipSource::OnDisk).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Write every clip under `dir` plus a combined `manifest.csv`.
    pub fn save_dir(clips: &[ClipSample], dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut all_records = Vec::new();
        for clip in clips {
            clip.save_dir(&dir.join(&clip.video_id))?;
            all_records.extend(clip.manifest_records());
        }
        let combined = dir.join("manifest.csv");
        std::fs::write(&combined, serialize_manifest(&all_records))
            .map_err(|e| io_err(&combined, e))
    }
}
