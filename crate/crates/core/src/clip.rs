//! In-memory frame sequences and their on-disk forms.
//!
//! A [`ClipTensor`] stores `frames × height × width × channels` values in
//! `[0, 1]`, frame-major, plus the frame rate. Clips can be read from and
//! written to a JSON document or a directory of numbered image frames.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClipError {
    #[error("clip shape {frames}x{height}x{width}x{channels} needs {expected} values, got {found}")]
    Shape {
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        found: usize,
    },
    #[error("clip value at index {index} is {value}, outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },
    #[error("frame rate must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("interval [{start}, {end}) is not inside a clip of {frames} frames")]
    BadInterval {
        start: usize,
        end: usize,
        frames: usize,
    },
    #[error("no image frames found in {0}")]
    NoFrames(String),
    #[error("frame {index} is {found_w}x{found_h}, expected {width}x{height}")]
    FrameSize {
        index: usize,
        width: u32,
        height: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("cannot parse clip file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Half-open frame interval `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameInterval {
    pub start_frame: usize,
    pub end_frame: usize,
}

impl FrameInterval {
    pub fn new(start_frame: usize, end_frame: usize) -> Self {
        Self {
            start_frame,
            end_frame,
        }
    }

    pub fn len(&self) -> usize {
        self.end_frame.saturating_sub(self.start_frame)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for FrameInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start_frame, self.end_frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipTensor {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    fps: f64,
    data: Vec<f32>,
}

impl ClipTensor {
    /// Builds a clip after checking the buffer length, the value range and the frame rate.
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        fps: f64,
        data: Vec<f32>,
    ) -> Result<Self, ClipError> {
        let clip = Self {
            frames,
            height,
            width,
            channels,
            fps,
            data,
        };
        clip.validate()?;
        Ok(clip)
    }

    /// A clip with every value set to `value`.
    pub fn filled(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        fps: f64,
        value: f32,
    ) -> Result<Self, ClipError> {
        Self::new(
            frames,
            height,
            width,
            channels,
            fps,
            vec![value; frames * height * width * channels],
        )
    }

    /// Builds a clip frame by frame from `f(frame, y, x, c)`.
    pub fn from_fn(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        fps: f64,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self, ClipError> {
        let mut data = Vec::with_capacity(frames * height * width * channels);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    for c in 0..channels {
                        data.push(f(t, y, x, c));
                    }
                }
            }
        }
        Self::new(frames, height, width, channels, fps, data)
    }

    fn validate(&self) -> Result<(), ClipError> {
        let expected = self.frames * self.height * self.width * self.channels;
        if expected != self.data.len() {
            return Err(ClipError::Shape {
                frames: self.frames,
                height: self.height,
                width: self.width,
                channels: self.channels,
                expected,
                found: self.data.len(),
            });
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ClipError::BadFps(self.fps));
        }
        if let Some((index, &value)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ClipError::OutOfRange { index, value });
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// `(frames, height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.frames, self.height, self.width, self.channels)
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames as f64 / self.fps
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        let n = self.frame_len();
        (0..self.frames).map(move |i| &self.data[i * n..(i + 1) * n])
    }

    /// Copies a half-open frame range into a new clip with the same frame rate.
    pub fn slice(&self, interval: FrameInterval) -> Result<Self, ClipError> {
        if interval.start_frame >= interval.end_frame || interval.end_frame > self.frames {
            return Err(ClipError::BadInterval {
                start: interval.start_frame,
                end: interval.end_frame,
                frames: self.frames,
            });
        }
        let n = self.frame_len();
        Ok(Self {
            frames: interval.len(),
            height: self.height,
            width: self.width,
            channels: self.channels,
            fps: self.fps,
            data: self.data[interval.start_frame * n..interval.end_frame * n].to_vec(),
        })
    }

    /// Builds a clip whose frame `j` is this clip's frame `index_map[j]`.
    pub(crate) fn gather_frames(&self, index_map: &[usize]) -> Self {
        let n = self.frame_len();
        let mut data = Vec::with_capacity(index_map.len() * n);
        for &src in index_map {
            data.extend_from_slice(&self.data[src * n..(src + 1) * n]);
        }
        Self {
            frames: index_map.len(),
            height: self.height,
            width: self.width,
            channels: self.channels,
            fps: self.fps,
            data,
        }
    }

    /// Same shape and frame rate, new values. Callers guarantee the range.
    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            data,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            frames: self.frames,
            height: self.height,
            width: self.width,
            channels: self.channels,
            fps: self.fps,
            data: Vec::new(),
        }
    }

    /// SHA-256 over shape, frame rate and the little-endian value bytes, hex encoded.
    ///
    /// Scripted mock backends key their fixture tables by this hash.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for dim in [self.frames, self.height, self.width, self.channels] {
            hasher.update((dim as u64).to_le_bytes());
        }
        hasher.update(self.fps.to_le_bytes());
        for v in &self.data {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        fps: f64,
        bytes: &[u8],
    ) -> Result<Self, ClipError> {
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect::<Vec<_>>();
        if !bytes.len().is_multiple_of(4) {
            return Err(ClipError::Shape {
                frames,
                height,
                width,
                channels,
                expected: frames * height * width * channels,
                found: bytes.len() / 4,
            });
        }
        Self::new(frames, height, width, channels, fps, data)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, ClipError> {
        let text = fs::read_to_string(path)?;
        let clip: ClipTensor = serde_json::from_str(&text)?;
        clip.validate()?;
        Ok(clip)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), ClipError> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    /// Loads every PNG/JPEG in `dir`, sorted by file name, as one clip.
    /// Frames are converted to RGB.
    pub fn load_frames_dir(dir: impl AsRef<Path>, fps: f64) -> Result<Self, ClipError> {
        let dir = dir.as_ref();
        let mut paths = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                    .unwrap_or(false)
            })
            .collect::<Vec<_>>();
        paths.sort();
        if paths.is_empty() {
            return Err(ClipError::NoFrames(dir.display().to_string()));
        }
        let mut data = Vec::new();
        let mut dims = None;
        for (index, p) in paths.iter().enumerate() {
            let img = image::open(p)?.to_rgb8();
            let (w, h) = img.dimensions();
            match dims {
                None => dims = Some((w, h)),
                Some((width, height)) if (width, height) != (w, h) => {
                    return Err(ClipError::FrameSize {
                        index,
                        width,
                        height,
                        found_w: w,
                        found_h: h,
                    })
                }
                _ => {}
            }
            data.extend(img.as_raw().iter().map(|&b| b as f32 / 255.0));
        }
        let (w, h) = dims.unwrap_or((0, 0));
        Self::new(paths.len(), h as usize, w as usize, 3, fps, data)
    }

    /// Writes `frame_00000.png`, ... into `dir`. Single-channel clips become
    /// grayscale images, three-channel clips RGB.
    pub fn save_frames_dir(&self, dir: impl AsRef<Path>) -> Result<(), ClipError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (t, frame) in self.frames().enumerate() {
            let bytes: Vec<u8> = frame
                .iter()
                .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            let path = dir.join(format!("frame_{t:05}.png"));
            let (w, h) = (self.width as u32, self.height as u32);
            match self.channels {
                1 => image::GrayImage::from_raw(w, h, bytes)
                    .expect("buffer size matches shape")
                    .save(path)?,
                3 => image::RgbImage::from_raw(w, h, bytes)
                    .expect("buffer size matches shape")
                    .save(path)?,
                _ => {
                    // other channel counts: keep the first channel
                    let gray = frame
                        .chunks(self.channels)
                        .map(|px| (px[0] * 255.0).round().clamp(0.0, 255.0) as u8)
                        .collect();
                    image::GrayImage::from_raw(w, h, gray)
                        .expect("buffer size matches shape")
                        .save(path)?
                }
            }
        }
        Ok(())
    }

    /// Loads a clip from a JSON clip file or a frame directory.
    pub fn load(path: impl AsRef<Path>, fps_for_frames: f64) -> Result<Self, ClipError> {
        let path = path.as_ref();
        if path.is_dir() {
            Self::load_frames_dir(path, fps_for_frames)
        } else {
            Self::load_json(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shape_and_range() {
        assert!(matches!(
            ClipTensor::new(2, 1, 1, 1, 25.0, vec![0.0]),
            Err(ClipError::Shape { .. })
        ));
        assert!(matches!(
            ClipTensor::new(1, 1, 1, 1, 25.0, vec![1.5]),
            Err(ClipError::OutOfRange { .. })
        ));
        assert!(matches!(
            ClipTensor::new(1, 1, 1, 1, 0.0, vec![0.5]),
            Err(ClipError::BadFps(_))
        ));
    }

    #[test]
    fn slice_and_hash() {
        let clip = ClipTensor::from_fn(4, 2, 2, 1, 10.0, |t, _, _, _| t as f32 / 4.0).unwrap();
        let s = clip.slice(FrameInterval::new(1, 3)).unwrap();
        assert_eq!(s.frame_count(), 2);
        assert_eq!(s.frame(0), clip.frame(1));
        assert_ne!(s.content_hash(), clip.content_hash());
        assert_eq!(s.content_hash(), s.clone().content_hash());
        assert!(clip.slice(FrameInterval::new(3, 3)).is_err());
        assert!(clip.slice(FrameInterval::new(2, 5)).is_err());
    }

    #[test]
    fn le_bytes_roundtrip() {
        let clip = ClipTensor::from_fn(3, 2, 1, 3, 30.0, |t, y, _, c| {
            ((t + y + c) % 5) as f32 / 5.0
        })
        .unwrap();
        let bytes = clip.to_le_bytes();
        let back = ClipTensor::from_le_bytes(3, 2, 1, 3, 30.0, &bytes).unwrap();
        assert_eq!(back, clip);
    }

    #[test]
    fn frames_dir_roundtrip_quantizes_to_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let clip = ClipTensor::from_fn(3, 4, 5, 3, 25.0, |t, y, x, c| {
            ((t * 31 + y * 7 + x * 3 + c) % 256) as f32 / 255.0
        })
        .unwrap();
        clip.save_frames_dir(dir.path()).unwrap();
        let back = ClipTensor::load_frames_dir(dir.path(), 25.0).unwrap();
        assert_eq!(back.shape(), clip.shape());
        for (a, b) in back.data().iter().zip(clip.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
