use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;

use image::RgbImage;
use regex::Regex;

use super::{Fps, StreamProbe, VideoError};

/// Provides decoded RGB frames for one video.
pub trait FrameSource: Send + Sync {
    fn probe(&self) -> Result<StreamProbe, VideoError>;

    /// Decodes the frames at the given sorted, de-duplicated, in-range indices.
    fn read_frames(&self, indices: &[u64]) -> Result<Vec<RgbImage>, VideoError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

/// In-process reader for uncompressed YUV4MPEG2 (8-bit) files.
#[derive(Debug)]
pub struct Y4mSource {
    path: PathBuf,
    width: u32,
    height: u32,
    fps: Fps,
    chroma: Chroma,
    /// Byte offset of each frame's pixel payload.
    offsets: Vec<u64>,
}

impl Y4mSource {
    pub fn open(path: &Path) -> Result<Self, VideoError> {
        let io = |source| VideoError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bad = |message: String| VideoError::Decode {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(io)?;
        let total = file.metadata().map_err(io)?.len();
        let mut reader = BufReader::new(file);

        let mut header = Vec::new();
        reader.read_until(b'\n', &mut header).map_err(io)?;
        let header = String::from_utf8_lossy(&header);
        let mut fields = header.trim_end().split(' ');
        if fields.next() != Some("YUV4MPEG2") {
            return Err(bad("missing YUV4MPEG2 signature".into()));
        }
        let (mut width, mut height, mut fps, mut chroma) = (0u32, 0u32, Fps::NOMINAL, Chroma::C420);
        for f in fields {
            let (tag, val) = f.split_at(f.len().min(1));
            match tag {
                "W" => width = val.parse().map_err(|_| bad(format!("bad width {val}")))?,
                "H" => height = val.parse().map_err(|_| bad(format!("bad height {val}")))?,
                "F" => {
                    let (n, d) = val
                        .split_once(':')
                        .ok_or_else(|| bad(format!("bad frame rate {val}")))?;
                    fps = Fps {
                        num: n.parse().map_err(|_| bad(format!("bad frame rate {val}")))?,
                        den: d.parse().map_err(|_| bad(format!("bad frame rate {val}")))?,
                    };
                }
                "C" => {
                    chroma = if matches!(val, "420" | "420jpeg" | "420mpeg2" | "420paldv") {
                        Chroma::C420
                    } else if val == "422" {
                        Chroma::C422
                    } else if val == "444" {
                        Chroma::C444
                    } else if val == "mono" {
                        Chroma::Mono
                    } else {
                        return Err(bad(format!("unsupported colorspace C{val}")));
                    }
                }
                _ => {}
            }
        }
        if width == 0 || height == 0 {
            return Err(bad("header lacks frame dimensions".into()));
        }
        let frame_bytes = frame_size(width, height, chroma);

        let mut offsets = Vec::new();
        let mut pos = header.len() as u64;
        loop {
            let mut line = Vec::new();
            let n = reader.read_until(b'\n', &mut line).map_err(io)?;
            if n == 0 {
                break;
            }
            if !line.starts_with(b"FRAME") {
                return Err(bad(format!("expected FRAME marker at byte {pos}")));
            }
            pos += n as u64;
            if pos + frame_bytes > total {
                return Err(bad(format!("truncated frame {}", offsets.len())));
            }
            offsets.push(pos);
            reader
                .seek(SeekFrom::Current(frame_bytes as i64))
                .map_err(io)?;
            pos += frame_bytes;
        }
        Ok(Self {
            path: path.to_path_buf(),
            width,
            height,
            fps,
            chroma,
            offsets,
        })
    }
}

fn chroma_dims(width: u32, height: u32, chroma: Chroma) -> (u32, u32) {
    match chroma {
        Chroma::C420 => (width.div_ceil(2), height.div_ceil(2)),
        Chroma::C422 => (width.div_ceil(2), height),
        Chroma::C444 => (width, height),
        Chroma::Mono => (0, 0),
    }
}

fn frame_size(width: u32, height: u32, chroma: Chroma) -> u64 {
    let (cw, ch) = chroma_dims(width, height, chroma);
    width as u64 * height as u64 + 2 * cw as u64 * ch as u64
}

/// BT.601 limited-range YUV to RGB, integer form.
fn yuv_to_rgb(y: u8, u: u8, v: u8) -> [u8; 3] {
    let c = y as i32 - 16;
    let d = u as i32 - 128;
    let e = v as i32 - 128;
    let clip = |x: i32| x.clamp(0, 255) as u8;
    [
        clip((298 * c + 409 * e + 128) >> 8),
        clip((298 * c - 100 * d - 208 * e + 128) >> 8),
        clip((298 * c + 516 * d + 128) >> 8),
    ]
}

impl FrameSource for Y4mSource {
    fn probe(&self) -> Result<StreamProbe, VideoError> {
        Ok(StreamProbe {
            frame_count: self.offsets.len() as u64,
            fps: self.fps,
            width: self.width,
            height: self.height,
        })
    }

    fn read_frames(&self, indices: &[u64]) -> Result<Vec<RgbImage>, VideoError> {
        let io = |source| VideoError::Io {
            path: self.path.clone(),
            source,
        };
        let mut file = File::open(&self.path).map_err(io)?;
        let (w, h) = (self.width, self.height);
        let (cw, ch) = chroma_dims(w, h, self.chroma);
        let mut buf = vec![0u8; frame_size(w, h, self.chroma) as usize];
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let offset = *self
                .offsets
                .get(i as usize)
                .ok_or_else(|| VideoError::InvalidInput(format!("frame {i} out of range")))?;
            file.seek(SeekFrom::Start(offset)).map_err(io)?;
            file.read_exact(&mut buf).map_err(io)?;
            let luma = &buf[..(w * h) as usize];
            let plane = (cw * ch) as usize;
            let (u_plane, v_plane) = buf[(w * h) as usize..].split_at(plane);
            let img = RgbImage::from_fn(w, h, |x, y| {
                let yv = luma[(y * w + x) as usize];
                if self.chroma == Chroma::Mono {
                    return image::Rgb([yv, yv, yv]);
                }
                let (cx, cy) = match self.chroma {
                    Chroma::C420 => (x / 2, y / 2),
                    Chroma::C422 => (x / 2, y),
                    _ => (x, y),
                };
                let ci = (cy * cw + cx) as usize;
                image::Rgb(yuv_to_rgb(yv, u_plane[ci], v_plane[ci]))
            });
            out.push(img);
        }
        Ok(out)
    }
}

/// Decodes through an `ffmpeg` subprocess.
#[derive(Debug, Clone)]
pub struct FfmpegSource {
    path: PathBuf,
    ffmpeg: PathBuf,
    probed: OnceLock<StreamProbe>,
}

impl FfmpegSource {
    pub fn new(path: &Path, ffmpeg: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            ffmpeg: ffmpeg.to_path_buf(),
            probed: OnceLock::new(),
        }
    }

    fn fail(&self, message: impl Into<String>) -> VideoError {
        VideoError::Decode {
            path: self.path.clone(),
            message: message.into(),
        }
    }

    fn run(&self, args: &[&str]) -> Result<(Vec<u8>, String), VideoError> {
        let output = Command::new(&self.ffmpeg)
            .args(["-hide_banner", "-nostdin", "-i"])
            .arg(&self.path)
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| self.fail(format!("cannot run {}: {e}", self.ffmpeg.display())))?;
        let stderr = String::from_utf8_lossy(&output.stderr).into_owned();
        if !output.status.success() {
            return Err(self.fail(format!(
                "{} exited with {}: {}",
                self.ffmpeg.display(),
                output.status,
                tail(&stderr, 800)
            )));
        }
        Ok((output.stdout, stderr))
    }
}

fn tail(s: &str, n: usize) -> &str {
    let s = s.trim_end();
    let mut start = s.len().saturating_sub(n);
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

fn stream_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Stream #\d+:\d+.*?: Video: .*?, (\d+)x(\d+)").unwrap())
}

fn fps_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d+(?:\.\d+)?)(k?) (?:fps|tbr)").unwrap())
}

fn parse_fps(line: &str) -> Option<Fps> {
    let caps = fps_regex().captures(line)?;
    let mut v: f64 = caps[1].parse().ok()?;
    if &caps[2] == "k" {
        v *= 1000.0;
    }
    if v <= 0.0 {
        return None;
    }
    if (v - v.round()).abs() < 1e-6 {
        return Some(Fps {
            num: v.round() as u32,
            den: 1,
        });
    }
    // NTSC-style rates print as 29.97, 59.94, ...
    let ntsc = (v * 1.001).round();
    if (ntsc / 1.001 - v).abs() < 0.01 {
        return Some(Fps {
            num: ntsc as u32 * 1000,
            den: 1001,
        });
    }
    Some(Fps {
        num: (v * 1000.0).round() as u32,
        den: 1000,
    })
}

impl FrameSource for FfmpegSource {
    fn probe(&self) -> Result<StreamProbe, VideoError> {
        if let Some(p) = self.probed.get() {
            return Ok(*p);
        }
        let (stdout, stderr) = self.run(&[
            "-map", "0:v:0", "-f", "null", "-progress", "pipe:1", "-nostats", "-",
        ])?;
        let progress = String::from_utf8_lossy(&stdout);
        let frame_count = progress
            .lines()
            .filter_map(|l| l.strip_prefix("frame="))
            .filter_map(|v| v.trim().parse::<u64>().ok())
            .last()
            .ok_or_else(|| self.fail("decoder reported no frame count"))?;
        let stream_line = stderr
            .lines()
            .find(|l| stream_regex().is_match(l))
            .ok_or_else(|| self.fail(format!("no video stream: {}", tail(&stderr, 400))))?;
        let caps = stream_regex().captures(stream_line).expect("matched above");
        let width = caps[1].parse().map_err(|_| self.fail("bad width"))?;
        let height = caps[2].parse().map_err(|_| self.fail("bad height"))?;
        let fps = parse_fps(stream_line).unwrap_or(Fps::NOMINAL);
        let p = StreamProbe {
            frame_count,
            fps,
            width,
            height,
        };
        let _ = self.probed.set(p);
        Ok(p)
    }

    fn read_frames(&self, indices: &[u64]) -> Result<Vec<RgbImage>, VideoError> {
        if indices.is_empty() {
            return Ok(Vec::new());
        }
        let probe = self.probe()?;
        let select = indices
            .iter()
            .map(|i| format!("eq(n\\,{i})"))
            .collect::<Vec<_>>()
            .join("+");
        let filter = format!("select={select}");
        let (stdout, _) = self.run(&[
            "-map",
            "0:v:0",
            "-vf",
            &filter,
            "-fps_mode",
            "passthrough",
            "-f",
            "rawvideo",
            "-pix_fmt",
            "rgb24",
            "-",
        ])?;
        let frame_len = probe.width as usize * probe.height as usize * 3;
        if frame_len == 0 || stdout.len() % frame_len != 0 {
            return Err(self.fail(format!(
                "raw output of {} bytes is not a whole number of {}x{} frames",
                stdout.len(),
                probe.width,
                probe.height
            )));
        }
        stdout
            .chunks_exact(frame_len)
            .map(|c| {
                RgbImage::from_raw(probe.width, probe.height, c.to_vec())
                    .ok_or_else(|| self.fail("frame buffer size mismatch"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bt601_reference_points() {
        assert_eq!(yuv_to_rgb(16, 128, 128), [0, 0, 0]);
        assert_eq!(yuv_to_rgb(235, 128, 128), [255, 255, 255]);
        assert_eq!(yuv_to_rgb(126, 128, 128), [128, 128, 128]);
    }

    #[test]
    fn fps_parsing() {
        assert_eq!(
            parse_fps("Stream #0:0: Video: ffv1, yuv420p, 32x24, 30 fps, 30 tbr"),
            Some(Fps { num: 30, den: 1 })
        );
        assert_eq!(
            parse_fps("Video: h264, 1280x720, 29.97 fps"),
            Some(Fps { num: 30000, den: 1001 })
        );
        assert_eq!(parse_fps("Video: h264, 1280x720"), None);
    }

    #[test]
    fn y4m_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.y4m");
        std::fs::write(&p, b"not a video\n").unwrap();
        assert!(matches!(Y4mSource::open(&p), Err(VideoError::Decode { .. })));
    }

    #[test]
    fn y4m_detects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short.y4m");
        let mut bytes = b"YUV4MPEG2 W4 H2 F30:1 C444\nFRAME\n".to_vec();
        bytes.extend_from_slice(&[0u8; 10]);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(Y4mSource::open(&p), Err(VideoError::Decode { .. })));
    }

    #[test]
    fn y4m_mono_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mono.y4m");
        let mut bytes = b"YUV4MPEG2 W2 H2 F25:1 Cmono\n".to_vec();
        for f in 0..3u8 {
            bytes.extend_from_slice(b"FRAME\n");
            bytes.extend_from_slice(&[f, f + 10, f + 20, f + 30]);
        }
        std::fs::write(&p, bytes).unwrap();
        let src = Y4mSource::open(&p).unwrap();
        let probe = src.probe().unwrap();
        assert_eq!(probe.frame_count, 3);
        assert_eq!(probe.fps, Fps { num: 25, den: 1 });
        let frames = src.read_frames(&[2]).unwrap();
        assert_eq!(frames[0].get_pixel(1, 1).0, [32, 32, 32]);
    }
}
