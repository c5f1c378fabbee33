//! Image and depth-map buffers with the file formats the harness writes.
//!
//! Images are written as binary PPM (`P6`, 8-bit). Depth maps are written as
//! row-major little-endian `f32` raw data plus a one-line text sidecar
//! `<width> <height> <sentinel>`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Camera;

pub type Rgb = [f64; 3];

/// Value written for background pixels in raw depth files.
pub const DEPTH_SENTINEL: f32 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "{} pixels supplied for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: Rgb) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, mut f: impl FnMut(Rgb) -> Rgb) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Bilinear fetch at a continuous pixel coordinate (pixel centers at
    /// `i + 0.5`). Returns `None` outside the hull of pixel centers; out of
    /// image fetches are never clamped.
    pub fn bilinear(&self, px: [f64; 2]) -> Option<Rgb> {
        let x = px[0] - 0.5;
        let y = px[1] - 0.5;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            out[k] = top + (bottom - top) * fy;
        }
        Some(out)
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 3);
        for p in &self.data {
            for &c in p {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm_bytes(&bytes).map_err(|message| Error::Format {
            path: path.display().to_string(),
            message,
        })
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> std::result::Result<Image, String> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P6" {
            return Err(format!("unsupported magic {:?}", fields[0]));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| format!("bad header field {s:?}: {e}"));
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(format!("only 8-bit PPM is supported, maxval {maxval}"));
        }
        let body = &bytes[pos + 1..];
        if body.len() < width * height * 3 {
            return Err("truncated pixel data".into());
        }
        let data = body
            .chunks_exact(3)
            .take(width * height)
            .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
            .collect();
        Ok(Image { width, height, data })
    }
}

/// Per-pixel depth, `None` marking background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<Option<f64>>,
    /// Opacity threshold below which a pixel was declared background.
    pub eps_bg: f64,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, eps_bg: f64) -> Self {
        Self {
            width,
            height,
            data: vec![None; width * height],
            eps_bg,
        }
    }

    pub fn from_values(width: usize, height: usize, data: Vec<Option<f64>>, eps_bg: f64) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "{} depths supplied for a {width}x{height} map",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            eps_bg,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [Option<f64>] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, d: Option<f64>) {
        self.data[y * self.width + x] = d;
    }

    pub fn to_raw_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|d| d.map_or(DEPTH_SENTINEL, |v| v as f32).to_le_bytes())
            .collect()
    }

    pub fn header_line(&self) -> String {
        format!("{} {} {}\n", self.width, self.height, DEPTH_SENTINEL)
    }

    /// Writes `path` (raw floats) and `path.hdr` (sidecar header).
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_raw_bytes()).map_err(|e| Error::io(path, e))?;
        let hdr = sidecar_path(path);
        fs::write(&hdr, self.header_line()).map_err(|e| Error::io(&hdr, e))
    }

    pub fn read_raw(path: &Path) -> Result<DepthMap> {
        let hdr = sidecar_path(path);
        let header = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
        let bad = |message: String| Error::Format {
            path: hdr.display().to_string(),
            message,
        };
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected 3 header fields, found {}", parts.len())));
        }
        let width: usize = parts[0].parse().map_err(|e| bad(format!("width: {e}")))?;
        let height: usize = parts[1].parse().map_err(|e| bad(format!("height: {e}")))?;
        let sentinel: f32 = parts[2].parse().map_err(|e| bad(format!("sentinel: {e}")))?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != width * height * 4 {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: format!("expected {} bytes, found {}", width * height * 4, bytes.len()),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                (v != sentinel).then_some(v as f64)
            })
            .collect();
        Ok(DepthMap {
            width,
            height,
            data,
            eps_bg: 0.0,
        })
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// A reference photograph together with the camera that took it.
#[derive(Debug, Clone)]
pub struct PosedImage {
    pub camera: Camera,
    pub image: Image,
}

/// Writes a row-major little-endian `f32` buffer, used for debug dumps.
pub fn write_f32_raw(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let bytes: Vec<u8> = values.into_iter().flat_map(|v| (v as f32).to_le_bytes()).collect();
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}
