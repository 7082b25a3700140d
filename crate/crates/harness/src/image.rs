//! Grayscale grids, portable graymap I/O and block tiling.

use std::path::Path;

use crate::error::{io_err, Error, Result};

/// Largest accepted pixel count.
pub const MAX_PIXELS: usize = 1 << 26;

/// Row-major grayscale image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Mismatch(format!(
                "{rows}x{cols} grid with {} values",
                data.len()
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Pgm {
            offset: self.pos,
            message: message.into(),
        })
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && !matches!(self.bytes[self.pos], b'\n' | b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str, allow_comments: bool) -> Result<u32> {
        if allow_comments {
            self.skip_space();
        } else {
            while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_whitespace()) {
                self.pos += 1;
            }
        }
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = match value.checked_mul(10).and_then(|v| v.checked_add((b - b'0') as u32)) {
                Some(v) => v,
                None => return self.fail(format!("{what} overflows")),
            };
            self.pos += 1;
        }
        if self.pos == start {
            return match self.bytes.get(self.pos) {
                None => self.fail(format!("truncated: expected {what}")),
                Some(&b) => self.fail(format!("expected {what}, found byte 0x{b:02x}")),
            };
        }
        Ok(value)
    }
}

/// Decodes a binary (`P5`) or ASCII (`P2`) graymap, scaling samples by `1 / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Grid> {
    let mut cur = Cursor { bytes, pos: 0 };
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        Some(_) => return cur.fail("magic must be P2 or P5"),
        None => return cur.fail("truncated: missing magic"),
    };
    cur.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return cur.fail("expected whitespace after magic");
    }
    let cols = cur.number("width", true)? as usize;
    let rows = cur.number("height", true)? as usize;
    let maxval = cur.number("maxval", true)?;
    if cols == 0 || rows == 0 {
        return cur.fail("zero image dimension");
    }
    if !(1..=65535).contains(&maxval) {
        return cur.fail(format!("maxval {maxval} outside 1..=65535"));
    }
    let count = rows
        .checked_mul(cols)
        .filter(|&c| c <= MAX_PIXELS)
        .map_or_else(|| cur.fail(format!("{cols}x{rows} exceeds {MAX_PIXELS} pixels")), Ok)?;
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(count);
    if binary {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            Some(_) => return cur.fail("expected single whitespace before raster"),
            None => return cur.fail("truncated: raster missing"),
        }
        let width = if maxval > 255 { 2 } else { 1 };
        let need = count * width;
        let raster = &bytes[cur.pos..];
        if raster.len() < need {
            cur.pos += raster.len();
            return cur.fail(format!("truncated raster: {need} bytes expected, {} present", raster.len()));
        }
        for i in 0..count {
            let v = if width == 2 {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32
            } else {
                raster[i] as u32
            };
            if v > maxval {
                cur.pos += i * width;
                return cur.fail(format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as f64 * scale);
        }
    } else {
        for _ in 0..count {
            let v = cur.number("sample", false)?;
            if v > maxval {
                return cur.fail(format!("sample {v} exceeds maxval {maxval}"));
            }
            data.push(v as f64 * scale);
        }
    }
    Grid::new(rows, cols, data)
}

fn quantize(grid: &Grid) -> impl Iterator<Item = u8> + '_ {
    grid.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// 8-bit binary graymap.
pub fn encode_p5(grid: &Grid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.cols, grid.rows).into_bytes();
    out.extend(quantize(grid));
    out
}

/// 8-bit ASCII graymap, one image row per line.
pub fn encode_p2(grid: &Grid) -> String {
    let mut out = format!("P2\n{} {}\n255\n", grid.cols, grid.rows);
    let px: Vec<u8> = quantize(grid).collect();
    for row in px.chunks(grid.cols) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Loads a square graymap whose side is a power of two.
pub fn load_image(path: &Path) -> Result<Grid> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let grid = decode_pgm(&bytes)?;
    if grid.rows != grid.cols {
        return Err(Error::Image(format!("{}x{} image is not square", grid.cols, grid.rows)));
    }
    if !grid.rows.is_power_of_two() {
        return Err(Error::Image(format!("side {} is not a power of two", grid.rows)));
    }
    Ok(grid)
}

pub fn save_image(path: &Path, grid: &Grid) -> Result<()> {
    std::fs::write(path, encode_p5(grid)).map_err(io_err(path))
}

/// Cuts `grid` into `block x block` tiles in row-major tile order.
pub fn block_split(grid: &Grid, block: usize) -> Result<Vec<Grid>> {
    if block == 0 || grid.rows % block != 0 || grid.cols % block != 0 {
        return Err(Error::Image(format!(
            "block {block} does not divide {}x{}",
            grid.rows, grid.cols
        )));
    }
    let mut tiles = Vec::with_capacity(grid.rows / block * (grid.cols / block));
    for br in (0..grid.rows).step_by(block) {
        for bc in (0..grid.cols).step_by(block) {
            let mut data = Vec::with_capacity(block * block);
            for r in br..br + block {
                data.extend_from_slice(&grid.data[r * grid.cols + bc..r * grid.cols + bc + block]);
            }
            tiles.push(Grid {
                rows: block,
                cols: block,
                data,
            });
        }
    }
    Ok(tiles)
}

/// Inverse of [`block_split`] for a `rows x cols` target.
pub fn block_join(tiles: &[Grid], rows: usize, cols: usize) -> Result<Grid> {
    let Some(first) = tiles.first() else {
        return Err(Error::Image("no blocks to join".into()));
    };
    let block = first.rows;
    if first.cols != block || tiles.iter().any(|t| t.rows != block || t.cols != block) {
        return Err(Error::Image("blocks must be equal squares".into()));
    }
    if rows % block != 0 || cols % block != 0 || tiles.len() != (rows / block) * (cols / block) {
        return Err(Error::Image(format!(
            "{} blocks of side {block} cannot tile {rows}x{cols}",
            tiles.len()
        )));
    }
    let per_row = cols / block;
    let mut data = vec![0.0; rows * cols];
    for (t, tile) in tiles.iter().enumerate() {
        let (br, bc) = (t / per_row * block, t % per_row * block);
        for r in 0..block {
            let dst = (br + r) * cols + bc;
            data[dst..dst + block].copy_from_slice(&tile.data[r * block..(r + 1) * block]);
        }
    }
    Ok(Grid { rows, cols, data })
}
