//! Orthonormal periodic discrete wavelet transform (1-D and 2-D) together with
//! the quad-tree / binary-tree parent-child relation and the same-subband
//! 3x3 neighbourhood used by the support prior.
//!
//! Coefficients are serialized coarse-to-fine. Scale `0` is the approximation
//! subband, scale `1` the coarsest detail scale and scale `levels` the finest.
//! Inside a 2-D detail scale the subbands are stored in `LH`, `HL`, `HH`
//! order, each subband row-major.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Daubechies filter with two vanishing moments (four taps).
const DB4: [f64; 4] = [
    0.482_962_913_144_534_1,
    0.836_516_303_737_807_9,
    0.224_143_868_042_013_4,
    -0.129_409_522_551_260_4,
];

const HAAR: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Wavelet {
    Haar,
    #[default]
    Daubechies4,
}

impl Wavelet {
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &HAAR,
            Wavelet::Daubechies4 => &DB4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Wavelet::Haar => "haar",
            Wavelet::Daubechies4 => "db4",
        }
    }
}

impl FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haar" => Ok(Wavelet::Haar),
            "db4" | "daubechies4" | "daubechies-4" => Ok(Wavelet::Daubechies4),
            other => Err(Error::Layout(format!("unknown wavelet '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// 1-D approximation.
    Approx,
    /// 1-D detail.
    Detail,
    LL,
    LH,
    HL,
    HH,
}

impl Orientation {
    fn tag(self) -> &'static str {
        match self {
            Orientation::Approx => "A",
            Orientation::Detail => "D",
            Orientation::LL => "LL",
            Orientation::LH => "LH",
            Orientation::HL => "HL",
            Orientation::HH => "HH",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "A" => Orientation::Approx,
            "D" => Orientation::Detail,
            "LL" => Orientation::LL,
            "LH" => Orientation::LH,
            "HL" => Orientation::HL,
            "HH" => Orientation::HH,
            _ => return None,
        })
    }

    pub fn is_approx(self) -> bool {
        matches!(self, Orientation::Approx | Orientation::LL)
    }
}

/// Shape of the signal a pyramid was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Line(usize),
    Square(usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Line(n) => n,
            Shape::Square(side) => side * side,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subband {
    pub scale: usize,
    pub orientation: Orientation,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Subband {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PyramidLayout {
    shape: Shape,
    levels: usize,
    subbands: Vec<Subband>,
}

fn check_divisible(dimension: &'static str, size: usize, levels: usize) -> Result<()> {
    if levels == 0 || levels >= usize::BITS as usize || size == 0 || size % (1usize << levels) != 0
    {
        return Err(Error::DimensionNotDivisible {
            dimension,
            size,
            levels,
        });
    }
    Ok(())
}

impl PyramidLayout {
    pub fn new(shape: Shape, levels: usize) -> Result<Self> {
        let mut subbands = Vec::with_capacity(3 * levels + 1);
        match shape {
            Shape::Line(n) => {
                check_divisible("length", n, levels)?;
                let base = n >> levels;
                subbands.push(Subband {
                    scale: 0,
                    orientation: Orientation::Approx,
                    offset: 0,
                    rows: 1,
                    cols: base,
                });
                for s in 1..=levels {
                    let count = n >> (levels - s + 1);
                    subbands.push(Subband {
                        scale: s,
                        orientation: Orientation::Detail,
                        offset: count,
                        rows: 1,
                        cols: count,
                    });
                }
            }
            Shape::Square(side) => {
                check_divisible("side", side, levels)?;
                let base = side >> levels;
                subbands.push(Subband {
                    scale: 0,
                    orientation: Orientation::LL,
                    offset: 0,
                    rows: base,
                    cols: base,
                });
                let mut offset = base * base;
                for s in 1..=levels {
                    let b = side >> (levels - s + 1);
                    for orientation in [Orientation::LH, Orientation::HL, Orientation::HH] {
                        subbands.push(Subband {
                            scale: s,
                            orientation,
                            offset,
                            rows: b,
                            cols: b,
                        });
                        offset += b * b;
                    }
                }
            }
        }
        Ok(PyramidLayout {
            shape,
            levels,
            subbands,
        })
    }

    /// Rebuilds a layout from explicit parts, rejecting anything that is not
    /// exactly what [`PyramidLayout::new`] would produce.
    pub fn from_parts(shape: Shape, levels: usize, subbands: Vec<Subband>) -> Result<Self> {
        let total: usize = subbands.iter().map(Subband::count).sum();
        if total != shape.len() {
            return Err(Error::Layout(format!(
                "subband counts sum to {total}, expected {}",
                shape.len()
            )));
        }
        let approx = subbands
            .iter()
            .filter(|b| b.orientation.is_approx())
            .count();
        if approx != 1 {
            return Err(Error::Layout(format!(
                "expected exactly one approximation subband, found {approx}"
            )));
        }
        let reference = PyramidLayout::new(shape, levels)?;
        if reference.subbands != subbands {
            return Err(Error::Layout(
                "subband table does not match a dyadic decomposition".into(),
            ));
        }
        Ok(reference)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subbands(&self) -> &[Subband] {
        &self.subbands
    }

    pub fn num_scales(&self) -> usize {
        self.levels + 1
    }

    /// Number of coefficients at each scale (all orientations together).
    pub fn scale_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_scales()];
        for b in &self.subbands {
            counts[b.scale] += b.count();
        }
        counts
    }

    /// Scale of every coefficient position.
    pub fn scales(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for b in &self.subbands {
            out[b.offset..b.offset + b.count()].fill(b.scale);
        }
        out
    }

    /// Subband index and local (row, col) of a coefficient position.
    pub fn locate(&self, position: usize) -> Option<(usize, usize, usize)> {
        self.subbands.iter().enumerate().find_map(|(k, b)| {
            (position >= b.offset && position < b.offset + b.count()).then(|| {
                let local = position - b.offset;
                (k, local / b.cols, local % b.cols)
            })
        })
    }

    pub fn position(&self, band: usize, row: usize, col: usize) -> Option<usize> {
        let b = self.subbands.get(band)?;
        (row < b.rows && col < b.cols).then(|| b.offset + row * b.cols + col)
    }

    pub fn find_band(&self, scale: usize, orientation: Orientation) -> Option<usize> {
        self.subbands
            .iter()
            .position(|b| b.scale == scale && b.orientation == orientation)
    }

    /// Key-value header lines, one per line, parseable by [`PyramidLayout::from_header`].
    pub fn to_header(&self) -> String {
        let mut out = String::new();
        let shape = match self.shape {
            Shape::Line(n) => format!("line:{n}"),
            Shape::Square(side) => format!("square:{side}"),
        };
        out.push_str(&format!("layout.shape={shape}\n"));
        out.push_str(&format!("layout.levels={}\n", self.levels));
        for (k, b) in self.subbands.iter().enumerate() {
            out.push_str(&format!(
                "layout.subband.{k}={},{},{},{},{}\n",
                b.scale,
                b.orientation.tag(),
                b.offset,
                b.rows,
                b.cols
            ));
        }
        out
    }

    pub fn from_header(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse { line, message };
        let mut shape = None;
        let mut levels = None;
        let mut subbands = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let Some((key, value)) = raw.split_once('=') else {
                return Err(bad(line, "expected key=value".into()));
            };
            let (key, value) = (key.trim(), value.trim());
            if key == "layout.shape" {
                let (kind, size) = value
                    .split_once(':')
                    .ok_or_else(|| bad(line, "shape must be kind:size".into()))?;
                let size: usize = size
                    .parse()
                    .map_err(|_| bad(line, format!("bad size '{size}'")))?;
                shape = Some(match kind {
                    "line" => Shape::Line(size),
                    "square" => Shape::Square(size),
                    _ => return Err(bad(line, format!("unknown shape '{kind}'"))),
                });
            } else if key == "layout.levels" {
                levels = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| bad(line, format!("bad levels '{value}'")))?,
                );
            } else if let Some(k) = key.strip_prefix("layout.subband.") {
                let k: usize = k
                    .parse()
                    .map_err(|_| bad(line, format!("bad subband index '{k}'")))?;
                if k != subbands.len() {
                    return Err(bad(line, format!("subband {k} out of order")));
                }
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 5 {
                    return Err(bad(line, "subband needs 5 fields".into()));
                }
                let num = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| bad(line, format!("bad number '{s}'")))
                };
                subbands.push(Subband {
                    scale: num(parts[0])?,
                    orientation: Orientation::from_tag(parts[1])
                        .ok_or_else(|| bad(line, format!("bad orientation '{}'", parts[1])))?,
                    offset: num(parts[2])?,
                    rows: num(parts[3])?,
                    cols: num(parts[4])?,
                });
            } else {
                return Err(bad(line, format!("unknown key '{key}'")));
            }
        }
        let shape = shape.ok_or_else(|| Error::Layout("missing layout.shape".into()))?;
        let levels = levels.ok_or_else(|| Error::Layout("missing layout.levels".into()))?;
        Self::from_parts(shape, levels, subbands)
    }
}

/// A signal in the sample domain.
#[derive(Clone, Debug, PartialEq)]
pub enum Signal {
    Line(Vec<f64>),
    /// Row-major `rows x cols` grid.
    Grid {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
}

impl Signal {
    pub fn square(side: usize, data: Vec<f64>) -> Self {
        Signal::Grid {
            rows: side,
            cols: side,
            data,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Signal::Line(v) => v,
            Signal::Grid { data, .. } => data,
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        match self {
            Signal::Line(v) => v,
            Signal::Grid { data, .. } => data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    pub layout: PyramidLayout,
    pub wavelet: Wavelet,
    pub coeffs: Vec<f64>,
}

#[inline]
fn highpass(h: &[f64], k: usize) -> f64 {
    let v = h[h.len() - 1 - k];
    if k % 2 == 0 {
        v
    } else {
        -v
    }
}

fn analyze(input: &[f64], h: &[f64], approx: &mut [f64], detail: &mut [f64]) {
    let n = input.len();
    for j in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for k in 0..h.len() {
            let x = input[(2 * j + k) % n];
            a += h[k] * x;
            d += highpass(h, k) * x;
        }
        approx[j] = a;
        detail[j] = d;
    }
}

fn synthesize(approx: &[f64], detail: &[f64], h: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    for j in 0..n / 2 {
        for k in 0..h.len() {
            out[(2 * j + k) % n] += h[k] * approx[j] + highpass(h, k) * detail[j];
        }
    }
}

/// One analysis step on `buf[..m]` in place: `[a | d]`.
fn analyze_in_place(buf: &mut [f64], m: usize, h: &[f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(&buf[..m]);
    let (a, d) = buf[..m].split_at_mut(m / 2);
    analyze(scratch, h, a, d);
}

fn synthesize_in_place(buf: &mut [f64], m: usize, h: &[f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.resize(m, 0.0);
    let (a, d) = buf[..m].split_at(m / 2);
    synthesize(a, d, h, scratch);
    buf[..m].copy_from_slice(scratch);
}

fn mallat_2d(data: &mut [f64], side: usize, levels: usize, h: &[f64], forward: bool) {
    let mut line = vec![0.0; side];
    let mut scratch = Vec::with_capacity(side);
    let level_order: Vec<usize> = if forward {
        (0..levels).collect()
    } else {
        (0..levels).rev().collect()
    };
    for level in level_order {
        let m = side >> level;
        if forward {
            for r in 0..m {
                analyze_in_place(&mut data[r * side..r * side + m], m, h, &mut scratch);
            }
            for c in 0..m {
                for r in 0..m {
                    line[r] = data[r * side + c];
                }
                analyze_in_place(&mut line, m, h, &mut scratch);
                for r in 0..m {
                    data[r * side + c] = line[r];
                }
            }
        } else {
            for c in 0..m {
                for r in 0..m {
                    line[r] = data[r * side + c];
                }
                synthesize_in_place(&mut line, m, h, &mut scratch);
                for r in 0..m {
                    data[r * side + c] = line[r];
                }
            }
            for r in 0..m {
                synthesize_in_place(&mut data[r * side..r * side + m], m, h, &mut scratch);
            }
        }
    }
}

/// (row0, col0) of a subband inside the in-place Mallat arrangement.
fn mallat_origin(b: &Subband) -> (usize, usize) {
    match b.orientation {
        Orientation::LL | Orientation::Approx => (0, 0),
        Orientation::LH => (b.rows, 0),
        Orientation::HL => (0, b.cols),
        Orientation::HH => (b.rows, b.cols),
        Orientation::Detail => (0, b.cols),
    }
}

pub fn forward_dwt(signal: &Signal, levels: usize, wavelet: Wavelet) -> Result<WaveletPyramid> {
    let h = wavelet.lowpass();
    match signal {
        Signal::Line(x) => {
            let layout = PyramidLayout::new(Shape::Line(x.len()), levels)?;
            let mut buf = x.clone();
            let mut scratch = Vec::with_capacity(x.len());
            for level in 0..levels {
                analyze_in_place(&mut buf, x.len() >> level, h, &mut scratch);
            }
            Ok(WaveletPyramid {
                layout,
                wavelet,
                coeffs: buf,
            })
        }
        Signal::Grid { rows, cols, data } => {
            if rows != cols {
                return Err(Error::DimensionMismatch(format!(
                    "grid must be square, got {rows}x{cols}"
                )));
            }
            if data.len() != rows * cols {
                return Err(Error::DimensionMismatch(format!(
                    "grid holds {} values, expected {}",
                    data.len(),
                    rows * cols
                )));
            }
            let side = *rows;
            let layout = PyramidLayout::new(Shape::Square(side), levels)?;
            let mut buf = data.clone();
            mallat_2d(&mut buf, side, levels, h, true);
            let mut coeffs = vec![0.0; side * side];
            for b in layout.subbands() {
                let (r0, c0) = mallat_origin(b);
                for r in 0..b.rows {
                    let src = (r0 + r) * side + c0;
                    let dst = b.offset + r * b.cols;
                    coeffs[dst..dst + b.cols].copy_from_slice(&buf[src..src + b.cols]);
                }
            }
            Ok(WaveletPyramid {
                layout,
                wavelet,
                coeffs,
            })
        }
    }
}

pub fn inverse_dwt(pyramid: &WaveletPyramid) -> Result<Signal> {
    let layout = &pyramid.layout;
    let counted: usize = layout.subbands().iter().map(Subband::count).sum();
    if counted != layout.len() || pyramid.coeffs.len() != layout.len() {
        return Err(Error::Layout(format!(
            "subbands cover {counted} positions, layout expects {}, pyramid holds {}",
            layout.len(),
            pyramid.coeffs.len()
        )));
    }
    let h = pyramid.wavelet.lowpass();
    match layout.shape() {
        Shape::Line(n) => {
            let mut buf = pyramid.coeffs.clone();
            let mut scratch = Vec::with_capacity(n);
            for level in (0..layout.levels()).rev() {
                synthesize_in_place(&mut buf, n >> level, h, &mut scratch);
            }
            Ok(Signal::Line(buf))
        }
        Shape::Square(side) => {
            let mut buf = vec![0.0; side * side];
            for b in layout.subbands() {
                let (r0, c0) = mallat_origin(b);
                for r in 0..b.rows {
                    let dst = (r0 + r) * side + c0;
                    let src = b.offset + r * b.cols;
                    buf[dst..dst + b.cols].copy_from_slice(&pyramid.coeffs[src..src + b.cols]);
                }
            }
            mallat_2d(&mut buf, side, layout.levels(), h, false);
            Ok(Signal::square(side, buf))
        }
    }
}

/// Parent / children / neighbour relations over pyramid positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeIndex {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    scale: Vec<usize>,
}

impl fmt::Display for TreeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TreeIndex({} positions)", self.parent.len())
    }
}

pub fn build_tree_index(layout: &PyramidLayout) -> TreeIndex {
    let n = layout.len();
    let two_d = matches!(layout.shape(), Shape::Square(_));
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut neighbors = vec![Vec::new(); n];

    for (band_idx, b) in layout.subbands().iter().enumerate() {
        let coarser = (b.scale >= 2)
            .then(|| layout.find_band(b.scale - 1, b.orientation))
            .flatten();
        let finer = (b.scale >= 1 && b.scale < layout.levels())
            .then(|| layout.find_band(b.scale + 1, b.orientation))
            .flatten();
        for r in 0..b.rows {
            for c in 0..b.cols {
                let i = b.offset + r * b.cols + c;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if rr < 0 || cc < 0 || rr >= b.rows as i64 || cc >= b.cols as i64 {
                            continue;
                        }
                        neighbors[i].push(b.offset + rr as usize * b.cols + cc as usize);
                    }
                }
                if let Some(pb) = coarser {
                    parent[i] = layout.position(pb, r / 2, c / 2);
                }
                if let Some(cb) = finer {
                    if two_d {
                        for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            children[i].extend(layout.position(cb, 2 * r + dr, 2 * c + dc));
                        }
                    } else {
                        for dc in 0..2 {
                            children[i].extend(layout.position(cb, 0, 2 * c + dc));
                        }
                    }
                }
                let _ = band_idx;
            }
        }
    }
    TreeIndex {
        parent,
        children,
        neighbors,
        scale: layout.scales(),
    }
}

impl TreeIndex {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, position: usize) -> Option<usize> {
        self.parent[position]
    }

    pub fn children(&self, position: usize) -> &[usize] {
        &self.children[position]
    }

    pub fn neighbors(&self, position: usize) -> &[usize] {
        &self.neighbors[position]
    }

    pub fn scale(&self, position: usize) -> usize {
        self.scale[position]
    }

    /// Root scales (approximation and coarsest detail) carry no
    /// parent/neighbour conditioning.
    pub fn is_root(&self, position: usize) -> bool {
        self.scale[position] <= 1
    }

    /// 1 iff the fraction of active neighbours strictly exceeds `threshold_fraction`.
    pub fn neighbor_state(&self, z: &[bool], position: usize, threshold_fraction: f64) -> bool {
        self.neighbor_state_by(|j| z[j], position, threshold_fraction)
    }

    pub fn neighbor_state_by(
        &self,
        active: impl Fn(usize) -> bool,
        position: usize,
        threshold_fraction: f64,
    ) -> bool {
        let nb = &self.neighbors[position];
        if nb.is_empty() {
            return false;
        }
        let on = nb.iter().filter(|&&j| active(j)).count();
        on as f64 / nb.len() as f64 > threshold_fraction
    }
}
