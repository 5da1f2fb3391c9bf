//! Elevation grids (DSM / DHM), bilinear sampling and path profiles.
//!
//! Grids are read from ESRI-style ASCII text. Internally row 0 is the
//! southernmost row so that `(col, row)` grows with `(x, y)`.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::geodesy::{self, GeoError, GeoPoint, LocalXY};

pub const FEET_TO_METERS: f64 = 0.3048;

/// Minimum number of profile intervals regardless of path length.
pub const MIN_PROFILE_INTERVALS: usize = 64;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("malformed grid header: {0}")]
    MalformedHeader(String),
    #[error("row {row} has {found} values, expected {expected}")]
    RowLengthMismatch {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-numeric cell {token:?} in row {row}")]
    NonNumericCell { row: usize, token: String },
    #[error("point ({x:.3}, {y:.3}) is outside the grid extent")]
    OutOfExtent { x: f64, y: f64 },
    #[error("nodata cell in the sampling neighborhood of ({x:.3}, {y:.3})")]
    NoDataNeighborhood { x: f64, y: f64 },
    #[error("no valid cells within {radius} m of ({x:.3}, {y:.3})")]
    EmptyNeighborhood { x: f64, y: f64, radius: f64 },
    #[error("zero-length path")]
    ZeroLengthPath,
    #[error("profile step must be positive")]
    InvalidStep,
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Vertical/horizontal units of a grid on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Units {
    #[default]
    Meters,
    Feet,
}

impl std::str::FromStr for Units {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "meter" | "meters" | "metre" | "metres" => Ok(Units::Meters),
            "ft" | "foot" | "feet" => Ok(Units::Feet),
            other => Err(RasterError::MalformedHeader(format!("unknown units {other:?}"))),
        }
    }
}

/// A georeferenced elevation grid in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major, row 0 = southernmost.
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self, RasterError> {
        if ncols == 0 || nrows == 0 {
            return Err(RasterError::MalformedHeader("empty grid".into()));
        }
        if !(cellsize > 0.0) {
            return Err(RasterError::MalformedHeader("cellsize must be positive".into()));
        }
        if values.len() != ncols * nrows {
            return Err(RasterError::MalformedHeader(format!(
                "expected {} values, got {}",
                ncols * nrows,
                values.len()
            )));
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
        })
    }

    /// Grid filled with one value.
    pub fn constant(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, value: f64) -> Self {
        Self::new(ncols, nrows, xll, yll, cellsize, -9999.0, vec![value; ncols * nrows])
            .expect("valid constant grid")
    }

    /// Grid evaluated from `f(x, y)` at each cell center.
    pub fn from_fn(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(ncols * nrows);
        for row in 0..nrows {
            for col in 0..ncols {
                let (x, y) = (
                    xll + (col as f64 + 0.5) * cellsize,
                    yll + (row as f64 + 0.5) * cellsize,
                );
                values.push(f(x, y));
            }
        }
        Self::new(ncols, nrows, xll, yll, cellsize, -9999.0, values).expect("valid grid")
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + (row as f64 + 0.5) * self.cellsize,
        )
    }

    pub fn xmax(&self) -> f64 {
        self.xll + self.ncols as f64 * self.cellsize
    }

    pub fn ymax(&self) -> f64 {
        self.yll + self.nrows as f64 * self.cellsize
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xll && x <= self.xmax() && y >= self.yll && y <= self.ymax()
    }

    /// Converts a grid stored in feet to meters (values, origin and cell size).
    pub fn scaled(mut self, factor: f64) -> Self {
        self.xll *= factor;
        self.yll *= factor;
        self.cellsize *= factor;
        let nodata = self.nodata;
        for v in &mut self.values {
            if *v != nodata {
                *v *= factor;
            }
        }
        self
    }

    pub fn into_meters(self, units: Units) -> Self {
        match units {
            Units::Meters => self,
            Units::Feet => self.scaled(FEET_TO_METERS),
        }
    }

    /// Bilinear interpolation of cell-center values.
    ///
    /// Points between the outer cell centers and the grid edge take the edge
    /// value along the clamped axis.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Result<f64, RasterError> {
        if !self.contains(x, y) {
            return Err(RasterError::OutOfExtent { x, y });
        }
        let (c0, c1, tx) = axis_weights((x - self.xll) / self.cellsize - 0.5, self.ncols);
        let (r0, r1, ty) = axis_weights((y - self.yll) / self.cellsize - 0.5, self.nrows);
        let fetch = |c: usize, r: usize| {
            let v = self.get(c, r);
            if self.is_nodata(v) {
                Err(RasterError::NoDataNeighborhood { x, y })
            } else {
                Ok(v)
            }
        };
        // Nested lerps skip zero-weight cells and reproduce constants exactly.
        let along_x = |r: usize| -> Result<f64, RasterError> {
            let a = fetch(c0, r)?;
            if tx == 0.0 {
                return Ok(a);
            }
            let b = fetch(c1, r)?;
            Ok(a + tx * (b - a))
        };
        let lower = along_x(r0)?;
        if ty == 0.0 {
            return Ok(lower);
        }
        let upper = along_x(r1)?;
        Ok(lower + ty * (upper - lower))
    }

    /// Mean / min / max over cell centers within `radius` of `(x, y)`,
    /// nodata excluded.
    pub fn neighborhood_stats(&self, x: f64, y: f64, radius: f64) -> Result<NeighborhoodStats, RasterError> {
        let empty = || RasterError::EmptyNeighborhood { x, y, radius };
        let cs = self.cellsize;
        let col_lo = ((x - radius - self.xll) / cs - 0.5).ceil().max(0.0);
        let col_hi = ((x + radius - self.xll) / cs - 0.5).floor();
        let row_lo = ((y - radius - self.yll) / cs - 0.5).ceil().max(0.0);
        let row_hi = ((y + radius - self.yll) / cs - 0.5).floor();
        if col_hi < 0.0 || row_hi < 0.0 || col_lo > col_hi || row_lo > row_hi {
            return Err(empty());
        }
        let col_hi = (col_hi as usize).min(self.ncols - 1);
        let row_hi = (row_hi as usize).min(self.nrows - 1);
        let r2 = radius * radius;
        let (mut sum, mut n) = (0.0, 0usize);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in row_lo as usize..=row_hi {
            for col in col_lo as usize..=col_hi {
                let (cx, cy) = self.cell_center(col, row);
                if (cx - x).powi(2) + (cy - y).powi(2) > r2 {
                    continue;
                }
                let v = self.get(col, row);
                if self.is_nodata(v) {
                    continue;
                }
                sum += v;
                n += 1;
                min = min.min(v);
                max = max.max(v);
            }
        }
        if n == 0 {
            return Err(empty());
        }
        Ok(NeighborhoodStats {
            mean: sum / n as f64,
            min,
            max,
            count: n,
        })
    }

    /// Serializes in ESRI ASCII form, top row first.
    pub fn to_ascii_grid(&self, decimals: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.xll);
        let _ = writeln!(out, "yllcorner {}", self.yll);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for row in (0..self.nrows).rev() {
            let line = &self.values[row * self.ncols..(row + 1) * self.ncols];
            for (i, v) in line.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                if *v == self.nodata {
                    let _ = write!(out, "{}", self.nodata);
                } else {
                    let _ = write!(out, "{:.*}", decimals, v);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn axis_weights(f: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let f = f.clamp(0.0, (n - 1) as f64);
    let i0 = (f.floor() as usize).min(n - 2);
    (i0, i0 + 1, f - i0 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Parses an ESRI ASCII grid.
pub fn parse_ascii_grid(mut reader: impl Read) -> Result<Raster, RasterError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    parse_ascii_grid_str(&text)
}

pub fn read_ascii_grid(path: &Path, units: Units) -> Result<Raster, RasterError> {
    let file = std::fs::File::open(path)?;
    Ok(parse_ascii_grid(std::io::BufReader::new(file))?.into_meters(units))
}

fn parse_ascii_grid_str(text: &str) -> Result<Raster, RasterError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();

    let (mut ncols, mut nrows, mut xll, mut yll, mut cellsize) = (None, None, None, None, None);
    let mut nodata = -9999.0;
    let mut center_registered = (false, false);
    while let Some(line) = lines.peek() {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_lowercase();
        if key.parse::<f64>().is_ok() {
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| RasterError::MalformedHeader(format!("missing value for {key}")))?;
        let num: f64 = value
            .parse()
            .map_err(|_| RasterError::MalformedHeader(format!("bad value for {key}: {value}")))?;
        match key.as_str() {
            "ncols" => ncols = Some(num as usize),
            "nrows" => nrows = Some(num as usize),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => {
                xll = Some(num);
                center_registered.0 = true;
            }
            "yllcenter" => {
                yll = Some(num);
                center_registered.1 = true;
            }
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = num,
            other => return Err(RasterError::MalformedHeader(format!("unknown key {other}"))),
        }
        lines.next();
    }
    let missing = |k: &str| RasterError::MalformedHeader(format!("missing {k}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let mut xll = xll.ok_or_else(|| missing("xllcorner"))?;
    let mut yll = yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    if center_registered.0 {
        xll -= cellsize / 2.0;
    }
    if center_registered.1 {
        yll -= cellsize / 2.0;
    }
    if ncols == 0 || nrows == 0 {
        return Err(RasterError::MalformedHeader("empty grid".into()));
    }

    let mut values = vec![0.0; ncols * nrows];
    let mut file_row = 0;
    for line in lines {
        if file_row >= nrows {
            return Err(RasterError::MalformedHeader(format!(
                "more than {nrows} data rows"
            )));
        }
        let row = nrows - 1 - file_row;
        let mut count = 0;
        for (col, token) in line.split_whitespace().enumerate() {
            if col >= ncols {
                count = col + 1;
                continue;
            }
            let v: f64 = token.parse().map_err(|_| RasterError::NonNumericCell {
                row: file_row,
                token: token.to_string(),
            })?;
            values[row * ncols + col] = v;
            count = col + 1;
        }
        if count != ncols {
            return Err(RasterError::RowLengthMismatch {
                row: file_row,
                found: count,
                expected: ncols,
            });
        }
        file_row += 1;
    }
    if file_row != nrows {
        return Err(RasterError::MalformedHeader(format!(
            "expected {nrows} data rows, found {file_row}"
        )));
    }
    Raster::new(ncols, nrows, xll, yll, cellsize, nodata, values)
}

/// Surface, bare-ground and clutter heights sampled along a straight path.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Meters from the start point, strictly increasing from 0.
    pub distances: Vec<f64>,
    /// Bare ground (DSM - DHM), meters ASL.
    pub ground: Vec<f64>,
    /// DSM, meters ASL.
    pub surface: Vec<f64>,
    /// DHM, meters above ground.
    pub clutter: Vec<f64>,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn length(&self) -> f64 {
        *self.distances.last().unwrap_or(&0.0)
    }

    /// Builds a profile from a uniform ground/clutter description; handy for
    /// constructed test geometries.
    pub fn from_heights(length: f64, ground: Vec<f64>, clutter: Vec<f64>) -> Self {
        assert_eq!(ground.len(), clutter.len());
        let n = ground.len();
        let distances = uniform_distances(length, n);
        let surface = ground.iter().zip(&clutter).map(|(g, c)| g + c).collect();
        Self {
            distances,
            ground,
            surface,
            clutter,
        }
    }

    pub fn reversed(&self) -> Self {
        let length = self.length();
        let mut distances: Vec<f64> = self.distances.iter().rev().map(|d| length - d).collect();
        distances[0] = 0.0;
        let rev = |v: &Vec<f64>| v.iter().rev().copied().collect::<Vec<_>>();
        Self {
            distances,
            ground: rev(&self.ground),
            surface: rev(&self.surface),
            clutter: rev(&self.clutter),
        }
    }
}

fn uniform_distances(length: f64, n: usize) -> Vec<f64> {
    let last = n - 1;
    (0..n)
        .map(|i| {
            if i == last {
                length
            } else {
                length * i as f64 / last as f64
            }
        })
        .collect()
}

/// A DSM/DHM pair sharing one local projection origin.
#[derive(Debug, Clone)]
pub struct Terrain {
    pub dsm: Raster,
    pub dhm: Raster,
    pub origin: GeoPoint,
}

impl Terrain {
    pub fn new(dsm: Raster, dhm: Raster, origin: GeoPoint) -> Self {
        Self { dsm, dhm, origin }
    }

    pub fn project(&self, p: GeoPoint) -> Result<LocalXY, GeoError> {
        geodesy::project(self.origin, p)
    }

    pub fn surface(&self, x: f64, y: f64) -> Result<f64, RasterError> {
        self.dsm.sample_bilinear(x, y)
    }

    pub fn clutter(&self, x: f64, y: f64) -> Result<f64, RasterError> {
        self.dhm.sample_bilinear(x, y)
    }

    pub fn ground(&self, x: f64, y: f64) -> Result<f64, RasterError> {
        Ok(self.surface(x, y)? - self.clutter(x, y)?)
    }

    /// Default profile step: the finer of the DSM cell size and 5 m.
    pub fn default_step(&self) -> f64 {
        self.dsm.cellsize.min(5.0)
    }

    pub fn extract_profile(&self, a: &LocalXY, b: &LocalXY, step: f64) -> Result<Profile, RasterError> {
        extract_profile(&self.dsm, &self.dhm, a, b, step)
    }
}

/// Samples DSM and DHM at `max(64, ceil(len/step)) + 1` evenly spaced points
/// from `a` to `b`, both endpoints included.
pub fn extract_profile(
    dsm: &Raster,
    dhm: &Raster,
    a: &LocalXY,
    b: &LocalXY,
    step: f64,
) -> Result<Profile, RasterError> {
    if !(step > 0.0) {
        return Err(RasterError::InvalidStep);
    }
    let length = geodesy::horizontal_distance(a, b)?;
    if length == 0.0 {
        return Err(RasterError::ZeroLengthPath);
    }
    let intervals = ((length / step).ceil() as usize).max(MIN_PROFILE_INTERVALS);
    let n = intervals + 1;
    let distances = uniform_distances(length, n);
    let mut ground = Vec::with_capacity(n);
    let mut surface = Vec::with_capacity(n);
    let mut clutter = Vec::with_capacity(n);
    let denom = intervals as f64;
    for i in 0..n {
        // Weights computed separately for each endpoint so the reversed path
        // visits bit-identical sample coordinates.
        let wb = i as f64 / denom;
        let wa = (intervals - i) as f64 / denom;
        let x = wa * a.x + wb * b.x;
        let y = wa * a.y + wb * b.y;
        let s = dsm.sample_bilinear(x, y)?;
        let c = dhm.sample_bilinear(x, y)?;
        surface.push(s);
        clutter.push(c);
        ground.push(s - c);
    }
    Ok(Profile {
        distances,
        ground,
        surface,
        clutter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn origin() -> GeoPoint {
        GeoPoint::new(40.0, -86.0).unwrap()
    }

    fn xy(x: f64, y: f64) -> LocalXY {
        LocalXY::new(x, y, origin())
    }

    const GRID_2X2: &str = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n3 4\n";

    #[test]
    fn parse_orients_south_row_first() {
        let r = parse_ascii_grid(GRID_2X2.as_bytes()).unwrap();
        assert_eq!(r.get(0, 0), 3.0);
        assert_eq!(r.get(1, 0), 4.0);
        assert_eq!(r.get(0, 1), 1.0);
        assert_eq!(r.sample_bilinear(5.0, 5.0).unwrap(), 3.0);
    }

    #[test]
    fn parse_header_is_case_insensitive() {
        let text = GRID_2X2.replace("ncols", "NCOLS").replace("cellsize", "CellSize");
        assert!(parse_ascii_grid(text.as_bytes()).is_ok());
    }

    #[test]
    fn parse_errors() {
        let missing = GRID_2X2.replace("cellsize 10\n", "");
        assert!(matches!(
            parse_ascii_grid(missing.as_bytes()),
            Err(RasterError::MalformedHeader(_))
        ));
        let short = GRID_2X2.replace("1 2\n", "1\n");
        assert!(matches!(
            parse_ascii_grid(short.as_bytes()),
            Err(RasterError::RowLengthMismatch { found: 1, expected: 2, .. })
        ));
        let bad = GRID_2X2.replace("3 4", "3 x");
        assert!(matches!(
            parse_ascii_grid(bad.as_bytes()),
            Err(RasterError::NonNumericCell { .. })
        ));
    }

    #[test]
    fn ascii_round_trip() {
        let r = Raster::from_fn(3, 2, 100.0, 200.0, 5.0, |x, y| x * 0.25 - y * 0.5);
        let back = parse_ascii_grid(r.to_ascii_grid(6).as_bytes()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn feet_are_converted() {
        let r = parse_ascii_grid(GRID_2X2.as_bytes()).unwrap().into_meters(Units::Feet);
        assert_abs_diff_eq!(r.cellsize, 3.048);
        assert_abs_diff_eq!(r.get(0, 0), 3.0 * 0.3048);
    }

    #[test]
    fn bilinear_examples() {
        let r = parse_ascii_grid(GRID_2X2.as_bytes()).unwrap();
        assert_eq!(r.sample_bilinear(15.0, 15.0).unwrap(), 2.0);
        let c = Raster::constant(4, 4, 0.0, 0.0, 5.0, 7.25);
        assert_eq!(c.sample_bilinear(13.3, 2.1).unwrap(), 7.25);
        let ramp = Raster::new(2, 1, 0.0, 0.0, 10.0, -9999.0, vec![0.0, 10.0]).unwrap();
        assert_abs_diff_eq!(ramp.sample_bilinear(10.0, 5.0).unwrap(), 5.0);
        assert!(matches!(
            r.sample_bilinear(-1.0, 5.0),
            Err(RasterError::OutOfExtent { .. })
        ));
    }

    #[test]
    fn bilinear_nodata() {
        let r = Raster::new(2, 2, 0.0, 0.0, 10.0, -9999.0, vec![1.0, -9999.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            r.sample_bilinear(10.0, 10.0),
            Err(RasterError::NoDataNeighborhood { .. })
        ));
        // exact cell center of a valid cell only touches that cell
        assert_eq!(r.sample_bilinear(5.0, 5.0).unwrap(), 1.0);
    }

    #[test]
    fn profile_examples() {
        let dsm = Raster::constant(100, 100, 0.0, 0.0, 10.0, 200.0);
        let dhm = Raster::constant(100, 100, 0.0, 0.0, 10.0, 0.0);
        let p = extract_profile(&dsm, &dhm, &xy(100.0, 100.0), &xy(740.0, 100.0), 10.0).unwrap();
        assert_eq!(p.len(), 65);
        assert!(p.ground.iter().all(|g| *g == 200.0));
        assert_eq!(p.ground, p.surface);
        assert_eq!(p.length(), 640.0);

        let dhm5 = Raster::constant(100, 100, 0.0, 0.0, 10.0, 5.0);
        let dsm5 = Raster::constant(100, 100, 0.0, 0.0, 10.0, 205.0);
        let p = extract_profile(&dsm5, &dhm5, &xy(100.0, 100.0), &xy(300.0, 400.0), 5.0).unwrap();
        assert!(p.clutter.iter().all(|c| *c == 5.0));
        assert!(p.surface.iter().zip(&p.ground).all(|(s, g)| s - g == 5.0));

        assert!(matches!(
            extract_profile(&dsm, &dhm, &xy(1.0, 1.0), &xy(1.0, 1.0), 5.0),
            Err(RasterError::ZeroLengthPath)
        ));
    }

    #[test]
    fn neighborhood_examples() {
        let c = Raster::constant(20, 20, 0.0, 0.0, 5.0, 7.0);
        assert_eq!(c.neighborhood_stats(50.0, 50.0, 20.0).unwrap().mean, 7.0);

        let r = Raster::from_fn(20, 20, 0.0, 0.0, 5.0, |x, y| x * 100.0 + y);
        let s = r.neighborhood_stats(12.5, 17.5, 2.0).unwrap();
        assert_eq!(s.count, 1);
        assert_eq!(s.mean, 12.5 * 100.0 + 17.5);

        // half plane 0 | 10, circle centered on the boundary
        let hp = Raster::from_fn(40, 40, 0.0, 0.0, 5.0, |x, _| if x < 100.0 { 0.0 } else { 10.0 });
        let s = hp.neighborhood_stats(100.0, 100.0, 50.0).unwrap();
        let (mut sum, mut n) = (0.0, 0);
        for row in 0..40 {
            for col in 0..40 {
                let (cx, cy) = hp.cell_center(col, row);
                if (cx - 100.0).powi(2) + (cy - 100.0).powi(2) <= 2500.0 {
                    sum += hp.get(col, row);
                    n += 1;
                }
            }
        }
        assert_eq!(s.count, n);
        assert_abs_diff_eq!(s.mean, sum / n as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean, 5.0, epsilon = 0.5);

        assert!(matches!(
            c.neighborhood_stats(-500.0, -500.0, 10.0),
            Err(RasterError::EmptyNeighborhood { .. })
        ));
    }

    proptest! {
        #[test]
        fn bilinear_exact_on_affine(
            p in -100.0f64..100.0, q in -2.0f64..2.0, s in -2.0f64..2.0,
            fx in 0.0f64..1.0, fy in 0.0f64..1.0,
        ) {
            let r = Raster::from_fn(12, 9, 50.0, -20.0, 3.0, |x, y| p + q * x + s * y);
            // interior region spanned by cell centers
            let x = 50.0 + 1.5 + fx * 11.0 * 3.0;
            let y = -20.0 + 1.5 + fy * 8.0 * 3.0;
            let expected = p + q * x + s * y;
            let got = r.sample_bilinear(x, y).unwrap();
            prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }

        #[test]
        fn profile_reversal_and_monotone_distances(
            ax in 10.0f64..490.0, ay in 10.0f64..490.0,
            bx in 10.0f64..490.0, by in 10.0f64..490.0,
        ) {
            prop_assume!((ax - bx).hypot(ay - by) > 1.0);
            let dsm = Raster::from_fn(50, 50, 0.0, 0.0, 10.0, |x, y| 200.0 + (x * 0.05).sin() * 10.0 + y * 0.01 + 8.0);
            let dhm = Raster::from_fn(50, 50, 0.0, 0.0, 10.0, |x, y| 4.0 + (y * 0.1).cos() * 4.0 + x * 0.0);
            let fwd = extract_profile(&dsm, &dhm, &xy(ax, ay), &xy(bx, by), 5.0).unwrap();
            let rev = extract_profile(&dsm, &dhm, &xy(bx, by), &xy(ax, ay), 5.0).unwrap();
            prop_assert_eq!(fwd.distances[0], 0.0);
            prop_assert!((fwd.length() - (ax - bx).hypot(ay - by)).abs() < 1e-6);
            prop_assert!(fwd.distances.windows(2).all(|w| w[1] > w[0]));
            let back = rev.reversed();
            prop_assert_eq!(&back.surface, &fwd.surface);
            prop_assert_eq!(&back.ground, &fwd.ground);
            prop_assert!(fwd.surface.iter().zip(&fwd.ground).all(|(s, g)| *s >= g - 0.01));
        }
    }
}
