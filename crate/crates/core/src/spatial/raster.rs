use super::PlanarPoint;
use crate::error::{Error, Result};

/// Regular grid of flood depths in feet. Row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRaster {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl GridRaster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let r = Self {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata,
            values,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(Error::invalid("raster must have positive ncols and nrows"));
        }
        if !(self.cellsize > 0.0 && self.cellsize.is_finite()) {
            return Err(Error::invalid("raster cellsize must be positive"));
        }
        if !self.xllcorner.is_finite() || !self.yllcorner.is_finite() || !self.nodata.is_finite() {
            return Err(Error::invalid("raster header values must be finite"));
        }
        if self.values.len() != self.ncols * self.nrows {
            return Err(Error::invalid(format!(
                "raster has {} cells, expected {} x {}",
                self.values.len(),
                self.ncols,
                self.nrows
            )));
        }
        if let Some(i) = self
            .values
            .iter()
            .position(|&v| !self.is_nodata(v) && !(v >= 0.0 && v.is_finite()))
        {
            return Err(Error::invalid(format!(
                "negative depth {} at row {}, col {}",
                self.values[i],
                i / self.ncols,
                i % self.ncols
            )));
        }
        Ok(())
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> PlanarPoint {
        PlanarPoint::new(
            self.xllcorner + (col as f64 + 0.5) * self.cellsize,
            self.yllcorner + ((self.nrows - row) as f64 - 0.5) * self.cellsize,
        )
    }

    pub fn same_geometry(&self, other: &GridRaster) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xllcorner == other.xllcorner
            && self.yllcorner == other.yllcorner
            && self.cellsize == other.cellsize
    }

    pub fn contains(&self, p: PlanarPoint) -> bool {
        p.x >= self.xllcorner
            && p.x <= self.xllcorner + self.ncols as f64 * self.cellsize
            && p.y >= self.yllcorner
            && p.y <= self.yllcorner + self.nrows as f64 * self.cellsize
    }
}

/// Values of every non-nodata cell whose center lies within `radius` of
/// `center`, in row-major order.
pub fn sample_buffer_cells(r: &GridRaster, center: PlanarPoint, radius: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if radius.is_nan() || radius <= 0.0 || !center.is_finite() {
        return out;
    }
    let cs = r.cellsize;
    let top = r.yllcorner + r.nrows as f64 * cs;
    // Candidate window, padded by one cell; the distance test decides.
    let c0 = ((center.x - radius - r.xllcorner) / cs).floor() - 1.0;
    let c1 = ((center.x + radius - r.xllcorner) / cs).ceil() + 1.0;
    let r0 = ((top - (center.y + radius)) / cs).floor() - 1.0;
    let r1 = ((top - (center.y - radius)) / cs).ceil() + 1.0;
    if c1 < 0.0 || r1 < 0.0 || c0 >= r.ncols as f64 || r0 >= r.nrows as f64 {
        return out;
    }
    let c0 = c0.max(0.0) as usize;
    let r0 = r0.max(0.0) as usize;
    let c1 = (c1 as usize).min(r.ncols - 1);
    let r1 = (r1 as usize).min(r.nrows - 1);
    let r2 = radius * radius;
    for row in r0..=r1 {
        for col in c0..=c1 {
            let v = r.get(col, row);
            if r.is_nodata(v) {
                continue;
            }
            if r.cell_center(col, row).distance_sq(&center) <= r2 {
                out.push(v);
            }
        }
    }
    out
}
