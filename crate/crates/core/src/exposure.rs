//! Building exposure: the risk objective is the number of buildings whose
//! surrounding flood depth meets the exposure criteria.

use std::io::{BufRead, Write};

use crate::flood::{FloodResult, RasterGrid, SurfaceClass};
use crate::scalar::{exact_sum, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum ExposureError {
    #[error("buildings line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("building {id} lies outside the {nrows}x{ncols} grid")]
    OutsideGrid { id: String, nrows: usize, ncols: usize },
    #[error("invalid exposure criteria: {0}")]
    InvalidCriteria(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How buffer depths are reduced to the single depth compared with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    AnyCellMax,
    MeanOverBuffer,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::AnyCellMax => "any_cell_max",
            Aggregation::MeanOverBuffer => "mean_over_buffer",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "any_cell_max" => Some(Aggregation::AnyCellMax),
            "mean_over_buffer" => Some(Aggregation::MeanOverBuffer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureCriteria<T> {
    pub depth_threshold_m: T,
    /// Chebyshev radius of the buffer ring, in cells.
    pub buffer_radius: usize,
    pub aggregation: Aggregation,
}

impl<T: Scalar> Default for ExposureCriteria<T> {
    fn default() -> Self {
        Self { depth_threshold_m: T::of(0.10), buffer_radius: 1, aggregation: Aggregation::AnyCellMax }
    }
}

impl<T: Scalar> ExposureCriteria<T> {
    pub fn validate(&self) -> Result<(), ExposureError> {
        if !(self.depth_threshold_m > T::zero()) {
            return Err(ExposureError::InvalidCriteria("depth threshold must be positive".into()));
        }
        if self.buffer_radius < 1 {
            return Err(ExposureError::InvalidCriteria("buffer radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rectangular building footprint, inclusive cell bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Building {
    pub id: String,
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Building {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..=self.row1).contains(&row) && (self.col0..=self.col1).contains(&col)
    }

    pub fn footprint(&self, ncols: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row0..=self.row1).flat_map(move |r| (self.col0..=self.col1).map(move |c| r * ncols + c))
    }

    pub fn cell_count(&self) -> usize {
        (self.row1 - self.row0 + 1) * (self.col1 - self.col0 + 1)
    }

    /// Cells within `radius` (Chebyshev) of the footprint, excluding the
    /// footprint and any building-class cell.
    pub fn buffer_ring<T>(&self, grid: &RasterGrid<T>, radius: usize) -> Vec<usize> {
        let r0 = self.row0.saturating_sub(radius);
        let c0 = self.col0.saturating_sub(radius);
        let r1 = (self.row1 + radius).min(grid.nrows - 1);
        let c1 = (self.col1 + radius).min(grid.ncols - 1);
        let mut ring = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                let k = r * grid.ncols + c;
                if !self.contains(r, c) && grid.surface[k] != SurfaceClass::Building {
                    ring.push(k);
                }
            }
        }
        ring
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BuildingSet {
    pub buildings: Vec<Building>,
}

impl BuildingSet {
    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    pub fn check_bounds(&self, nrows: usize, ncols: usize) -> Result<(), ExposureError> {
        for b in &self.buildings {
            if b.row0 > b.row1 || b.col0 > b.col1 || b.row1 >= nrows || b.col1 >= ncols {
                return Err(ExposureError::OutsideGrid { id: b.id.clone(), nrows, ncols });
            }
        }
        Ok(())
    }

    /// Reads `building_id,row0,col0,row1,col1` rectangles (inclusive).
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, ExposureError> {
        let mut buildings = Vec::new();
        let mut header_seen = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if !header_seen {
                header_seen = true;
                if fields != ["building_id", "row0", "col0", "row1", "col1"] {
                    return Err(ExposureError::Parse {
                        line: idx + 1,
                        message: format!("expected header `building_id,row0,col0,row1,col1`, found `{trimmed}`"),
                    });
                }
                continue;
            }
            if fields.len() != 5 {
                return Err(ExposureError::Parse {
                    line: idx + 1,
                    message: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            let num = |s: &str| {
                s.parse::<usize>().map_err(|_| ExposureError::Parse {
                    line: idx + 1,
                    message: format!("`{s}` is not a cell index"),
                })
            };
            buildings.push(Building {
                id: fields[0].to_string(),
                row0: num(fields[1])?,
                col0: num(fields[2])?,
                row1: num(fields[3])?,
                col1: num(fields[4])?,
            });
        }
        Ok(Self { buildings })
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "building_id,row0,col0,row1,col1")?;
        for b in &self.buildings {
            writeln!(writer, "{},{},{},{},{}", b.id, b.row0, b.col0, b.row1, b.col1)?;
        }
        Ok(())
    }
}

/// Buffer rings of every building, precomputed for repeated counting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureIndex<T> {
    rings: Vec<Vec<usize>>,
    criteria: ExposureCriteria<T>,
}

impl<T: Scalar> ExposureIndex<T> {
    pub fn new(buildings: &BuildingSet, grid: &RasterGrid<T>, criteria: ExposureCriteria<T>) -> Self {
        let rings = buildings
            .buildings
            .iter()
            .map(|b| {
                let ring = b.buffer_ring(grid, criteria.buffer_radius);
                if ring.is_empty() {
                    log::warn!("building {} has an empty buffer ring and is never exposed", b.id);
                }
                ring
            })
            .collect();
        Self { rings, criteria }
    }

    pub fn criteria(&self) -> &ExposureCriteria<T> {
        &self.criteria
    }

    pub fn building_count(&self) -> usize {
        self.rings.len()
    }

    pub fn exposed(&self, building: usize, result: &FloodResult<T>) -> bool {
        ring_exposed(&self.rings[building], result, &self.criteria)
    }

    pub fn count(&self, result: &FloodResult<T>) -> u32 {
        self.rings.iter().filter(|ring| ring_exposed(ring, result, &self.criteria)).count() as u32
    }
}

fn ring_exposed<T: Scalar>(ring: &[usize], result: &FloodResult<T>, criteria: &ExposureCriteria<T>) -> bool {
    if ring.is_empty() {
        return false;
    }
    let depth = match criteria.aggregation {
        Aggregation::AnyCellMax => ring.iter().map(|&k| result.max_depth[k]).fold(T::zero(), T::max),
        Aggregation::MeanOverBuffer => {
            exact_sum(ring.iter().map(|&k| result.max_depth[k])) / T::of_usize(ring.len())
        }
    };
    depth >= criteria.depth_threshold_m
}

/// Exposure flag of one building: 1 when the aggregated buffer depth reaches
/// the threshold.
pub fn building_exposed<T: Scalar>(
    building: &Building,
    grid: &RasterGrid<T>,
    result: &FloodResult<T>,
    criteria: &ExposureCriteria<T>,
) -> u32 {
    let ring = building.buffer_ring(grid, criteria.buffer_radius);
    if ring.is_empty() {
        log::warn!("building {} has an empty buffer ring and is never exposed", building.id);
    }
    ring_exposed(&ring, result, criteria) as u32
}

/// Number of exposed buildings.
pub fn count_exposed<T: Scalar>(
    buildings: &BuildingSet,
    grid: &RasterGrid<T>,
    result: &FloodResult<T>,
    criteria: &ExposureCriteria<T>,
) -> u32 {
    buildings.buildings.iter().map(|b| building_exposed(b, grid, result, criteria)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> RasterGrid<f64> {
        let mut surface = vec![SurfaceClass::Impervious; 9];
        surface[4] = SurfaceClass::Building;
        RasterGrid { ncols: 3, nrows: 3, cellsize: 1.0, elevation: vec![0.0; 9], surface }
    }

    fn result_with(depths: Vec<f64>) -> FloodResult<f64> {
        FloodResult {
            ncols: 3,
            nrows: 3,
            final_depth: depths.clone(),
            max_depth: depths,
            rainfall_volume: 0.0,
            infiltrated_volume: 0.0,
            boundary_outflow_volume: 0.0,
            storage_volume: 0.0,
            steps: 0,
            drained: true,
        }
    }

    fn centre() -> Building {
        Building { id: "b".into(), row0: 1, col0: 1, row1: 1, col1: 1 }
    }

    #[test]
    fn dry_domain_is_not_exposed() {
        let crit = ExposureCriteria::default();
        assert_eq!(building_exposed(&centre(), &grid3(), &result_with(vec![0.0; 9]), &crit), 0);
    }

    #[test]
    fn saturated_buffer_is_exposed() {
        let crit = ExposureCriteria::default();
        assert_eq!(building_exposed(&centre(), &grid3(), &result_with(vec![0.2; 9]), &crit), 1);
    }

    #[test]
    fn single_wet_ring_cell_any_vs_mean() {
        let mut depths = vec![0.0; 9];
        depths[0] = 0.12;
        let result = result_with(depths);
        let mut crit = ExposureCriteria { depth_threshold_m: 0.10, ..Default::default() };
        assert_eq!(building_exposed(&centre(), &grid3(), &result, &crit), 1);
        crit.aggregation = Aggregation::MeanOverBuffer;
        // 0.12 / 8 ring cells = 0.015 m
        assert_eq!(building_exposed(&centre(), &grid3(), &result, &crit), 0);
    }

    #[test]
    fn building_filling_the_grid_has_empty_ring() {
        let mut grid = grid3();
        grid.surface = vec![SurfaceClass::Building; 9];
        let whole = Building { id: "all".into(), row0: 0, col0: 0, row1: 2, col1: 2 };
        assert!(whole.buffer_ring(&grid, 1).is_empty());
        let crit = ExposureCriteria::default();
        assert_eq!(building_exposed(&whole, &grid, &result_with(vec![1.0; 9]), &crit), 0);
    }

    #[test]
    fn counts_only_the_flooded_middle_building() {
        // 1x7 strip: buildings at columns 0, 3, 6; water only beside the middle one
        let mut surface = vec![SurfaceClass::Impervious; 7];
        for c in [0, 3, 6] {
            surface[c] = SurfaceClass::Building;
        }
        let grid = RasterGrid { ncols: 7, nrows: 1, cellsize: 1.0, elevation: vec![0.0; 7], surface };
        let set = BuildingSet {
            buildings: [0, 3, 6]
                .iter()
                .map(|&c| Building { id: format!("b{c}"), row0: 0, col0: c, row1: 0, col1: c })
                .collect(),
        };
        let mut depths = vec![0.0; 7];
        depths[4] = 0.3;
        let result = FloodResult { ncols: 7, nrows: 1, ..result_with(vec![0.0; 9]) };
        let result = FloodResult { max_depth: depths.clone(), final_depth: depths, ..result };
        let crit = ExposureCriteria::default();
        let per_building: Vec<u32> = set.buildings.iter().map(|b| building_exposed(b, &grid, &result, &crit)).collect();
        assert_eq!(per_building, vec![0, 1, 0]);
        assert_eq!(count_exposed(&set, &grid, &result, &crit), 1);
        assert_eq!(ExposureIndex::new(&set, &grid, crit).count(&result), 1);
        assert_eq!(count_exposed(&BuildingSet::default(), &grid, &result, &crit), 0);
    }

    #[test]
    fn csv_parsing() {
        let set = BuildingSet::read_csv("building_id,row0,col0,row1,col1\nA,0,0,1,2\n".as_bytes()).unwrap();
        assert_eq!(set.buildings[0].cell_count(), 6);
        assert!(set.check_bounds(2, 3).is_ok());
        assert!(matches!(set.check_bounds(2, 2), Err(ExposureError::OutsideGrid { .. })));
        assert!(BuildingSet::read_csv("id,r,c\n".as_bytes()).is_err());
        assert!(BuildingSet::read_csv("building_id,row0,col0,row1,col1\nA,0,x,1,2\n".as_bytes()).is_err());
    }
}
