//! Catchment scenarios: grid, zones, buildings, costs, storm and model
//! settings, with directory I/O, zone subdivision and a synthetic generator.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{split_cost, CostError, CostParams, ZoneCost, ZoneCostTable};
use crate::exposure::{Aggregation, Building, BuildingSet, ExposureCriteria, ExposureError, ExposureIndex};
use crate::flood::{Boundary, FloodError, FloodModel, FloodResult, RainEvent, RasterGrid, SimParams, Simulator, SurfaceClass};
use crate::genome::Genome;
use crate::objectives::{EvalError, Evaluator, ObjectiveVector};
use crate::raster::{AsciiGrid, RasterError, ValueFormat};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("missing scenario file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: {source}")]
    Raster { file: String, source: RasterError },
    #[error("{file} is {found_rows}x{found_cols} but the grid is {rows}x{cols}")]
    DimensionMismatch { file: String, rows: usize, cols: usize, found_rows: usize, found_cols: usize },
    #[error("{file} has cellsize {found}, expected {expected}")]
    CellsizeMismatch { file: String, expected: String, found: String },
    #[error("{file} row {row} col {col}: invalid value {value}")]
    InvalidCell { file: String, row: usize, col: usize, value: String },
    #[error("zone {0} is listed in costs.csv but covers no cells")]
    ZoneIdGap(String),
    #[error("zones.asc references zone {label} which has no costs.csv row ({rows} rows)")]
    UnknownZone { label: u64, rows: usize },
    #[error("costs.csv lists zone {0} more than once")]
    DuplicateZone(String),
    #[error("cell ({row}, {col}): {message}")]
    ZoneSurface { row: usize, col: usize, message: String },
    #[error("building {id} lies outside the grid")]
    BuildingOutsideGrid { id: String },
    #[error("building {id} covers cell ({row}, {col}) which is not building surface")]
    BuildingSurface { id: String, row: usize, col: usize },
    #[error("scenario.cfg line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("rain.csv line {line}: {message}")]
    Rain { line: usize, message: String },
    #[error("zone {label} has {cells} cells and cannot be split into {factor}")]
    Subdivision { label: u64, cells: usize, factor: usize },
    #[error("synthetic catchment: {0}")]
    Synthetic(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Flood(#[from] FloodError),
    #[error(transparent)]
    Exposure(#[from] ExposureError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.display().to_string(), source }
}

/// Candidate-cell partition into zones. Zone `j` (genome bit `j`) is stored
/// as `j + 1` in `zone_of_cell`; 0 marks cells outside every zone.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMap {
    pub nrows: usize,
    pub ncols: usize,
    pub zone_of_cell: Vec<u32>,
    /// Numeric label per zone; children append one digit to their parent.
    pub labels: Vec<u64>,
    /// Digits appended since the original (unsplit) zoning.
    pub lineage_digits: u32,
}

impl ZoneMap {
    pub fn zone_count(&self) -> usize {
        self.labels.len()
    }

    pub fn cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.zone_count()];
        for &z in &self.zone_of_cell {
            if z > 0 {
                counts[z as usize - 1] += 1;
            }
        }
        counts
    }

    pub fn cells_of(&self, zone: usize) -> Vec<usize> {
        let id = zone as u32 + 1;
        (0..self.zone_of_cell.len()).filter(|&k| self.zone_of_cell[k] == id).collect()
    }

    pub fn areas<T: Scalar>(&self, cell_area: T) -> Vec<T> {
        self.cell_counts().into_iter().map(|c| T::of_usize(c) * cell_area).collect()
    }

    /// Label `levels` splits up the lineage (0 = the zone itself).
    pub fn ancestor_label(&self, zone: usize, levels: u32) -> u64 {
        self.labels[zone] / 10u64.pow(levels)
    }

    /// Per-cell activation: a cell is active iff its zone's bit is set.
    pub fn expand(&self, genome: &Genome) -> Vec<bool> {
        self.zone_of_cell.iter().map(|&z| z > 0 && genome.get(z as usize - 1)).collect()
    }

    /// Collapses the last `levels` splits, merging children back into their
    /// ancestors (ancestors ordered by first appearance).
    pub fn merge_levels(&self, levels: u32) -> ZoneMap {
        let mut labels: Vec<u64> = Vec::new();
        let mut index: HashMap<u64, u32> = HashMap::new();
        let mut remap = vec![0u32; self.zone_count()];
        for j in 0..self.zone_count() {
            let parent = self.ancestor_label(j, levels);
            let id = *index.entry(parent).or_insert_with(|| {
                labels.push(parent);
                labels.len() as u32
            });
            remap[j] = id;
        }
        ZoneMap {
            nrows: self.nrows,
            ncols: self.ncols,
            zone_of_cell: self.zone_of_cell.iter().map(|&z| if z == 0 { 0 } else { remap[z as usize - 1] }).collect(),
            labels,
            lineage_digits: self.lineage_digits.saturating_sub(levels),
        }
    }
}

/// One bisection step per zone: cells sorted along the longer bounding-box
/// axis (ties: split by columns), first half to child 1.
fn bisect(zones: &ZoneMap) -> Result<(ZoneMap, Vec<[usize; 2]>), ScenarioError> {
    let n = zones.zone_count();
    let mut zone_of_cell = vec![0u32; zones.zone_of_cell.len()];
    let mut labels = Vec::with_capacity(2 * n);
    let mut children = Vec::with_capacity(n);
    let ncols = zones.ncols;
    for j in 0..n {
        let mut cells = zones.cells_of(j);
        if cells.len() < 2 {
            return Err(ScenarioError::Subdivision { label: zones.labels[j], cells: cells.len(), factor: 2 });
        }
        let rows = cells.iter().map(|&k| k / ncols);
        let cols = cells.iter().map(|&k| k % ncols);
        let height = rows.clone().max().unwrap() - rows.min().unwrap() + 1;
        let width = cols.clone().max().unwrap() - cols.min().unwrap() + 1;
        if height > width {
            cells.sort_by_key(|&k| (k / ncols, k % ncols));
        } else {
            cells.sort_by_key(|&k| (k % ncols, k / ncols));
        }
        let first = cells.len().div_ceil(2);
        let (a, b) = (labels.len(), labels.len() + 1);
        labels.push(zones.labels[j] * 10 + 1);
        labels.push(zones.labels[j] * 10 + 2);
        for (pos, &k) in cells.iter().enumerate() {
            zone_of_cell[k] = if pos < first { a as u32 + 1 } else { b as u32 + 1 };
        }
        children.push([a, b]);
    }
    let map = ZoneMap {
        nrows: zones.nrows,
        ncols,
        zone_of_cell,
        labels,
        lineage_digits: zones.lineage_digits + 1,
    };
    Ok((map, children))
}

/// Splits every zone into `factor` (2 or 4) children by repeated bisection.
pub fn subdivide_zones(zones: &ZoneMap, factor: usize) -> Result<ZoneMap, ScenarioError> {
    let levels = split_levels(factor)?;
    let counts = zones.cell_counts();
    if let Some(j) = (0..zones.zone_count()).find(|&j| counts[j] < factor) {
        return Err(ScenarioError::Subdivision { label: zones.labels[j], cells: counts[j], factor });
    }
    let mut map = zones.clone();
    for _ in 0..levels {
        map = bisect(&map)?.0;
    }
    Ok(map)
}

fn split_levels(factor: usize) -> Result<u32, ScenarioError> {
    match factor {
        2 => Ok(1),
        4 => Ok(2),
        _ => Err(ScenarioError::Synthetic(format!("subdivision factor must be 2 or 4, got {factor}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatchmentScenario<T> {
    pub grid: RasterGrid<T>,
    pub zones: ZoneMap,
    pub buildings: BuildingSet,
    pub costs: ZoneCostTable<T>,
    /// Rates used when costs are derived from areas.
    pub cost_params: CostParams<T>,
    pub rain: RainEvent<T>,
    pub criteria: ExposureCriteria<T>,
    pub sim: SimParams<T>,
}

impl<T: Scalar> CatchmentScenario<T> {
    pub fn zone_count(&self) -> usize {
        self.zones.zone_count()
    }

    /// Checks every cross-reference between the layers.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.grid.validate()?;
        self.rain.validate()?;
        self.sim.validate()?;
        self.criteria.validate()?;
        let (nrows, ncols) = (self.grid.nrows, self.grid.ncols);
        if self.zones.nrows != nrows || self.zones.ncols != ncols || self.zones.zone_of_cell.len() != nrows * ncols {
            return Err(ScenarioError::DimensionMismatch {
                file: "zones.asc".into(),
                rows: nrows,
                cols: ncols,
                found_rows: self.zones.nrows,
                found_cols: self.zones.ncols,
            });
        }
        if self.costs.len() != self.zones.zone_count() {
            return Err(ScenarioError::Synthetic(format!(
                "{} cost rows for {} zones",
                self.costs.len(),
                self.zones.zone_count()
            )));
        }
        for (j, row) in self.costs.rows().iter().enumerate() {
            if row.zone_id != self.zones.labels[j].to_string() {
                return Err(ScenarioError::Synthetic(format!(
                    "cost row {} is zone {} but zone {} expected",
                    j + 1,
                    row.zone_id,
                    self.zones.labels[j]
                )));
            }
        }
        let counts = self.zones.cell_counts();
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(ScenarioError::ZoneIdGap(self.zones.labels[j].to_string()));
        }
        for k in 0..nrows * ncols {
            let candidate = self.grid.surface[k] == SurfaceClass::PermeableCandidate;
            let zoned = self.zones.zone_of_cell[k] > 0;
            if candidate != zoned {
                let message = if zoned {
                    "zone cell is not permeable candidate surface"
                } else {
                    "permeable candidate cell belongs to no zone"
                };
                return Err(ScenarioError::ZoneSurface { row: k / ncols, col: k % ncols, message: message.into() });
            }
        }
        for b in &self.buildings.buildings {
            if b.row0 > b.row1 || b.col0 > b.col1 || b.row1 >= nrows || b.col1 >= ncols {
                return Err(ScenarioError::BuildingOutsideGrid { id: b.id.clone() });
            }
            for k in b.footprint(ncols) {
                if self.grid.surface[k] != SurfaceClass::Building {
                    return Err(ScenarioError::BuildingSurface { id: b.id.clone(), row: k / ncols, col: k % ncols });
                }
            }
        }
        Ok(())
    }

    /// The same catchment with every zone split into `factor` children.
    /// Child costs partition the parent cost exactly, in proportion to area.
    pub fn subdivide(&self, factor: usize) -> Result<Self, ScenarioError> {
        let levels = split_levels(factor)?;
        let counts = self.zones.cell_counts();
        if let Some(j) = (0..self.zone_count()).find(|&j| counts[j] < factor) {
            return Err(ScenarioError::Subdivision { label: self.zones.labels[j], cells: counts[j], factor });
        }
        let cell_area = self.grid.cell_area();
        let mut zones = self.zones.clone();
        let mut costs: Vec<T> = self.costs.rows().iter().map(|r| r.lifecycle_cost).collect();
        for _ in 0..levels {
            let (child_map, children) = bisect(&zones)?;
            let areas = child_map.areas(cell_area);
            let mut child_costs = vec![T::zero(); child_map.zone_count()];
            for (parent, [a, b]) in children.into_iter().enumerate() {
                let (ca, cb) = split_cost(costs[parent], areas[a], areas[b]);
                child_costs[a] = ca;
                child_costs[b] = cb;
            }
            zones = child_map;
            costs = child_costs;
        }
        let areas = zones.areas(cell_area);
        let rows = zones
            .labels
            .iter()
            .zip(costs)
            .zip(areas)
            .map(|((label, cost), area)| ZoneCost { zone_id: label.to_string(), area_m2: Some(area), lifecycle_cost: cost })
            .collect();
        Ok(Self { zones, costs: ZoneCostTable::from_rows(rows), ..self.clone() })
    }

    /// Same catchment under another storm.
    pub fn with_rain(&self, rain: RainEvent<T>) -> Self {
        Self { rain, ..self.clone() }
    }

    pub fn evaluator(&self) -> Result<ScenarioEvaluator<T>, ScenarioError> {
        ScenarioEvaluator::new(self)
    }

    /// The `scenario.cfg` view of this scenario.
    pub fn settings(&self) -> ScenarioSettings<T> {
        ScenarioSettings {
            cellsize: self.grid.cellsize,
            rain_timestep_s: self.rain.timestep_s,
            rain_return_period_years: self.rain.return_period_years,
            sim: self.sim.clone(),
            criteria: self.criteria,
            cost: self.cost_params,
            lineage_digits: self.zones.lineage_digits,
        }
    }

    /// Overrides one simulation, exposure or storm setting. Keys that
    /// would change the grid or the cost table are refused.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), String> {
        if !OVERRIDABLE_KEYS.contains(&key) {
            return Err(if CONFIG_KEYS.contains(&key) {
                format!("`{key}` cannot be overridden; edit scenario.cfg instead")
            } else {
                format!("unknown key `{key}`")
            });
        }
        let mut settings = self.settings();
        settings.set(key, value)?;
        settings.sim.validate().map_err(|e| e.to_string())?;
        settings.criteria.validate().map_err(|e| e.to_string())?;
        self.sim = settings.sim;
        self.criteria = settings.criteria;
        self.rain.return_period_years = settings.rain_return_period_years;
        Ok(())
    }
}

/// Scenario settings stored in `scenario.cfg` as `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSettings<T> {
    pub cellsize: T,
    pub rain_timestep_s: T,
    pub rain_return_period_years: T,
    pub sim: SimParams<T>,
    pub criteria: ExposureCriteria<T>,
    pub cost: CostParams<T>,
    pub lineage_digits: u32,
}

impl<T: Scalar> Default for ScenarioSettings<T> {
    fn default() -> Self {
        Self {
            cellsize: T::of(2.0),
            rain_timestep_s: T::of(600.0),
            rain_return_period_years: T::of(30.0),
            sim: SimParams::default(),
            criteria: ExposureCriteria::default(),
            cost: CostParams::default(),
            lineage_digits: 0,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "cellsize",
    "rain_timestep_s",
    "rain_return_period_years",
    "routing_alpha",
    "infiltration_impervious_mm_hr",
    "infiltration_permeable_mm_hr",
    "infiltration_green_mm_hr",
    "infiltration_building_mm_hr",
    "building_offset_m",
    "drying_threshold_m",
    "drain_step_factor",
    "boundary",
    "depth_threshold_m",
    "buffer_radius",
    "aggregation",
    "capital_cost_per_m2",
    "operational_cost_per_m2_year",
    "inflation_rate",
    "lifespan_years",
    "zone_lineage_digits",
];

impl<T: Scalar> ScenarioSettings<T> {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V, String> {
            value.parse().map_err(|_| format!("`{value}` is not a valid value for {key}"))
        }
        match key {
            "cellsize" => self.cellsize = num(key, value)?,
            "rain_timestep_s" => self.rain_timestep_s = num(key, value)?,
            "rain_return_period_years" => self.rain_return_period_years = num(key, value)?,
            "routing_alpha" => self.sim.routing_alpha = num(key, value)?,
            "infiltration_impervious_mm_hr" => self.sim.infiltration_mm_hr[0] = num(key, value)?,
            "infiltration_permeable_mm_hr" => self.sim.infiltration_mm_hr[1] = num(key, value)?,
            "infiltration_green_mm_hr" => self.sim.infiltration_mm_hr[2] = num(key, value)?,
            "infiltration_building_mm_hr" => self.sim.infiltration_mm_hr[3] = num(key, value)?,
            "building_offset_m" => self.sim.building_offset_m = num(key, value)?,
            "drying_threshold_m" => self.sim.drying_threshold_m = num(key, value)?,
            "drain_step_factor" => self.sim.drain_step_factor = num(key, value)?,
            "boundary" => {
                self.sim.boundary = match value {
                    "closed" => Boundary::Closed,
                    "free_outfall" => Boundary::FreeOutfall,
                    _ => return Err(format!("boundary must be `closed` or `free_outfall`, got `{value}`")),
                }
            }
            "depth_threshold_m" => self.criteria.depth_threshold_m = num(key, value)?,
            "buffer_radius" => self.criteria.buffer_radius = num(key, value)?,
            "aggregation" => {
                self.criteria.aggregation = Aggregation::parse(value)
                    .ok_or_else(|| format!("aggregation must be any_cell_max or mean_over_buffer, got `{value}`"))?
            }
            "capital_cost_per_m2" => self.cost.capital_per_m2 = num(key, value)?,
            "operational_cost_per_m2_year" => self.cost.operational_per_m2_year = num(key, value)?,
            "inflation_rate" => self.cost.inflation_rate = num(key, value)?,
            "lifespan_years" => self.cost.lifespan_years = num(key, value)?,
            "zone_lineage_digits" => self.lineage_digits = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, ScenarioError> {
        let mut settings = Self::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| ScenarioError::Io { path: "scenario.cfg".into(), source })?;
            let text = line.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| ScenarioError::Config {
                line: idx + 1,
                message: format!("expected `key = value`, found `{text}`"),
            })?;
            settings
                .set(key.trim(), value.trim())
                .map_err(|message| ScenarioError::Config { line: idx + 1, message })?;
        }
        Ok(settings)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let s = &self.sim;
        let c = &self.criteria;
        let boundary = match s.boundary {
            Boundary::Closed => "closed",
            Boundary::FreeOutfall => "free_outfall",
        };
        writeln!(w, "cellsize = {}", self.cellsize)?;
        writeln!(w, "rain_timestep_s = {}", self.rain_timestep_s)?;
        writeln!(w, "rain_return_period_years = {}", self.rain_return_period_years)?;
        writeln!(w, "routing_alpha = {}", s.routing_alpha)?;
        writeln!(w, "infiltration_impervious_mm_hr = {}", s.infiltration_mm_hr[0])?;
        writeln!(w, "infiltration_permeable_mm_hr = {}", s.infiltration_mm_hr[1])?;
        writeln!(w, "infiltration_green_mm_hr = {}", s.infiltration_mm_hr[2])?;
        writeln!(w, "infiltration_building_mm_hr = {}", s.infiltration_mm_hr[3])?;
        writeln!(w, "building_offset_m = {}", s.building_offset_m)?;
        writeln!(w, "drying_threshold_m = {}", s.drying_threshold_m)?;
        writeln!(w, "drain_step_factor = {}", s.drain_step_factor)?;
        writeln!(w, "boundary = {boundary}")?;
        writeln!(w, "depth_threshold_m = {}", c.depth_threshold_m)?;
        writeln!(w, "buffer_radius = {}", c.buffer_radius)?;
        writeln!(w, "aggregation = {}", c.aggregation.name())?;
        writeln!(w, "capital_cost_per_m2 = {}", self.cost.capital_per_m2)?;
        writeln!(w, "operational_cost_per_m2_year = {}", self.cost.operational_per_m2_year)?;
        writeln!(w, "inflation_rate = {}", self.cost.inflation_rate)?;
        writeln!(w, "lifespan_years = {}", self.cost.lifespan_years)?;
        writeln!(w, "zone_lineage_digits = {}", self.lineage_digits)?;
        Ok(())
    }
}

/// Keys a run may override without touching the layer files.
pub const OVERRIDABLE_KEYS: &[&str] = &[
    "rain_return_period_years",
    "routing_alpha",
    "infiltration_impervious_mm_hr",
    "infiltration_permeable_mm_hr",
    "infiltration_green_mm_hr",
    "infiltration_building_mm_hr",
    "building_offset_m",
    "drying_threshold_m",
    "drain_step_factor",
    "boundary",
    "depth_threshold_m",
    "buffer_radius",
    "aggregation",
];

fn read_rain<T: Scalar, R: BufRead>(reader: R) -> Result<Vec<T>, ScenarioError> {
    let mut intensities = Vec::new();
    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| ScenarioError::Io { path: "rain.csv".into(), source })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let err = |message: String| ScenarioError::Rain { line: idx + 1, message };
        if !header_seen {
            header_seen = true;
            if text.replace(' ', "") != "timestep,intensity_mm_hr" {
                return Err(err(format!("expected header `timestep,intensity_mm_hr`, found `{text}`")));
            }
            continue;
        }
        let (step, value) = text.split_once(',').ok_or_else(|| err(format!("expected two fields, found `{text}`")))?;
        let step: usize = step.trim().parse().map_err(|_| err(format!("`{step}` is not a step index")))?;
        if step != intensities.len() {
            return Err(err(format!("expected step {}, found {step}", intensities.len())));
        }
        let value: T = value.trim().parse().map_err(|_| err(format!("`{}` is not a number", value.trim())))?;
        intensities.push(value);
    }
    if !header_seen {
        return Err(ScenarioError::Rain { line: 1, message: "missing header".into() });
    }
    Ok(intensities)
}

fn write_rain<T: Scalar, W: Write>(rain: &RainEvent<T>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "timestep,intensity_mm_hr")?;
    for (k, i) in rain.intensities_mm_hr.iter().enumerate() {
        writeln!(w, "{k},{i}")?;
    }
    Ok(())
}

const FILES: [&str; 7] = ["dem.asc", "surface.asc", "zones.asc", "buildings.csv", "costs.csv", "rain.csv", "scenario.cfg"];

fn open(dir: &Path, name: &str) -> Result<BufReader<File>, ScenarioError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(ScenarioError::MissingFile(path));
    }
    File::open(&path).map(BufReader::new).map_err(io_err(&path))
}

fn read_grid<T: Scalar>(dir: &Path, name: &str) -> Result<AsciiGrid<T>, ScenarioError> {
    let reader = open(dir, name)?;
    AsciiGrid::read(reader).map_err(|source| ScenarioError::Raster { file: name.into(), source })
}

/// Integer-valued raster cell, or an error naming the cell.
fn integral<T: Scalar>(name: &str, grid: &AsciiGrid<T>, k: usize) -> Result<u64, ScenarioError> {
    let v = grid.values[k];
    let invalid = || ScenarioError::InvalidCell {
        file: name.into(),
        row: k / grid.ncols,
        col: k % grid.ncols,
        value: v.to_string(),
    };
    if v.fract() != T::zero() || v < T::zero() || v == grid.nodata_value {
        return Err(invalid());
    }
    v.to_u64().ok_or_else(invalid)
}

/// Loads and validates a scenario directory.
pub fn load_scenario<T: Scalar>(dir: &Path) -> Result<CatchmentScenario<T>, ScenarioError> {
    for name in FILES {
        if !dir.join(name).is_file() {
            return Err(ScenarioError::MissingFile(dir.join(name)));
        }
    }
    let settings = ScenarioSettings::<T>::read(open(dir, "scenario.cfg")?)?;
    let dem: AsciiGrid<T> = read_grid(dir, "dem.asc")?;
    let (nrows, ncols) = (dem.nrows, dem.ncols);
    let surface_grid: AsciiGrid<T> = read_grid(dir, "surface.asc")?;
    let zone_grid: AsciiGrid<T> = read_grid(dir, "zones.asc")?;
    for (name, g) in [("dem.asc", &dem), ("surface.asc", &surface_grid), ("zones.asc", &zone_grid)] {
        if g.nrows != nrows || g.ncols != ncols {
            return Err(ScenarioError::DimensionMismatch {
                file: name.into(),
                rows: nrows,
                cols: ncols,
                found_rows: g.nrows,
                found_cols: g.ncols,
            });
        }
        if g.cellsize != settings.cellsize {
            return Err(ScenarioError::CellsizeMismatch {
                file: name.into(),
                expected: settings.cellsize.to_string(),
                found: g.cellsize.to_string(),
            });
        }
    }
    if let Some(k) = dem.values.iter().position(|&z| z == dem.nodata_value || !z.is_finite()) {
        return Err(ScenarioError::InvalidCell {
            file: "dem.asc".into(),
            row: k / ncols,
            col: k % ncols,
            value: dem.values[k].to_string(),
        });
    }
    let mut surface = Vec::with_capacity(nrows * ncols);
    for k in 0..nrows * ncols {
        let code = integral("surface.asc", &surface_grid, k)?;
        let class = u8::try_from(code).ok().and_then(SurfaceClass::from_code).ok_or_else(|| {
            ScenarioError::InvalidCell {
                file: "surface.asc".into(),
                row: k / ncols,
                col: k % ncols,
                value: code.to_string(),
            }
        })?;
        surface.push(class);
    }

    let (cost_table, _) = ZoneCostTable::read_csv(open(dir, "costs.csv")?, &settings.cost)?;
    let mut index: HashMap<u64, u32> = HashMap::new();
    let mut labels = Vec::with_capacity(cost_table.len());
    for (j, row) in cost_table.rows().iter().enumerate() {
        let label: u64 = row
            .zone_id
            .parse()
            .map_err(|_| ScenarioError::Cost(CostError::Parse { line: j + 2, message: format!("zone id `{}` is not a positive integer", row.zone_id) }))?;
        if label == 0 {
            return Err(ScenarioError::Cost(CostError::Parse { line: j + 2, message: "zone id 0 is reserved".into() }));
        }
        if index.insert(label, j as u32 + 1).is_some() {
            return Err(ScenarioError::DuplicateZone(row.zone_id.clone()));
        }
        labels.push(label);
    }
    let mut zone_of_cell = Vec::with_capacity(nrows * ncols);
    for k in 0..nrows * ncols {
        let label = integral("zones.asc", &zone_grid, k)?;
        zone_of_cell.push(if label == 0 {
            0
        } else {
            *index.get(&label).ok_or(ScenarioError::UnknownZone { label, rows: labels.len() })?
        });
    }
    let zones = ZoneMap { nrows, ncols, zone_of_cell, labels, lineage_digits: settings.lineage_digits };

    let buildings = BuildingSet::read_csv(open(dir, "buildings.csv")?)?;
    for b in &buildings.buildings {
        if b.row0 > b.row1 || b.col0 > b.col1 || b.row1 >= nrows || b.col1 >= ncols {
            return Err(ScenarioError::BuildingOutsideGrid { id: b.id.clone() });
        }
    }

    let intensities = read_rain(open(dir, "rain.csv")?)?;
    let rain = RainEvent {
        return_period_years: settings.rain_return_period_years,
        duration_min: T::of_usize(intensities.len()) * settings.rain_timestep_s / T::of(60.0),
        timestep_s: settings.rain_timestep_s,
        intensities_mm_hr: intensities,
    };

    let grid = RasterGrid { ncols, nrows, cellsize: settings.cellsize, elevation: dem.values, surface };
    // fill in areas from the zone map where the table did not carry them
    let areas = zones.areas(grid.cell_area());
    let rows = cost_table
        .rows()
        .iter()
        .zip(areas)
        .map(|(row, area)| ZoneCost { area_m2: Some(row.area_m2.unwrap_or(area)), ..row.clone() })
        .collect();
    let scenario = CatchmentScenario {
        grid,
        zones,
        buildings,
        costs: ZoneCostTable::from_rows(rows),
        cost_params: settings.cost,
        rain,
        criteria: settings.criteria,
        sim: settings.sim,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Writes the seven scenario files into `dir` (created if needed).
pub fn save_scenario<T: Scalar>(scenario: &CatchmentScenario<T>, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let g = &scenario.grid;
    let raster = |name: &str, values: Vec<T>| -> Result<(), ScenarioError> {
        AsciiGrid::new(g.ncols, g.nrows, g.cellsize, values)
            .write_path(&dir.join(name), ValueFormat::RoundTrip)
            .map_err(|source| ScenarioError::Raster { file: name.into(), source })
    };
    raster("dem.asc", g.elevation.clone())?;
    raster("surface.asc", g.surface.iter().map(|c| T::of(c.code() as f64)).collect())?;
    let z = &scenario.zones;
    raster(
        "zones.asc",
        z.zone_of_cell
            .iter()
            .map(|&id| if id == 0 { T::zero() } else { T::of(z.labels[id as usize - 1] as f64) })
            .collect(),
    )?;
    let write_file = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<(), ScenarioError> {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        f(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
    };
    write_file("buildings.csv", &|w| scenario.buildings.write_csv(w))?;
    write_file("costs.csv", &|w| {
        scenario.costs.write_csv(&mut *w).map_err(|e| match e {
            CostError::Io(e) => e,
            other => std::io::Error::other(other.to_string()),
        })
    })?;
    write_file("rain.csv", &|w| write_rain(&scenario.rain, w))?;
    let settings = scenario.settings();
    write_file("scenario.cfg", &|w| settings.write(w))?;
    Ok(())
}

/// Flood model plus objectives for one scenario, precomputed once.
#[derive(Debug, Clone)]
pub struct ScenarioEvaluator<T> {
    simulator: Simulator<T>,
    exposure: ExposureIndex<T>,
    zones: ZoneMap,
    costs: ZoneCostTable<T>,
}

impl<T: Scalar> ScenarioEvaluator<T> {
    pub fn new(scenario: &CatchmentScenario<T>) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        Ok(Self {
            simulator: Simulator::new(&scenario.grid, &scenario.rain, &scenario.sim)?,
            exposure: ExposureIndex::new(&scenario.buildings, &scenario.grid, scenario.criteria),
            zones: scenario.zones.clone(),
            costs: scenario.costs.clone(),
        })
    }

    /// Flood result and objectives together.
    pub fn assess(&self, genome: &Genome) -> Result<(FloodResult<T>, ObjectiveVector<T>), EvalError> {
        let result = self.flood(genome)?;
        let risk = self.exposure.count(&result);
        let cost = self.costs.solution_cost(genome)?;
        Ok((result, ObjectiveVector { cost, risk }))
    }

    pub fn exposure(&self) -> &ExposureIndex<T> {
        &self.exposure
    }
}

impl<T: Scalar> FloodModel<T> for ScenarioEvaluator<T> {
    fn zone_count(&self) -> usize {
        self.zones.zone_count()
    }

    fn flood(&self, genome: &Genome) -> Result<FloodResult<T>, FloodError> {
        if genome.len() != self.zones.zone_count() {
            return Err(FloodError::ZoneMismatch { genome: genome.len(), zones: self.zones.zone_count() });
        }
        self.simulator.run(&self.zones.expand(genome))
    }
}

impl<T: Scalar> Evaluator<T> for ScenarioEvaluator<T> {
    fn zone_count(&self) -> usize {
        self.zones.zone_count()
    }

    fn evaluate(&self, genome: &Genome) -> Result<ObjectiveVector<T>, EvalError> {
        Ok(self.assess(genome)?.1)
    }
}

/// Parameters of a generated test catchment.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub cellsize: T,
    /// Ground slope falling from the north-west corner to the south-east.
    pub slope: T,
    /// Peak height of the random bumps and hollows added to the plane, metres.
    pub noise_amplitude_m: T,
    pub noise_features: usize,
    pub zone_count: usize,
    /// Edge of the square blocks zones are placed in, cells.
    pub zone_block: usize,
    /// Share of all cells that become candidate (zone) cells.
    pub candidate_fraction: T,
    pub building_count: usize,
    /// Depth and Gaussian radius (cells) of the hollow dug below each zone.
    pub hollow_depth_m: T,
    pub hollow_radius_cells: f64,
    /// Buildings placed around each hollow before the rest are scattered.
    pub buildings_per_hollow: usize,
    /// Smallest and largest building edge, cells.
    pub building_size: (usize, usize),
    pub rain_total_mm: T,
    pub rain_duration_min: T,
    pub rain_steps: usize,
    pub rain_return_period_years: T,
    pub cost: CostParams<T>,
    pub sim: SimParams<T>,
    pub criteria: ExposureCriteria<T>,
    pub seed: u64,
}

impl<T: Scalar> Default for SyntheticSpec<T> {
    fn default() -> Self {
        Self {
            nrows: 64,
            ncols: 64,
            cellsize: T::of(2.0),
            slope: T::of(0.033),
            noise_amplitude_m: T::of(0.15),
            noise_features: 24,
            zone_count: 10,
            zone_block: 16,
            candidate_fraction: T::of(0.15),
            building_count: 30,
            hollow_depth_m: T::of(0.15),
            hollow_radius_cells: 2.5,
            buildings_per_hollow: 2,
            building_size: (2, 4),
            rain_total_mm: T::of(21.9),
            rain_duration_min: T::of(30.0),
            rain_steps: 3,
            rain_return_period_years: T::of(30.0),
            cost: CostParams::default(),
            sim: SimParams::default(),
            criteria: ExposureCriteria::default(),
            seed: 2024,
        }
    }
}

impl<T: Scalar> SyntheticSpec<T> {
    /// The 15-zone variant of the default catchment.
    pub fn fifteen_zones() -> Self {
        Self { zone_count: 15, ..Self::default() }
    }

    /// The default storm scaled to another total depth and return period.
    pub fn storm(&self) -> RainEvent<T> {
        RainEvent::symmetric(self.rain_total_mm, self.rain_duration_min, self.rain_steps, self.rain_return_period_years)
    }
}

/// Splits `total` into integer parts proportional to `weights`
/// (largest remainder, ties to the lower index).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let short = total - parts.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        parts[k] += 1;
    }
    parts
}

/// Builds a deterministic sloped catchment with block zones and rectangular
/// buildings kept off zone cells.
pub fn generate_synthetic_catchment<T: Scalar>(spec: &SyntheticSpec<T>) -> Result<CatchmentScenario<T>, ScenarioError> {
    let (nrows, ncols) = (spec.nrows, spec.ncols);
    let cells = nrows * ncols;
    let fail = |m: String| Err(ScenarioError::Synthetic(m));
    if cells == 0 || spec.zone_count == 0 || spec.zone_block < 3 {
        return fail("grid, zone count and zone block must be non-trivial".into());
    }
    let (bmin, bmax) = spec.building_size;
    if bmin == 0 || bmin > bmax {
        return fail(format!("invalid building size range {bmin}..={bmax}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // terrain: plane plus smooth bumps and hollows
    let mut elevation = vec![T::zero(); cells];
    let diag = spec.cellsize / T::of(std::f64::consts::SQRT_2);
    let base = spec.slope * diag * T::of_usize(nrows + ncols) + T::of(10.0);
    for r in 0..nrows {
        for c in 0..ncols {
            elevation[r * ncols + c] = base - spec.slope * diag * T::of_usize(r + c);
        }
    }
    if spec.noise_amplitude_m != T::zero() {
        for _ in 0..spec.noise_features {
            let cr = rng.gen_range(0.0..nrows as f64);
            let cc = rng.gen_range(0.0..ncols as f64);
            let radius: f64 = rng.gen_range(2.5..7.0);
            let amp = T::of(rng.gen_range(-1.0..1.0)) * spec.noise_amplitude_m;
            for r in 0..nrows {
                for c in 0..ncols {
                    let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                    let shape = T::of((-d2 / (2.0 * radius * radius)).exp());
                    elevation[r * ncols + c] = elevation[r * ncols + c] + amp * shape;
                }
            }
        }
    }

    // zones: one per randomly chosen block, sizes apportioned from the
    // candidate fraction and kept distinct
    let block = spec.zone_block;
    let (brows, bcols) = (nrows / block, ncols / block);
    if spec.zone_count > brows * bcols {
        return fail(format!("{} zones do not fit in {} blocks", spec.zone_count, brows * bcols));
    }
    let candidate_cells = (spec.candidate_fraction * T::of_usize(cells)).round().to_usize().unwrap_or(0);
    let inner = block - 2;
    if candidate_cells < spec.zone_count || candidate_cells > spec.zone_count * inner * inner {
        return fail(format!("{candidate_cells} candidate cells cannot fill {} zones", spec.zone_count));
    }
    let mut sizes = Vec::new();
    for _ in 0..1000 {
        let weights: Vec<f64> = (0..spec.zone_count).map(|_| rng.gen_range(0.5..1.5)).collect();
        let parts = apportion(candidate_cells, &weights);
        let mut sorted = parts.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() == parts.len() && parts.iter().all(|&p| p >= 1 && p <= inner * inner) {
            sizes = parts;
            break;
        }
    }
    if sizes.is_empty() {
        return fail("could not draw distinct zone sizes".into());
    }
    let mut blocks: Vec<usize> = (0..brows * bcols).collect();
    for k in 0..spec.zone_count {
        let pick = rng.gen_range(k..blocks.len());
        blocks.swap(k, pick);
    }
    let mut chosen = blocks[..spec.zone_count].to_vec();
    chosen.sort_unstable();
    let mut zone_of_cell = vec![0u32; cells];
    for (j, (&b, &size)) in chosen.iter().zip(&sizes).enumerate() {
        let width = ((size as f64).sqrt().ceil() as usize).clamp(1, inner);
        let height = size.div_ceil(width);
        let r0 = (b / bcols) * block + 1 + rng.gen_range(0..=inner - height);
        let c0 = (b % bcols) * block + 1 + rng.gen_range(0..=inner - width);
        for i in 0..size {
            zone_of_cell[(r0 + i / width) * ncols + c0 + i % width] = j as u32 + 1;
        }
    }

    // a hollow just downslope of each zone, so the zone's runoff ponds there
    let mut hollows = Vec::with_capacity(spec.zone_count);
    for j in 0..spec.zone_count {
        let id = j as u32 + 1;
        let (mut rmax, mut cmax) = (0, 0);
        for k in (0..cells).filter(|&k| zone_of_cell[k] == id) {
            rmax = rmax.max(k / ncols);
            cmax = cmax.max(k % ncols);
        }
        let hr = (rmax + 2 + rng.gen_range(0..2)).min(nrows - 1);
        let hc = (cmax + 2 + rng.gen_range(0..2)).min(ncols - 1);
        hollows.push((hr, hc));
        if spec.hollow_depth_m != T::zero() {
            let radius = spec.hollow_radius_cells;
            for r in 0..nrows {
                for c in 0..ncols {
                    let d2 = (r as f64 - hr as f64).powi(2) + (c as f64 - hc as f64).powi(2);
                    let shape = T::of((-d2 / (2.0 * radius * radius)).exp());
                    elevation[r * ncols + c] = elevation[r * ncols + c] - spec.hollow_depth_m * shape;
                }
            }
        }
    }

    // buildings: rectangles with a one-cell margin from zones and each other,
    // first beside the hollows, then anywhere
    let mut surface: Vec<SurfaceClass> = zone_of_cell
        .iter()
        .map(|&z| if z > 0 { SurfaceClass::PermeableCandidate } else { SurfaceClass::Impervious })
        .collect();
    if bmax + 2 > nrows || bmax + 2 > ncols {
        return fail("buildings do not fit in the grid".into());
    }
    let mut buildings: Vec<Building> = Vec::with_capacity(spec.building_count);
    let mut place = |r0: usize, c0: usize, h: usize, w: usize, surface: &mut Vec<SurfaceClass>| -> bool {
        if r0 == 0 || c0 == 0 || r0 + h >= nrows || c0 + w >= ncols {
            return false;
        }
        let clear = (r0 - 1..=r0 + h).all(|r| {
            (c0 - 1..=c0 + w).all(|c| {
                let k = r * ncols + c;
                zone_of_cell[k] == 0 && surface[k] != SurfaceClass::Building
            })
        });
        if clear {
            let b = Building { id: format!("B{}", buildings.len() + 1), row0: r0, col0: c0, row1: r0 + h - 1, col1: c0 + w - 1 };
            for k in b.footprint(ncols) {
                surface[k] = SurfaceClass::Building;
            }
            buildings.push(b);
        }
        clear
    };
    let mut placed = 0;
    for &(hr, hc) in &hollows {
        let mut here = 0;
        for _ in 0..500 {
            if here == spec.buildings_per_hollow || placed == spec.building_count {
                break;
            }
            let h = rng.gen_range(bmin..=bmax);
            let w = rng.gen_range(bmin..=bmax);
            // footprint touching the hollow centre without covering it
            let r0 = (hr + 1).saturating_sub(rng.gen_range(0..=h + 1));
            let c0 = (hc + 1).saturating_sub(rng.gen_range(0..=w + 1));
            let covers = (r0..r0 + h).contains(&hr) && (c0..c0 + w).contains(&hc);
            if !covers && place(r0, c0, h, w, &mut surface) {
                here += 1;
                placed += 1;
            }
        }
    }
    let mut attempts = 0;
    while placed < spec.building_count {
        attempts += 1;
        if attempts > 100_000 {
            return fail(format!("placed only {placed} of {} buildings", spec.building_count));
        }
        let h = rng.gen_range(bmin..=bmax);
        let w = rng.gen_range(bmin..=bmax);
        let r0 = rng.gen_range(1..nrows - h);
        let c0 = rng.gen_range(1..ncols - w);
        if place(r0, c0, h, w, &mut surface) {
            placed += 1;
        }
    }

    let grid = RasterGrid { ncols, nrows, cellsize: spec.cellsize, elevation, surface };
    let labels: Vec<u64> = (1..=spec.zone_count as u64).collect();
    let zones = ZoneMap { nrows, ncols, zone_of_cell, labels, lineage_digits: 0 };
    let areas = zones.areas(grid.cell_area());
    let costs = ZoneCostTable::from_areas(zones.labels.iter().map(|l| l.to_string()).zip(areas), &spec.cost)?;
    let scenario = CatchmentScenario {
        grid,
        zones,
        buildings: BuildingSet { buildings },
        costs,
        cost_params: spec.cost,
        rain: spec.storm(),
        criteria: spec.criteria,
        sim: spec.sim.clone(),
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn tiny() -> CatchmentScenario<f64> {
        // 2x2: two zone cells on top, a building and a street below
        let surface = vec![
            SurfaceClass::PermeableCandidate,
            SurfaceClass::PermeableCandidate,
            SurfaceClass::Building,
            SurfaceClass::Impervious,
        ];
        let grid = RasterGrid { ncols: 2, nrows: 2, cellsize: 2.0, elevation: vec![1.0, 0.9, 0.8, 0.7], surface };
        let zones = ZoneMap { nrows: 2, ncols: 2, zone_of_cell: vec![1, 2, 0, 0], labels: vec![1, 2], lineage_digits: 0 };
        let params = CostParams::default();
        let costs = ZoneCostTable::from_areas([("1", 4.0), ("2", 4.0)], &params).unwrap();
        CatchmentScenario {
            grid,
            zones,
            buildings: BuildingSet { buildings: vec![Building { id: "H".into(), row0: 1, col0: 0, row1: 1, col1: 0 }] },
            costs,
            cost_params: params,
            rain: RainEvent::symmetric(21.9, 30.0, 3, 30.0),
            criteria: ExposureCriteria::default(),
            sim: SimParams::default(),
        }
    }

    #[test]
    fn minimal_scenario_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = tiny();
        save_scenario(&s, dir.path()).unwrap();
        let back: CatchmentScenario<f64> = load_scenario(dir.path()).unwrap();
        assert_eq!(back.zone_count(), 2);
        assert_eq!(back, s);
    }

    #[test]
    fn synthetic_round_trips_field_by_field() {
        let s = generate_synthetic_catchment::<f64>(&SyntheticSpec::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_scenario(&s, dir.path()).unwrap();
        let back: CatchmentScenario<f64> = load_scenario(dir.path()).unwrap();
        assert_eq!(back.grid, s.grid);
        assert_eq!(back.zones, s.zones);
        assert_eq!(back.buildings, s.buildings);
        assert_eq!(back.costs, s.costs);
        assert_eq!(back.rain, s.rain);
        assert_eq!(back.criteria, s.criteria);
        assert_eq!(back.sim, s.sim);
        assert_eq!(back.cost_params, s.cost_params);
    }

    fn replace_in(dir: &Path, file: &str, from: &str, to: &str) {
        let path = dir.join(file);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(from), "{file} lacks {from:?}");
        fs::write(&path, text.replacen(from, to, 1)).unwrap();
    }

    #[test]
    fn load_errors_are_distinct() {
        let s = tiny();
        let fresh = || {
            let dir = tempfile::tempdir().unwrap();
            save_scenario(&s, dir.path()).unwrap();
            dir
        };

        let dir = fresh();
        fs::remove_file(dir.path().join("rain.csv")).unwrap();
        assert!(matches!(load_scenario::<f64>(dir.path()), Err(ScenarioError::MissingFile(_))));

        let dir = fresh();
        replace_in(dir.path(), "surface.asc", "nrows 2", "nrows 1");
        fs::write(dir.path().join("surface.asc"), "ncols 2\nnrows 1\ncellsize 2\nnodata_value -9999\n1 1\n").unwrap();
        assert!(matches!(load_scenario::<f64>(dir.path()), Err(ScenarioError::DimensionMismatch { .. })));

        let dir = fresh();
        replace_in(dir.path(), "zones.asc", "1 2", "1 5");
        assert!(matches!(load_scenario::<f64>(dir.path()), Err(ScenarioError::UnknownZone { label: 5, rows: 2 })));

        let dir = fresh();
        fs::write(dir.path().join("costs.csv"), "zone_id,lifecycle_cost\n1,5\n2,7\n3,9\n").unwrap();
        assert!(matches!(load_scenario::<f64>(dir.path()), Err(ScenarioError::ZoneIdGap(z)) if z == "3"));

        let dir = fresh();
        fs::write(dir.path().join("buildings.csv"), "building_id,row0,col0,row1,col1\nH,1,0,2,0\n").unwrap();
        assert!(matches!(load_scenario::<f64>(dir.path()), Err(ScenarioError::BuildingOutsideGrid { .. })));

        let dir = fresh();
        replace_in(dir.path(), "scenario.cfg", "routing_alpha = 0.5", "routing_alpha = fast");
        assert!(matches!(load_scenario::<f64>(dir.path()), Err(ScenarioError::Config { .. })));

        let dir = fresh();
        fs::write(dir.path().join("buildings.csv"), "building_id,row0,col0,row1,col1\nH,1,1,1,1\n").unwrap();
        assert!(matches!(load_scenario::<f64>(dir.path()), Err(ScenarioError::BuildingSurface { .. })));
    }

    #[test]
    fn area_costs_are_derived_on_load() {
        let s = tiny();
        let dir = tempfile::tempdir().unwrap();
        save_scenario(&s, dir.path()).unwrap();
        fs::write(dir.path().join("costs.csv"), "zone_id,area_m2\n1,4\n2,4\n").unwrap();
        let back: CatchmentScenario<f64> = load_scenario(dir.path()).unwrap();
        assert_eq!(back.costs, s.costs);
    }

    #[test]
    fn overrides() {
        let mut s = tiny();
        s.apply_override("depth_threshold_m", "0.2").unwrap();
        s.apply_override("boundary", "closed").unwrap();
        assert_eq!(s.criteria.depth_threshold_m, 0.2);
        assert_eq!(s.sim.boundary, Boundary::Closed);
        assert!(s.apply_override("cellsize", "3").unwrap_err().contains("cannot be overridden"));
        assert!(s.apply_override("colour", "3").unwrap_err().contains("unknown"));
        assert!(s.apply_override("routing_alpha", "2").is_err());
        assert_eq!(s.sim.routing_alpha, 0.5);
    }

    #[test]
    fn block_bisects_evenly() {
        let zones = ZoneMap { nrows: 4, ncols: 4, zone_of_cell: vec![1; 16], labels: vec![1], lineage_digits: 0 };
        let two = subdivide_zones(&zones, 2).unwrap();
        assert_eq!(two.labels, vec![11, 12]);
        assert_eq!(two.cell_counts(), vec![8, 8]);
        let four = subdivide_zones(&zones, 4).unwrap();
        assert_eq!(four.labels, vec![111, 112, 121, 122]);
        assert_eq!(four.cell_counts(), vec![4, 4, 4, 4]);
        assert_eq!(four.merge_levels(2), zones);
        let single = ZoneMap { nrows: 1, ncols: 3, zone_of_cell: vec![1, 0, 2], labels: vec![1, 2], lineage_digits: 0 };
        assert!(matches!(subdivide_zones(&single, 2), Err(ScenarioError::Subdivision { label: 1, cells: 1, factor: 2 })));
        assert!(subdivide_zones(&zones, 3).is_err());
    }

    #[test]
    fn repeated_subdivision_keeps_lineage_and_area() {
        let s = generate_synthetic_catchment::<f64>(&SyntheticSpec::default()).unwrap();
        let mut current = s.clone();
        for (levels, expected) in [(1u32, 20usize), (2, 40), (3, 80)] {
            current = current.subdivide(2).unwrap();
            assert_eq!(current.zone_count(), expected);
            assert_eq!(current.zones.merge_levels(levels), s.zones);
            let total: usize = current.zones.cell_counts().iter().sum();
            assert_eq!(total, s.zones.cell_counts().iter().sum::<usize>());
            // children's costs add back to each ancestor exactly
            for (p, parent) in s.costs.rows().iter().enumerate() {
                let kids: Vec<f64> = (0..expected)
                    .filter(|&j| current.zones.ancestor_label(j, levels) == s.zones.labels[p])
                    .map(|j| current.costs.cost(j))
                    .collect();
                assert_eq!(kids.len(), 1 << levels);
                assert_eq!(crate::scalar::exact_sum(kids), parent.lifecycle_cost);
            }
        }
        let four = s.subdivide(4).unwrap();
        assert_eq!(four.zones, s.subdivide(2).unwrap().subdivide(2).unwrap().zones);
    }

    #[test]
    fn synthetic_bookkeeping() {
        let spec = SyntheticSpec::<f64>::default();
        let s = generate_synthetic_catchment(&spec).unwrap();
        assert_eq!(s, generate_synthetic_catchment(&spec).unwrap());
        assert_eq!(s.zone_count(), 10);
        assert_eq!(s.buildings.len(), 30);
        let counts = s.zones.cell_counts();
        assert_eq!(counts.iter().sum::<usize>(), (0.15f64 * 4096.0).round() as usize);
        assert_eq!(counts.iter().collect::<HashSet<_>>().len(), 10);
        let flat = SyntheticSpec { slope: 0.0, noise_amplitude_m: 0.0, hollow_depth_m: 0.0, ..spec.clone() };
        let s = generate_synthetic_catchment(&flat).unwrap();
        assert!(s.grid.elevation.iter().all(|&z| z == s.grid.elevation[0]));
        assert_eq!(generate_synthetic_catchment::<f64>(&SyntheticSpec::fifteen_zones()).unwrap().zone_count(), 15);
    }

    #[test]
    fn genome_expansion() {
        let s = generate_synthetic_catchment::<f64>(&SyntheticSpec::default()).unwrap();
        let all = s.zones.expand(&Genome::ones(10));
        for k in 0..all.len() {
            assert_eq!(all[k], s.grid.surface[k] == SurfaceClass::PermeableCandidate);
        }
        let one = s.zones.expand(&"0010000000".parse().unwrap());
        assert_eq!(one.iter().filter(|&&a| a).count(), s.zones.cell_counts()[2]);
        assert!(s.zones.expand(&Genome::zeros(10)).iter().all(|&a| !a));
    }

    #[test]
    fn evaluator_is_deterministic_and_checks_length() {
        let s = generate_synthetic_catchment::<f64>(&SyntheticSpec::default()).unwrap();
        let eval = s.evaluator().unwrap();
        let zeros = Genome::zeros(10);
        assert_eq!(eval.flood(&zeros).unwrap(), eval.flood(&zeros).unwrap());
        assert!(eval.evaluate(&Genome::zeros(9)).is_err());
        let base = eval.evaluate(&zeros).unwrap();
        let full = eval.evaluate(&Genome::ones(10)).unwrap();
        assert_eq!(base.cost, 0.0);
        assert!(full.risk <= base.risk);
    }
}
