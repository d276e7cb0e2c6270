//! Flood evaluation: the evaluator contract used by the optimizer and a
//! deterministic raster rainfall-runoff-infiltration model.
//!
//! The built-in model is a mass-conserving cellular scheme. Each time step
//! adds rainfall, removes infiltration on permeable cells, then moves water
//! from every cell towards its strictly lower-head 4-neighbours. All fluxes of
//! a step are computed from the previous state, so the result does not depend
//! on the order cells are visited.

use crate::genome::Genome;
use crate::scalar::{exact_sum, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum FloodError {
    #[error("genome has {genome} bits but the scenario has {zones} zones")]
    ZoneMismatch { genome: usize, zones: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid rain event: {0}")]
    InvalidRain(String),
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceClass {
    Impervious,
    PermeableCandidate,
    Green,
    Building,
}

impl SurfaceClass {
    pub const ALL: [SurfaceClass; 4] = [
        SurfaceClass::Impervious,
        SurfaceClass::PermeableCandidate,
        SurfaceClass::Green,
        SurfaceClass::Building,
    ];

    /// Integer code used in surface rasters.
    pub fn code(self) -> u8 {
        match self {
            SurfaceClass::Impervious => 0,
            SurfaceClass::PermeableCandidate => 1,
            SurfaceClass::Green => 2,
            SurfaceClass::Building => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid<T> {
    pub ncols: usize,
    pub nrows: usize,
    /// Cell edge length in metres.
    pub cellsize: T,
    /// Ground elevation in metres, row-major with row 0 at the top.
    pub elevation: Vec<T>,
    pub surface: Vec<SurfaceClass>,
}

impl<T: Scalar> RasterGrid<T> {
    pub fn validate(&self) -> Result<(), FloodError> {
        let cells = self.ncols * self.nrows;
        if cells == 0 {
            return Err(FloodError::InvalidGrid("grid has no cells".into()));
        }
        if !(self.cellsize > T::zero()) {
            return Err(FloodError::InvalidGrid(format!("cellsize {} must be positive", self.cellsize)));
        }
        if self.elevation.len() != cells || self.surface.len() != cells {
            return Err(FloodError::InvalidGrid(format!(
                "layer sizes {} (elevation) and {} (surface) do not match {}x{}",
                self.elevation.len(),
                self.surface.len(),
                self.nrows,
                self.ncols
            )));
        }
        if let Some(k) = self.elevation.iter().position(|z| !z.is_finite()) {
            return Err(FloodError::InvalidGrid(format!("non-finite elevation at cell {k}")));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn cell_area(&self) -> T {
        self.cellsize * self.cellsize
    }
}

/// Design storm: a hyetograph sampled at a fixed time step.
#[derive(Debug, Clone, PartialEq)]
pub struct RainEvent<T> {
    pub return_period_years: T,
    pub duration_min: T,
    pub timestep_s: T,
    /// Intensity per time step, mm/hr.
    pub intensities_mm_hr: Vec<T>,
}

impl<T: Scalar> RainEvent<T> {
    /// Symmetric triangular hyetograph delivering `total_mm` over `steps`
    /// equal steps spanning `duration_min`.
    pub fn symmetric(total_mm: T, duration_min: T, steps: usize, return_period_years: T) -> Self {
        assert!(steps > 0);
        let weights: Vec<T> = (0..steps)
            .map(|k| T::of_usize(k.min(steps - 1 - k) + 1))
            .collect();
        let weight_sum = exact_sum(weights.iter().copied());
        let timestep_s = duration_min * T::of(60.0) / T::of_usize(steps);
        let hours = timestep_s / T::of(3600.0);
        let intensities_mm_hr = weights.iter().map(|&w| total_mm * w / weight_sum / hours).collect();
        Self { return_period_years, duration_min, timestep_s, intensities_mm_hr }
    }

    pub fn validate(&self) -> Result<(), FloodError> {
        if !(self.timestep_s > T::zero()) {
            return Err(FloodError::InvalidRain("timestep must be positive".into()));
        }
        if self.intensities_mm_hr.iter().any(|i| !(*i >= T::zero()) || !i.is_finite()) {
            return Err(FloodError::InvalidRain("intensities must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.intensities_mm_hr.len()
    }

    /// Depth delivered in each step, metres.
    pub fn step_depths_m(&self) -> Vec<T> {
        let per_step = self.timestep_s / T::of(3600.0) / T::of(1000.0);
        self.intensities_mm_hr.iter().map(|&i| i * per_step).collect()
    }

    pub fn total_depth_mm(&self) -> T {
        let hours = self.timestep_s / T::of(3600.0);
        exact_sum(self.intensities_mm_hr.iter().map(|&i| i * hours))
    }
}

/// Treatment of water reaching the edge of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// No flow across the edge.
    Closed,
    /// Water leaves where the terrain, extrapolated linearly past the edge,
    /// keeps falling.
    FreeOutfall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams<T> {
    /// Fraction of the transferable depth moved per step, in (0, 1].
    pub routing_alpha: T,
    /// Infiltration rate per surface class (indexed by [`SurfaceClass::code`]), mm/hr.
    pub infiltration_mm_hr: [T; 4],
    /// Height added to building cells so water routes around them.
    pub building_offset_m: T,
    pub drying_threshold_m: T,
    /// Post-rain step cap as a multiple of the number of rain steps.
    pub drain_step_factor: usize,
    pub boundary: Boundary,
}

impl<T: Scalar> Default for SimParams<T> {
    fn default() -> Self {
        Self {
            routing_alpha: T::of(0.5),
            infiltration_mm_hr: [T::zero(), T::of(30.0), T::of(15.0), T::zero()],
            building_offset_m: T::of(10.0),
            drying_threshold_m: T::of(1e-5),
            drain_step_factor: 10,
            boundary: Boundary::FreeOutfall,
        }
    }
}

impl<T: Scalar> SimParams<T> {
    pub fn infiltration(&self, class: SurfaceClass) -> T {
        self.infiltration_mm_hr[class.code() as usize]
    }

    pub fn validate(&self) -> Result<(), FloodError> {
        if !(self.routing_alpha > T::zero() && self.routing_alpha <= T::one()) {
            return Err(FloodError::InvalidParams(format!(
                "routing coefficient {} outside (0, 1]",
                self.routing_alpha
            )));
        }
        if self.infiltration_mm_hr.iter().any(|r| !(*r >= T::zero()) || !r.is_finite()) {
            return Err(FloodError::InvalidParams("infiltration rates must be non-negative".into()));
        }
        if !(self.drying_threshold_m > T::zero()) {
            return Err(FloodError::InvalidParams("drying threshold must be positive".into()));
        }
        if !(self.building_offset_m >= T::zero()) {
            return Err(FloodError::InvalidParams("building offset must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloodResult<T> {
    pub ncols: usize,
    pub nrows: usize,
    /// Largest depth seen in each cell, metres.
    pub max_depth: Vec<T>,
    pub final_depth: Vec<T>,
    pub rainfall_volume: T,
    pub infiltrated_volume: T,
    pub boundary_outflow_volume: T,
    /// Water still on the surface at the end, m³.
    pub storage_volume: T,
    pub steps: usize,
    /// False when the step cap was hit before the surface settled.
    pub drained: bool,
}

impl<T: Scalar> FloodResult<T> {
    /// `rainfall - (storage + infiltrated + outflow)`, relative to rainfall
    /// (absolute when there was no rain).
    pub fn mass_balance_error(&self) -> T {
        let residual = self.rainfall_volume
            - exact_sum([self.storage_volume, self.infiltrated_volume, self.boundary_outflow_volume]);
        if self.rainfall_volume > T::zero() {
            residual.abs() / self.rainfall_volume
        } else {
            residual.abs()
        }
    }

    pub fn depth_at(&self, row: usize, col: usize) -> T {
        self.max_depth[row * self.ncols + col]
    }
}

/// Anything that can turn a candidate into a flood outcome. Implementations
/// must be deterministic and safe to call concurrently on distinct genomes.
pub trait FloodModel<T: Scalar>: Sync {
    fn zone_count(&self) -> usize;
    fn flood(&self, genome: &Genome) -> Result<FloodResult<T>, FloodError>;
}

/// Precomputed state for repeated simulations on one grid and storm.
///
/// Arrays are padded with a one-cell ghost ring so that every interior cell
/// has four neighbours; ghost cells never hold water.
#[derive(Debug, Clone)]
pub struct Simulator<T> {
    ncols: usize,
    nrows: usize,
    stride: usize,
    cell_area: T,
    /// Ground plus building offset, padded layout.
    base: Vec<T>,
    /// 1 where rain lands (non-building), 0 elsewhere; padded layout.
    rain_mask: Vec<T>,
    /// Infiltration depth per step when the cell is permeable, by class.
    class_capacity: Vec<T>,
    surface: Vec<SurfaceClass>,
    /// Terrain drop towards the ghost cell, per boundary direction (N, S, W, E).
    ghost_drop: [Vec<T>; 4],
    rain_depths: Vec<T>,
    wet_cells: usize,
    params: SimParams<T>,
}

const LANES: usize = 8;

#[inline(always)]
fn pos<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[inline(always)]
fn max<T: Scalar>(a: T, b: T) -> T {
    if a > b {
        a
    } else {
        b
    }
}

#[inline(always)]
fn min<T: Scalar>(a: T, b: T) -> T {
    if a < b {
        a
    } else {
        b
    }
}

impl<T: Scalar> Simulator<T> {
    pub fn new(grid: &RasterGrid<T>, rain: &RainEvent<T>, params: &SimParams<T>) -> Result<Self, FloodError> {
        grid.validate()?;
        rain.validate()?;
        params.validate()?;
        let (nrows, ncols) = (grid.nrows, grid.ncols);
        let stride = ncols + 2;
        let padded = ((nrows + 2) * stride).div_ceil(LANES) * LANES;
        let mut base = vec![T::zero(); padded];
        let mut rain_mask = vec![T::zero(); padded];
        let mut wet_cells = 0;
        for r in 0..nrows {
            for c in 0..ncols {
                let k = r * ncols + c;
                let p = (r + 1) * stride + c + 1;
                let building = grid.surface[k] == SurfaceClass::Building;
                base[p] = grid.elevation[k] + if building { params.building_offset_m } else { T::zero() };
                if !building {
                    rain_mask[p] = T::one();
                    wet_cells += 1;
                }
            }
        }

        let z = |r: usize, c: usize| grid.elevation[r * ncols + c];
        let mut ghost_drop: [Vec<T>; 4] = [
            vec![T::zero(); ncols],
            vec![T::zero(); ncols],
            vec![T::zero(); nrows],
            vec![T::zero(); nrows],
        ];
        if params.boundary == Boundary::FreeOutfall {
            if nrows >= 2 {
                for c in 0..ncols {
                    ghost_drop[0][c] = pos(z(1, c) - z(0, c));
                    ghost_drop[1][c] = pos(z(nrows - 2, c) - z(nrows - 1, c));
                }
            }
            if ncols >= 2 {
                for r in 0..nrows {
                    ghost_drop[2][r] = pos(z(r, 1) - z(r, 0));
                    ghost_drop[3][r] = pos(z(r, ncols - 2) - z(r, ncols - 1));
                }
            }
        }

        let per_step_m = rain.timestep_s / T::of(3600.0) / T::of(1000.0);
        let class_capacity = SurfaceClass::ALL
            .iter()
            .map(|&class| params.infiltration(class) * per_step_m)
            .collect();

        Ok(Self {
            ncols,
            nrows,
            stride,
            cell_area: grid.cell_area(),
            base,
            rain_mask,
            class_capacity,
            surface: grid.surface.clone(),
            ghost_drop,
            rain_depths: rain.step_depths_m(),
            wet_cells,
            params: params.clone(),
        })
    }

    pub fn cell_count(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Runs the storm with permeability switched on where `active` is true.
    /// Permeable-candidate cells outside `active` behave as impervious.
    pub fn run(&self, active: &[bool]) -> Result<FloodResult<T>, FloodError> {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { self.run_avx2(active, None) };
        }
        self.run_kernel(active, None)
    }

    /// Like [`Simulator::run`] but starting from standing water `initial`
    /// (metres per cell, unpadded). That water is not counted as rainfall.
    pub fn run_from(&self, active: &[bool], initial: &[T]) -> Result<FloodResult<T>, FloodError> {
        if initial.len() != self.cell_count() || initial.iter().any(|d| !(*d >= T::zero())) {
            return Err(FloodError::InvalidParams("initial depths must be non-negative, one per cell".into()));
        }
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as in `run`.
            return unsafe { self.run_avx2(active, Some(initial)) };
        }
        self.run_kernel(active, Some(initial))
    }

    // Same code compiled with wider vectors. No FMA is enabled, so every
    // operation rounds exactly as in the baseline build.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn run_avx2(&self, active: &[bool], initial: Option<&[T]>) -> Result<FloodResult<T>, FloodError> {
        self.run_kernel(active, initial)
    }

    #[inline(always)]
    fn run_kernel(&self, active: &[bool], initial: Option<&[T]>) -> Result<FloodResult<T>, FloodError> {
        if active.len() != self.cell_count() {
            return Err(FloodError::InvalidGrid(format!(
                "activation mask has {} cells, grid has {}",
                active.len(),
                self.cell_count()
            )));
        }
        let (nrows, ncols, stride) = (self.nrows, self.ncols, self.stride);
        let padded = self.base.len();
        let zero = T::zero();
        let half = T::of(0.5);
        let alpha = self.params.routing_alpha;

        let mut capacity = vec![zero; padded];
        for r in 0..nrows {
            for c in 0..ncols {
                let k = r * ncols + c;
                let class = self.surface[k];
                let permeable = match class {
                    SurfaceClass::PermeableCandidate => active[k],
                    _ => true,
                };
                let effective = if permeable { class } else { SurfaceClass::Impervious };
                capacity[(r + 1) * stride + c + 1] = self.class_capacity[effective.code() as usize];
            }
        }

        let mut depth = vec![zero; padded];
        let mut max_depth = vec![zero; padded];
        if let Some(initial) = initial {
            for r in 0..nrows {
                let p = (r + 1) * stride + 1;
                depth[p..p + ncols].copy_from_slice(&initial[r * ncols..(r + 1) * ncols]);
                max_depth[p..p + ncols].copy_from_slice(&initial[r * ncols..(r + 1) * ncols]);
            }
        }
        let mut head = self.base.clone();
        let mut weight = vec![zero; padded];
        let mut sent = vec![zero; padded];
        let mut delta = vec![zero; ncols];

        let mut rainfall = zero;
        let mut infiltrated = zero;
        let mut outflow = zero;

        let rain_steps = self.rain_depths.len();
        let step_cap = rain_steps + self.params.drain_step_factor * rain_steps.max(1);
        let settle = self.params.drying_threshold_m * T::of_usize(self.cell_count());
        let mut steps = 0;
        let mut drained = false;

        while steps < step_cap {
            let raining = steps < rain_steps;

            // rain, infiltration and the resulting heads
            let r = if raining { self.rain_depths[steps] } else { zero };
            if raining {
                rainfall = rainfall + r * T::of_usize(self.wet_cells);
            }
            let mut lanes = [zero; LANES];
            for (((d, c), m), (hd, b)) in depth
                .chunks_exact_mut(LANES)
                .zip(capacity.chunks_exact(LANES))
                .zip(self.rain_mask.chunks_exact(LANES))
                .zip(head.chunks_exact_mut(LANES).zip(self.base.chunks_exact(LANES)))
            {
                for k in 0..LANES {
                    let h = d[k] + r * m[k];
                    let f = min(h, c[k]);
                    let h = h - f;
                    d[k] = h;
                    hd[k] = b[k] + h;
                    lanes[k] = lanes[k] + f;
                }
            }
            let step_infiltration = lanes.iter().fold(zero, |a, &b| a + b);
            infiltrated = infiltrated + step_infiltration;

            // ghost heads sit `drop` below their interior neighbour
            for c in 0..ncols {
                let top = stride + c + 1;
                let bottom = nrows * stride + c + 1;
                head[c + 1] = head[top] - self.ghost_drop[0][c];
                head[(nrows + 1) * stride + c + 1] = head[bottom] - self.ghost_drop[1][c];
            }
            for r in 0..nrows {
                let left = (r + 1) * stride + 1;
                let right = (r + 1) * stride + ncols;
                head[left - 1] = head[left] - self.ghost_drop[2][r];
                head[right + 1] = head[right] - self.ghost_drop[3][r];
            }

            // outgoing transfer per cell: alpha * min(depth, steepest drop / 2),
            // shared between lower neighbours in proportion to head difference
            for r in 1..=nrows {
                let lo = r * stride + 1;
                let hn = &head[lo - stride..][..ncols];
                let hs = &head[lo + stride..][..ncols];
                let hw = &head[lo - 1..][..ncols];
                let he = &head[lo + 1..][..ncols];
                let hc = &head[lo..][..ncols];
                let dc = &depth[lo..][..ncols];
                let sent_row = &mut sent[lo..][..ncols];
                let weight_row = &mut weight[lo..][..ncols];
                for k in 0..ncols {
                    let h0 = hc[k];
                    let dn = pos(h0 - hn[k]);
                    let ds = pos(h0 - hs[k]);
                    let dw = pos(h0 - hw[k]);
                    let de = pos(h0 - he[k]);
                    let total = dn + ds + dw + de;
                    let steepest = max(max(dn, ds), max(dw, de));
                    let q = alpha * min(dc[k], steepest * half);
                    sent_row[k] = q;
                    weight_row[k] = if total > zero { q / total } else { zero };
                }
            }

            // boundary outflow: the share each edge cell sends to its ghost
            let mut step_outflow = zero;
            for c in 0..ncols {
                let top = stride + c + 1;
                let bottom = nrows * stride + c + 1;
                step_outflow = step_outflow + weight[top] * pos(head[top] - head[c + 1]);
                step_outflow = step_outflow
                    + weight[bottom] * pos(head[bottom] - head[(nrows + 1) * stride + c + 1]);
            }
            for r in 0..nrows {
                let left = (r + 1) * stride + 1;
                let right = (r + 1) * stride + ncols;
                step_outflow = step_outflow + weight[left] * pos(head[left] - head[left - 1]);
                step_outflow = step_outflow + weight[right] * pos(head[right] - head[right + 1]);
            }
            outflow = outflow + step_outflow;

            // gather: each cell keeps what it did not send and pulls from
            // higher neighbours in fixed N, S, W, E order. Only heads and
            // weights of neighbours are read, so depths update in place.
            let mut lanes = [zero; LANES];
            for r in 1..=nrows {
                let lo = r * stride + 1;
                let (hn, wn) = (&head[lo - stride..][..ncols], &weight[lo - stride..][..ncols]);
                let (hs, ws) = (&head[lo + stride..][..ncols], &weight[lo + stride..][..ncols]);
                let (hw, ww) = (&head[lo - 1..][..ncols], &weight[lo - 1..][..ncols]);
                let (he, we) = (&head[lo + 1..][..ncols], &weight[lo + 1..][..ncols]);
                let hc = &head[lo..][..ncols];
                let sc = &sent[lo..][..ncols];
                let dc = &mut depth[lo..][..ncols];
                let peak = &mut max_depth[lo..][..ncols];
                let moved = &mut delta[..ncols];
                for k in 0..ncols {
                    let h0 = hc[k];
                    let inflow = wn[k] * pos(hn[k] - h0)
                        + ws[k] * pos(hs[k] - h0)
                        + ww[k] * pos(hw[k] - h0)
                        + we[k] * pos(he[k] - h0);
                    let old = dc[k];
                    let new = old - sc[k] + inflow;
                    dc[k] = new;
                    peak[k] = max(peak[k], new);
                    moved[k] = (new - old).abs();
                }
                if !raining {
                    let mut chunks = delta.chunks_exact(LANES);
                    for chunk in &mut chunks {
                        for k in 0..LANES {
                            lanes[k] = lanes[k] + chunk[k];
                        }
                    }
                    for (k, &v) in chunks.remainder().iter().enumerate() {
                        lanes[k] = lanes[k] + v;
                    }
                }
            }
            // water moved plus water infiltrated during the step
            let change = lanes.iter().fold(zero, |a, &b| a + b) + step_infiltration;
            steps += 1;

            if !raining && change < settle {
                drained = true;
                break;
            }
        }

        let unpad = |v: &[T]| -> Vec<T> {
            let mut out = Vec::with_capacity(nrows * ncols);
            for r in 1..=nrows {
                out.extend_from_slice(&v[r * stride + 1..r * stride + 1 + ncols]);
            }
            out
        };
        let final_depth = unpad(&depth);
        let storage = exact_sum(final_depth.iter().copied()) * self.cell_area;
        Ok(FloodResult {
            ncols,
            nrows,
            max_depth: unpad(&max_depth),
            final_depth,
            rainfall_volume: rainfall * self.cell_area,
            infiltrated_volume: infiltrated * self.cell_area,
            boundary_outflow_volume: outflow * self.cell_area,
            storage_volume: storage,
            steps,
            drained,
        })
    }
}

/// One-shot convenience wrapper around [`Simulator`].
pub fn simulate_event<T: Scalar>(
    grid: &RasterGrid<T>,
    active: &[bool],
    rain: &RainEvent<T>,
    params: &SimParams<T>,
) -> Result<FloodResult<T>, FloodError> {
    Simulator::new(grid, rain, params)?.run(active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat(nrows: usize, ncols: usize, class: SurfaceClass) -> RasterGrid<f64> {
        RasterGrid {
            ncols,
            nrows,
            cellsize: 2.0,
            elevation: vec![5.0; nrows * ncols],
            surface: vec![class; nrows * ncols],
        }
    }

    fn one_step(total_mm: f64) -> RainEvent<f64> {
        RainEvent {
            return_period_years: 30.0,
            duration_min: 10.0,
            timestep_s: 600.0,
            intensities_mm_hr: vec![total_mm * 6.0],
        }
    }

    fn random_grid(rng: &mut ChaCha8Rng, nrows: usize, ncols: usize) -> RasterGrid<f64> {
        let slope: f64 = rng.gen_range(0.0..0.05);
        let elevation = (0..nrows * ncols)
            .map(|k| 10.0 - slope * ((k / ncols + k % ncols) as f64) + rng.gen_range(0.0..0.05))
            .collect();
        let surface = (0..nrows * ncols)
            .map(|_| SurfaceClass::ALL[rng.gen_range(0..4)])
            .collect();
        RasterGrid { ncols, nrows, cellsize: 2.0, elevation, surface }
    }

    /// Straightforward Jacobi step over an unpadded grid, visiting cells in
    /// the given order. Follows the documented per-cell formulas.
    fn reference_run(sim: &Simulator<f64>, grid: &RasterGrid<f64>, active: &[bool], steps: usize, order: &[usize]) -> Vec<f64> {
        let (nrows, ncols) = (grid.nrows, grid.ncols);
        let cells = nrows * ncols;
        let p = &sim.params;
        let per_step = sim.rain_depths.len();
        let building = |k: usize| grid.surface[k] == SurfaceClass::Building;
        let base: Vec<f64> = (0..cells)
            .map(|k| grid.elevation[k] + if building(k) { p.building_offset_m } else { 0.0 })
            .collect();
        let cap: Vec<f64> = (0..cells)
            .map(|k| {
                let class = match grid.surface[k] {
                    SurfaceClass::PermeableCandidate if !active[k] => SurfaceClass::Impervious,
                    c => c,
                };
                sim.class_capacity[class.code() as usize]
            })
            .collect();
        let mut depth = vec![0.0; cells];
        for step in 0..steps {
            let r = if step < per_step { sim.rain_depths[step] } else { 0.0 };
            let mut head = vec![0.0; cells];
            for &k in order {
                let m = if building(k) { 0.0 } else { 1.0 };
                let h = depth[k] + r * m;
                let h = h - h.min(cap[k]);
                depth[k] = h;
                head[k] = base[k] + h;
            }
            // neighbour head in N, S, W, E order; None inside means off-grid ghost
            let nbr = |k: usize, dir: usize| -> (Option<usize>, f64) {
                let (row, col) = (k / ncols, k % ncols);
                let (inside, ghost) = match dir {
                    0 => ((row > 0).then(|| k - ncols), sim.ghost_drop[0][col.min(ncols - 1)]),
                    1 => ((row + 1 < nrows).then(|| k + ncols), sim.ghost_drop[1][col.min(ncols - 1)]),
                    2 => ((col > 0).then(|| k - 1), sim.ghost_drop[2][row]),
                    _ => ((col + 1 < ncols).then(|| k + 1), sim.ghost_drop[3][row]),
                };
                match inside {
                    Some(n) => (Some(n), head[n]),
                    None => (None, head[k] - ghost),
                }
            };
            let mut sent = vec![0.0; cells];
            let mut weight = vec![0.0; cells];
            for &k in order {
                let d: Vec<f64> = (0..4).map(|dir| (head[k] - nbr(k, dir).1).max(0.0)).collect();
                let total = d[0] + d[1] + d[2] + d[3];
                let steepest = d[0].max(d[1]).max(d[2].max(d[3]));
                let q = p.routing_alpha * depth[k].min(steepest * 0.5);
                sent[k] = q;
                weight[k] = if total > 0.0 { q / total } else { 0.0 };
            }
            let mut next = depth.clone();
            for &k in order {
                let mut inflow = 0.0;
                for dir in 0..4 {
                    // the cell in direction dir sees k in the opposite direction
                    if let (Some(n), hn) = nbr(k, dir) {
                        inflow += weight[n] * (hn - head[k]).max(0.0);
                    }
                }
                next[k] = depth[k] - sent[k] + inflow;
            }
            depth = next;
        }
        depth
    }

    #[test]
    fn zero_rain_leaves_everything_dry() {
        let grid = flat(4, 5, SurfaceClass::Impervious);
        let rain = RainEvent { intensities_mm_hr: vec![0.0; 3], ..one_step(0.0) };
        let res = simulate_event(&grid, &[false; 20], &rain, &SimParams::default()).unwrap();
        assert!(res.max_depth.iter().all(|&d| d == 0.0));
        assert_eq!(res.rainfall_volume, 0.0);
        assert_eq!(res.infiltrated_volume, 0.0);
        assert_eq!(res.boundary_outflow_volume, 0.0);
        assert!(res.drained);
    }

    #[test]
    fn single_cell_closed_form() {
        // 30 mm/hr over 10 min = 5 mm of capacity per step; no drain steps
        let params = SimParams { drain_step_factor: 0, ..SimParams::default() };
        for (rain_mm, active) in [(2.0, true), (5.0, true), (12.0, true), (12.0, false)] {
            let grid = flat(1, 1, SurfaceClass::PermeableCandidate);
            let res = simulate_event(&grid, &[active], &one_step(rain_mm), &params).unwrap();
            let capacity = if active { 0.005 } else { 0.0 };
            let rain = rain_mm / 1000.0;
            assert_eq!(res.steps, 1);
            assert!((res.final_depth[0] - (rain - capacity).max(0.0)).abs() < 1e-15);
            assert!((res.infiltrated_volume - rain.min(capacity) * 4.0).abs() < 1e-14);
            assert_eq!(res.boundary_outflow_volume, 0.0);
        }
    }

    #[test]
    fn ponded_permeable_cell_keeps_infiltrating_after_rain() {
        let grid = flat(1, 1, SurfaceClass::PermeableCandidate);
        let res = simulate_event(&grid, &[true], &one_step(12.0), &SimParams::default()).unwrap();
        assert!(res.drained);
        assert_eq!(res.final_depth[0], 0.0);
        assert_eq!(res.steps, 4);
        assert!((res.max_depth[0] - 0.007).abs() < 1e-15);
        assert!((res.infiltrated_volume - 0.048).abs() < 1e-15);
    }

    #[test]
    fn flat_uniform_grid_stays_level() {
        for boundary in [Boundary::Closed, Boundary::FreeOutfall] {
            let grid = flat(5, 7, SurfaceClass::Impervious);
            let params = SimParams { boundary, ..SimParams::default() };
            let rain = RainEvent::symmetric(21.9, 30.0, 3, 30.0);
            let res = simulate_event(&grid, &[false; 35], &rain, &params).unwrap();
            assert!(res.final_depth.iter().all(|&d| d == res.final_depth[0]));
            assert!(res.max_depth.iter().all(|&d| d == res.max_depth[0]));
            assert!((res.final_depth[0] - 0.0219).abs() < 1e-12);
            assert_eq!(res.boundary_outflow_volume, 0.0);
        }
    }

    #[test]
    fn two_cells_drain_downhill() {
        let grid = RasterGrid {
            ncols: 2,
            nrows: 1,
            cellsize: 1.0,
            elevation: vec![1.0, 0.0],
            surface: vec![SurfaceClass::Impervious; 2],
        };
        let params = SimParams { boundary: Boundary::Closed, drain_step_factor: 60, ..SimParams::default() };
        let rain = RainEvent { intensities_mm_hr: vec![], ..one_step(0.0) };
        let sim = Simulator::new(&grid, &rain, &params).unwrap();
        let res = sim.run_from(&[false; 2], &[0.02, 0.0]).unwrap();
        // head gap stays above 1 m, so A sends alpha * depth every step:
        // after k steps A holds 0.02 * 0.5^k
        assert!(res.drained);
        let k = res.steps as i32;
        assert_eq!(res.final_depth[0], 0.02 * 0.5f64.powi(k));
        assert!(res.final_depth[0] <= params.drying_threshold_m);
        assert!((res.final_depth[1] - (0.02 - res.final_depth[0])).abs() < 1e-15);
        assert_eq!(res.max_depth[1], res.final_depth[1]);
    }

    #[test]
    fn dispatch_matches_portable_kernel_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let grid = random_grid(&mut rng, 9, 13);
            let active: Vec<bool> = (0..grid.cell_count()).map(|_| rng.gen_bool(0.5)).collect();
            let rain = RainEvent::symmetric(31.1, 30.0, 3, 100.0);
            let sim = Simulator::new(&grid, &rain, &SimParams::default()).unwrap();
            assert_eq!(sim.run(&active).unwrap(), sim.run_kernel(&active, None).unwrap());
        }
    }

    #[test]
    fn cell_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for boundary in [Boundary::Closed, Boundary::FreeOutfall] {
            let grid = random_grid(&mut rng, 6, 8);
            let active: Vec<bool> = (0..48).map(|_| rng.gen_bool(0.5)).collect();
            let rain = RainEvent::symmetric(21.9, 30.0, 3, 30.0);
            let params = SimParams { boundary, ..SimParams::default() };
            let sim = Simulator::new(&grid, &rain, &params).unwrap();
            let res = sim.run(&active).unwrap();
            let mut order: Vec<usize> = (0..48).collect();
            let forward = reference_run(&sim, &grid, &active, res.steps, &order);
            order.shuffle(&mut rng);
            let shuffled = reference_run(&sim, &grid, &active, res.steps, &order);
            order.reverse();
            let reversed = reference_run(&sim, &grid, &active, res.steps, &order);
            assert_eq!(forward, res.final_depth);
            assert_eq!(shuffled, res.final_depth);
            assert_eq!(reversed, res.final_depth);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = flat(2, 2, SurfaceClass::Impervious);
        let sim = Simulator::new(&grid, &one_step(5.0), &SimParams::default()).unwrap();
        assert!(sim.run(&[true; 3]).is_err());
        assert!(sim.run_from(&[true; 4], &[0.0, -1.0, 0.0, 0.0]).is_err());
        let bad = SimParams { routing_alpha: 0.0, ..SimParams::default() };
        assert!(Simulator::new(&grid, &one_step(5.0), &bad).is_err());
        let neg = RainEvent { intensities_mm_hr: vec![-1.0], ..one_step(0.0) };
        assert!(Simulator::new(&grid, &neg, &SimParams::default()).is_err());
        let mut holed = grid.clone();
        holed.elevation[1] = f64::NAN;
        assert!(holed.validate().is_err());
    }

    #[test]
    fn step_cap_reports_not_drained() {
        let grid = RasterGrid {
            ncols: 30,
            nrows: 1,
            cellsize: 1.0,
            elevation: (0..30).map(|c| 3.0 - 0.1 * c as f64).collect(),
            surface: vec![SurfaceClass::Impervious; 30],
        };
        let params = SimParams { drain_step_factor: 1, boundary: Boundary::Closed, ..SimParams::default() };
        let res = simulate_event(&grid, &[false; 30], &one_step(20.0), &params).unwrap();
        assert!(!res.drained);
        assert_eq!(res.steps, 2);
    }

    #[test]
    fn symmetric_hyetograph_delivers_total() {
        let rain = RainEvent::<f64>::symmetric(31.1, 30.0, 5, 100.0);
        assert_eq!(rain.steps(), 5);
        assert!((rain.total_depth_mm() - 31.1).abs() < 1e-12);
        assert_eq!(rain.intensities_mm_hr[0], rain.intensities_mm_hr[4]);
        assert!(rain.intensities_mm_hr[2] > rain.intensities_mm_hr[1]);
    }

    #[test]
    fn f32_runs_and_conserves() {
        let grid = RasterGrid::<f32> {
            ncols: 6,
            nrows: 6,
            cellsize: 2.0,
            elevation: (0..36).map(|k| 5.0 - 0.05 * (k / 6 + k % 6) as f32).collect(),
            surface: vec![SurfaceClass::PermeableCandidate; 36],
        };
        let rain = RainEvent::symmetric(31.1f32, 30.0, 3, 100.0);
        let res = simulate_event(&grid, &[true; 36], &rain, &SimParams::default()).unwrap();
        assert!(res.mass_balance_error() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn conserves_mass_and_stays_non_negative(seed in any::<u64>(), nrows in 1usize..8, ncols in 1usize..8, total in 0.0f64..60.0, closed in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = random_grid(&mut rng, nrows, ncols);
            let active: Vec<bool> = (0..nrows * ncols).map(|_| rng.gen_bool(0.5)).collect();
            let boundary = if closed { Boundary::Closed } else { Boundary::FreeOutfall };
            let params = SimParams { boundary, ..SimParams::default() };
            let res = simulate_event(&grid, &active, &RainEvent::symmetric(total, 30.0, 3, 30.0), &params).unwrap();
            prop_assert!(res.mass_balance_error() <= 1e-6);
            prop_assert!(res.final_depth.iter().all(|&d| d >= 0.0));
            prop_assert!(res.max_depth.iter().zip(&res.final_depth).all(|(m, f)| m >= f));
        }

        #[test]
        fn activation_never_reduces_infiltration_without_routing(mask_a in proptest::collection::vec(any::<bool>(), 25), extra in proptest::collection::vec(any::<bool>(), 25)) {
            // candidate cells at even (row, col) fenced in by buildings: no routing
            let mut grid = flat(5, 5, SurfaceClass::Building);
            for r in (0..5).step_by(2) {
                for c in (0..5).step_by(2) {
                    grid.surface[r * 5 + c] = SurfaceClass::PermeableCandidate;
                }
            }
            let mask_b: Vec<bool> = mask_a.iter().zip(&extra).map(|(a, e)| *a || *e).collect();
            let sim = Simulator::new(&grid, &one_step(8.0), &SimParams::default()).unwrap();
            let a = sim.run(&mask_a).unwrap();
            let b = sim.run(&mask_b).unwrap();
            prop_assert!(b.infiltrated_volume >= a.infiltrated_volume);
        }
    }
}
