//! Lifecycle cost of permeable-surface interventions.
//!
//! Per-zone costs are computed once (unit lifecycle cost times zone area) and
//! a candidate's cost is the sum over its active zones.

use std::io::{BufRead, Write};

use crate::genome::Genome;
use crate::scalar::{exact_sum, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("genome has {genome} bits but the cost table has {zones} zones")]
    LengthMismatch { genome: usize, zones: usize },
    #[error("cost table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unit rates feeding the lifecycle cost of one square metre of intervention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams<T> {
    /// One-off installation cost per m².
    pub capital_per_m2: T,
    /// Maintenance cost per m² per year, in base-year prices.
    pub operational_per_m2_year: T,
    /// Average annual inflation rate applied to maintenance.
    pub inflation_rate: T,
    pub lifespan_years: u32,
}

impl<T: Scalar> Default for CostParams<T> {
    fn default() -> Self {
        Self {
            capital_per_m2: T::of(10.0),
            operational_per_m2_year: T::of(1.0),
            inflation_rate: T::of(0.029),
            lifespan_years: 40,
        }
    }
}

impl<T: Scalar> CostParams<T> {
    pub fn validate(&self) -> Result<(), CostError> {
        let finite = [self.capital_per_m2, self.operational_per_m2_year, self.inflation_rate]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CostError::InvalidParams("rates must be finite".into()));
        }
        if self.capital_per_m2 < T::zero() || self.operational_per_m2_year < T::zero() {
            return Err(CostError::InvalidParams("unit costs must be non-negative".into()));
        }
        if self.inflation_rate <= -T::one() {
            return Err(CostError::InvalidParams("inflation rate must exceed -1".into()));
        }
        Ok(())
    }
}

/// `base * (1 + rate)^year` by repeated multiplication.
pub fn future_value<T: Scalar>(base: T, rate: T, year: u32) -> T {
    let growth = T::one() + rate;
    (0..year).fold(base, |value, _| value * growth)
}

/// Capital cost plus each maintenance year inflated to its payment year.
pub fn unit_lifecycle_cost<T: Scalar>(params: &CostParams<T>) -> T {
    let maintenance = (1..=params.lifespan_years)
        .map(|year| future_value(params.operational_per_m2_year, params.inflation_rate, year));
    exact_sum(std::iter::once(params.capital_per_m2).chain(maintenance))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneCost<T> {
    pub zone_id: String,
    /// Intervention area in m², when known.
    pub area_m2: Option<T>,
    pub lifecycle_cost: T,
}

/// Lifecycle cost per zone, in genome bit order.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneCostTable<T> {
    rows: Vec<ZoneCost<T>>,
}

/// Which column a cost CSV carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostColumn {
    Area,
    LifecycleCost,
}

impl<T: Scalar> ZoneCostTable<T> {
    pub fn from_rows(rows: Vec<ZoneCost<T>>) -> Self {
        Self { rows }
    }

    /// Builds the table from zone areas: `C(zone) = unit lifecycle cost * area`.
    pub fn from_areas<S: Into<String>>(
        zones: impl IntoIterator<Item = (S, T)>,
        params: &CostParams<T>,
    ) -> Result<Self, CostError> {
        params.validate()?;
        let unit = unit_lifecycle_cost(params);
        let rows = zones
            .into_iter()
            .map(|(id, area)| {
                if !(area >= T::zero()) {
                    return Err(CostError::InvalidParams(format!("negative area {area}")));
                }
                Ok(ZoneCost { zone_id: id.into(), area_m2: Some(area), lifecycle_cost: unit * area })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }

    pub fn from_costs<S: Into<String>>(zones: impl IntoIterator<Item = (S, T)>) -> Self {
        let rows = zones
            .into_iter()
            .map(|(id, cost)| ZoneCost { zone_id: id.into(), area_m2: None, lifecycle_cost: cost })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[ZoneCost<T>] {
        &self.rows
    }

    pub fn cost(&self, zone: usize) -> T {
        self.rows[zone].lifecycle_cost
    }

    pub fn total(&self) -> T {
        exact_sum(self.rows.iter().map(|r| r.lifecycle_cost))
    }

    /// Cost of a candidate: the sum of the costs of its active zones.
    pub fn solution_cost(&self, genome: &Genome) -> Result<T, CostError> {
        if genome.len() != self.rows.len() {
            return Err(CostError::LengthMismatch { genome: genome.len(), zones: self.rows.len() });
        }
        Ok(exact_sum(genome.active().map(|j| self.rows[j].lifecycle_cost)))
    }

    /// Reads `zone_id,area_m2` (costs derived from `params`) or
    /// `zone_id,lifecycle_cost`, chosen by the header line.
    pub fn read_csv<R: BufRead>(
        reader: R,
        params: &CostParams<T>,
    ) -> Result<(Self, CostColumn), CostError> {
        let mut lines = reader.lines().enumerate();
        let column = loop {
            let Some((idx, line)) = lines.next() else {
                return Err(CostError::Parse { line: 1, message: "missing header".into() });
            };
            let line = line?;
            let header: Vec<&str> = line.trim().split(',').map(str::trim).collect();
            if header.len() == 1 && header[0].is_empty() {
                continue;
            }
            break match header.as_slice() {
                ["zone_id", "area_m2"] => CostColumn::Area,
                ["zone_id", "lifecycle_cost"] => CostColumn::LifecycleCost,
                _ => {
                    return Err(CostError::Parse {
                        line: idx + 1,
                        message: format!(
                            "expected header `zone_id,area_m2` or `zone_id,lifecycle_cost`, found `{}`",
                            line.trim()
                        ),
                    })
                }
            };
        };
        let mut entries = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parse_err = |message: String| CostError::Parse { line: idx + 1, message };
            let (id, value) = trimmed
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected two fields, found `{trimmed}`")))?;
            let value: T = value
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("`{}` is not a number", value.trim())))?;
            if !value.is_finite() || value < T::zero() {
                return Err(parse_err(format!("value {value} must be finite and non-negative")));
            }
            entries.push((id.trim().to_string(), value));
        }
        let table = match column {
            CostColumn::Area => Self::from_areas(entries, params)?,
            CostColumn::LifecycleCost => Self::from_costs(entries),
        };
        Ok((table, column))
    }

    /// Writes `zone_id,lifecycle_cost` with shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), CostError> {
        writeln!(writer, "zone_id,lifecycle_cost")?;
        for row in &self.rows {
            writeln!(writer, "{},{}", row.zone_id, row.lifecycle_cost)?;
        }
        Ok(())
    }
}

/// Splits a parent zone's cost between two children in proportion to their
/// areas such that the two parts add back to the parent cost exactly.
///
/// The larger share is computed first; the smaller is the remainder, which is
/// exact because the larger share lies in `[parent/2, parent]`.
pub fn split_cost<T: Scalar>(parent_cost: T, first_area: T, second_area: T) -> (T, T) {
    let two = T::one() + T::one();
    if first_area == second_area {
        let half = parent_cost / two;
        return (half, parent_cost - half);
    }
    let total = first_area + second_area;
    if first_area > second_area {
        let large = parent_cost * first_area / total;
        (large, parent_cost - large)
    } else {
        let large = parent_cost * second_area / total;
        (parent_cost - large, large)
    }
}
