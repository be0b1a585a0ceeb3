//! Dyadic partitions of a bounding box and projection of measures onto them.
//!
//! Level n splits every axis of the box into 2ⁿ congruent half-open cells
//! (the last cell along each axis is closed, so every box point belongs to
//! exactly one cell). Projecting a measure moves each cell's mass to the cell
//! center, which keeps the within-cell transport distance at most half the
//! cell diagonal: W₁(μₙ, μ) ≤ (√d/2)·h for mesh h. Levels nest, so the
//! partitions form a filtration and projections satisfy the tower property.

use std::fmt;

use thiserror::Error;

use crate::measures::{DiscreteMeasure, MeasureError, Point};

/// Default cap on the partition level; beyond this, cell coordinates start
/// losing float resolution and cell counts explode.
pub const DEFAULT_MAX_LEVEL: u32 = 24;

/// Cap on the number of cells [`DyadicFiltration::all_centers`] will
/// enumerate.
pub const MAX_ENUMERATED_CELLS: u128 = 1 << 22;

#[derive(Debug, Error)]
pub enum FiltrationError {
    #[error("atom {atom} lies outside box {bounds}")]
    AtomOutsideBox { atom: Point, bounds: BoundingBox },
    #[error("level {requested} exceeds the configured maximum {max}")]
    LevelOverflow { requested: u32, max: u32 },
    #[error("level {level} in dimension {dim} has {cells} cells, more than the {MAX_ENUMERATED_CELLS} this operation will enumerate")]
    SupportTooLarge { level: u32, dim: usize, cells: u128 },
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, FiltrationError>;

/// An axis-aligned box with positive side lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    lower: Point,
    upper: Point,
}

impl BoundingBox {
    pub fn new(lower: Point, upper: Point) -> Result<Self> {
        if lower.dim() != upper.dim() {
            return Err(FiltrationError::DegenerateBox(format!(
                "corner dimensions differ: {} vs {}",
                lower.dim(),
                upper.dim()
            )));
        }
        for (lo, hi) in lower.coords().iter().zip(upper.coords()) {
            if !(lo < hi) {
                return Err(FiltrationError::DegenerateBox(format!(
                    "need lower < upper on every axis, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(BoundingBox { lower, upper })
    }

    /// 1-d convenience constructor.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        BoundingBox::new(Point::scalar(lo), Point::scalar(hi))
    }

    pub fn lower(&self) -> &Point {
        &self.lower
    }

    pub fn upper(&self) -> &Point {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper.coords()[axis] - self.lower.coords()[axis]
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.coords()
                .iter()
                .zip(self.lower.coords().iter().zip(self.upper.coords()))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (lo, hi)) in self
            .lower
            .coords()
            .iter()
            .zip(self.upper.coords())
            .enumerate()
        {
            if k > 0 {
                write!(f, "×")?;
            }
            write!(f, "[{lo}, {hi}]")?;
        }
        Ok(())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.coords().iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The level-n dyadic partition of a box, with cell centers as
/// representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicFiltration {
    bounds: BoundingBox,
    level: u32,
    max_level: u32,
}

impl DyadicFiltration {
    pub fn new(bounds: BoundingBox, level: u32) -> Result<Self> {
        Self::with_max_level(bounds, level, DEFAULT_MAX_LEVEL)
    }

    pub fn with_max_level(bounds: BoundingBox, level: u32, max_level: u32) -> Result<Self> {
        if level > max_level {
            return Err(FiltrationError::LevelOverflow {
                requested: level,
                max: max_level,
            });
        }
        Ok(DyadicFiltration {
            bounds,
            level,
            max_level,
        })
    }

    pub fn bounds(&self) -> &BoundingBox {
        &self.bounds
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells along each axis: 2ⁿ.
    pub fn cells_per_axis(&self) -> u64 {
        1u64 << self.level
    }

    /// Total cell count 2^(n·d).
    pub fn cell_count(&self) -> u128 {
        let d = self.bounds.dim() as u32;
        1u128 << (self.level * d).min(127)
    }

    /// The same partition one level finer.
    pub fn refine(&self) -> Result<Self> {
        if self.level + 1 > self.max_level {
            return Err(FiltrationError::LevelOverflow {
                requested: self.level + 1,
                max: self.max_level,
            });
        }
        Ok(DyadicFiltration {
            bounds: self.bounds.clone(),
            level: self.level + 1,
            max_level: self.max_level,
        })
    }

    /// Largest cell side length: maxₖ sideₖ/2ⁿ.
    pub fn mesh(&self) -> f64 {
        let scale = self.cells_per_axis() as f64;
        (0..self.bounds.dim())
            .map(|k| self.bounds.side(k) / scale)
            .fold(0.0, f64::max)
    }

    /// Upper bound on the projection error: (√d/2)·mesh.
    pub fn projection_bound(&self) -> f64 {
        0.5 * (self.bounds.dim() as f64).sqrt() * self.mesh()
    }

    /// Per-axis cell index of a box point. Cells are half-open except the
    /// last one along each axis, realized here by flooring and clamping.
    pub fn cell_index(&self, p: &Point) -> Result<Vec<u64>> {
        if !self.bounds.contains(p) {
            return Err(FiltrationError::AtomOutsideBox {
                atom: p.clone(),
                bounds: self.bounds.clone(),
            });
        }
        let cells = self.cells_per_axis();
        Ok(p.coords()
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let rel = (x - self.bounds.lower().coords()[k]) / self.bounds.side(k);
                ((rel * cells as f64).floor() as u64).min(cells - 1)
            })
            .collect())
    }

    /// Center of the cell with the given per-axis index.
    pub fn cell_center(&self, index: &[u64]) -> Point {
        let scale = self.cells_per_axis() as f64;
        let coords = index
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                self.bounds.lower().coords()[k] + (i as f64 + 0.5) * self.bounds.side(k) / scale
            })
            .collect();
        Point::new(coords).expect("cell centers are finite")
    }

    /// Project a measure onto this level: each cell's mass moves to the cell
    /// center. Errors if any atom lies outside the box.
    pub fn project(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        let mut centers = Vec::with_capacity(mu.len());
        for atom in mu.atoms() {
            let idx = self.cell_index(atom)?;
            centers.push(self.cell_center(&idx));
        }
        Ok(DiscreteMeasure::new(centers, mu.weights().to_vec())?)
    }

    /// All cell centers in row-major (last axis fastest) order; the level-n
    /// candidate support for restricted minimization problems.
    pub fn all_centers(&self) -> Result<Vec<Point>> {
        let count = self.cell_count();
        if count > MAX_ENUMERATED_CELLS {
            return Err(FiltrationError::SupportTooLarge {
                level: self.level,
                dim: self.bounds.dim(),
                cells: count,
            });
        }
        let d = self.bounds.dim();
        let per_axis = self.cells_per_axis();
        let mut centers = Vec::with_capacity(count as usize);
        let mut index = vec![0u64; d];
        loop {
            centers.push(self.cell_center(&index));
            let mut axis = d;
            loop {
                if axis == 0 {
                    return Ok(centers);
                }
                axis -= 1;
                index[axis] += 1;
                if index[axis] < per_axis {
                    break;
                }
                index[axis] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::w1_distance;

    fn unit_interval(level: u32) -> DyadicFiltration {
        DyadicFiltration::new(BoundingBox::interval(0.0, 1.0).unwrap(), level).unwrap()
    }

    fn p(x: f64) -> Point {
        Point::scalar(x)
    }

    #[test]
    fn project_single_atom_level_one() {
        let f = unit_interval(1);
        let proj = f.project(&DiscreteMeasure::dirac(p(0.3))).unwrap();
        assert_eq!(proj.atoms(), &[p(0.25)]);
        let (d, _) = w1_distance(&proj, &DiscreteMeasure::dirac(p(0.3))).unwrap();
        assert!((d - 0.05).abs() < 1e-12);
    }

    #[test]
    fn project_single_atom_level_two() {
        // 0.3 ∈ [0.25, 0.5) so the representative is 0.375. The distance is
        // larger than at level 1, but still within h/2 = 0.125.
        let f = unit_interval(2);
        let proj = f.project(&DiscreteMeasure::dirac(p(0.3))).unwrap();
        assert_eq!(proj.atoms(), &[p(0.375)]);
        let (d, _) = w1_distance(&proj, &DiscreteMeasure::dirac(p(0.3))).unwrap();
        assert!((d - 0.075).abs() < 1e-12);
        assert!(d <= f.projection_bound() + 1e-9);
    }

    #[test]
    fn project_two_atoms_level_one() {
        let f = unit_interval(1);
        let mu = DiscreteMeasure::uniform(vec![p(0.1), p(0.9)]).unwrap();
        let proj = f.project(&mu).unwrap();
        assert_eq!(proj.atoms(), &[p(0.25), p(0.75)]);
        assert_eq!(proj.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn atom_outside_box_is_an_error() {
        let f = unit_interval(3);
        let err = f.project(&DiscreteMeasure::dirac(p(1.5))).unwrap_err();
        assert!(matches!(err, FiltrationError::AtomOutsideBox { .. }));
    }

    #[test]
    fn refine_splits_each_cell() {
        let f0 = unit_interval(0);
        let f1 = f0.refine().unwrap();
        assert_eq!(f1.level(), 1);
        assert_eq!(f1.cells_per_axis(), 2);
        assert_eq!(f0.refine().unwrap().refine().unwrap().level(), f0.level() + 2);

        let square = BoundingBox::new(
            Point::new(vec![0.0, 0.0]).unwrap(),
            Point::new(vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let f = DyadicFiltration::new(square, 1).unwrap();
        assert_eq!(f.refine().unwrap().cell_count(), 16);
    }

    #[test]
    fn refine_respects_max_level() {
        let f = DyadicFiltration::with_max_level(BoundingBox::interval(0.0, 1.0).unwrap(), 2, 2)
            .unwrap();
        assert!(matches!(
            f.refine(),
            Err(FiltrationError::LevelOverflow { requested: 3, max: 2 })
        ));
    }

    #[test]
    fn mesh_values() {
        assert_eq!(unit_interval(3).mesh(), 0.125);
        let rect = BoundingBox::new(
            Point::new(vec![0.0, 0.0]).unwrap(),
            Point::new(vec![2.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(DyadicFiltration::new(rect, 1).unwrap().mesh(), 1.0);
        for n in 0..6 {
            assert_eq!(unit_interval(n).mesh(), 0.5f64.powi(n as i32));
        }
    }

    #[test]
    fn boundary_point_falls_in_last_cell() {
        let f = unit_interval(2);
        assert_eq!(f.cell_index(&p(1.0)).unwrap(), vec![3]);
        assert_eq!(f.cell_index(&p(0.0)).unwrap(), vec![0]);
        assert_eq!(f.cell_index(&p(0.25)).unwrap(), vec![1]);
    }

    #[test]
    fn nesting_child_centers_lie_in_parent_cells() {
        let bounds = BoundingBox::new(
            Point::new(vec![-2.0, 0.0]).unwrap(),
            Point::new(vec![2.0, 1.0]).unwrap(),
        )
        .unwrap();
        let f = DyadicFiltration::new(bounds, 3).unwrap();
        let fine = f.refine().unwrap();
        for center in fine.all_centers().unwrap() {
            let child = fine.cell_index(&center).unwrap();
            let parent = f.cell_index(&center).unwrap();
            for (c, p) in child.iter().zip(&parent) {
                assert_eq!(c / 2, *p);
            }
        }
    }

    #[test]
    fn all_centers_count_and_order() {
        let f = unit_interval(2);
        let centers = f.all_centers().unwrap();
        assert_eq!(
            centers,
            vec![p(0.125), p(0.375), p(0.625), p(0.875)]
        );
    }

    #[test]
    fn tower_property_exact_on_dyadic_weights() {
        let bounds = BoundingBox::interval(-2.0, 2.0).unwrap();
        let coarse = DyadicFiltration::new(bounds.clone(), 3).unwrap();
        let fine = DyadicFiltration::new(bounds, 4).unwrap();
        let mu = DiscreteMeasure::new(
            vec![p(0.5), p(-0.7), p(1.9), p(-1.95), p(0.53)],
            vec![0.25, 0.25, 0.125, 0.125, 0.25],
        )
        .unwrap();
        let direct = coarse.project(&mu).unwrap();
        let two_stage = coarse.project(&fine.project(&mu).unwrap()).unwrap();
        assert_eq!(direct, two_stage);
    }

    #[test]
    fn projection_is_idempotent() {
        let f = unit_interval(4);
        let mu = DiscreteMeasure::new(vec![p(0.11), p(0.73), p(0.99)], vec![0.5, 0.25, 0.25])
            .unwrap();
        let once = f.project(&mu).unwrap();
        let twice = f.project(&once).unwrap();
        assert_eq!(once, twice);
    }
}
