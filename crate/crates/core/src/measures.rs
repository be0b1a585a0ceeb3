//! Discrete probability measures on ℝᵈ and the payoff registry.
//!
//! Every measure in the system is finitely supported: a list of distinct
//! atoms with nonnegative weights summing to one. Payoffs are bounded
//! Lipschitz functions shipped as named built-ins with analytically known
//! Lipschitz constant `K` and sup bound `B`, so downstream bounds of the form
//! `|∫V dρ − ∫V dσ| ≤ K·W₁(ρ,σ)` are exact statements about declared
//! constants rather than estimates.

use thiserror::Error;

use crate::text::fmt_f64;

/// Atoms closer than this in sup-norm are identified during canonicalization.
pub const MERGE_TOL: f64 = 1e-12;
/// Accepted deviation of the input weight sum from 1.
pub const INPUT_MASS_TOL: f64 = 1e-9;
/// Guaranteed deviation of the canonical weight sum from 1.
pub const CANONICAL_MASS_TOL: f64 = 1e-12;

// Below this the canonical renormalization is a no-op, which makes
// canonicalization bit-idempotent.
const RENORM_SKIP_TOL: f64 = 8.881784197001252e-16; // 2^-50

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, expected 1 within {INPUT_MASS_TOL}")]
    MassNotOne { sum: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("measure has empty support")]
    EmptySupport,
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("invalid payoff parameter: {0}")]
    InvalidPayoff(String),
    #[error("measure text format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// A point of ℝᵈ. Coordinates are always finite and d ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(MeasureError::DimensionMismatch { left: 0, right: 1 });
        }
        for (i, &c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(MeasureError::NonFinite { index: i, value: c });
            }
        }
        Ok(Point { coords })
    }

    /// 1-d convenience constructor.
    pub fn scalar(x: f64) -> Self {
        Point::new(vec![x]).expect("finite scalar")
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean norm ‖x‖₂.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Euclidean distance ‖x − y‖₂.
    pub fn dist(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Sup-norm distance, used for duplicate-atom identification.
    pub fn sup_dist(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }
}

/// A finitely supported probability measure on ℝᵈ.
///
/// Canonical form: atoms sorted lexicographically, duplicates (sup-distance
/// ≤ [`MERGE_TOL`]) merged by summing weights, exact-zero weights dropped,
/// weights renormalized so that `|Σw − 1| ≤ 1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Build a canonical measure from atoms and weights.
    pub fn new(atoms: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(MeasureError::DimensionMismatch {
                left: atoms.len(),
                right: weights.len(),
            });
        }
        if atoms.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        let dim = atoms[0].dim();
        for a in &atoms {
            if a.dim() != dim {
                return Err(MeasureError::DimensionMismatch {
                    left: dim,
                    right: a.dim(),
                });
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(MeasureError::NonFinite { index: i, value: w });
            }
            if w < 0.0 {
                return Err(MeasureError::NegativeWeight { index: i, weight: w });
            }
        }
        let sum = neumaier_sum(&weights);
        if (sum - 1.0).abs() > INPUT_MASS_TOL {
            return Err(MeasureError::MassNotOne { sum });
        }

        // Sort atom indices lexicographically, then merge greedily: a group
        // collects consecutive atoms within MERGE_TOL of the group's first
        // atom, so distinct canonical atoms are always > MERGE_TOL apart.
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| atoms[i].lex_cmp(&atoms[j]));

        let mut merged_atoms: Vec<Point> = Vec::with_capacity(atoms.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for &idx in &order {
            match merged_atoms.last() {
                Some(rep) if rep.sup_dist(&atoms[idx]) <= MERGE_TOL => {
                    *merged_weights.last_mut().unwrap() += weights[idx];
                }
                _ => {
                    merged_atoms.push(atoms[idx].clone());
                    merged_weights.push(weights[idx]);
                }
            }
        }

        // Drop exact-zero weights.
        let mut atoms_out = Vec::with_capacity(merged_atoms.len());
        let mut weights_out = Vec::with_capacity(merged_weights.len());
        for (a, w) in merged_atoms.into_iter().zip(merged_weights) {
            if w != 0.0 {
                atoms_out.push(a);
                weights_out.push(w);
            }
        }
        if atoms_out.is_empty() {
            return Err(MeasureError::EmptySupport);
        }

        let s = neumaier_sum(&weights_out);
        if (s - 1.0).abs() > RENORM_SKIP_TOL {
            for w in weights_out.iter_mut() {
                *w /= s;
            }
            // Push the residual into the largest weight so the canonical sum
            // lands within an ulp of 1.
            let s2 = neumaier_sum(&weights_out);
            let imax = weights_out
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            weights_out[imax] -= s2 - 1.0;
        }

        Ok(DiscreteMeasure {
            atoms: atoms_out,
            weights: weights_out,
        })
    }

    /// The point mass δₓ.
    pub fn dirac(x: Point) -> Self {
        DiscreteMeasure {
            atoms: vec![x],
            weights: vec![1.0],
        }
    }

    /// Uniform measure on the given (distinct) points.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(MeasureError::EmptySupport);
        }
        let w = 1.0 / n as f64;
        DiscreteMeasure::new(points, vec![w; n])
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    /// First moment ∫‖x‖₂ dμ = Σᵢ wᵢ‖xᵢ‖₂.
    pub fn first_moment(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a.norm())
            .sum()
    }

    /// Serialize in the line-oriented text format:
    /// header `dim=<d> n=<count>`, then one `w x1 ... xd` row per atom.
    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} n={}\n", self.dim(), self.len());
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            out.push_str(&fmt_f64(*w));
            for c in a.coords() {
                out.push(' ');
                out.push_str(&fmt_f64(*c));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the text format produced by [`DiscreteMeasure::to_text`].
    pub fn from_text(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(MeasureError::Format {
            line: 1,
            msg: "missing header".into(),
        })?;
        let mut dim = None;
        let mut n = None;
        for part in header.split_whitespace() {
            if let Some(v) = part.strip_prefix("dim=") {
                dim = v.parse::<usize>().ok();
            } else if let Some(v) = part.strip_prefix("n=") {
                n = v.parse::<usize>().ok();
            }
        }
        let (dim, n) = match (dim, n) {
            (Some(d), Some(n)) if d >= 1 => (d, n),
            _ => {
                return Err(MeasureError::Format {
                    line: hline + 1,
                    msg: format!("bad header `{header}`, expected `dim=<d> n=<count>`"),
                })
            }
        };
        let mut atoms = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (lno, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 1 {
                return Err(MeasureError::Format {
                    line: lno + 1,
                    msg: format!("expected {} fields, found {}", dim + 1, fields.len()),
                });
            }
            let parse = |f: &str| -> Result<f64> {
                f.parse::<f64>().map_err(|_| MeasureError::Format {
                    line: lno + 1,
                    msg: format!("bad number `{f}`"),
                })
            };
            weights.push(parse(fields[0])?);
            let coords: Result<Vec<f64>> = fields[1..].iter().map(|f| parse(f)).collect();
            atoms.push(Point::new(coords?)?);
        }
        if atoms.len() != n {
            return Err(MeasureError::Format {
                line: 1,
                msg: format!("header promises n={} rows, found {}", n, atoms.len()),
            });
        }
        DiscreteMeasure::new(atoms, weights)
    }
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// The payoff function families in the registry.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    /// clamp(⟨a,x⟩ + b, lo, hi)
    Clamp {
        a: Vec<f64>,
        b: f64,
        lo: f64,
        hi: f64,
    },
    /// max(0, min(⟨a,x⟩ − strike, cap)), a capped call on the linear score
    ClippedCall { a: Vec<f64>, strike: f64, cap: f64 },
    /// height·exp(−‖x − center‖²/(2·width²))
    Bump {
        center: Vec<f64>,
        height: f64,
        width: f64,
    },
    /// Piecewise-linear interpolation of `values` on the sorted 1-d `grid`,
    /// applied to ⟨a,x⟩, with constant extension outside the grid
    Tabulated {
        a: Vec<f64>,
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    /// −V for the inner payoff
    Negated(Box<PayoffKind>),
}

/// A bounded Lipschitz payoff with declared constants.
///
/// The declared constants satisfy `|V(x) − V(y)| ≤ K·‖x − y‖₂` and
/// `|V(x)| ≤ B` analytically for every registry family; tests spot-check
/// them on sampled points.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    kind: PayoffKind,
    lipschitz_k: f64,
    sup_bound_b: f64,
    name: String,
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(u, v)| u * v).sum()
}

fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn check_finite_params(name: &str, vals: &[f64]) -> Result<()> {
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(MeasureError::InvalidPayoff(format!(
            "{name}: parameters must be finite"
        )));
    }
    Ok(())
}

impl PayoffSpec {
    /// clamp(⟨a,x⟩ + b, lo, hi) with K = ‖a‖₂ and B = max(|lo|, |hi|).
    pub fn clamp(a: Vec<f64>, b: f64, lo: f64, hi: f64) -> Result<Self> {
        check_finite_params("clamp", &a)?;
        check_finite_params("clamp", &[b, lo, hi])?;
        if a.is_empty() {
            return Err(MeasureError::InvalidPayoff("clamp: empty direction".into()));
        }
        if lo > hi {
            return Err(MeasureError::InvalidPayoff(format!(
                "clamp: lo={lo} > hi={hi}"
            )));
        }
        let bound = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        Ok(PayoffSpec {
            lipschitz_k: norm2(&a),
            sup_bound_b: bound,
            name: "clamp".into(),
            kind: PayoffKind::Clamp { a, b, lo, hi },
        })
    }

    /// max(0, min(⟨a,x⟩ − strike, cap)) with K = ‖a‖₂ and B = cap.
    pub fn clipped_call(a: Vec<f64>, strike: f64, cap: f64) -> Result<Self> {
        check_finite_params("call", &a)?;
        check_finite_params("call", &[strike, cap])?;
        if a.is_empty() {
            return Err(MeasureError::InvalidPayoff("call: empty direction".into()));
        }
        if cap <= 0.0 {
            return Err(MeasureError::InvalidPayoff(format!("call: cap={cap} ≤ 0")));
        }
        Ok(PayoffSpec {
            lipschitz_k: norm2(&a),
            sup_bound_b: cap,
            name: "call".into(),
            kind: PayoffKind::ClippedCall { a, strike, cap },
        })
    }

    /// height·exp(−‖x−c‖²/(2w²)) with K = height/(w·√e) and B = height.
    pub fn bump(center: Vec<f64>, height: f64, width: f64) -> Result<Self> {
        check_finite_params("bump", &center)?;
        check_finite_params("bump", &[height, width])?;
        if center.is_empty() {
            return Err(MeasureError::InvalidPayoff("bump: empty center".into()));
        }
        if height <= 0.0 || width <= 0.0 {
            return Err(MeasureError::InvalidPayoff(format!(
                "bump: height={height}, width={width} must be positive"
            )));
        }
        // The radial profile g(r) = h·exp(−r²/2w²) has |g'| maximized at
        // r = w, where it equals h/(w·√e).
        let k = height / (width * std::f64::consts::E.sqrt());
        Ok(PayoffSpec {
            lipschitz_k: k,
            sup_bound_b: height,
            name: "bump".into(),
            kind: PayoffKind::Bump {
                center,
                height,
                width,
            },
        })
    }

    /// Piecewise-linear table on a strictly increasing grid, applied to ⟨a,x⟩.
    ///
    /// K is ‖a‖₂ times the maximum finite-difference slope; B is the largest
    /// absolute table value. Outside the grid the table extends as a constant.
    pub fn tabulated(a: Vec<f64>, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_finite_params("table", &a)?;
        check_finite_params("table", &grid)?;
        check_finite_params("table", &values)?;
        if a.is_empty() {
            return Err(MeasureError::InvalidPayoff("table: empty direction".into()));
        }
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(MeasureError::InvalidPayoff(format!(
                "table: need ≥ 2 grid nodes, got {} nodes / {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MeasureError::InvalidPayoff(
                "table: grid must be strictly increasing".into(),
            ));
        }
        let max_slope = grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(g, v)| ((v[1] - v[0]) / (g[1] - g[0])).abs())
            .fold(0.0, f64::max);
        let bound = values
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        Ok(PayoffSpec {
            lipschitz_k: norm2(&a) * max_slope,
            sup_bound_b: bound,
            name: "table".into(),
            kind: PayoffKind::Tabulated { a, grid, values },
        })
    }

    /// The negated payoff −V; same K and B.
    pub fn negate(&self) -> Self {
        PayoffSpec {
            kind: PayoffKind::Negated(Box::new(self.kind.clone())),
            lipschitz_k: self.lipschitz_k,
            sup_bound_b: self.sup_bound_b,
            name: format!("neg({})", self.name),
        }
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn sup_bound_b(&self) -> f64 {
        self.sup_bound_b
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    /// Domain dimension the payoff expects.
    pub fn dim(&self) -> usize {
        fn kind_dim(k: &PayoffKind) -> usize {
            match k {
                PayoffKind::Clamp { a, .. } => a.len(),
                PayoffKind::ClippedCall { a, .. } => a.len(),
                PayoffKind::Bump { center, .. } => center.len(),
                PayoffKind::Tabulated { a, .. } => a.len(),
                PayoffKind::Negated(inner) => kind_dim(inner),
            }
        }
        kind_dim(&self.kind)
    }

    /// Evaluate V(x).
    pub fn eval(&self, x: &Point) -> f64 {
        fn eval_kind(k: &PayoffKind, c: &[f64]) -> f64 {
            match k {
                PayoffKind::Clamp { a, b, lo, hi } => (dot(a, c) + b).clamp(*lo, *hi),
                PayoffKind::ClippedCall { a, strike, cap } => {
                    (dot(a, c) - strike).min(*cap).max(0.0)
                }
                PayoffKind::Bump {
                    center,
                    height,
                    width,
                } => {
                    let r2: f64 = center
                        .iter()
                        .zip(c)
                        .map(|(m, x)| (x - m) * (x - m))
                        .sum();
                    height * (-r2 / (2.0 * width * width)).exp()
                }
                PayoffKind::Tabulated { a, grid, values } => {
                    let t = dot(a, c);
                    if t <= grid[0] {
                        values[0]
                    } else if t >= *grid.last().unwrap() {
                        *values.last().unwrap()
                    } else {
                        let i = grid.partition_point(|&g| g <= t) - 1;
                        let frac = (t - grid[i]) / (grid[i + 1] - grid[i]);
                        values[i] + frac * (values[i + 1] - values[i])
                    }
                }
                PayoffKind::Negated(inner) => -eval_kind(inner, c),
            }
        }
        debug_assert_eq!(x.dim(), self.dim());
        eval_kind(&self.kind, x.coords())
    }

    /// F(ν) = ∫ V dν = Σᵢ wᵢ·V(xᵢ).
    pub fn integrate(&self, nu: &DiscreteMeasure) -> Result<f64> {
        if nu.dim() != self.dim() {
            return Err(MeasureError::DimensionMismatch {
                left: self.dim(),
                right: nu.dim(),
            });
        }
        Ok(nu
            .atoms()
            .iter()
            .zip(nu.weights())
            .map(|(a, w)| w * self.eval(a))
            .sum())
    }
}
