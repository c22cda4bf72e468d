//! Conjecture experiments on quadrilateral moduli, and grid sweeps over them.
//!
//! Each experiment compares two sides of a conjectured inequality
//! `lhs ≤ rhs` and reports `delta = rhs − lhs` together with the combined
//! bracket width of the finite element values. A sign is only claimed when
//! `|delta|` exceeds that width; the conjectures are open, so a negative
//! `delta` is a finding to report, not an error.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::bowman_modulus;
use crate::error::{GeometryError, ModulusError, SpecialFunctionError};
use crate::geometry::{equal_area_q1, equal_area_q2, equal_area_t, quad_from_points, Point};
use crate::modulus::{solve_quad, AdaptiveOptions, ModulusResult};

/// Default FEM tolerance for sweep points.
pub const SWEEP_TOL: f64 = 1e-3;
pub const SWEEP_MAX_DOFS: usize = 50_000;

const ORIGIN: Point = Point::new(0.0, 0.0);
const ONE: Point = Point::new(1.0, 0.0);

fn qm(z: [Point; 4], opts: &AdaptiveOptions) -> Result<ModulusResult, ModulusError> {
    Ok(solve_quad(&quad_from_points(z)?, opts)?.result)
}

fn bad(msg: String) -> ModulusError {
    GeometryError::BadParameter(msg).into()
}

/// Both moduli of the transposition inequality
/// `QM(a, b, 0, 1) ≤ QM(1 + i|a−1|, i|b|, 0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TranspositionRecord {
    pub lhs: ModulusResult,
    pub rhs: ModulusResult,
    pub delta: f64,
}

/// Angles on the boundary of the admissible sectors are accepted.
pub fn exp_transposition(
    a: Point,
    b: Point,
    opts: &AdaptiveOptions,
) -> Result<TranspositionRecord, ModulusError> {
    if !(a.y > 0.0 && b.y > 0.0) {
        return Err(bad(format!("need Im a > 0 and Im b > 0, got a={a}, b={b}")));
    }
    let (arg_a, arg_b) = ((a - ONE).arg(), b.arg());
    if !((0.0..=FRAC_PI_2).contains(&arg_a) && (FRAC_PI_2..=PI).contains(&arg_b)) {
        return Err(bad(format!(
            "need arg(a−1) ∈ [0, π/2] and arg b ∈ [π/2, π], got {arg_a}, {arg_b}"
        )));
    }
    let lhs = qm([a, b, ORIGIN, ONE], opts)?;
    let upright = [
        Point::new(1.0, (a - ONE).norm()),
        Point::new(0.0, b.norm()),
        ORIGIN,
        ONE,
    ];
    let rhs = qm(upright, opts)?;
    let delta = rhs.value - lhs.value;
    Ok(TranspositionRecord { lhs, rhs, delta })
}

/// The three moduli of the duplication inequality
/// `QM(A,B,0,1) + QM(conj(1−B), conj(1−A), 0, 1) ≤ QM(A, B, 1−A, 1−B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicationRecord {
    pub first: ModulusResult,
    pub second: ModulusResult,
    pub whole: ModulusResult,
    /// `whole − first − second`.
    pub g: f64,
}

impl DuplicationRecord {
    pub fn bracket(&self) -> f64 {
        self.first.bracket_width() + self.second.bracket_width() + self.whole.bracket_width()
    }
}

/// Requires `A = 1 + h·e^{iφ}`, `B = k·e^{iφ}` with `φ ∈ (0, π)`, `h, k > 0`.
pub fn exp_duplication(
    a: Point,
    b: Point,
    opts: &AdaptiveOptions,
) -> Result<DuplicationRecord, ModulusError> {
    let (h, k) = ((a - ONE).norm(), b.norm());
    if !(h > 0.0 && k > 0.0) {
        return Err(bad(format!("need A ≠ 1 and B ≠ 0, got A={a}, B={b}")));
    }
    let phi = b.arg();
    if !(phi > 0.0 && phi < PI) || ((a - ONE).arg() - phi).abs() > 1e-9 {
        return Err(bad(format!(
            "need arg(A−1) = arg B ∈ (0, π), got A={a}, B={b}"
        )));
    }
    let first = qm([a, b, ORIGIN, ONE], opts)?;
    let second = qm([(ONE - b).conj(), (ONE - a).conj(), ORIGIN, ONE], opts)?;
    let whole = qm([a, b, ONE - a, ONE - b], opts)?;
    let g = whole.value - first.value - second.value;
    Ok(DuplicationRecord {
        first,
        second,
        whole,
        g,
    })
}

/// Moduli of `Q1 = (1+2r·e^{iα}, 2s·e^{iβ}, 0, 1)` and of the equal-area
/// symmetric trapezoid `Q2 = (t+ir, is, −is, t−ir)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualAreaRecord {
    pub t: f64,
    pub area_q1: f64,
    pub area_q2: f64,
    pub q1: ModulusResult,
    pub q2: ModulusResult,
    /// `QM(Q2) − QM(Q1)`.
    pub delta: f64,
}

/// Angles on the boundary of the admissible ranges are accepted; degenerate
/// quadrilaterals are rejected by validation.
pub fn exp_equal_area(
    r: f64,
    s: f64,
    alpha: f64,
    beta: f64,
    opts: &AdaptiveOptions,
) -> Result<EqualAreaRecord, ModulusError> {
    if !((0.0..=FRAC_PI_2).contains(&alpha) && (FRAC_PI_2..=PI).contains(&beta)) {
        return Err(bad(format!(
            "need α ∈ [0, π/2] and β ∈ [π/2, π], got {alpha}, {beta}"
        )));
    }
    let t = equal_area_t(r, s, alpha, beta)?;
    let z1 = equal_area_q1(r, s, alpha, beta);
    let z2 = equal_area_q2(r, s, t);
    let (p1, p2) = (quad_from_points(z1)?, quad_from_points(z2)?);
    let (area_q1, area_q2) = (p1.domain().area(), p2.domain().area());
    let q1 = solve_quad(&p1, opts)?.result;
    let q2 = solve_quad(&p2, opts)?.result;
    let delta = q2.value - q1.value;
    Ok(EqualAreaRecord {
        t,
        area_q1,
        area_q2,
        q1,
        q2,
        delta,
    })
}

/// Both slacks of `h+k−1 ≥ M(h)+M(k) ≥ h+k−2`, with `M` the closed-form
/// trapezoid modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumInequalityRecord {
    pub h: f64,
    pub k: f64,
    /// `M(h) + M(k)`.
    pub sum: f64,
    /// `h + k − 1 − sum`.
    pub upper_slack: f64,
    /// `sum − (h + k − 2)`.
    pub lower_slack: f64,
}

pub fn exp_sum_inequality(h: f64, k: f64) -> Result<SumInequalityRecord, SpecialFunctionError> {
    let sum = bowman_modulus(h)? + bowman_modulus(k)?;
    Ok(SumInequalityRecord {
        h,
        k,
        sum,
        upper_slack: h + k - 1.0 - sum,
        lower_slack: sum - (h + k - 2.0),
    })
}

/// Which experiment a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// `f(x, y) = QM(1+xi, yi, 0, 1) − QM(1+x·e^{iα}, y·e^{iβ}, 0, 1)`.
    Trans,
    /// `g(x, y)` with `A = x+iy`, `B = e^{i·arg(A−1)}`.
    Dupl,
    /// `h(r, s) = QM(Q2) − QM(Q1)` with `x = r`, `y = s`.
    Area,
    /// `h+k−1 ≥ M(h)+M(k) ≥ h+k−2` over `x = h`, `y = k`; `delta` is the
    /// smaller of the two slacks.
    Sum,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Self::Trans, Self::Dupl, Self::Area, Self::Sum];

    pub fn id(self) -> &'static str {
        match self {
            Self::Trans => "trans",
            Self::Dupl => "dupl",
            Self::Area => "area",
            Self::Sum => "sum",
        }
    }

    /// `(α, β)` used when none are given.
    pub fn default_angles(self) -> (f64, f64) {
        match self {
            Self::Trans => (PI / 8.0, 3.0 * PI / 4.0),
            Self::Area => (PI / 4.0, 3.0 * PI / 4.0),
            Self::Dupl | Self::Sum => (0.0, 0.0),
        }
    }

    pub fn default_grid(self) -> SweepGrid {
        match self {
            Self::Sum => SweepGrid::square(1.25, 4.0, 12),
            _ => SweepGrid::square(0.05, 1.95, 20),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown experiment '{0}' (expected trans, dupl, area or sum)")]
pub struct UnknownExperiment(pub String);

impl FromStr for Experiment {
    type Err = UnknownExperiment;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.id() == s)
            .ok_or_else(|| UnknownExperiment(s.to_string()))
    }
}

/// Tensor grid `x_min..=x_max` (`nx` points) × `y_min..=y_max` (`ny` points).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid grid: {0}")]
pub struct GridError(pub String);

impl SweepGrid {
    pub fn square(min: f64, max: f64, n: usize) -> Self {
        Self {
            x_min: min,
            x_max: max,
            nx: n,
            y_min: min,
            y_max: max,
            ny: n,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        for (lo, hi, n, axis) in [
            (self.x_min, self.x_max, self.nx, "x"),
            (self.y_min, self.y_max, self.ny, "y"),
        ] {
            if n < 2 {
                return Err(GridError(format!(
                    "{axis}: need at least 2 points, got {n}"
                )));
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GridError(format!("{axis}: need min < max, got {lo}..{hi}")));
            }
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.x_min, self.x_max, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min, self.y_max, self.ny)
    }

    /// All points, row-major in x then y.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let ys = self.ys();
        self.xs()
            .into_iter()
            .flat_map(|x| ys.iter().map(move |&y| (x, y)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromStr for SweepGrid {
    type Err = GridError;

    /// Parses `"xmin:xmax:nx,ymin:ymax:ny"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let axes: Vec<&str> = s.split(',').collect();
        if axes.len() != 2 {
            return Err(GridError(format!(
                "expected 'xmin:xmax:nx,ymin:ymax:ny', got '{s}'"
            )));
        }
        let parse_axis = |a: &str| -> Result<(f64, f64, usize), GridError> {
            let parts: Vec<&str> = a.trim().split(':').collect();
            let err = || GridError(format!("bad axis '{a}'"));
            if parts.len() != 3 {
                return Err(err());
            }
            Ok((
                parts[0].parse().map_err(|_| err())?,
                parts[1].parse().map_err(|_| err())?,
                parts[2].parse().map_err(|_| err())?,
            ))
        };
        let (x_min, x_max, nx) = parse_axis(axes[0])?;
        let (y_min, y_max, ny) = parse_axis(axes[1])?;
        let grid = Self {
            x_min,
            x_max,
            nx,
            y_min,
            y_max,
            ny,
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// Everything a sweep needs besides the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub alpha: f64,
    pub beta: f64,
    pub opts: AdaptiveOptions,
}

impl SweepParams {
    pub fn defaults(experiment: Experiment) -> Self {
        let (alpha, beta) = experiment.default_angles();
        Self {
            alpha,
            beta,
            opts: AdaptiveOptions::new(SWEEP_TOL, SWEEP_MAX_DOFS),
        }
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub x: f64,
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub delta: f64,
    /// Sum of the bracket widths of all moduli involved.
    pub bracket: f64,
    pub skipped: bool,
}

/// What a record says about the conjectured inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
    Indeterminate,
    Skipped,
}

impl SweepRecord {
    fn skipped(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            lhs: f64::NAN,
            rhs: f64::NAN,
            delta: f64::NAN,
            bracket: f64::NAN,
            skipped: true,
        }
    }

    fn new(x: f64, y: f64, lhs: f64, rhs: f64, bracket: f64) -> Self {
        Self {
            x,
            y,
            lhs,
            rhs,
            delta: rhs - lhs,
            bracket,
            skipped: false,
        }
    }

    pub fn verdict(&self) -> Verdict {
        if self.skipped {
            Verdict::Skipped
        } else if self.delta.abs() <= self.bracket {
            Verdict::Indeterminate
        } else if self.delta > 0.0 {
            Verdict::Holds
        } else {
            Verdict::Violated
        }
    }
}

/// Evaluates one grid point of `experiment`.
pub fn evaluate_point(
    experiment: Experiment,
    x: f64,
    y: f64,
    params: &SweepParams,
) -> Result<SweepRecord, ModulusError> {
    let opts = &params.opts;
    match experiment {
        Experiment::Trans => {
            let a = ONE + Point::polar(x, params.alpha);
            let b = Point::polar(y, params.beta);
            let r = exp_transposition(a, b, opts)?;
            Ok(SweepRecord::new(
                x,
                y,
                r.lhs.value,
                r.rhs.value,
                r.lhs.bracket_width() + r.rhs.bracket_width(),
            ))
        }
        Experiment::Dupl => {
            let a = Point::new(x, y);
            let b = Point::polar(1.0, (a - ONE).arg());
            let r = exp_duplication(a, b, opts)?;
            Ok(SweepRecord::new(
                x,
                y,
                r.first.value + r.second.value,
                r.whole.value,
                r.bracket(),
            ))
        }
        Experiment::Area => {
            let r = exp_equal_area(x, y, params.alpha, params.beta, opts)?;
            Ok(SweepRecord::new(
                x,
                y,
                r.q1.value,
                r.q2.value,
                r.q1.bracket_width() + r.q2.bracket_width(),
            ))
        }
        Experiment::Sum => {
            let r = exp_sum_inequality(x, y)?;
            // |S − (h+k−3/2)| ≤ 1/2 is the two-sided inequality; delta is the smaller slack
            let lhs = (r.sum - (x + y - 1.5)).abs();
            Ok(SweepRecord::new(x, y, lhs, 0.5, 0.0))
        }
    }
}

/// Aggregate view of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSummary {
    pub records: usize,
    pub skipped: usize,
    pub indeterminate: usize,
    pub holds: usize,
    /// Records with `delta < −bracket`: candidate counterexamples.
    pub violated: usize,
    /// `(delta, x, y)` of the smallest evaluated delta.
    pub min_delta: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub grid: SweepGrid,
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    pub fn summary(&self) -> SweepSummary {
        let mut s = SweepSummary {
            records: self.records.len(),
            skipped: 0,
            indeterminate: 0,
            holds: 0,
            violated: 0,
            min_delta: None,
        };
        for r in &self.records {
            match r.verdict() {
                Verdict::Skipped => s.skipped += 1,
                Verdict::Indeterminate => s.indeterminate += 1,
                Verdict::Holds => s.holds += 1,
                Verdict::Violated => s.violated += 1,
            }
            if !r.skipped && s.min_delta.is_none_or(|(d, _, _)| r.delta < d) {
                s.min_delta = Some((r.delta, r.x, r.y));
            }
        }
        s
    }

    /// CSV with header `x,y,lhs,rhs,delta,bracket,skipped`, numbers to 12
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,lhs,rhs,delta,bracket,skipped")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_sig(r.x),
                fmt_sig(r.y),
                fmt_sig(r.lhs),
                fmt_sig(r.rhs),
                fmt_sig(r.delta),
                fmt_sig(r.bracket),
                r.skipped
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Formats `v` with 12 significant digits, like C's `%.12g`.
pub fn fmt_sig(v: f64) -> String {
    format_significant(v, 12)
}

/// Formats `v` with `digits` significant digits, like C's `%.{digits}g`.
pub fn format_significant(v: f64, digits: usize) -> String {
    let digits = digits.max(1) as i32;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (digits - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..digits).contains(&exp) {
        trim(&format!("{:.*}", (digits - 1 - exp) as usize, v))
    } else {
        format!("{}e{}", trim(mantissa), exp)
    }
}

/// Evaluates `experiment` on every grid point. Points whose geometry is
/// invalid (or whose solve fails) are kept as skipped records. Points are
/// evaluated in parallel; output order is row-major in x then y.
///
/// `progress(done, total)` is called after each point.
pub fn run_sweep(
    experiment: Experiment,
    grid: &SweepGrid,
    params: &SweepParams,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<SweepResult, GridError> {
    grid.validate()?;
    let points = grid.points();
    let total = points.len();
    let done = AtomicUsize::new(0);
    let records = points
        .par_iter()
        .map(|&(x, y)| {
            let record = match evaluate_point(experiment, x, y, params) {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("{experiment} at ({x}, {y}) skipped: {e}");
                    SweepRecord::skipped(x, y)
                }
            };
            progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            record
        })
        .collect();
    Ok(SweepResult {
        experiment,
        grid: *grid,
        records,
    })
}
