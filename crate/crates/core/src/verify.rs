//! Robust interval value iteration for reach-avoid properties.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::StatePartition;
use crate::imc::{Imc, Label, TransitionBound, ROW_TOLERANCE};

pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_EPS_CONV: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachAvoidSpec {
    pub goal: Label,
    pub avoid: Vec<Label>,
    pub horizon: Horizon,
    pub threshold: f64,
    pub eps_conv: f64,
    pub max_iterations: usize,
}

impl Default for ReachAvoidSpec {
    fn default() -> Self {
        ReachAvoidSpec {
            goal: Label::Goal,
            avoid: vec![Label::Obstacle, Label::Unsafe],
            horizon: Horizon::Unbounded,
            threshold: DEFAULT_THRESHOLD,
            eps_conv: DEFAULT_EPS_CONV,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl ReachAvoidSpec {
    pub fn with_horizon(horizon: Horizon) -> Self {
        ReachAvoidSpec {
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Specification(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if !(self.eps_conv > 0.0) {
            return Err(Error::Specification("convergence tolerance must be positive".into()));
        }
        if self.avoid.contains(&self.goal) {
            return Err(Error::Specification(format!(
                "label `{}` is both goal and avoid",
                self.goal
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Satisfies,
    Violates,
    Undetermined,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Satisfies => "satisfies",
            Classification::Violates => "violates",
            Classification::Undetermined => "undetermined",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "satisfies" => Ok(Classification::Satisfies),
            "violates" => Ok(Classification::Violates),
            "undetermined" => Ok(Classification::Undetermined),
            other => Err(Error::Input(format!("unknown classification `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub class: Vec<Classification>,
    pub iterations: usize,
    pub converged: bool,
    pub threshold: f64,
    /// Iterate `k - 1` for a finite horizon `k >= 1`. One-step
    /// recomputations of a horizon-`k` bound must read successor values
    /// from here.
    pub previous: Option<(Vec<f64>, Vec<f64>)>,
}

impl VerificationResult {
    pub fn state_count(&self) -> usize {
        self.lower.len()
    }

    /// Successor values to use for one-step recomputation.
    pub fn successor_values(&self) -> (&[f64], &[f64]) {
        match &self.previous {
            Some((l, u)) => (l, u),
            None => (&self.lower, &self.upper),
        }
    }

    pub fn reclassify(&mut self) {
        self.class = classify(&self.lower, &self.upper, self.threshold);
    }

    pub fn count(&self, c: Classification) -> usize {
        self.class.iter().filter(|&&x| x == c).count()
    }
}

/// `min` or `max` over all row-stochastic choices within the row's bounds
/// of the expected successor value.
pub fn adversary_extreme_expectation(values: &[f64], row: &[TransitionBound], mode: Mode) -> Result<f64> {
    let mut order: Vec<usize> = Vec::with_capacity(row.len());
    extreme_with_buffer(values, row, mode, &mut order)
}

fn extreme_with_buffer(
    values: &[f64],
    row: &[TransitionBound],
    mode: Mode,
    order: &mut Vec<usize>,
) -> Result<f64> {
    let lo_sum: f64 = row.iter().map(|t| t.lower).sum();
    let hi_sum: f64 = row.iter().map(|t| t.upper).sum();
    if lo_sum > 1.0 + ROW_TOLERANCE || hi_sum < 1.0 - ROW_TOLERANCE {
        return Err(Error::InvalidModel(format!(
            "infeasible row: sum(lower) = {lo_sum}, sum(upper) = {hi_sum}"
        )));
    }
    order.clear();
    order.extend(0..row.len());
    order.sort_by(|&a, &b| {
        let (va, vb) = (values[row[a].to], values[row[b].to]);
        let by_value = match mode {
            Mode::Min => va.total_cmp(&vb),
            Mode::Max => vb.total_cmp(&va),
        };
        by_value.then(row[a].to.cmp(&row[b].to))
    });
    let mut remaining = (1.0 - lo_sum).max(0.0);
    let mut acc = 0.0;
    for &k in order.iter() {
        let t = &row[k];
        let extra = (t.upper - t.lower).min(remaining);
        remaining -= extra;
        acc += (t.lower + extra) * values[t.to];
    }
    Ok(acc)
}

/// Interval value iteration. Goal states are held at 1 and avoid states at
/// 0; both bounds start from the goal indicator and are updated from the
/// previous iterate (Jacobi).
pub fn robust_value_iteration(imc: &Imc, spec: &ReachAvoidSpec) -> Result<VerificationResult> {
    spec.validate()?;
    let n = imc.state_count();
    let mut pinned: Vec<Option<f64>> = vec![None; n];
    for q in 0..n {
        let goal = imc.has_label(q, spec.goal);
        let avoid = spec.avoid.iter().any(|&l| imc.has_label(q, l));
        pinned[q] = match (goal, avoid) {
            (true, true) => {
                return Err(Error::Specification(format!(
                    "state {q} carries both the goal label and an avoid label"
                )))
            }
            (true, false) => Some(1.0),
            (false, true) => Some(0.0),
            (false, false) => None,
        };
    }

    let init: Vec<f64> = pinned.iter().map(|p| p.unwrap_or(0.0)).collect();
    let mut lower = init.clone();
    let mut upper = init;
    let mut previous = None;

    let step = |vals: &[f64], mode: Mode| -> Result<Vec<f64>> {
        (0..n)
            .into_par_iter()
            .map_init(Vec::new, |buf, q| match pinned[q] {
                Some(v) => Ok(v),
                None => extreme_with_buffer(vals, imc.row(q), mode, buf),
            })
            .collect()
    };

    let (iterations, converged) = match spec.horizon {
        Horizon::Finite(k) => {
            for _ in 0..k {
                let nl = step(&lower, Mode::Min)?;
                let nu = step(&upper, Mode::Max)?;
                previous = Some((std::mem::replace(&mut lower, nl), std::mem::replace(&mut upper, nu)));
            }
            (k, true)
        }
        Horizon::Unbounded => {
            let mut it = 0;
            let mut done = false;
            while it < spec.max_iterations {
                let nl = step(&lower, Mode::Min)?;
                let nu = step(&upper, Mode::Max)?;
                let delta = lower
                    .iter()
                    .zip(&nl)
                    .chain(upper.iter().zip(&nu))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                lower = nl;
                upper = nu;
                it += 1;
                if delta < spec.eps_conv {
                    done = true;
                    break;
                }
            }
            (it, done)
        }
    };

    for q in 0..n {
        if lower[q] > upper[q] + 1e-12 {
            return Err(Error::Soundness(format!(
                "state {q}: lower bound {} exceeds upper bound {}",
                lower[q], upper[q]
            )));
        }
    }
    let class = classify(&lower, &upper, spec.threshold);
    Ok(VerificationResult {
        lower,
        upper,
        class,
        iterations,
        converged,
        threshold: spec.threshold,
        previous,
    })
}

/// Satisfies iff `lower >= threshold`, violates iff `upper < threshold`.
pub fn classify(lower: &[f64], upper: &[f64], threshold: f64) -> Vec<Classification> {
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            if l >= threshold {
                Classification::Satisfies
            } else if u < threshold {
                Classification::Violates
            } else {
                Classification::Undetermined
            }
        })
        .collect()
}

/// `index, lo_1, hi_1, ..., lower, upper, class`; the unsafe state has
/// empty box columns.
pub fn write_results<W: Write>(result: &VerificationResult, partition: &StatePartition, out: W) -> Result<()> {
    let d = partition.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    for i in 1..=d {
        header.push(format!("lo{i}"));
        header.push(format!("hi{i}"));
    }
    header.extend(["lower".into(), "upper".into(), "class".into()]);
    w.write_record(&header).map_err(to_io)?;
    for q in 0..result.state_count() {
        let mut rec = vec![q.to_string()];
        if q < partition.len() {
            for iv in partition.cell(q).intervals() {
                rec.push(iv.lo.to_string());
                rec.push(iv.hi.to_string());
            }
        } else {
            rec.extend(std::iter::repeat_n(String::new(), 2 * d));
        }
        rec.push(result.lower[q].to_string());
        rec.push(result.upper[q].to_string());
        rec.push(result.class[q].as_str().to_string());
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `lower`, `upper` and `class` columns of an exported result
/// table. Iteration metadata is not stored and comes back as zero.
pub fn read_results<R: Read>(input: R, threshold: f64) -> Result<VerificationResult> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Input(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("result table has no `{name}` column")))
    };
    let (li, ui, ci) = (col("lower")?, col("upper")?, col("class")?);
    let (mut lower, mut upper, mut class) = (Vec::new(), Vec::new(), Vec::new());
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
        let bad = |what: &str| Error::Input(format!("result table line {}: bad {what}", n + 2));
        lower.push(rec.get(li).and_then(|s| s.parse().ok()).ok_or_else(|| bad("lower"))?);
        upper.push(rec.get(ui).and_then(|s| s.parse().ok()).ok_or_else(|| bad("upper"))?);
        class.push(rec.get(ci).ok_or_else(|| bad("class"))?.parse()?);
    }
    Ok(VerificationResult {
        lower,
        upper,
        class,
        iterations: 0,
        converged: true,
        threshold,
        previous: None,
    })
}

fn to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imc::LabelSet;
    use proptest::prelude::*;

    fn tb(from: usize, to: usize, lower: f64, upper: f64) -> TransitionBound {
        TransitionBound { from, to, lower, upper }
    }

    fn three_state() -> Imc {
        Imc::new(
            vec![
                vec![tb(0, 0, 0.2, 0.4), tb(0, 1, 0.4, 0.6), tb(0, 2, 0.1, 0.3)],
                vec![tb(1, 1, 1.0, 1.0)],
                vec![tb(2, 2, 1.0, 1.0)],
            ],
            vec![LabelSet::new(), LabelSet::of(&[Label::Goal]), LabelSet::of(&[Label::Unsafe])],
        )
        .unwrap()
    }

    #[test]
    fn adversary_examples() {
        let row = [tb(0, 0, 0.2, 0.8), tb(0, 1, 0.2, 0.8)];
        let v = [0.0, 1.0];
        assert!((adversary_extreme_expectation(&v, &row, Mode::Min).unwrap() - 0.2).abs() < 1e-15);
        assert!((adversary_extreme_expectation(&v, &row, Mode::Max).unwrap() - 0.8).abs() < 1e-15);

        let chain = [tb(0, 0, 0.25, 0.25), tb(0, 1, 0.75, 0.75)];
        let v = [0.4, 0.8];
        let a = adversary_extreme_expectation(&v, &chain, Mode::Min).unwrap();
        let b = adversary_extreme_expectation(&v, &chain, Mode::Max).unwrap();
        assert_eq!(a, b);
        assert!((a - 0.7).abs() < 1e-15);

        let flat = [0.3; 2];
        assert!((adversary_extreme_expectation(&flat, &row, Mode::Min).unwrap() - 0.3).abs() < 1e-15);
        assert!((adversary_extreme_expectation(&flat, &row, Mode::Max).unwrap() - 0.3).abs() < 1e-15);

        let infeasible = [tb(0, 0, 0.0, 0.4), tb(0, 1, 0.0, 0.4)];
        assert!(matches!(
            adversary_extreme_expectation(&[0.0, 1.0], &infeasible, Mode::Min),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn three_state_fixture() {
        let r = robust_value_iteration(&three_state(), &ReachAvoidSpec::default()).unwrap();
        assert!(r.converged);
        assert!((r.lower[0] - 4.0 / 7.0).abs() < 1e-5);
        assert_eq!((r.lower[1], r.upper[1]), (1.0, 1.0));
        assert_eq!((r.lower[2], r.upper[2]), (0.0, 0.0));
        // best case: 0.6 to goal, 0.1 to unsafe, 0.3 self; p = 0.6 + 0.3p
        assert!((r.upper[0] - 6.0 / 7.0).abs() < 1e-5);
    }

    #[test]
    fn results_round_trip() {
        let imc = three_state();
        let r = robust_value_iteration(&imc, &ReachAvoidSpec::default()).unwrap();
        let p = crate::geometry::partition_domain(
            &crate::geometry::Region::from_bounds(&[0.0], &[1.0]).unwrap(),
            &[2],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_results(&r, &p, &mut buf).unwrap();
        let back = read_results(buf.as_slice(), r.threshold).unwrap();
        assert_eq!((&back.lower, &back.upper, &back.class), (&r.lower, &r.upper, &r.class));
        assert!(read_results("index,lower\n0,0.5\n".as_bytes(), 0.9).is_err());
    }

    #[test]
    fn finite_horizon_runs_exactly_k_steps() {
        let imc = three_state();
        for k in 0..5 {
            let r = robust_value_iteration(&imc, &ReachAvoidSpec::with_horizon(Horizon::Finite(k))).unwrap();
            assert_eq!(r.iterations, k);
            assert_eq!((r.lower[1], r.upper[1]), (1.0, 1.0));
            // p_k = 0.4 (1 - 0.3^k) / 0.7 under the worst adversary
            let exact = 0.4 * (1.0 - 0.3f64.powi(k as i32)) / 0.7;
            assert!((r.lower[0] - exact).abs() < 1e-12, "k={k}");
            assert_eq!(r.previous.is_some(), k > 0);
        }
    }

    #[test]
    fn label_overlap_is_rejected() {
        let imc = Imc::new(
            vec![vec![tb(0, 0, 1.0, 1.0)]],
            vec![LabelSet::of(&[Label::Goal, Label::Obstacle])],
        )
        .unwrap();
        assert!(matches!(
            robust_value_iteration(&imc, &ReachAvoidSpec::default()),
            Err(Error::Specification(_))
        ));
        let bad = ReachAvoidSpec {
            threshold: 1.5,
            ..ReachAvoidSpec::default()
        };
        assert!(matches!(robust_value_iteration(&three_state(), &bad), Err(Error::Specification(_))));
    }

    #[test]
    fn classify_examples() {
        use Classification::*;
        assert_eq!(
            classify(&[0.95, 0.1, 0.5], &[1.0, 0.5, 0.95], 0.9),
            vec![Satisfies, Violates, Undetermined]
        );
    }

    fn random_row(vals: &[f64], lows: &[f64], widths: &[f64]) -> (Vec<TransitionBound>, Vec<f64>) {
        let n = lows.len();
        let ls: f64 = lows.iter().sum();
        let lower: Vec<f64> = lows.iter().map(|l| l / ls.max(1.0) * 0.9).collect();
        let upper: Vec<f64> = lower.iter().zip(widths).map(|(l, w)| (l + w).min(1.0)).collect();
        let row = (0..n).map(|j| tb(0, j, lower[j], upper[j])).collect();
        (row, vals[..n].to_vec())
    }

    proptest! {
        #[test]
        fn adversary_result_lies_between_value_extremes(
            vals in proptest::collection::vec(0.0f64..1.0, 4),
            lows in proptest::collection::vec(0.0f64..0.5, 4),
            widths in proptest::collection::vec(0.3f64..1.0, 4),
        ) {
            let (row, v) = random_row(&vals, &lows, &widths);
            let lo = adversary_extreme_expectation(&v, &row, Mode::Min).unwrap();
            let hi = adversary_extreme_expectation(&v, &row, Mode::Max).unwrap();
            let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
            let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(vmin - 1e-12 <= lo && lo <= hi + 1e-12 && hi <= vmax + 1e-12);
        }
    }
}
