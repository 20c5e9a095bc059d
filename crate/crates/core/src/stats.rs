//! Chi-square independence tests and Pearson correlation.
//!
//! P-values come from the regularized upper incomplete gamma function,
//! evaluated here by series or Lentz continued fraction so results do not
//! depend on a platform math library beyond `exp`/`ln`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::datamodel::{NeighborhoodId, SurveyCell};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("degenerate table: a row or column total is zero, or fewer than 2 rows/columns")]
    DegenerateTable,
    #[error("table rows have different lengths")]
    RaggedTable,
    #[error("at least 2 pairs are required")]
    TooFewPairs,
    #[error("undefined correlation: zero variance")]
    UndefinedCorrelation,
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_count(i as u64));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

const MAX_ITER: usize = 10_000;

/// `exp(-x + a ln x - ln Γ(a))`, the common factor of both expansions.
fn gamma_prefactor<T: Scalar>(a: T, x: T) -> T {
    (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn lower_series<T: Scalar>(a: T, x: T) -> T {
    let mut ap = a;
    let mut term = T::one() / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap = ap + T::one();
        term = term * x / ap;
        sum = sum + term;
        if term.abs() < sum.abs() * T::epsilon() {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

fn upper_continued_fraction<T: Scalar>(a: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let two = T::lit(2.0);
    let mut b = x + T::one() - a;
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let i = T::from_count(i as u64);
        let an = -i * (i - a);
        b = b + two;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let delta = d * c;
        h = h * delta;
        if (delta - T::one()).abs() < T::epsilon() {
            break;
        }
    }
    gamma_prefactor(a, x) * h
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q<T: Scalar>(a: T, x: T) -> T {
    if x <= T::zero() {
        return T::one();
    }
    let q = if x < a + T::one() {
        T::one() - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    };
    q.max(T::zero()).min(T::one())
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi_square_pvalue<T: Scalar>(x: T, df: u32) -> T {
    assert!(df >= 1, "chi-square needs at least one degree of freedom");
    let half = T::lit(0.5);
    gamma_q(T::from_count(u64::from(df)) * half, x * half)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareResult<T> {
    pub statistic: T,
    pub df: u32,
    pub p_value: T,
    pub expected_min: T,
    /// Some expected count is below 5, so the asymptotic p-value is rough.
    pub low_expected_warning: bool,
}

/// Pearson chi-square test of independence on an R x C count table, without
/// continuity correction.
pub fn chi_square_independence<T: Scalar, R: AsRef<[u64]>>(table: &[R]) -> Result<ChiSquareResult<T>, StatsError> {
    let rows = table.len();
    let cols = table.first().map_or(0, |r| r.as_ref().len());
    if table.iter().any(|r| r.as_ref().len() != cols) {
        return Err(StatsError::RaggedTable);
    }
    if rows < 2 || cols < 2 {
        return Err(StatsError::DegenerateTable);
    }
    let row_totals: Vec<u64> = table.iter().map(|r| r.as_ref().iter().sum()).collect();
    let col_totals: Vec<u64> = (0..cols).map(|j| table.iter().map(|r| r.as_ref()[j]).sum()).collect();
    if row_totals.contains(&0) || col_totals.contains(&0) {
        return Err(StatsError::DegenerateTable);
    }
    let grand = T::from_count(row_totals.iter().sum());

    let mut statistic = T::zero();
    let mut expected_min = T::infinity();
    for (row, &rt) in table.iter().zip(&row_totals) {
        for (&observed, &ct) in row.as_ref().iter().zip(&col_totals) {
            let expected = T::from_count(rt) * T::from_count(ct) / grand;
            let diff = T::from_count(observed) - expected;
            statistic = statistic + diff * diff / expected;
            expected_min = expected_min.min(expected);
        }
    }
    let df = ((rows - 1) * (cols - 1)) as u32;
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: chi_square_pvalue(statistic, df),
        expected_min,
        low_expected_warning: expected_min < T::lit(5.0),
    })
}

/// Neighborhood-by-outcome table for one facility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemTable {
    pub neighborhoods: Vec<NeighborhoodId>,
    /// `[problems, visits - problems]` per neighborhood.
    pub rows: Vec<[u64; 2]>,
}

/// Pools survey cells per neighborhood, sorted by neighborhood code.
pub fn problem_table(cells: &[SurveyCell]) -> ProblemTable {
    let mut pooled: BTreeMap<&NeighborhoodId, [u64; 2]> = BTreeMap::new();
    for c in cells {
        let row = pooled.entry(&c.neighborhood).or_default();
        row[0] += c.problems;
        row[1] += c.non_problems();
    }
    ProblemTable {
        neighborhoods: pooled.keys().map(|&n| n.clone()).collect(),
        rows: pooled.into_values().collect(),
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation<T: Scalar>(pairs: &[(T, T)]) -> Result<T, StatsError> {
    if pairs.len() < 2 {
        return Err(StatsError::TooFewPairs);
    }
    let n = T::from_count(pairs.len() as u64);
    let (sx, sy) = pairs.iter().fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::UndefinedCorrelation);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}
