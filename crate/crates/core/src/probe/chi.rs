use std::fmt;

use super::{Feature, LabeledBatch, ProbeError};

/// Variables marked as most associated with the target.
pub const DEFAULT_TOP_K: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LatentVar {
    /// Categorical one-hot dimension.
    Phi(usize),
    Z(usize),
}

impl fmt::Display for LatentVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Phi(i) => write!(f, "phi{i}"),
            Self::Z(i) => write!(f, "z{i}"),
        }
    }
}

/// `p / q` rounded to nearest, ties to even. `q` must be positive and
/// below 2^126.
pub fn ratio_to_f64(p: u128, q: u128) -> f64 {
    assert!(q > 0 && q < 1 << 126, "denominator out of range");
    if p == 0 {
        return 0.0;
    }
    const BITS: u32 = 55;
    let int = p / q;
    let mut r = p % q;
    let mut exp: i32;
    let mut m: u128;
    let mut sticky;
    let int_bits = 128 - int.leading_zeros();
    if int_bits >= BITS {
        let shift = int_bits - BITS;
        m = int >> shift;
        sticky = r != 0 || int & ((1u128 << shift) - 1) != 0;
        exp = shift as i32;
    } else {
        m = int;
        exp = 0;
        while 128 - m.leading_zeros() < BITS {
            r <<= 1;
            m <<= 1;
            if r >= q {
                r -= q;
                m |= 1;
            }
            exp -= 1;
        }
        sticky = r != 0;
    }
    let guard = (m >> 1) & 1;
    let round = m & 1;
    sticky |= round == 1;
    let mut mant = (m >> 2) as u64;
    if guard == 1 && (sticky || mant & 1 == 1) {
        mant += 1;
    }
    mant as f64 * 2f64.powi(exp + 2)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Chi-square statistic of a 2×2 table as a reduced fraction
/// `N(ad − bc)² / (r0·r1·c0·c1)`. `None` when a column (target outcome) is
/// empty; an empty row gives 0. Also `None` if the integers overflow.
pub fn chi_square_exact(table: [[u64; 2]; 2]) -> Option<(u128, u128)> {
    let [[a, b], [c, d]] = table.map(|r| r.map(u128::from));
    let (c0, c1) = (a + c, b + d);
    if c0 == 0 || c1 == 0 {
        return None;
    }
    let (r0, r1) = (a + b, c + d);
    if r0 == 0 || r1 == 0 {
        return Some((0, 1));
    }
    let n = r0 + r1;
    let diff = (a * d).abs_diff(b * c);
    let num = n.checked_mul(diff.checked_mul(diff)?)?;
    let den = r0.checked_mul(r1)?.checked_mul(c0)?.checked_mul(c1)?;
    let g = gcd(num, den);
    Some((num / g, den / g))
}

/// Chi-square score of a 2×2 table, correctly rounded from the exact
/// rational. `None` when the target column is degenerate.
pub fn chi_square_2x2(table: [[u64; 2]; 2]) -> Option<f64> {
    match chi_square_exact(table) {
        Some((p, q)) if q < 1 << 126 => Some(ratio_to_f64(p, q)),
        Some((p, q)) => Some(p as f64 / q as f64),
        None => {
            let col = |j: usize| table[0][j] + table[1][j];
            if col(0) == 0 || col(1) == 0 {
                return None;
            }
            // overflow: only reachable for astronomically large tables
            let [[a, b], [c, d]] = table.map(|r| r.map(|v| v as f64));
            let n = a + b + c + d;
            Some(n * (a * d - b * c).powi(2) / ((a + b) * (c + d) * (a + c) * (b + d)))
        }
    }
}

/// Pearson correlation between a continuous variable and a boolean.
/// `None` when either side is constant.
pub fn point_biserial(values: &[f64], flags: &[bool]) -> Option<f64> {
    let n = values.len();
    if n == 0 || n != flags.len() {
        return None;
    }
    let n1 = flags.iter().filter(|&&f| f).count();
    if n1 == 0 || n1 == n {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return None;
    }
    let m1 = values.iter().zip(flags).filter(|(_, &f)| f).map(|(v, _)| v).sum::<f64>() / n1 as f64;
    let m0 = values.iter().zip(flags).filter(|(_, &f)| !f).map(|(v, _)| v).sum::<f64>() / (n - n1) as f64;
    let p = n1 as f64 / n as f64;
    Some((m1 - m0) / var.sqrt() * (p * (1.0 - p)).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarScore {
    pub var: LatentVar,
    /// Rows: variable low / high; columns: target false / true.
    pub table: [[u64; 2]; 2],
    pub chi_square: f64,
    pub point_biserial: Option<f64>,
    /// Some expected count is below 5.
    pub low_expected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareReport {
    pub target: Feature,
    pub scores: Vec<VarScore>,
    /// Indices into `scores`, highest score first; ties keep variable order.
    pub ranking: Vec<usize>,
    pub top_k: usize,
}

impl ChiSquareReport {
    pub fn top(&self) -> Vec<&VarScore> {
        self.ranking.iter().take(self.top_k).map(|&i| &self.scores[i]).collect()
    }

    /// 1-based rank of `var`.
    pub fn rank_of(&self, var: LatentVar) -> Option<usize> {
        self.ranking.iter().position(|&i| self.scores[i].var == var).map(|r| r + 1)
    }

    /// Rows `target,rank,variable,chi_square,point_biserial,top_k,low_expected`
    /// in rank order, without a header.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for (r, &i) in self.ranking.iter().enumerate() {
            let v = &self.scores[i];
            let pb = v.point_biserial.map_or(String::new(), |p| p.to_string());
            s.push_str(&format!(
                "{},{},{},{},{pb},{},{}\n",
                self.target,
                r + 1,
                v.var,
                v.chi_square,
                r < self.top_k,
                v.low_expected
            ));
        }
        s
    }
}

pub const REPORT_HEADER: &str = "target,rank,variable,chi_square,point_biserial,top_k,low_expected\n";

/// Scores every z variable (and optionally every φ dimension) against the
/// boolean `target`, binarizing z by sign.
pub fn chi_square_scores(
    batch: &LabeledBatch,
    target: Feature,
    include_phi: bool,
    top_k: usize,
) -> Result<ChiSquareReport, ProbeError> {
    let flags: Vec<bool> = batch.entries.iter().map(|(_, l)| target.of(l)).collect();
    if flags.iter().all(|&f| f) || flags.iter().all(|&f| !f) {
        return Err(ProbeError::Unscorable(target));
    }
    let (n_phi, n_z) = batch.entries.first().map_or((0, 0), |(c, _)| (c.n_phi, c.z.len()));
    let mut vars: Vec<LatentVar> = Vec::new();
    if include_phi {
        vars.extend((0..n_phi).map(LatentVar::Phi));
    }
    vars.extend((0..n_z).map(LatentVar::Z));
    let n = flags.len() as u128;
    let scores = vars
        .into_iter()
        .map(|var| {
            let values: Vec<f64> = batch
                .entries
                .iter()
                .map(|(c, _)| match var {
                    LatentVar::Phi(i) => (c.phi == i) as u8 as f64,
                    LatentVar::Z(i) => c.z[i] as f64,
                })
                .collect();
            let mut table = [[0u64; 2]; 2];
            for (v, &f) in values.iter().zip(&flags) {
                table[(*v > 0.0) as usize][f as usize] += 1;
            }
            let chi = chi_square_2x2(table).ok_or(ProbeError::Unscorable(target))?;
            let low_expected = (0..2).any(|i| {
                (0..2).any(|j| {
                    let r = (table[i][0] + table[i][1]) as u128;
                    let c = (table[0][j] + table[1][j]) as u128;
                    r * c < 5 * n
                })
            });
            Ok(VarScore {
                var,
                table,
                chi_square: chi,
                point_biserial: point_biserial(&values, &flags),
                low_expected,
            })
        })
        .collect::<Result<Vec<_>, ProbeError>>()?;
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&i, &j| scores[j].chi_square.total_cmp(&scores[i].chi_square));
    Ok(ChiSquareReport {
        target,
        scores,
        ranking,
        top_k,
    })
}

/// Nasal vowel × nasal consonant co-occurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance {
    /// Rows: nasal vowel absent / present; columns: nasal consonant absent / present.
    pub table: [[u64; 2]; 2],
    /// P(nasal consonant | nasal vowel); `None` when no clip has a nasal vowel.
    pub conditional: Option<f64>,
}

pub fn covariance_check(batch: &LabeledBatch) -> Covariance {
    let mut table = [[0u64; 2]; 2];
    for (_, l) in &batch.entries {
        table[l.nasal_vowel_present as usize][l.nasal_consonant_present as usize] += 1;
    }
    let nv = table[1][0] + table[1][1];
    Covariance {
        table,
        conditional: (nv > 0).then(|| table[1][1] as f64 / nv as f64),
    }
}
