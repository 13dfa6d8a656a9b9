//! Group-level analyses: mean wPLI per class and condition, band-power
//! tests between classes, and PLI/wPLI agreement.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::metrics::average_ranks;
use crate::connectivity::{analytic_phase, compare_matrices, pli, wpli, ConnectivityMatrix, Metric};
use crate::dataset::{subject_order_key, Dataset, Label, TaskId};
use crate::error::{Error, Result};
use crate::features::{extract_node_features, Band, BANDS};
use crate::matrix::Matrix;
use crate::connectivity::mean_matrix;
use crate::pipeline::PipelineConfig;
use crate::preprocess::preprocess_recording;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTest {
    MannWhitney,
    WelchT,
}

impl fmt::Display for GroupTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupTest::MannWhitney => "mann_whitney",
            GroupTest::WelchT => "welch_t",
        })
    }
}

impl FromStr for GroupTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mann_whitney" => Ok(GroupTest::MannWhitney),
            "welch_t" => Ok(GroupTest::WelchT),
            _ => Err(Error::InvalidArgument(format!("unknown test {s:?} (mann_whitney, welch_t)"))),
        }
    }
}

/// Largest group size for which the exact U distribution is used.
const EXACT_LIMIT: usize = 25;

/// Number of orderings of `n1 + n2` items giving each U in `0..=n1*n2`.
fn u_counts(n1: usize, n2: usize) -> Vec<f64> {
    // f[i][j][u], rolled over i.
    let max = n1 * n2;
    let mut prev: Vec<Vec<f64>> = (0..=n2).map(|_| {
        let mut v = vec![0.0; max + 1];
        v[0] = 1.0;
        v
    }).collect();
    for i in 1..=n1 {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max + 1]; n2 + 1];
        cur[0][0] = 1.0;
        for j in 1..=n2 {
            for u in 0..=i * j {
                let with_last_from_1 = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = with_last_from_1 + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev[n2].clone()
}

/// Two-sided Mann–Whitney U test; returns `(U of a, p)`. Exact without
/// ties for small groups, otherwise the tie-corrected normal approximation
/// with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return (0.0, 1.0);
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let sorted: Vec<f64> = all.iter().map(|x| x.0).collect();
    let ranks = average_ranks(&sorted);
    let r1: f64 = all.iter().zip(&ranks).filter(|(x, _)| x.1).map(|(_, r)| r).sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let has_ties = sorted.windows(2).any(|w| w[0] == w[1]);
    let mn = (n1 * n2) as f64;

    if !has_ties && n1 <= EXACT_LIMIT && n2 <= EXACT_LIMIT {
        let counts = u_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = counts[..=k].iter().sum::<f64>() / total;
        let upper: f64 = counts[k..].iter().sum::<f64>() / total;
        return (u, (2.0 * lower.min(upper)).min(1.0));
    }

    let n = (n1 + n2) as f64;
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    let var = mn / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if var <= 0.0 {
        return (u, 1.0);
    }
    let z = ((u - mn / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    let norm = Normal::standard();
    (u, (2.0 * (1.0 - norm.cdf(z))).min(1.0))
}

/// Welch's unequal-variance t-test; returns `(t, two-sided p)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    if a.len() < 2 || b.len() < 2 {
        return (0.0, 1.0);
    }
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 <= 0.0 {
        return if ma == mb { (0.0, 1.0) } else { (f64::INFINITY.copysign(ma - mb), 0.0) };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (t, (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0))
}

/// Per-recording summary used by the group analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub subject_id: String,
    pub task: TaskId,
    pub label: Label,
    /// Mean over channels and windows, in band order.
    pub band_power: Vec<f64>,
    pub mean_pli: Matrix,
    pub mean_wpli: Matrix,
}

pub fn summarise_recordings(ds: &Dataset, tasks: &[TaskId], cfg: &PipelineConfig) -> Result<Vec<RecordingSummary>> {
    let mut keys: Vec<(&String, TaskId)> = ds.recordings.keys().filter(|k| tasks.contains(&k.1)).map(|k| (&k.0, k.1)).collect();
    keys.sort_by(|a, b| subject_order_key(a.0).cmp(&subject_order_key(b.0)).then(a.1.cmp(&b.1)));
    keys.par_iter()
        .map(|&(s, t)| {
            let rec = ds.recording(s, t).expect("key from map");
            let label = ds.label_of(s).ok_or_else(|| Error::LabelMismatch(format!("no label for {s}")))?;
            let out = preprocess_recording(rec, &cfg.preprocess)?;
            let feats = extract_node_features(&out.windowed, &cfg.welch)?;
            let mut band_power = vec![0.0; BANDS.len()];
            let mut count = 0.0;
            for f in &feats {
                for r in 0..f.rows() {
                    for (b, bp) in band_power.iter_mut().enumerate() {
                        *bp += f.get(r, b);
                    }
                    count += 1.0;
                }
            }
            for bp in &mut band_power {
                *bp /= count;
            }
            let mut plis = Vec::new();
            let mut wplis = Vec::new();
            for w in &out.windowed.windows {
                let ph = analytic_phase(w)?;
                plis.push(pli(&ph));
                wplis.push(wpli(&ph));
            }
            Ok(RecordingSummary {
                subject_id: s.clone(),
                task: t,
                label,
                band_power,
                mean_pli: mean_matrix(&plis),
                mean_wpli: mean_matrix(&wplis),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConnectivity {
    pub task: TaskId,
    pub n_addicted: usize,
    pub n_control: usize,
    pub addicted: Matrix,
    pub control: Matrix,
    /// Addicted minus control.
    pub difference: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTest {
    pub task: TaskId,
    pub band: Band,
    pub test: GroupTest,
    pub mean_addicted: f64,
    pub mean_control: f64,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PliWpliRow {
    pub subject_id: String,
    pub task: TaskId,
    pub pearson_r: f64,
    pub mean_pli: f64,
    pub mean_wpli: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub connectivity: Vec<ConditionConnectivity>,
    pub band_tests: Vec<BandTest>,
    pub pli_wpli: Vec<PliWpliRow>,
    pub mean_pli_wpli_r: f64,
    /// Mean wPLI over mean PLI across recordings.
    pub wpli_pli_ratio: f64,
}

fn average(mats: &[&Matrix], n: usize) -> Matrix {
    let cm: Vec<ConnectivityMatrix> = mats
        .iter()
        .map(|m| ConnectivityMatrix {
            values: (*m).clone(),
            metric: Metric::Wpli,
        })
        .collect();
    if cm.is_empty() {
        Matrix::zeros(n, n)
    } else {
        mean_matrix(&cm)
    }
}

pub fn group_stats_from(summaries: &[RecordingSummary], test: GroupTest) -> Result<GroupStats> {
    for l in [Label::Addicted, Label::NotAddicted] {
        if !summaries.iter().any(|s| s.label == l) {
            return Err(Error::InvalidArgument(format!("group statistics need both classes; no {} recordings", l.as_str())));
        }
    }
    let mut tasks: Vec<TaskId> = summaries.iter().map(|s| s.task).collect();
    tasks.sort();
    tasks.dedup();
    let n = summaries[0].mean_wpli.rows();

    let mut connectivity = Vec::new();
    let mut band_tests = Vec::new();
    for &task in &tasks {
        let group = |l: Label| summaries.iter().filter(|s| s.task == task && s.label == l).collect::<Vec<_>>();
        let (add, ctl) = (group(Label::Addicted), group(Label::NotAddicted));
        let ma = average(&add.iter().map(|s| &s.mean_wpli).collect::<Vec<_>>(), n);
        let mc = average(&ctl.iter().map(|s| &s.mean_wpli).collect::<Vec<_>>(), n);
        let difference = Matrix::from_fn(n, n, |i, j| ma.get(i, j) - mc.get(i, j));
        connectivity.push(ConditionConnectivity {
            task,
            n_addicted: add.len(),
            n_control: ctl.len(),
            addicted: ma,
            control: mc,
            difference,
        });
        for (b, def) in BANDS.iter().enumerate() {
            let xa: Vec<f64> = add.iter().map(|s| s.band_power[b]).collect();
            let xc: Vec<f64> = ctl.iter().map(|s| s.band_power[b]).collect();
            let (statistic, p_value) = match test {
                GroupTest::MannWhitney => mann_whitney_u(&xa, &xc),
                GroupTest::WelchT => welch_t_test(&xa, &xc),
            };
            let mean = |x: &[f64]| if x.is_empty() { 0.0 } else { x.iter().sum::<f64>() / x.len() as f64 };
            band_tests.push(BandTest {
                task,
                band: def.name,
                test,
                mean_addicted: mean(&xa),
                mean_control: mean(&xc),
                statistic,
                p_value,
            });
        }
    }

    let pli_wpli: Vec<PliWpliRow> = summaries
        .iter()
        .map(|s| {
            let c = compare_matrices(&s.mean_pli, &s.mean_wpli);
            PliWpliRow {
                subject_id: s.subject_id.clone(),
                task: s.task,
                pearson_r: c.pearson_r,
                mean_pli: c.mean_pli,
                mean_wpli: c.mean_wpli,
            }
        })
        .collect();
    let k = pli_wpli.len() as f64;
    let mean_r = pli_wpli.iter().map(|r| r.pearson_r).sum::<f64>() / k;
    let mean_pli = pli_wpli.iter().map(|r| r.mean_pli).sum::<f64>() / k;
    let mean_wpli = pli_wpli.iter().map(|r| r.mean_wpli).sum::<f64>() / k;
    Ok(GroupStats {
        connectivity,
        band_tests,
        pli_wpli,
        mean_pli_wpli_r: mean_r,
        wpli_pli_ratio: if mean_pli > 0.0 { mean_wpli / mean_pli } else { 0.0 },
    })
}

pub fn group_stats(ds: &Dataset, tasks: &[TaskId], cfg: &PipelineConfig, test: GroupTest) -> Result<GroupStats> {
    group_stats_from(&summarise_recordings(ds, tasks, cfg)?, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_u_small_case() {
        // Complete separation, 3 vs 3: P = 2 / C(6,3) = 0.1.
        let (u, p) = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]);
        assert_eq!(u, 9.0);
        assert!((p - 0.1).abs() < 1e-12);
        // 7 vs 7 complete separation: 2 / 3432.
        let a: Vec<f64> = (0..7).map(|v| 10.0 + v as f64).collect();
        let b: Vec<f64> = (0..7).map(|v| v as f64).collect();
        let (_, p) = mann_whitney_u(&a, &b);
        assert!((p - 2.0 / 3432.0).abs() < 1e-12);
    }

    #[test]
    fn exact_u_matches_reference_value() {
        // U = 2 for n1 = n2 = 4: P(U <= 2) = 4/70.
        let (u, p) = mann_whitney_u(&[1.0, 2.0, 3.0, 6.0], &[4.0, 5.0, 7.0, 8.0]);
        assert_eq!(u, 2.0);
        assert!((p - 2.0 * 4.0 / 70.0).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let (_, p) = mann_whitney_u(&a, &a);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, p) = mann_whitney_u(&[2.0; 5], &[2.0; 5]);
        assert_eq!(p, 1.0);
        let (t, p) = welch_t_test(&a, &a);
        assert_eq!(t, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_reference() {
        // a: mean 2, var 1; b: mean 5, var 2.5; n = 3 each.
        let (t, p) = welch_t_test(&[1.0, 2.0, 3.0], &[3.5, 5.0, 6.5]);
        let se = (1.0f64 / 3.0 + 2.25 / 3.0).sqrt();
        assert!((t - (-3.0 / se)).abs() < 1e-12);
        assert!(p > 0.01 && p < 0.1);
    }

    fn summary(id: usize, label: Label, alpha: f64, wpli_level: f64) -> RecordingSummary {
        RecordingSummary {
            subject_id: format!("S{id}"),
            task: TaskId::M,
            label,
            band_power: vec![1.0, 1.0, alpha, 1.0, 1.0],
            mean_pli: Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.5 }),
            mean_wpli: Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { wpli_level }),
        }
    }

    #[test]
    fn planted_alpha_separation() {
        let mut rows = Vec::new();
        for k in 0..7 {
            let jitter = 0.1 * k as f64;
            rows.push(summary(k, Label::Addicted, 3.0 + jitter, 0.4));
            rows.push(summary(k + 7, Label::NotAddicted, 0.0 + jitter, 0.1));
        }
        let gs = group_stats_from(&rows, GroupTest::MannWhitney).unwrap();
        let alpha = gs.band_tests.iter().find(|b| b.band == Band::Alpha).unwrap();
        assert!(alpha.p_value < 0.05);
        let theta = gs.band_tests.iter().find(|b| b.band == Band::Theta).unwrap();
        assert_eq!(theta.p_value, 1.0);
        let d = &gs.connectivity[0].difference;
        assert!((d.get(0, 1) - 0.3).abs() < 1e-12);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn identical_groups_have_zero_difference() {
        let rows: Vec<_> = (0..6)
            .map(|k| summary(k, if k % 2 == 0 { Label::Addicted } else { Label::NotAddicted }, 1.0, 0.2))
            .collect();
        let gs = group_stats_from(&rows, GroupTest::MannWhitney).unwrap();
        assert!(gs.connectivity[0].difference.as_slice().iter().all(|v| v.abs() < 1e-15));
        assert!(gs.band_tests.iter().all(|b| (b.p_value - 1.0).abs() < 1e-12));
    }
}
