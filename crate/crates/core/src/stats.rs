//! Means, standard errors, Welch's t-test and grouped aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::taxonomy::TaskCategory;

pub const ALPHA: f64 = 0.05;

/// Neumaier-compensated sum.
fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, var)
}

/// Arithmetic mean and standard error (sample standard deviation over sqrt(n)).
pub fn mean_se(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::precondition("mean_se of an empty sample"));
    }
    let (mean, var) = mean_var(values);
    Ok((mean, (var / values.len() as f64).sqrt()))
}

/// JSON has no infinities; non-finite values are written as strings.
mod non_finite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    #[serde(with = "non_finite")]
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant: bool,
}

impl TestResult {
    fn new(t: f64, df: f64, p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        TestResult {
            t,
            df,
            p,
            significant: p < ALPHA,
        }
    }
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
///
/// When both samples have zero variance the statistic is 0 with p = 1 for
/// equal means, and infinite with p = 0 otherwise.
pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::precondition("welch_t_test needs at least two values per sample"));
    }
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (ax, ay) = (vx / nx, vy / ny);
    let se2 = ax + ay;
    let df_min = nx.min(ny) - 1.0;
    if se2 == 0.0 {
        return Ok(if mx == my {
            TestResult::new(0.0, df_min, 1.0)
        } else {
            TestResult::new(f64::INFINITY.copysign(mx - my), df_min, 0.0)
        });
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (ax * ax / (nx - 1.0) + ay * ay / (ny - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::precondition(format!("t distribution: {e}")))?;
    Ok(TestResult::new(t, df, 2.0 * dist.sf(t.abs())))
}

/// Fraction of positions where the two sequences agree.
pub fn agreement_rate<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::precondition("agreement needs two non-empty sequences of equal length"));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// One per-prompt metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub prompt_id: String,
    pub model: String,
    pub strategy: String,
    pub category: TaskCategory,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub strategy: String,
    pub category: TaskCategory,
    pub metric: String,
}

impl CellKey {
    pub fn of(r: &MetricRecord) -> Self {
        CellKey {
            model: r.model.clone(),
            strategy: r.strategy.clone(),
            category: r.category,
            metric: r.metric.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    #[serde(flatten)]
    pub key: CellKey,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

fn group(records: &[MetricRecord]) -> BTreeMap<CellKey, Vec<f64>> {
    let mut groups: BTreeMap<CellKey, Vec<(String, f64)>> = BTreeMap::new();
    for r in records {
        groups.entry(CellKey::of(r)).or_default().push((r.prompt_id.clone(), r.value));
    }
    // Sort values by prompt id so floating-point sums do not depend on record order.
    groups
        .into_iter()
        .map(|(k, mut vs)| {
            vs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            (k, vs.into_iter().map(|v| v.1).collect())
        })
        .collect()
}

/// One cell per distinct (model, strategy, category, metric), sorted by key.
pub fn aggregate(records: &[MetricRecord]) -> Vec<AggregateCell> {
    group(records)
        .into_iter()
        .map(|(key, values)| {
            let (mean, se) = mean_se(&values).expect("groups are non-empty");
            AggregateCell {
                key,
                n: values.len(),
                mean,
                se,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub metric: String,
    pub treatment: String,
    pub baseline: String,
    /// `None` for the test pooled over every category.
    pub category: Option<TaskCategory>,
    pub n_treatment: usize,
    pub n_baseline: usize,
    pub treatment_mean: Option<f64>,
    pub baseline_mean: Option<f64>,
    /// Absent when either side has fewer than two values.
    pub test: Option<TestResult>,
}

type Sides = (Vec<(String, f64)>, Vec<(String, f64)>);

/// Compares `treatment` against `baseline` strategy for one model and metric,
/// per category and pooled.
pub fn compare_strategies(
    records: &[MetricRecord],
    model: &str,
    metric: &str,
    treatment: &str,
    baseline: &str,
) -> Vec<Comparison> {
    let mut per_cat: BTreeMap<TaskCategory, Sides> = BTreeMap::new();
    for r in records.iter().filter(|r| r.model == model && r.metric == metric) {
        let side = per_cat.entry(r.category).or_default();
        if r.strategy == treatment {
            side.0.push((r.prompt_id.clone(), r.value));
        } else if r.strategy == baseline {
            side.1.push((r.prompt_id.clone(), r.value));
        }
    }
    let sorted = |mut v: Vec<(String, f64)>| {
        v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v.into_iter().map(|x| x.1).collect::<Vec<f64>>()
    };
    let mut groups: Vec<(Option<TaskCategory>, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut pooled = (Vec::new(), Vec::new());
    for (cat, (t, b)) in per_cat {
        pooled.0.extend(t.iter().cloned());
        pooled.1.extend(b.iter().cloned());
        groups.push((Some(cat), sorted(t), sorted(b)));
    }
    groups.push((None, sorted(pooled.0), sorted(pooled.1)));

    groups
        .into_iter()
        .filter(|(_, t, b)| !t.is_empty() || !b.is_empty())
        .map(|(category, t, b)| Comparison {
            model: model.to_string(),
            metric: metric.to_string(),
            treatment: treatment.to_string(),
            baseline: baseline.to_string(),
            category,
            n_treatment: t.len(),
            n_baseline: b.len(),
            treatment_mean: mean_se(&t).ok().map(|m| m.0),
            baseline_mean: mean_se(&b).ok().map(|m| m.0),
            test: welch_t_test(&t, &b).ok(),
        })
        .collect()
}
