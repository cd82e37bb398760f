//! Aggregate relational data: survey questions of the form "how many of your
//! (inbound|outbound) links satisfy P", their answers for a whole network,
//! and distances between answer vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovariateTable, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Count alters `j` with `g_ji = 1`.
    Inbound,
    /// Count alters `j` with `g_ij = 1`.
    Outbound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparison {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Comparison::Gt => a > b,
            Comparison::Ge => a >= b,
            Comparison::Lt => a < b,
            Comparison::Le => a <= b,
        }
    }
}

/// Condition on (respondent `i`, alter `j`). Ranges are half-open `[lo, hi)`;
/// a missing `hi` means unbounded above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Predicate {
    AlwaysTrue,
    AlterAttrRange {
        attr: String,
        lo: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
    AbsDiffRange {
        attr: String,
        lo: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
    AlterAttrThreshold {
        attr: String,
        op: Comparison,
        value: f64,
    },
}

fn in_range(x: f64, lo: f64, hi: Option<f64>) -> bool {
    x >= lo && hi.is_none_or(|h| x < h)
}

impl Predicate {
    fn validate(&self) -> Result<()> {
        match self {
            Predicate::AlterAttrRange { lo, hi: Some(hi), .. } | Predicate::AbsDiffRange { lo, hi: Some(hi), .. }
                if !(lo < hi) =>
            {
                Err(Error::validation(format!("range requires lo < hi, got [{lo}, {hi})")))
            }
            _ => Ok(()),
        }
    }

    /// Row-major `n x n` truth table `P(X_i, X_j)`.
    fn table(&self, x: &CovariateTable) -> Result<Vec<bool>> {
        let n = x.n();
        let mut out = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = match self {
                    Predicate::AlwaysTrue => true,
                    Predicate::AlterAttrRange { attr, lo, hi } => in_range(x.get(attr)?[j], *lo, *hi),
                    Predicate::AbsDiffRange { attr, lo, hi } => {
                        let a = x.get(attr)?;
                        in_range((a[i] - a[j]).abs(), *lo, *hi)
                    }
                    Predicate::AlterAttrThreshold { attr, op, value } => op.holds(x.get(attr)?[j], *value),
                };
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdQuery {
    pub name: String,
    pub direction: Direction,
    pub predicate: Predicate,
}

impl ArdQuery {
    pub fn new(name: &str, direction: Direction, predicate: Predicate) -> Self {
        ArdQuery {
            name: name.to_string(),
            direction,
            predicate,
        }
    }
}

/// An ordered, non-empty list of uniquely named questions. Serialized as a
/// bare JSON list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ArdQuery>", into = "Vec<ArdQuery>")]
pub struct ArdQuerySet {
    queries: Vec<ArdQuery>,
}

impl TryFrom<Vec<ArdQuery>> for ArdQuerySet {
    type Error = Error;

    fn try_from(queries: Vec<ArdQuery>) -> Result<Self> {
        ArdQuerySet::new(queries)
    }
}

impl From<ArdQuerySet> for Vec<ArdQuery> {
    fn from(qs: ArdQuerySet) -> Self {
        qs.queries
    }
}

impl ArdQuerySet {
    pub fn new(queries: Vec<ArdQuery>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::validation("query set must not be empty"));
        }
        for (k, q) in queries.iter().enumerate() {
            q.predicate.validate()?;
            if queries[..k].iter().any(|p| p.name == q.name) {
                return Err(Error::validation(format!("duplicate query name '{}'", q.name)));
            }
        }
        Ok(ArdQuerySet { queries })
    }

    pub fn queries(&self) -> &[ArdQuery] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("query sets always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Stacked answers, respondent-major: respondent `i`'s answers occupy
/// `values[i * questions .. (i + 1) * questions]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArdVector {
    pub respondents: usize,
    pub questions: usize,
    pub values: Vec<u32>,
}

impl ArdVector {
    pub fn answer(&self, respondent: usize, question: usize) -> u32 {
        self.values[respondent * self.questions + question]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.respondents * self.questions {
            return Err(Error::validation(format!(
                "ARD vector has {} entries, expected {} x {}",
                self.values.len(),
                self.respondents,
                self.questions
            )));
        }
        if let Some(&v) = self.values.iter().find(|&&v| v as usize >= self.respondents.max(1)) {
            return Err(Error::validation(format!(
                "ARD entry {v} exceeds n - 1 = {}",
                self.respondents.saturating_sub(1)
            )));
        }
        Ok(())
    }
}

/// A query set evaluated against a covariate table.
#[derive(Clone, Debug)]
pub struct BoundQuerySet {
    n: usize,
    directions: Vec<Direction>,
    tables: Vec<Vec<bool>>,
}

impl BoundQuerySet {
    pub fn new(qs: &ArdQuerySet, x: &CovariateTable) -> Result<Self> {
        Ok(BoundQuerySet {
            n: x.n(),
            directions: qs.queries.iter().map(|q| q.direction).collect(),
            tables: qs.queries.iter().map(|q| q.predicate.table(x)).collect::<Result<_>>()?,
        })
    }

    pub fn questions(&self) -> usize {
        self.directions.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn compute(&self, g: &Network) -> ArdVector {
        assert_eq!(g.n(), self.n, "network size does not match bound covariates");
        let (n, nq) = (self.n, self.questions());
        let mut values = vec![0u32; n * nq];
        for (i, answers) in values.chunks_mut(nq).enumerate() {
            for j in (0..n).filter(|&j| j != i) {
                let out = g.has_link(i, j);
                let inb = g.has_link(j, i);
                if !(out || inb) {
                    continue;
                }
                for (q, a) in answers.iter_mut().enumerate() {
                    let linked = match self.directions[q] {
                        Direction::Inbound => inb,
                        Direction::Outbound => out,
                    };
                    if linked && self.tables[q][i * n + j] {
                        *a += 1;
                    }
                }
            }
        }
        ArdVector {
            respondents: n,
            questions: nq,
            values,
        }
    }
}

pub fn compute_ard(g: &Network, x: &CovariateTable, qs: &ArdQuerySet) -> Result<ArdVector> {
    if g.n() != x.n() {
        return Err(Error::validation("network size does not match covariates"));
    }
    Ok(BoundQuerySet::new(qs, x)?.compute(g))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
    Linf,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "linf" => Ok(Norm::Linf),
            other => Err(Error::validation(format!("unknown norm '{other}' (expected l1, l2, linf)"))),
        }
    }
}

impl Norm {
    pub fn of(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::L1 => values.map(f64::abs).sum(),
            Norm::L2 => values.map(|d| d * d).sum::<f64>().sqrt(),
            Norm::Linf => values.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

pub fn ard_distance(a: &ArdVector, b: &ArdVector, norm: Norm) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::validation(format!(
            "ARD length mismatch: {} vs {}",
            a.values.len(),
            b.values.len()
        )));
    }
    Ok(norm.of(a.values.iter().zip(&b.values).map(|(&x, &y)| x as f64 - y as f64)))
}

/// `||a - b|| <= delta`; the boundary is closed.
pub fn within_tolerance(a: &ArdVector, b: &ArdVector, delta: f64, norm: Norm) -> Result<bool> {
    if !(delta >= 0.0) {
        return Err(Error::validation(format!("tolerance must be >= 0, got {delta}")));
    }
    Ok(ard_distance(a, b, norm)? <= delta)
}

fn both_directions(out: &mut Vec<ArdQuery>, stem: &str, predicate: Predicate) {
    out.push(ArdQuery::new(&format!("in_{stem}"), Direction::Inbound, predicate.clone()));
    out.push(ArdQuery::new(&format!("out_{stem}"), Direction::Outbound, predicate));
}

fn age_diff(lo: f64, hi: Option<f64>) -> Predicate {
    Predicate::AbsDiffRange {
        attr: "age".into(),
        lo,
        hi,
    }
}

fn age_band(lo: f64, hi: Option<f64>) -> Predicate {
    Predicate::AlterAttrRange {
        attr: "age".into(),
        lo,
        hi,
    }
}

/// Ten questions on age: totals, age-difference under 5, and alter age in
/// `[0, 25)`, `[25, 45)`, `[45, inf)`, each inbound and outbound.
pub fn design1_queries() -> ArdQuerySet {
    let mut q = Vec::new();
    both_directions(&mut q, "total", Predicate::AlwaysTrue);
    both_directions(&mut q, "age_diff_lt5", age_diff(0.0, Some(5.0)));
    both_directions(&mut q, "age_lt25", age_band(0.0, Some(25.0)));
    both_directions(&mut q, "age_25_45", age_band(25.0, Some(45.0)));
    both_directions(&mut q, "age_ge45", age_band(45.0, None));
    ArdQuerySet::new(q).expect("preset is valid")
}

fn diff_bins(cuts: &[f64]) -> ArdQuerySet {
    let mut q = Vec::new();
    both_directions(&mut q, "total", Predicate::AlwaysTrue);
    let mut lo = 0.0;
    for &c in cuts {
        both_directions(&mut q, &format!("age_diff_{lo}_{c}"), age_diff(lo, Some(c)));
        lo = c;
    }
    both_directions(&mut q, &format!("age_diff_ge{lo}"), age_diff(lo, None));
    ArdQuerySet::new(q).expect("preset is valid")
}

/// Eight questions: totals and age-difference bins `[0,5)`, `[5,10)`, `[10,inf)`.
pub fn design2_benchmark_queries() -> ArdQuerySet {
    diff_bins(&[5.0, 10.0])
}

/// Sixteen questions: totals and age-difference bins cut at 2, 5, 8, 12, 17, 24.
pub fn design2_augmented_queries() -> ArdQuerySet {
    diff_bins(&[2.0, 5.0, 8.0, 12.0, 17.0, 24.0])
}

pub const BUILTIN_QUERY_SETS: [&str; 3] = ["design1", "design2-benchmark", "design2-augmented"];

pub fn builtin_query_sets() -> Vec<(&'static str, ArdQuerySet)> {
    vec![
        ("design1", design1_queries()),
        ("design2-benchmark", design2_benchmark_queries()),
        ("design2-augmented", design2_augmented_queries()),
    ]
}

pub fn builtin_query_set(name: &str) -> Option<ArdQuerySet> {
    builtin_query_sets()
        .into_iter()
        .find(|(k, _)| *k == name)
        .map(|(_, qs)| qs)
}
