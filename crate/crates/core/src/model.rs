//! Networks, covariates, utility specifications and the potential function.
//!
//! A [`UtilityModel`] is a linear-in-parameters description of the three
//! payoff components of a link `i -> j`:
//!
//! * `u(X_i, X_j)`: direct payoff of the link,
//! * `m(X_i, X_j)`: extra payoff when the link is reciprocated (symmetric),
//! * `v(X_i, X_k)`: payoff of the indirect link `i -> j -> k`; the popularity
//!   term `w` of the utility is tied to `v`.
//!
//! Binding a model to a [`CovariateTable`] produces a [`BoundModel`] that
//! caches every feature as an `n x n` matrix, and binding that to a [`Theta`]
//! gives [`Payoffs`], the object the samplers and the mean-field solver work
//! with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed network without self-links.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    n: usize,
    adj: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        Network::from_edges(repr.n, &repr.edges)
    }
}

impl From<Network> for NetworkRepr {
    fn from(g: Network) -> Self {
        NetworkRepr {
            n: g.n,
            edges: g.edges().collect(),
        }
    }
}

impl Network {
    /// The empty network on `n >= 2` nodes.
    pub fn empty(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation(format!("a network needs n >= 2 nodes, got {n}")));
        }
        Ok(Network {
            n,
            adj: vec![false; n * n],
        })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut g = Network::empty(n)?;
        for (i, j) in ordered_pairs(n) {
            g.adj[i * n + j] = true;
        }
        Ok(g)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Network::empty(n)?;
        for &(i, j) in edges {
            g.check_pair(i, j)?;
            g.adj[i * n + j] = true;
        }
        Ok(g)
    }

    /// Builds the network whose ordered pair `ordered_pairs(n)[b]` is linked
    /// iff bit `b` of `mask` is set.
    pub fn from_mask(n: usize, mask: u64) -> Result<Self> {
        let mut g = Network::empty(n)?;
        for (b, (i, j)) in ordered_pairs(n).enumerate() {
            if mask >> b & 1 == 1 {
                g.adj[i * n + j] = true;
            }
        }
        Ok(g)
    }

    /// Inverse of [`Network::from_mask`]. Only meaningful for `n(n-1) <= 64`.
    pub fn to_mask(&self) -> u64 {
        ordered_pairs(self.n)
            .enumerate()
            .filter(|&(_, (i, j))| self.has_link(i, j))
            .fold(0u64, |acc, (b, _)| acc | 1 << b)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_link(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    /// Sets `g_ij`. Panics on `i == j` or out-of-range indices.
    #[inline]
    pub fn set_link(&mut self, i: usize, j: usize, on: bool) {
        assert!(i != j, "self-links are not allowed");
        self.adj[i * self.n + j] = on;
    }

    pub fn toggle(&mut self, i: usize, j: usize) {
        let cur = self.has_link(i, j);
        self.set_link(i, j, !cur);
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        ordered_pairs(self.n).filter(move |&(i, j)| self.has_link(i, j))
    }

    pub fn link_count(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_link(i, j)).count()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_link(j, i)).count()
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Network {
        let mut g = Network {
            n: self.n,
            adj: vec![false; self.n * self.n],
        };
        for (i, j) in self.edges() {
            g.adj[perm[i] * self.n + perm[j]] = true;
        }
        g
    }

    pub(crate) fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        check_pair(self.n, i, j)
    }
}

pub(crate) fn check_pair(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= n || j >= n {
        return Err(Error::Domain(format!("pair ({i}, {j}) out of range for n = {n}")));
    }
    if i == j {
        return Err(Error::Domain(format!("self-pair ({i}, {i}) is not a link")));
    }
    Ok(())
}

/// All ordered pairs `(i, j)`, `i != j`, in row-major order.
pub fn ordered_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> + Clone {
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// Per-node real attributes, one column per attribute name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    n: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl CovariateTable {
    pub fn new(n: usize) -> Self {
        CovariateTable {
            n,
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    /// Adds (or replaces) an attribute column.
    pub fn with_attribute(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.insert(name, values)?;
        Ok(self)
    }

    pub fn insert(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::validation(format!(
                "attribute '{name}' has {} values, expected {}",
                values.len(),
                self.n
            )));
        }
        match self.names.iter().position(|s| s == name) {
            Some(k) => self.columns[k] = values,
            None => {
                self.names.push(name.to_string());
                self.columns.push(values);
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|s| s == name)
            .map(|k| self.columns[k].as_slice())
            .ok_or_else(|| Error::validation(format!("unknown attribute '{name}'")))
    }

    /// Rows reordered so that row `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> CovariateTable {
        let columns = self
            .columns
            .iter()
            .map(|col| {
                let mut out = vec![0.0; self.n];
                for (i, &x) in col.iter().enumerate() {
                    out[perm[i]] = x;
                }
                out
            })
            .collect();
        CovariateTable {
            n: self.n,
            names: self.names.clone(),
            columns,
        }
    }
}

/// A pair feature `f(X_i, X_j)`; utilities are linear combinations of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PairFeature {
    Constant,
    /// `|X_i[attr] - X_j[attr]| / scale`.
    AbsDiff { attr: String, scale: f64 },
    /// `X_j[attr]`.
    AlterAttr { attr: String },
    /// `1{floor(X_i[attr] / width) == floor(X_j[attr] / width)}`.
    SameBin { attr: String, width: f64 },
}

impl PairFeature {
    pub fn abs_diff(attr: &str, scale: f64) -> Self {
        PairFeature::AbsDiff {
            attr: attr.to_string(),
            scale,
        }
    }

    pub fn alter_attr(attr: &str) -> Self {
        PairFeature::AlterAttr {
            attr: attr.to_string(),
        }
    }

    pub fn same_bin(attr: &str, width: f64) -> Self {
        PairFeature::SameBin {
            attr: attr.to_string(),
            width,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PairFeature::AbsDiff { scale, .. } if !(*scale > 0.0 && scale.is_finite()) => {
                Err(Error::validation(format!("abs-diff scale must be > 0, got {scale}")))
            }
            PairFeature::SameBin { width, .. } if !(*width > 0.0 && width.is_finite()) => {
                Err(Error::validation(format!("same-bin width must be > 0, got {width}")))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates the feature for every ordered pair; the diagonal is zero.
    pub fn matrix(&self, x: &CovariateTable) -> Result<Vec<f64>> {
        self.validate()?;
        let n = x.n();
        let mut out = vec![0.0; n * n];
        let f: Box<dyn Fn(usize, usize) -> f64> = match self {
            PairFeature::Constant => Box::new(|_, _| 1.0),
            PairFeature::AbsDiff { attr, scale } => {
                let a = x.get(attr)?;
                let s = *scale;
                Box::new(move |i, j| (a[i] - a[j]).abs() / s)
            }
            PairFeature::AlterAttr { attr } => {
                let a = x.get(attr)?;
                Box::new(move |_, j| a[j])
            }
            PairFeature::SameBin { attr, width } => {
                let a = x.get(attr)?;
                let w = *width;
                Box::new(move |i, j| {
                    if (a[i] / w).floor() == (a[j] / w).floor() {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
        };
        for (i, j) in ordered_pairs(n) {
            out[i * n + j] = f(i, j);
        }
        Ok(out)
    }
}

/// Which payoff component a coefficient block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Direct,
    Mutual,
    Indirect,
}

/// Feature lists for `u`, `m` and `v` (with `w` tied to `v`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilityModel {
    #[serde(default)]
    pub direct_features: Vec<PairFeature>,
    #[serde(default)]
    pub mutual_features: Vec<PairFeature>,
    #[serde(default)]
    pub indirect_features: Vec<PairFeature>,
}

impl UtilityModel {
    pub fn features(&self, part: Part) -> &[PairFeature] {
        match part {
            Part::Direct => &self.direct_features,
            Part::Mutual => &self.mutual_features,
            Part::Indirect => &self.indirect_features,
        }
    }

    /// Total number of coefficients.
    pub fn dim(&self) -> usize {
        self.direct_features.len() + self.mutual_features.len() + self.indirect_features.len()
    }

    /// Coefficient labels in flat order, e.g. `direct[0]`.
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for (part, label) in [
            (Part::Direct, "direct"),
            (Part::Mutual, "mutual"),
            (Part::Indirect, "indirect"),
        ] {
            for k in 0..self.features(part).len() {
                out.push(format!("{label}[{k}]"));
            }
        }
        out
    }
}

/// Coefficients of a [`UtilityModel`]; the flat order is direct, mutual,
/// indirect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub direct: Vec<f64>,
    pub mutual: Vec<f64>,
    pub indirect: Vec<f64>,
}

impl Theta {
    pub fn new(direct: Vec<f64>, mutual: Vec<f64>, indirect: Vec<f64>) -> Self {
        Theta {
            direct,
            mutual,
            indirect,
        }
    }

    pub fn zeros(model: &UtilityModel) -> Self {
        Theta {
            direct: vec![0.0; model.direct_features.len()],
            mutual: vec![0.0; model.mutual_features.len()],
            indirect: vec![0.0; model.indirect_features.len()],
        }
    }

    pub fn from_flat(model: &UtilityModel, flat: &[f64]) -> Result<Self> {
        if flat.len() != model.dim() {
            return Err(Error::validation(format!(
                "theta has {} entries, model expects {}",
                flat.len(),
                model.dim()
            )));
        }
        let a = model.direct_features.len();
        let b = a + model.mutual_features.len();
        Ok(Theta {
            direct: flat[..a].to_vec(),
            mutual: flat[a..b].to_vec(),
            indirect: flat[b..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.direct.clone();
        out.extend_from_slice(&self.mutual);
        out.extend_from_slice(&self.indirect);
        out
    }

    pub fn part(&self, part: Part) -> &[f64] {
        match part {
            Part::Direct => &self.direct,
            Part::Mutual => &self.mutual,
            Part::Indirect => &self.indirect,
        }
    }

    pub fn validate(&self, model: &UtilityModel) -> Result<()> {
        for part in [Part::Direct, Part::Mutual, Part::Indirect] {
            let (got, want) = (self.part(part).len(), model.features(part).len());
            if got != want {
                return Err(Error::validation(format!(
                    "theta.{part:?} has {got} entries, model expects {want}"
                )));
            }
        }
        if let Some(x) = self.to_flat().into_iter().find(|x| !x.is_finite()) {
            return Err(Error::validation(format!("theta entry {x} is not finite")));
        }
        Ok(())
    }
}

/// A [`UtilityModel`] evaluated on a covariate table: one `n x n` matrix per
/// feature.
#[derive(Clone, Debug)]
pub struct BoundModel {
    n: usize,
    model: UtilityModel,
    direct: Vec<Vec<f64>>,
    mutual: Vec<Vec<f64>>,
    indirect: Vec<Vec<f64>>,
}

impl BoundModel {
    pub fn new(model: &UtilityModel, x: &CovariateTable) -> Result<Self> {
        let n = x.n();
        if n < 2 {
            return Err(Error::validation(format!("need n >= 2 nodes, got {n}")));
        }
        let eval = |fs: &[PairFeature]| -> Result<Vec<Vec<f64>>> {
            fs.iter().map(|f| f.matrix(x)).collect()
        };
        let mutual = eval(&model.mutual_features)?;
        for (k, mat) in mutual.iter().enumerate() {
            for (i, j) in ordered_pairs(n) {
                if mat[i * n + j] != mat[j * n + i] {
                    return Err(Error::validation(format!(
                        "mutual feature {k} ({:?}) is not symmetric at ({i}, {j})",
                        model.mutual_features[k]
                    )));
                }
            }
        }
        Ok(BoundModel {
            n,
            model: model.clone(),
            direct: eval(&model.direct_features)?,
            mutual,
            indirect: eval(&model.indirect_features)?,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> &UtilityModel {
        &self.model
    }

    pub fn payoffs(&self, theta: &Theta) -> Result<Payoffs> {
        theta.validate(&self.model)?;
        let combine = |mats: &[Vec<f64>], coef: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; self.n * self.n];
            for (mat, &c) in mats.iter().zip(coef) {
                if c != 0.0 {
                    out.iter_mut().zip(mat).for_each(|(o, &f)| *o += c * f);
                }
            }
            out
        };
        let u = combine(&self.direct, &theta.direct);
        let m = combine(&self.mutual, &theta.mutual);
        let v = combine(&self.indirect, &theta.indirect);
        Ok(Payoffs {
            n: self.n,
            has_mutual: m.iter().any(|&x| x != 0.0),
            has_indirect: v.iter().any(|&x| x != 0.0),
            u,
            m,
            v,
        })
    }

    pub fn payoffs_flat(&self, flat: &[f64]) -> Result<Payoffs> {
        self.payoffs(&Theta::from_flat(&self.model, flat)?)
    }
}

/// Pair payoffs `u_ij`, `m_ij`, `v_ik` for one parameter value.
#[derive(Clone, Debug)]
pub struct Payoffs {
    n: usize,
    u: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    has_mutual: bool,
    has_indirect: bool,
}

impl Payoffs {
    /// Builds payoffs directly from matrices (row-major, `n x n`).
    pub fn from_matrices(n: usize, u: Vec<f64>, m: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if n < 2 || u.len() != n * n || m.len() != n * n || v.len() != n * n {
            return Err(Error::validation("payoff matrices must be n x n with n >= 2"));
        }
        Ok(Payoffs {
            n,
            has_mutual: m.iter().any(|&x| x != 0.0),
            has_indirect: v.iter().any(|&x| x != 0.0),
            u,
            m,
            v,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.n + j]
    }
    #[inline]
    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n + j]
    }
    #[inline]
    pub fn v(&self, i: usize, k: usize) -> f64 {
        self.v[i * self.n + k]
    }
    pub fn has_mutual(&self) -> bool {
        self.has_mutual
    }
    pub fn has_indirect(&self) -> bool {
        self.has_indirect
    }

    /// True when the potential is a sum of independent per-link terms.
    pub fn is_separable(&self) -> bool {
        !self.has_mutual && !self.has_indirect
    }

    /// The potential `Q(g)` at zero shocks. The reciprocity term runs over
    /// ordered pairs, so a reciprocated dyad contributes `m_ij` twice.
    pub fn potential(&self, g: &Network) -> f64 {
        let n = self.n;
        let mut q = 0.0;
        for (i, j) in g.edges() {
            q += self.u(i, j);
            if self.has_mutual && g.has_link(j, i) {
                q += self.m(i, j);
            }
            if self.has_indirect {
                for k in 0..n {
                    if k != i && k != j && g.has_link(j, k) {
                        q += self.v(i, k);
                    }
                }
            }
        }
        q
    }

    /// `Q(g + ij) - Q(g - ij)` in O(n).
    pub fn delta(&self, g: &Network, i: usize, j: usize) -> f64 {
        let mut d = self.u(i, j);
        if self.has_mutual && g.has_link(j, i) {
            d += 2.0 * self.m(i, j);
        }
        if self.has_indirect {
            for k in 0..self.n {
                if k == i || k == j {
                    continue;
                }
                if g.has_link(j, k) {
                    d += self.v(i, k);
                }
                if g.has_link(k, i) {
                    d += self.v(k, j);
                }
            }
        }
        d
    }

    /// Utility of player `i`. `eps` is an optional `n x n` shock matrix; its
    /// diagonal is ignored.
    pub fn utility(&self, i: usize, g: &Network, eps: Option<&[f64]>) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for j in (0..n).filter(|&j| j != i && g.has_link(i, j)) {
            total += self.u(i, j) + eps.map_or(0.0, |e| e[i * n + j]);
            if g.has_link(j, i) {
                total += self.m(i, j);
            }
            for k in (0..n).filter(|&k| k != i && k != j) {
                if g.has_link(j, k) {
                    total += self.v(i, k);
                }
                if g.has_link(k, i) {
                    total += self.v(k, j);
                }
            }
        }
        total
    }
}

fn bind(model: &UtilityModel, x: &CovariateTable, theta: &Theta) -> Result<Payoffs> {
    BoundModel::new(model, x)?.payoffs(theta)
}

fn check_network(g: &Network, x: &CovariateTable) -> Result<()> {
    if g.n() != x.n() {
        return Err(Error::validation(format!(
            "network has {} nodes, covariates have {}",
            g.n(),
            x.n()
        )));
    }
    Ok(())
}

/// The linear form `sum_f theta_f * f(X_i, X_j)` for one payoff component.
pub fn pair_value(
    model: &UtilityModel,
    part: Part,
    theta: &Theta,
    x: &CovariateTable,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_pair(x.n(), i, j)?;
    theta.validate(model)?;
    let n = x.n();
    model
        .features(part)
        .iter()
        .zip(theta.part(part))
        .map(|(f, &c)| Ok(c * f.matrix(x)?[i * n + j]))
        .sum()
}

pub fn potential(g: &Network, x: &CovariateTable, model: &UtilityModel, theta: &Theta) -> Result<f64> {
    check_network(g, x)?;
    Ok(bind(model, x, theta)?.potential(g))
}

pub fn utility(
    i: usize,
    g: &Network,
    x: &CovariateTable,
    eps: Option<&[f64]>,
    model: &UtilityModel,
    theta: &Theta,
) -> Result<f64> {
    check_network(g, x)?;
    if i >= g.n() {
        return Err(Error::Domain(format!("player {i} out of range for n = {}", g.n())));
    }
    if let Some(e) = eps {
        if e.len() != g.n() * g.n() {
            return Err(Error::validation("shock matrix must be n x n"));
        }
    }
    Ok(bind(model, x, theta)?.utility(i, g, eps))
}

pub fn delta_potential(
    g: &Network,
    x: &CovariateTable,
    model: &UtilityModel,
    theta: &Theta,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_network(g, x)?;
    g.check_pair(i, j)?;
    Ok(bind(model, x, theta)?.delta(g, i, j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ages(v: &[f64]) -> CovariateTable {
        CovariateTable::new(v.len()).with_attribute("age", v.to_vec()).unwrap()
    }

    #[test]
    fn pair_value_design_examples() {
        let model = UtilityModel {
            direct_features: vec![PairFeature::Constant, PairFeature::abs_diff("age", 1.0)],
            ..Default::default()
        };
        let x = ages(&[30.0, 20.0]);
        let th = Theta::new(vec![5.0, -1.0], vec![], vec![]);
        assert_eq!(pair_value(&model, Part::Direct, &th, &x, 0, 1).unwrap(), -5.0);
        let zero = Theta::zeros(&model);
        assert_eq!(pair_value(&model, Part::Direct, &zero, &x, 0, 1).unwrap(), 0.0);

        let model2 = UtilityModel {
            direct_features: vec![PairFeature::Constant, PairFeature::abs_diff("age", 20.0)],
            mutual_features: vec![PairFeature::Constant],
            ..Default::default()
        };
        let x2 = ages(&[44.0, 24.0]);
        let th2 = Theta::new(vec![1.0, -1.0], vec![0.1], vec![]);
        assert_eq!(pair_value(&model2, Part::Direct, &th2, &x2, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn pair_value_errors() {
        let model = UtilityModel {
            direct_features: vec![PairFeature::abs_diff("wealth", 1.0)],
            ..Default::default()
        };
        let x = ages(&[1.0, 2.0]);
        let th = Theta::new(vec![1.0], vec![], vec![]);
        assert!(matches!(
            pair_value(&model, Part::Direct, &th, &x, 0, 1),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            pair_value(&model, Part::Direct, &th, &x, 1, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn potential_two_nodes_complete() {
        // u = 1 on both links, m = 0.5, reciprocated dyad counted twice.
        let p = Payoffs::from_matrices(2, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.5, 0.5, 0.0], vec![0.0; 4])
            .unwrap();
        let g = Network::complete(2).unwrap();
        assert_eq!(p.potential(&g), 3.0);
        assert_eq!(p.potential(&Network::empty(2).unwrap()), 0.0);
    }

    #[test]
    fn utility_examples() {
        let model = UtilityModel {
            direct_features: vec![PairFeature::Constant],
            ..Default::default()
        };
        let x = ages(&[0.0, 0.0]);
        let th = Theta::new(vec![-5.0], vec![], vec![]);
        let g = Network::from_edges(2, &[(0, 1)]).unwrap();
        let eps = [0.0, 2.0, 0.0, 0.0];
        assert_eq!(utility(0, &g, &x, Some(&eps), &model, &th).unwrap(), -3.0);
        let empty = Network::empty(2).unwrap();
        assert_eq!(utility(0, &empty, &x, Some(&eps), &model, &th).unwrap(), 0.0);

        // 1 -> 2 -> 3: player 1 collects the indirect payoff v_13.
        let model = UtilityModel {
            indirect_features: vec![PairFeature::Constant],
            ..Default::default()
        };
        let x = ages(&[0.0, 0.0, 0.0]);
        let g = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let th = Theta::new(vec![], vec![], vec![0.7]);
        assert_eq!(utility(0, &g, &x, None, &model, &th).unwrap(), 0.7);
    }

    #[test]
    fn delta_rejects_self_pair() {
        let model = UtilityModel::default();
        let x = ages(&[0.0, 0.0, 0.0]);
        let g = Network::empty(3).unwrap();
        let th = Theta::zeros(&model);
        assert!(matches!(
            delta_potential(&g, &x, &model, &th, 2, 2),
            Err(Error::Domain(_))
        ));
        assert_eq!(delta_potential(&g, &x, &model, &th, 0, 2).unwrap(), 0.0);
    }

    #[test]
    fn asymmetric_mutual_feature_rejected() {
        let model = UtilityModel {
            mutual_features: vec![PairFeature::alter_attr("age")],
            ..Default::default()
        };
        assert!(BoundModel::new(&model, &ages(&[1.0, 2.0])).is_err());
        let ok = UtilityModel {
            mutual_features: vec![PairFeature::abs_diff("age", 2.0), PairFeature::same_bin("age", 5.0)],
            ..Default::default()
        };
        assert!(BoundModel::new(&ok, &ages(&[1.0, 2.0, 9.0])).is_ok());
    }

    #[test]
    fn feature_parameter_validation() {
        let model = UtilityModel {
            direct_features: vec![PairFeature::abs_diff("age", 0.0)],
            ..Default::default()
        };
        assert!(BoundModel::new(&model, &ages(&[1.0, 2.0])).is_err());
        let model = UtilityModel {
            direct_features: vec![PairFeature::same_bin("age", -1.0)],
            ..Default::default()
        };
        assert!(BoundModel::new(&model, &ages(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn network_mask_and_json() {
        let g = Network::from_edges(3, &[(0, 1), (2, 0)]).unwrap();
        assert_eq!(Network::from_mask(3, g.to_mask()).unwrap(), g);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<Network>(&s).unwrap(), g);
        assert!(serde_json::from_str::<Network>(r#"{"n":3,"edges":[[1,1]]}"#).is_err());
        assert!(Network::empty(1).is_err());
    }

    #[test]
    fn theta_dimension_checks() {
        let model = UtilityModel {
            direct_features: vec![PairFeature::Constant],
            mutual_features: vec![PairFeature::Constant],
            ..Default::default()
        };
        assert!(Theta::from_flat(&model, &[1.0]).is_err());
        let th = Theta::from_flat(&model, &[1.0, 2.0]).unwrap();
        assert_eq!(th.mutual, vec![2.0]);
        assert!(Theta::new(vec![f64::NAN], vec![0.0], vec![]).validate(&model).is_err());
    }
}
