//! Weighted inequality indices and their between/within-group
//! decompositions.
//!
//! The Gini index is computed from the ascending stable sort as
//! `Σ wᵢPᵢ(2Cᵢ − wᵢ − N) / (N·Σ wᵢPᵢ)`, with `Cᵢ` the inclusive cumulative
//! weight. This is the pairwise definition `ΣᵢΣⱼ wᵢwⱼ|Pᵢ − Pⱼ| / (2P̄N²)`
//! rearranged; the test suite checks the two against each other.
//!
//! Generalized entropy indices use `r = P/P̄` and are accumulated in
//! termwise non-negative form:
//!
//! * GE(0) = Σ (w/N)(r − 1 − ln r)
//! * GE(1) = Σ (w/N)(r ln r − r + 1)
//! * GE(2) = ½ Σ (w/N)(r − 1)²
//!
//! The extra terms sum to zero because Σ (w/N) r = 1, so these equal the mean
//! log deviation, the Theil index and half the squared coefficient of
//! variation.

use serde::Serialize;

use crate::error::DomainError;
use crate::grid::{ExposureTable, WeightedDistribution};
use crate::stats::SortedDistribution;
use crate::sum::NeumaierSum;

/// Inequality-aversion parameter of the supported GE indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeAlpha {
    Zero,
    One,
    Two,
}

impl GeAlpha {
    pub const ALL: [GeAlpha; 3] = [GeAlpha::Zero, GeAlpha::One, GeAlpha::Two];

    pub fn value(self) -> u8 {
        match self {
            GeAlpha::Zero => 0,
            GeAlpha::One => 1,
            GeAlpha::Two => 2,
        }
    }

    pub fn from_value(alpha: u8) -> Option<Self> {
        match alpha {
            0 => Some(GeAlpha::Zero),
            1 => Some(GeAlpha::One),
            2 => Some(GeAlpha::Two),
            _ => None,
        }
    }

    fn weight_exponent(self) -> i32 {
        self.value() as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexKind {
    Gini,
    Ge(GeAlpha),
}

impl IndexKind {
    pub const ALL: [IndexKind; 4] = [
        IndexKind::Gini,
        IndexKind::Ge(GeAlpha::Zero),
        IndexKind::Ge(GeAlpha::One),
        IndexKind::Ge(GeAlpha::Two),
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Gini => "gini",
            IndexKind::Ge(GeAlpha::Zero) => "mld",
            IndexKind::Ge(GeAlpha::One) => "theil",
            IndexKind::Ge(GeAlpha::Two) => "half_cv2",
        }
    }

    pub fn alpha(self) -> Option<u8> {
        match self {
            IndexKind::Gini => None,
            IndexKind::Ge(a) => Some(a.value()),
        }
    }
}

pub fn gini(dist: &WeightedDistribution) -> Result<f64, DomainError> {
    gini_sorted(&SortedDistribution::new(dist))
}

/// Gini of an already sorted distribution.
pub fn gini_sorted(sorted: &SortedDistribution) -> Result<f64, DomainError> {
    let n = sorted.total_weight();
    let mean = sorted.weighted_mean();
    if !(mean > 0.0) {
        return Err(DomainError::ZeroMean);
    }
    let mut num = NeumaierSum::new();
    let mut mass = NeumaierSum::new();
    for ((&p, &w), &c) in sorted
        .values()
        .iter()
        .zip(sorted.weights())
        .zip(sorted.cumulative())
    {
        let wp = w * p;
        num.add(wp * (2.0 * c - w - n));
        mass.add(wp);
    }
    Ok((num.value() / (n * mass.value())).max(0.0))
}

/// Generalized entropy index GE(α).
pub fn ge(dist: &WeightedDistribution, alpha: GeAlpha) -> Result<f64, DomainError> {
    let mean = dist.weighted_mean();
    if !(mean > 0.0) {
        return Err(DomainError::ZeroMean);
    }
    let n = dist.total_weight();
    let mut acc = NeumaierSum::new();
    for (index, (p, w)) in dist.pairs().enumerate() {
        if w == 0.0 {
            continue;
        }
        let r = p / mean;
        let term = match alpha {
            GeAlpha::Zero | GeAlpha::One if !(p > 0.0) => {
                return Err(DomainError::NonPositiveValue {
                    index,
                    value: p,
                    alpha: alpha.value(),
                })
            }
            GeAlpha::Zero => r - 1.0 - r.ln(),
            GeAlpha::One => r * r.ln() - r + 1.0,
            GeAlpha::Two => 0.5 * (r - 1.0) * (r - 1.0),
        };
        acc.add(w / n * term);
    }
    Ok(acc.value().max(0.0))
}

/// The five headline indices of one distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexSet {
    pub gini: f64,
    pub mld: f64,
    pub theil: f64,
    pub half_cv2: f64,
}

pub fn index_set(dist: &WeightedDistribution) -> Result<IndexSet, DomainError> {
    Ok(IndexSet {
        gini: gini(dist)?,
        mld: ge(dist, GeAlpha::Zero)?,
        theil: ge(dist, GeAlpha::One)?,
        half_cv2: ge(dist, GeAlpha::Two)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupStat {
    /// N_k
    pub population: f64,
    /// P̄_k; zero for groups without weight.
    pub mean: f64,
}

/// A weighted distribution whose elements each belong to one group.
#[derive(Debug, Clone)]
pub struct GroupedDistribution {
    base: WeightedDistribution,
    group_of: Vec<usize>,
    labels: Vec<String>,
    group_stats: Vec<GroupStat>,
}

impl GroupedDistribution {
    pub fn new(
        base: WeightedDistribution,
        group_of: Vec<usize>,
        labels: Vec<String>,
    ) -> Result<Self, DomainError> {
        if group_of.len() != base.len() {
            return Err(DomainError::LengthMismatch {
                values: base.len(),
                weights: group_of.len(),
            });
        }
        let k = labels.len();
        let mut pop = vec![NeumaierSum::new(); k];
        let mut mass = vec![NeumaierSum::new(); k];
        for (index, (&g, (p, w))) in group_of.iter().zip(base.pairs()).enumerate() {
            if g >= k {
                return Err(DomainError::InvalidGroup {
                    index,
                    group: g,
                    groups: k,
                });
            }
            pop[g].add(w);
            mass[g].add(w * p);
        }
        let group_stats = pop
            .iter()
            .zip(&mass)
            .map(|(n, m)| {
                let population = n.value();
                GroupStat {
                    population,
                    mean: if population > 0.0 {
                        m.value() / population
                    } else {
                        0.0
                    },
                }
            })
            .collect();
        Ok(Self {
            base,
            group_of,
            labels,
            group_stats,
        })
    }

    /// Matched cells grouped by country.
    pub fn from_table(table: &ExposureTable) -> Result<Self, DomainError> {
        let mut values = Vec::new();
        let mut weights = Vec::new();
        let mut group_of = Vec::new();
        for c in table.cells() {
            if let Some(p) = c.exposure {
                values.push(p);
                weights.push(c.population);
                group_of.push(c.country.index());
            }
        }
        let base = WeightedDistribution::new(values, weights)?;
        Self::new(base, group_of, table.countries().to_vec())
    }

    pub fn base(&self) -> &WeightedDistribution {
        &self.base
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn group_stats(&self) -> &[GroupStat] {
        &self.group_stats
    }

    /// Each group's own distribution; `None` for groups without weight.
    pub fn partitions(&self) -> Vec<Option<WeightedDistribution>> {
        let k = self.labels.len();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut weights: Vec<Vec<f64>> = vec![Vec::new(); k];
        for (&g, (p, w)) in self.group_of.iter().zip(self.base.pairs()) {
            values[g].push(p);
            weights[g].push(w);
        }
        values
            .into_iter()
            .zip(weights)
            .map(|(v, w)| WeightedDistribution::new(v, w).ok())
            .collect()
    }

    /// The distribution with every element replaced by its group mean,
    /// collapsed to one point per weighted group.
    pub fn between_distribution(&self) -> Result<WeightedDistribution, DomainError> {
        let (values, weights) = self
            .group_stats
            .iter()
            .filter(|s| s.population > 0.0)
            .map(|s| (s.mean, s.population))
            .unzip();
        WeightedDistribution::new(values, weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupContribution {
    pub group: String,
    pub population: f64,
    pub mean: f64,
    /// The group's own index; absent when undefined (zero group mean).
    pub standalone: Option<f64>,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionResult {
    pub index_name: &'static str,
    pub alpha: Option<u8>,
    pub total: f64,
    pub between: f64,
    pub within: f64,
    /// Overlap term of the Gini decomposition; zero for GE indices.
    pub residual: f64,
    pub per_group: Vec<GroupContribution>,
    #[serde(skip)]
    pub kind: IndexKind,
}

/// GE(α) = between + within, with within weighted by `(N_k/N)(P̄_k/P̄)^α`.
pub fn decompose_ge(
    gdist: &GroupedDistribution,
    alpha: GeAlpha,
) -> Result<DecompositionResult, DomainError> {
    let base = gdist.base();
    let total = ge(base, alpha)?;
    let between = ge(&gdist.between_distribution()?, alpha)?;
    let n = base.total_weight();
    let mean = base.weighted_mean();

    let mut within = NeumaierSum::new();
    let mut per_group = Vec::new();
    for ((part, stat), label) in gdist
        .partitions()
        .into_iter()
        .zip(gdist.group_stats())
        .zip(gdist.labels())
    {
        let Some(part) = part else { continue };
        let standalone = match ge(&part, alpha) {
            Ok(v) => Some(v),
            // only reachable for α = 2, where the group's weight factor is zero
            Err(DomainError::ZeroMean) => None,
            Err(e) => return Err(e),
        };
        let share = stat.population / n * (stat.mean / mean).powi(alpha.weight_exponent());
        let contribution = standalone.map_or(0.0, |g| share * g);
        within.add(contribution);
        per_group.push(GroupContribution {
            group: label.clone(),
            population: stat.population,
            mean: stat.mean,
            standalone,
            contribution,
        });
    }
    let kind = IndexKind::Ge(alpha);
    Ok(DecompositionResult {
        index_name: kind.name(),
        alpha: kind.alpha(),
        total,
        between,
        within: within.value(),
        residual: 0.0,
        per_group,
        kind,
    })
}

/// Gini = between + within + residual, with within weighted by the product
/// of population share and exposure share. The residual is positive when
/// group ranges overlap.
pub fn decompose_gini(gdist: &GroupedDistribution) -> Result<DecompositionResult, DomainError> {
    let base = gdist.base();
    let total = gini(base)?;
    let between = gini(&gdist.between_distribution()?)?;
    let n = base.total_weight();
    let mean = base.weighted_mean();

    let mut within = NeumaierSum::new();
    let mut per_group = Vec::new();
    for ((part, stat), label) in gdist
        .partitions()
        .into_iter()
        .zip(gdist.group_stats())
        .zip(gdist.labels())
    {
        let Some(part) = part else { continue };
        let standalone = gini(&part).ok();
        let pop_share = stat.population / n;
        let exposure_share = stat.population * stat.mean / (n * mean);
        let contribution = standalone.map_or(0.0, |g| pop_share * exposure_share * g);
        within.add(contribution);
        per_group.push(GroupContribution {
            group: label.clone(),
            population: stat.population,
            mean: stat.mean,
            standalone,
            contribution,
        });
    }
    let within = within.value();
    Ok(DecompositionResult {
        index_name: IndexKind::Gini.name(),
        alpha: None,
        total,
        between,
        within,
        residual: total - between - within,
        per_group,
        kind: IndexKind::Gini,
    })
}

/// Gini plus GE(0), GE(1), GE(2) decompositions, in that order.
pub fn decompose_all(gdist: &GroupedDistribution) -> Result<Vec<DecompositionResult>, DomainError> {
    let mut out = vec![decompose_gini(gdist)?];
    for alpha in GeAlpha::ALL {
        out.push(decompose_ge(gdist, alpha)?);
    }
    Ok(out)
}
