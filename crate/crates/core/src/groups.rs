//! Non-overlapping group structure over feature indices and the group norms
//! built on it.
//!
//! Group ids and feature indices are zero-based. The signed one-based path
//! notation shown to users lives in [`crate::iga::SelectionPath::signed_path`].

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of `{0, .., p-1}` into `m` disjoint, nonempty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupPartition {
    p: usize,
    groups: Vec<Vec<usize>>,
    #[serde(skip)]
    owner: Vec<usize>,
}

/// On-disk form: `{"p": int, "groups": [[int, ...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupsFile {
    pub p: usize,
    pub groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    /// Validates raw index lists against `p` and normalizes each list to
    /// ascending order.
    pub fn new(raw_groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("feature count p must be positive".into()));
        }
        let mut owner = vec![usize::MAX; p];
        let mut groups = Vec::with_capacity(raw_groups.len());
        for (g, mut members) in raw_groups.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidArgument(format!("group {g} is empty")));
            }
            members.sort_unstable();
            for w in members.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::Overlap { index: w[0] });
                }
            }
            for &i in &members {
                if i >= p {
                    return Err(Error::Range { index: i, limit: p });
                }
                if owner[i] != usize::MAX {
                    return Err(Error::Overlap { index: i });
                }
                owner[i] = g;
            }
            groups.push(members);
        }
        if let Some(index) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::Coverage { index });
        }
        Ok(Self { p, groups, owner })
    }

    /// `m` contiguous groups of `q` features each.
    pub fn even(m: usize, q: usize) -> Result<Self> {
        let groups = (0..m).map(|g| (g * q..(g + 1) * q).collect()).collect();
        Self::new(groups, m * q)
    }

    /// Every feature its own group.
    pub fn singletons(p: usize) -> Result<Self> {
        Self::new((0..p).map(|i| vec![i]).collect(), p)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: GroupsFile = serde_json::from_str(&text)?;
        Self::new(raw.groups, raw.p)
    }

    pub fn to_file(&self) -> GroupsFile {
        GroupsFile {
            p: self.p,
            groups: self.groups.clone(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Group owning feature `i`.
    pub fn owner(&self, i: usize) -> usize {
        self.owner[i]
    }

    /// Group size when all groups have the same size.
    pub fn uniform_size(&self) -> Option<usize> {
        let q = self.groups[0].len();
        self.groups.iter().all(|g| g.len() == q).then_some(q)
    }

    /// Mean group size.
    pub fn mean_size(&self) -> f64 {
        self.p as f64 / self.m() as f64
    }

    /// Largest feature count covered by any `s` groups (`k_s`).
    pub fn max_size_of(&self, s: usize) -> usize {
        let mut sizes: Vec<usize> = self.groups.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes.iter().take(s).sum()
    }

    /// Sorted feature indices `F_S` covered by `set`.
    pub fn feature_set(&self, set: &GroupSet) -> Vec<usize> {
        let mut out: Vec<usize> = set
            .iter()
            .flat_map(|g| self.groups[g].iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// `E_g alpha`: scatters `alpha` into the positions of group `g`.
    pub fn embed(&self, g: usize, alpha: &[f64]) -> Result<DVector<f64>> {
        let idx = self.groups.get(g).ok_or(Error::Range {
            index: g,
            limit: self.m(),
        })?;
        if idx.len() != alpha.len() {
            return Err(Error::Dimension {
                what: "embedded group coefficients",
                expected: idx.len(),
                got: alpha.len(),
            });
        }
        let mut out = DVector::zeros(self.p);
        for (&i, &a) in idx.iter().zip(alpha) {
            out[i] = a;
        }
        Ok(out)
    }

    /// Coefficients of group `g` gathered out of `w`.
    pub fn restrict(&self, g: usize, w: &DVector<f64>) -> Vec<f64> {
        self.groups[g].iter().map(|&i| w[i]).collect()
    }

    pub fn group_l2(&self, g: usize, w: &DVector<f64>) -> f64 {
        // scaled so tiny nonzero entries do not underflow to a zero norm
        let idx = &self.groups[g];
        let scale = idx.iter().map(|&i| w[i].abs()).fold(0.0, f64::max);
        if scale == 0.0 || !scale.is_finite() {
            return scale;
        }
        scale * idx.iter().map(|&i| (w[i] / scale).powi(2)).sum::<f64>().sqrt()
    }

    pub fn norms(&self, w: &DVector<f64>) -> Result<GroupNorms> {
        if w.len() != self.p {
            return Err(Error::Dimension {
                what: "coefficient vector",
                expected: self.p,
                got: w.len(),
            });
        }
        let per_group: Vec<f64> = (0..self.m()).map(|g| self.group_l2(g, w)).collect();
        let l2_inf = per_group.iter().copied().fold(0.0, f64::max);
        let l2_1 = per_group.iter().sum();
        let group_l0 = per_group.iter().filter(|&&v| v > 0.0).count();
        Ok(GroupNorms {
            per_group_l2: per_group,
            l2_inf,
            l2_1,
            group_l0,
        })
    }

    /// Groups with strictly positive coefficient norm.
    pub fn support(&self, w: &DVector<f64>, threshold: f64) -> GroupSet {
        GroupSet::from_iter((0..self.m()).filter(|&g| self.group_l2(g, w) > threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupNorms {
    pub per_group_l2: Vec<f64>,
    pub l2_inf: f64,
    pub l2_1: f64,
    pub group_l0: usize,
}

/// A set of zero-based group ids, iterated in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSet(BTreeSet<usize>);

impl GroupSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, g: usize) -> bool {
        self.0.insert(g)
    }

    pub fn remove(&mut self, g: usize) -> bool {
        self.0.remove(&g)
    }

    pub fn contains(&self, g: usize) -> bool {
        self.0.contains(&g)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match self.0.iter().next_back() {
            Some(&g) if g >= m => Err(Error::Range { index: g, limit: m }),
            _ => Ok(()),
        }
    }

    pub fn intersection_len(&self, other: &GroupSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    /// One-based ids for display and wire formats.
    pub fn one_based(&self) -> Vec<usize> {
        self.iter().map(|g| g + 1).collect()
    }
}

impl FromIterator<usize> for GroupSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
