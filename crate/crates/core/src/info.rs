//! Dense probability tables over named finite alphabets and the exact
//! information measures computed on them.
//!
//! Everything is in bits. A [`DistTable`] is either a joint PMF or a
//! conditional kernel; conditional kernels carry the names of their
//! conditioning axes and every slice obtained by fixing those axes must sum
//! to one.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Probabilities below this are treated as exact zeros inside logarithms.
pub const ZERO_PROB: f64 = 1e-15;

/// Default normalization tolerance for joint tables and conditional slices.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Information quantities in `[-MI_CLAMP_TOL, 0)` are clamped to zero; more
/// negative values are reported as a numerical inconsistency.
pub const MI_CLAMP_TOL: f64 = 1e-12;

/// A named finite alphabet `{0, .., card - 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub card: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, card: usize) -> Self {
        Axis {
            name: name.into(),
            card,
        }
    }
}

/// Dense table indexed by the Cartesian product of its axes (row-major, the
/// last axis varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistTable {
    axes: Vec<Axis>,
    given: Vec<bool>,
    values: Vec<f64>,
}

impl DistTable {
    /// Joint PMF; entries must be nonnegative and sum to one within
    /// [`NORMALIZATION_TOL`].
    pub fn joint(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        Self::joint_with_tolerance(axes, values, NORMALIZATION_TOL)
    }

    pub fn joint_with_tolerance(axes: Vec<Axis>, values: Vec<f64>, tol: f64) -> Result<Self> {
        let given = vec![false; axes.len()];
        Self::build(axes, given, values, tol)
    }

    /// Conditional kernel: `given` names the conditioning axes.
    pub fn conditional(axes: Vec<Axis>, given: &[&str], values: Vec<f64>) -> Result<Self> {
        Self::conditional_with_tolerance(axes, given, values, NORMALIZATION_TOL)
    }

    pub fn conditional_with_tolerance(
        axes: Vec<Axis>,
        given: &[&str],
        values: Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        for g in given {
            if !axes.iter().any(|a| a.name == *g) {
                return invalid(format!("conditioning axis `{g}` is not an axis of the table"));
            }
        }
        let flags: Vec<bool> = axes.iter().map(|a| given.contains(&a.name.as_str())).collect();
        if flags.iter().all(|&f| f) {
            return invalid("a conditional table needs at least one non-conditioning axis");
        }
        Self::build(axes, flags, values, tol)
    }

    /// Builds a table by evaluating `f` on every multi-index.
    pub fn from_fn(
        axes: Vec<Axis>,
        given: &[&str],
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let cards: Vec<usize> = axes.iter().map(|a| a.card).collect();
        let mut values = Vec::with_capacity(cards.iter().product());
        for_each_index(&cards, |idx, _| values.push(f(idx)));
        if given.is_empty() {
            Self::joint(axes, values)
        } else {
            Self::conditional(axes, given, values)
        }
    }

    /// Uniform joint PMF over the given axes.
    pub fn uniform(axes: Vec<Axis>) -> Result<Self> {
        let size: usize = axes.iter().map(|a| a.card).product();
        Self::joint(axes, vec![1.0 / size as f64; size])
    }

    /// Joint PMF concentrated on one multi-index.
    pub fn point_mass(axes: Vec<Axis>, at: &[usize]) -> Result<Self> {
        let size: usize = axes.iter().map(|a| a.card).product();
        let mut values = vec![0.0; size];
        let cards: Vec<usize> = axes.iter().map(|a| a.card).collect();
        if at.len() != cards.len() || at.iter().zip(&cards).any(|(i, c)| i >= c) {
            return invalid("point-mass index out of range");
        }
        values[flat_index(&cards, at)] = 1.0;
        Self::joint(axes, values)
    }

    fn build(axes: Vec<Axis>, given: Vec<bool>, values: Vec<f64>, tol: f64) -> Result<Self> {
        if axes.is_empty() {
            return invalid("a table needs at least one axis");
        }
        for (i, a) in axes.iter().enumerate() {
            if a.card == 0 {
                return invalid(format!("axis `{}` has cardinality zero", a.name));
            }
            if axes[..i].iter().any(|b| b.name == a.name) {
                return invalid(format!("duplicate axis name `{}`", a.name));
            }
        }
        let size: usize = axes.iter().map(|a| a.card).product();
        if values.len() != size {
            return invalid(format!(
                "table has {} values but its axes span {} cells",
                values.len(),
                size
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return invalid(format!("table entry {v} is negative or not finite"));
        }
        let table = DistTable {
            axes,
            given,
            values,
        };
        table.check_normalization(tol)?;
        Ok(table)
    }

    fn check_normalization(&self, tol: f64) -> Result<()> {
        let keep: Vec<usize> = (0..self.axes.len()).filter(|&i| self.given[i]).collect();
        let sums = marginal_flat(&self.cards(), &self.values, &keep);
        for (slice, s) in sums.iter().enumerate() {
            if (s - 1.0).abs() > tol {
                let what = if keep.is_empty() {
                    "joint table".to_string()
                } else {
                    format!("conditional slice {slice}")
                };
                return invalid(format!("{what} sums to {s}, not 1 (tolerance {tol:e})"));
            }
        }
        Ok(())
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cards(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.card).collect()
    }

    pub fn axis_names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn is_conditional(&self) -> bool {
        self.given.iter().any(|&g| g)
    }

    pub fn given_axes(&self) -> Vec<&str> {
        self.axes
            .iter()
            .zip(&self.given)
            .filter(|(_, &g)| g)
            .map(|(a, _)| a.name.as_str())
            .collect()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Validation(format!("table has no axis named `{name}`")))
    }

    pub fn card(&self, name: &str) -> Result<usize> {
        Ok(self.axes[self.position(name)?].card)
    }

    pub fn has_axis(&self, name: &str) -> bool {
        self.axes.iter().any(|a| a.name == name)
    }

    /// Entry at a multi-index given in axis order.
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[flat_index(&self.cards(), idx)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Marginal of a joint table on `names`, with axes in the order given.
    pub fn marginal(&self, names: &[&str]) -> Result<DistTable> {
        if self.is_conditional() {
            return invalid("marginals are only defined for joint tables");
        }
        let keep = self.positions(names)?;
        let values = marginal_flat(&self.cards(), &self.values, &keep);
        let axes = keep.iter().map(|&i| self.axes[i].clone()).collect::<Vec<_>>();
        Ok(DistTable {
            given: vec![false; axes.len()],
            axes,
            values,
        })
    }

    /// Same table with its axes permuted into the order of `names`, which
    /// must list every axis exactly once.
    pub fn reorder(&self, names: &[&str]) -> Result<DistTable> {
        if names.len() != self.axes.len() {
            return invalid(format!(
                "reorder needs all {} axes, got {}",
                self.axes.len(),
                names.len()
            ));
        }
        let perm = self.positions(names)?;
        let old_cards = self.cards();
        let new_cards: Vec<usize> = perm.iter().map(|&i| old_cards[i]).collect();
        let old_strides = strides(&old_cards);
        let mut values = Vec::with_capacity(self.values.len());
        for_each_index(&new_cards, |idx, _| {
            let flat: usize = idx
                .iter()
                .zip(&perm)
                .map(|(&v, &p)| v * old_strides[p])
                .sum();
            values.push(self.values[flat]);
        });
        Ok(DistTable {
            axes: perm.iter().map(|&i| self.axes[i].clone()).collect(),
            given: perm.iter().map(|&i| self.given[i]).collect(),
            values,
        })
    }

    /// Renames one axis.
    pub fn renamed(&self, from: &str, to: &str) -> Result<DistTable> {
        let pos = self.position(from)?;
        if from != to && self.has_axis(to) {
            return invalid(format!("axis `{to}` already exists"));
        }
        let mut out = self.clone();
        out.axes[pos].name = to.to_string();
        Ok(out)
    }

    fn positions(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(names.len());
        for n in names {
            let p = self.position(n)?;
            if out.contains(&p) {
                return invalid(format!("axis `{n}` listed twice"));
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// Single-letter distortion measure `cost[row][col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionMeasure {
    rows: Axis,
    cols: Axis,
    cost: Vec<f64>,
}

impl DistortionMeasure {
    pub fn new(rows: Axis, cols: Axis, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != rows.card * cols.card {
            return invalid(format!(
                "distortion matrix has {} entries, expected {}x{}",
                cost.len(),
                rows.card,
                cols.card
            ));
        }
        if let Some(c) = cost.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return invalid(format!("distortion entry {c} is negative or not finite"));
        }
        if rows.name == cols.name {
            return invalid("distortion rows and columns need distinct axis names");
        }
        Ok(DistortionMeasure { rows, cols, cost })
    }

    /// `d(a, b) = [a != b]`.
    pub fn hamming(rows: Axis, cols: Axis) -> Result<Self> {
        let mut cost = Vec::with_capacity(rows.card * cols.card);
        for a in 0..rows.card {
            for b in 0..cols.card {
                cost.push(if a == b { 0.0 } else { 1.0 });
            }
        }
        Self::new(rows, cols, cost)
    }

    pub fn rows(&self) -> &Axis {
        &self.rows
    }

    pub fn cols(&self) -> &Axis {
        &self.cols
    }

    pub fn cost(&self, row: usize, col: usize) -> f64 {
        self.cost[row * self.cols.card + col]
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.iter().cloned().fold(0.0, f64::max)
    }

    /// Additive distortion between two index sequences.
    pub fn sequence_cost(&self, a: &[usize], b: &[usize]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| self.cost(x, y)).sum()
    }
}

/// Shannon entropy of a joint table (all axes together).
pub fn entropy(p: &DistTable) -> Result<f64> {
    if p.is_conditional() {
        return invalid("entropy needs a joint PMF, got a conditional kernel");
    }
    Ok(entropy_of_values(p.values()))
}

/// Entropy of the marginal of `joint` on `axes`.
pub fn joint_entropy(joint: &DistTable, axes: &[&str]) -> Result<f64> {
    if axes.is_empty() {
        return Ok(0.0);
    }
    entropy(&joint.marginal(axes)?)
}

/// `H(target | given) = H(target, given) - H(given)`.
pub fn conditional_entropy(joint: &DistTable, target: &[&str], given: &[&str]) -> Result<f64> {
    disjoint(&[target, given])?;
    let both: Vec<&str> = target.iter().chain(given).copied().collect();
    let h = joint_entropy(joint, &both)? - joint_entropy(joint, given)?;
    clamp_nonnegative(h, "conditional entropy")
}

/// `I(A; B)`.
pub fn mutual_information(joint: &DistTable, a: &[&str], b: &[&str]) -> Result<f64> {
    conditional_mutual_information(joint, a, b, &[])
}

/// `I(A; B | C)`, evaluated directly as
/// `sum p(a,b,c) log p(a,b,c) p(c) / (p(a,c) p(b,c))`.
pub fn conditional_mutual_information(
    joint: &DistTable,
    a: &[&str],
    b: &[&str],
    c: &[&str],
) -> Result<f64> {
    disjoint(&[a, b, c])?;
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let names: Vec<&str> = a.iter().chain(b).chain(c).copied().collect();
    let abc = joint.marginal(&names)?;
    let cards = abc.cards();
    let ca: usize = cards[..a.len()].iter().product();
    let cb: usize = cards[a.len()..a.len() + b.len()].iter().product();
    let cc: usize = cards[a.len() + b.len()..].iter().product();
    Ok(clamp_nonnegative(cmi_flat(abc.values(), ca, cb, cc), "mutual information")?)
}

/// `E d(A, B)` where the joint contains the row and column axes of `d`.
pub fn expected_distortion(joint: &DistTable, d: &DistortionMeasure) -> Result<f64> {
    let pair = joint.marginal(&[d.rows().name.as_str(), d.cols().name.as_str()])?;
    let cards = pair.cards();
    if cards[0] != d.rows().card || cards[1] != d.cols().card {
        return invalid(format!(
            "distortion measure is {}x{} but the table axes are {}x{}",
            d.rows().card,
            d.cols().card,
            cards[0],
            cards[1]
        ));
    }
    Ok(pair
        .values()
        .iter()
        .zip(d.costs())
        .map(|(p, c)| p * c)
        .sum())
}

/// Binary entropy `h2(p)` in bits.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_of_values(&[p, 1.0 - p])
}

pub(crate) fn entropy_of_values(values: &[f64]) -> f64 {
    let h: f64 = values
        .iter()
        .filter(|&&p| p > ZERO_PROB)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

pub(crate) fn cmi_flat(abc: &[f64], ca: usize, cb: usize, cc: usize) -> f64 {
    let mut pac = vec![0.0; ca * cc];
    let mut pbc = vec![0.0; cb * cc];
    let mut pc = vec![0.0; cc];
    for ia in 0..ca {
        for ib in 0..cb {
            for ic in 0..cc {
                let p = abc[(ia * cb + ib) * cc + ic];
                pac[ia * cc + ic] += p;
                pbc[ib * cc + ic] += p;
                pc[ic] += p;
            }
        }
    }
    let mut total = 0.0;
    for ia in 0..ca {
        for ib in 0..cb {
            for ic in 0..cc {
                let p = abc[(ia * cb + ib) * cc + ic];
                if p > ZERO_PROB {
                    total += p * (p * pc[ic] / (pac[ia * cc + ic] * pbc[ib * cc + ic])).log2();
                }
            }
        }
    }
    total
}

pub(crate) fn clamp_nonnegative(v: f64, what: &str) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -MI_CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("{what} evaluated to {v:e} < 0")))
    }
}

fn disjoint(sets: &[&[&str]]) -> Result<()> {
    for (i, s) in sets.iter().enumerate() {
        for (j, name) in s.iter().enumerate() {
            if s[..j].contains(name) || sets[..i].iter().any(|t| t.contains(name)) {
                return invalid(format!("axis `{name}` appears in more than one argument"));
            }
        }
    }
    Ok(())
}

pub(crate) fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

pub(crate) fn flat_index(cards: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(cards).fold(0, |acc, (&i, &c)| acc * c + i)
}

/// Calls `f(multi_index, flat_index)` for every cell in row-major order.
pub(crate) fn for_each_index(cards: &[usize], mut f: impl FnMut(&[usize], usize)) {
    let total: usize = cards.iter().product();
    let mut idx = vec![0usize; cards.len()];
    for flat in 0..total {
        f(&idx, flat);
        for d in (0..cards.len()).rev() {
            idx[d] += 1;
            if idx[d] < cards[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Sums `values` down to the axes listed in `keep` (in that order).
pub(crate) fn marginal_flat(cards: &[usize], values: &[f64], keep: &[usize]) -> Vec<f64> {
    let out_cards: Vec<usize> = keep.iter().map(|&k| cards[k]).collect();
    let out_strides = strides(&out_cards);
    let mut weight = vec![0usize; cards.len()];
    for (pos, &k) in keep.iter().enumerate() {
        weight[k] = out_strides[pos];
    }
    let mut out = vec![0.0; out_cards.iter().product::<usize>().max(1)];
    let mut idx = vec![0usize; cards.len()];
    let mut target = 0usize;
    for &v in values {
        out[target] += v;
        for d in (0..cards.len()).rev() {
            idx[d] += 1;
            target += weight[d];
            if idx[d] < cards[d] {
                break;
            }
            target -= weight[d] * cards[d];
            idx[d] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bin(name: &str) -> Axis {
        Axis::new(name, 2)
    }

    fn bsc_joint(p: f64) -> DistTable {
        DistTable::joint(
            vec![bin("A"), bin("B")],
            vec![0.5 * (1.0 - p), 0.5 * p, 0.5 * p, 0.5 * (1.0 - p)],
        )
        .unwrap()
    }

    #[test]
    fn entropy_examples() {
        let u = DistTable::joint(vec![bin("U")], vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(entropy(&u).unwrap(), 1.0, epsilon = 1e-15);
        let pm = DistTable::joint(vec![bin("U")], vec![1.0, 0.0]).unwrap();
        assert_eq!(entropy(&pm).unwrap(), 0.0);
        // high-precision reference: -(0.25 log2 0.25 + 0.75 log2 0.75)
        let q = DistTable::joint(vec![bin("U")], vec![0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(entropy(&q).unwrap(), 0.811_278_124_459_132_8, epsilon = 1e-12);
    }

    #[test]
    fn rejects_unnormalized_and_bad_axes() {
        assert!(DistTable::joint(vec![bin("U")], vec![0.5, 0.6]).is_err());
        assert!(DistTable::joint(vec![bin("U")], vec![-0.5, 1.5]).is_err());
        assert!(DistTable::joint(vec![bin("U"), bin("U")], vec![0.25; 4]).is_err());
        assert!(DistTable::conditional(vec![bin("A"), bin("B")], &["A"], vec![0.5, 0.5, 0.2, 0.7]).is_err());
    }

    #[test]
    fn conditional_entropy_examples() {
        let indep = DistTable::uniform(vec![bin("A"), bin("B")]).unwrap();
        assert_abs_diff_eq!(conditional_entropy(&indep, &["A"], &["B"]).unwrap(), 1.0, epsilon = 1e-12);
        let copy = bsc_joint(0.0);
        assert_abs_diff_eq!(conditional_entropy(&copy, &["A"], &["B"]).unwrap(), 0.0, epsilon = 1e-12);
        // h2(0.11) to 10 digits
        let bsc = bsc_joint(0.11);
        assert_abs_diff_eq!(
            conditional_entropy(&bsc, &["B"], &["A"]).unwrap(),
            0.499_915_958_2,
            epsilon = 1e-9
        );
        assert!(conditional_entropy(&bsc, &["A"], &["A"]).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let indep = DistTable::uniform(vec![bin("A"), bin("B")]).unwrap();
        assert_eq!(mutual_information(&indep, &["A"], &["B"]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mutual_information(&bsc_joint(0.0), &["A"], &["B"]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information(&bsc_joint(0.11), &["A"], &["B"]).unwrap(),
            1.0 - 0.499_915_958_2,
            epsilon = 1e-9
        );
        assert!(mutual_information(&indep, &["A"], &["A", "B"]).is_err());
    }

    #[test]
    fn conditional_mutual_information_examples() {
        // A = B uniform, C independent
        let t = DistTable::from_fn(vec![bin("A"), bin("B"), bin("C")], &[], |i| {
            if i[0] == i[1] {
                0.25
            } else {
                0.0
            }
        })
        .unwrap();
        assert_abs_diff_eq!(
            conditional_mutual_information(&t, &["A"], &["B"], &["C"]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // A = C
        let t = DistTable::from_fn(vec![bin("A"), bin("B"), bin("C")], &[], |i| {
            if i[0] == i[2] {
                0.25
            } else {
                0.0
            }
        })
        .unwrap();
        assert_eq!(conditional_mutual_information(&t, &["A"], &["B"], &["C"]).unwrap(), 0.0);
        // Markov chain A -> B -> C with BSC(0.1) links
        let f = |a: usize, b: usize| if a == b { 0.9 } else { 0.1 };
        let t = DistTable::from_fn(vec![bin("A"), bin("B"), bin("C")], &[], |i| {
            0.5 * f(i[0], i[1]) * f(i[1], i[2])
        })
        .unwrap();
        assert_abs_diff_eq!(
            conditional_mutual_information(&t, &["A"], &["C"], &["B"]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn expected_distortion_examples() {
        let hx = Axis::new("X", 2);
        let hy = Axis::new("Y", 2);
        let ham = DistortionMeasure::hamming(hx.clone(), hy.clone()).unwrap();
        let zero = DistortionMeasure::new(hx.clone(), hy.clone(), vec![0.0; 4]).unwrap();
        let indep = DistTable::uniform(vec![hx.clone(), hy.clone()]).unwrap();
        assert_eq!(expected_distortion(&indep, &zero).unwrap(), 0.0);
        assert_abs_diff_eq!(expected_distortion(&indep, &ham).unwrap(), 0.5, epsilon = 1e-15);
        let same = DistTable::joint(vec![hx, hy], vec![0.3, 0.0, 0.0, 0.7]).unwrap();
        assert_eq!(expected_distortion(&same, &ham).unwrap(), 0.0);
    }

    #[test]
    fn reorder_and_marginal_agree() {
        let t = DistTable::from_fn(vec![bin("A"), Axis::new("B", 3), bin("C")], &[], |i| {
            (1 + i[0] + 2 * i[1] + 3 * i[2]) as f64 / 60.0
        })
        .unwrap();
        let r = t.reorder(&["C", "A", "B"]).unwrap();
        assert_eq!(r.get(&[1, 0, 2]), t.get(&[0, 2, 1]));
        let m1 = t.marginal(&["C", "B"]).unwrap();
        let m2 = r.marginal(&["C", "B"]).unwrap();
        for (a, b) in m1.values().iter().zip(m2.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }
}
