use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::InducedMap;

/// Symbol carried by the lumped remainder of the partition.
pub const LUMP: usize = usize::MAX;

/// A cylinder of the induced map: `word[0]` is the first branch symbol and
/// `F` maps the cylinder onto `image`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub word: Vec<usize>,
    pub left: f64,
    pub right: f64,
    /// `μ_Y` of the cylinder.
    pub weight: f64,
    pub image: (f64, f64),
}

impl Cylinder {
    pub fn symbol(&self) -> Option<usize> {
        (self.word[0] != LUMP).then_some(self.word[0])
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }
}

/// Leaves of a cylinder tree over `Y`: the first `cutoff` cells, one lump for
/// the rest, and the first `refine` cells split into pullbacks of the
/// next-shallower tree, `depth - 1` times.
#[derive(Debug, Clone)]
pub struct CylinderBasis {
    ind: Arc<InducedMap<f64>>,
    cutoff: usize,
    depth: usize,
    refine: usize,
    theta: f64,
    leaves: Vec<Cylinder>,
    lump: Option<usize>,
    lump_return: usize,
    /// `preimage[j][e] = μ_Y(F_j^{-1} e)`.
    preimage: Vec<Vec<f64>>,
    /// Leaves sorted by word.
    order: Vec<usize>,
    /// `groups[m]`: ranges of `order` sharing an `m`-symbol prefix free of the lump.
    groups: Vec<Vec<(usize, usize)>>,
}

impl CylinderBasis {
    pub fn new(ind: Arc<InducedMap<f64>>, cutoff: usize, depth: usize, refine: usize) -> Result<Self> {
        let cells = ind.cells();
        if cutoff == 0 || cutoff > cells.len() {
            return Err(Error::Parameter(format!(
                "cutoff must lie in [1, {}], got {cutoff}",
                cells.len()
            )));
        }
        if depth == 0 {
            return Err(Error::Parameter("cylinder depth must be at least 1".into()));
        }
        let (a, b) = ind.base();
        let kept = &cells[..cutoff];
        let lo = kept.iter().map(|c| c.left).fold(f64::INFINITY, f64::min);
        let hi = kept.iter().map(|c| c.right).fold(f64::NEG_INFINITY, f64::max);
        let covered: f64 = kept.iter().map(|c| c.right - c.left).sum();
        if (covered - (hi - lo)).abs() > 1e-12 * (b - a) || (lo > a && hi < b) {
            return Err(Error::Construction(
                "kept cells must form an interval touching an end of the base".into(),
            ));
        }
        let lump_interval = if lo > a {
            Some((a, lo))
        } else if hi < b {
            Some((hi, b))
        } else {
            None
        };
        let lump_return = if lump_interval.is_some() {
            cells[cutoff..]
                .iter()
                .map(|c| c.r)
                .chain(ind.tail().map(|t| t.first_r))
                .min()
                .unwrap_or(usize::MAX)
        } else {
            0
        };

        let mut first = Vec::new();
        for (j, c) in kept.iter().enumerate() {
            first.push(Cylinder { word: vec![j], left: c.left, right: c.right, weight: 0.0, image: (a, b) });
        }
        if let Some((l, r)) = lump_interval {
            first.push(Cylinder { word: vec![LUMP], left: l, right: r, weight: 0.0, image: (a, b) });
        }
        first.sort_by(|p, q| p.left.total_cmp(&q.left));
        let refine = refine.min(cutoff);
        let mut tree = first.clone();
        for _ in 1..depth {
            let mut next = Vec::with_capacity(tree.len() * (refine + 1));
            for c in &first {
                match c.symbol() {
                    Some(j) if j < refine => {
                        for e in &tree {
                            let (l, _) = ind.inverse_branch(j, e.left);
                            let (r, _) = ind.inverse_branch(j, e.right);
                            let mut word = Vec::with_capacity(e.word.len() + 1);
                            word.push(j);
                            word.extend_from_slice(&e.word);
                            next.push(Cylinder { word, left: l.min(r), right: l.max(r), weight: 0.0, image: (e.left, e.right) });
                        }
                    }
                    _ => next.push(c.clone()),
                }
            }
            next.sort_by(|p, q| p.left.total_cmp(&q.left));
            tree = next;
        }
        // snap to an exact tiling of the base
        tree[0].left = a;
        for i in 1..tree.len() {
            tree[i].left = tree[i - 1].right;
        }
        let last = tree.len() - 1;
        tree[last].right = b;
        for c in &mut tree {
            c.weight = ind.measure(c.left, c.right);
        }
        let lump = tree.iter().position(|c| c.symbol().is_none());

        let mut ends: Vec<f64> = tree.iter().map(|c| c.left).collect();
        ends.push(b);
        let mut pre_ends = vec![vec![0.0; ends.len()]; cutoff];
        for (i, &x) in ends.iter().enumerate() {
            ind.for_each_inverse(x, cutoff, |j, y, _| pre_ends[j][i] = y);
        }
        let preimage = pre_ends
            .iter()
            .map(|ys| {
                (0..tree.len())
                    .map(|e| {
                        let (l, r) = (ys[e].min(ys[e + 1]), ys[e].max(ys[e + 1]));
                        ind.measure(l, r)
                    })
                    .collect()
            })
            .collect();
        let mut order: Vec<usize> = (0..tree.len()).collect();
        order.sort_by(|&p, &q| tree[p].word.cmp(&tree[q].word));
        let shares = |p: usize, q: usize, m: usize| {
            let (a, b) = (&tree[p].word, &tree[q].word);
            a.len() >= m && b.len() >= m && a[..m] == b[..m] && a[..m].iter().all(|&s| s != LUMP)
        };
        let groups = (0..depth)
            .map(|m| {
                let mut out = Vec::new();
                let mut start = 0;
                while start < order.len() {
                    let mut end = start + 1;
                    while end < order.len() && shares(order[start], order[end], m) {
                        end += 1;
                    }
                    if end - start > 1 {
                        out.push((start, end));
                    }
                    start = end;
                }
                out
            })
            .collect();
        Ok(Self { ind, cutoff, depth, refine, theta: 0.5, leaves: tree, lump, lump_return, preimage, order, groups })
    }

    /// Same basis with the metric parameter `θ` of `d_θ = θ^{s(x,y)}`.
    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Parameter(format!("theta must lie in (0, 1), got {theta}")));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn induced(&self) -> &InducedMap<f64> {
        &self.ind
    }

    pub fn induced_arc(&self) -> Arc<InducedMap<f64>> {
        self.ind.clone()
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn refine(&self) -> usize {
        self.refine
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[Cylinder] {
        &self.leaves
    }

    pub fn lump(&self) -> Option<usize> {
        self.lump
    }

    /// Smallest return time inside the lump (0 without a lump).
    pub fn lump_return(&self) -> usize {
        self.lump_return
    }

    /// Return time of leaf `e`; the lump reports its smallest return time.
    pub fn return_time(&self, e: usize) -> usize {
        match self.leaves[e].symbol() {
            Some(j) => self.ind.cells()[j].r,
            None => self.lump_return,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.leaves.iter().map(|c| c.weight).sum()
    }

    /// `μ_Y(F_j^{-1} e)`.
    pub fn preimage_weight(&self, j: usize, e: usize) -> f64 {
        self.preimage[j][e]
    }

    /// Whether leaf `e` lies inside the interval `img`.
    pub(crate) fn inside(&self, e: usize, img: (f64, f64)) -> bool {
        let c = &self.leaves[e];
        c.left >= img.0 && c.right <= img.1
    }

    /// Separation time of two leaves: the length of their common symbol prefix.
    pub fn separation(&self, e1: usize, e2: usize) -> usize {
        let (p, q) = (&self.leaves[e1].word, &self.leaves[e2].word);
        p.iter().zip(q).take_while(|(a, b)| a == b && **a != LUMP).count()
    }

    /// Index of the leaf containing `y`.
    pub fn locate(&self, y: f64) -> usize {
        let i = self.leaves.partition_point(|c| c.right <= y);
        i.min(self.leaves.len() - 1)
    }

    /// `μ_Y`-integral of a leaf-constant function.
    pub fn integrate(&self, v: &[Complex64]) -> Complex64 {
        self.leaves.iter().zip(v).map(|(c, x)| *x * c.weight).sum()
    }

    pub fn sup_norm(&self, v: &[Complex64]) -> f64 {
        v.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// `|v|_θ = sup |v(x) - v(y)| / θ^{s(x,y)}` for a leaf-constant `v`: the
    /// largest diameter of `v` over each group of leaves sharing an `m`-symbol
    /// prefix, divided by `θ^m`.
    pub fn seminorm(&self, v: &[Complex64]) -> f64 {
        let mut best = 0.0f64;
        let mut scale = 1.0;
        for groups in &self.groups {
            for g in groups {
                let diam = diameter(self.order[g.0..g.1].iter().map(|&p| v[p]));
                best = best.max(diam / scale);
            }
            scale *= self.theta;
        }
        best
    }

    /// `‖v‖_b = max{|v|_∞, |v|_θ / (2 C |b|)}`.
    pub fn b_norm(&self, v: &[Complex64], c: f64, b: f64) -> f64 {
        self.sup_norm(v).max(self.seminorm(v) / (2.0 * c * b.abs()))
    }

    /// Leaf averages `μ_Y(e)^{-1} ∫_e f dμ_Y`.
    pub fn project<F: Fn(f64) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        let gl = crate::quadrature::GaussLegendre::<f64>::new(8);
        self.leaves
            .iter()
            .map(|c| {
                let mut num = Complex64::new(0.0, 0.0);
                let mut den = 0.0;
                for (x, w) in gl.mapped(c.left, c.right) {
                    let d = w * self.ind.density(x);
                    num += f(x) * d;
                    den += d;
                }
                num / den
            })
            .collect()
    }
}

/// Diameter of a planar point set, through its convex hull.
fn diameter(points: impl Iterator<Item = Complex64>) -> f64 {
    let mut p: Vec<(f64, f64)> = points.map(|c| (c.re, c.im)).collect();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() < 2 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let mut best = 0.0f64;
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            best = best.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapModel;

    #[test]
    fn doubling_depth_gives_dyadic_leaves() {
        let ind = Arc::new(InducedMap::induce(&MapModel::doubling(), (0.0, 1.0), 2).unwrap());
        let basis = CylinderBasis::new(ind, 2, 4, 2).unwrap();
        assert_eq!(basis.len(), 16);
        for (i, c) in basis.leaves().iter().enumerate() {
            assert!((c.left - i as f64 / 16.0).abs() < 1e-15);
            assert!((c.weight - 1.0 / 16.0).abs() < 1e-15);
        }
        assert_eq!(basis.separation(0, 1), 3);
        assert_eq!(basis.separation(0, 15), 0);
    }

    #[test]
    fn pm_leaves_tile_and_nest() {
        let map = MapModel::pomeau_manneville(0.5).unwrap();
        let ind = Arc::new(InducedMap::induce(&map, (0.5, 1.0), 200).unwrap());
        let basis = CylinderBasis::new(ind.clone(), 40, 3, 3).unwrap();
        assert!((basis.total_weight() - 1.0).abs() < 1e-10);
        let lump = basis.lump().unwrap();
        assert_eq!(basis.return_time(lump), 41);
        for c in basis.leaves() {
            if let Some(j) = c.symbol() {
                let cell = &ind.cells()[j];
                assert!(c.left >= cell.left - 1e-15 && c.right <= cell.right + 1e-15);
                if c.word.len() > 1 {
                    // one-symbol extension: the image is itself a leaf of the shallower tree
                    let (l, _) = ind.inverse_branch(j, c.image.0);
                    assert!((l - c.left).abs() < 1e-14 || (l - c.right).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn seminorm_of_constant_and_step() {
        let ind = Arc::new(InducedMap::induce(&MapModel::doubling(), (0.0, 1.0), 2).unwrap());
        let basis = CylinderBasis::new(ind, 2, 3, 2).unwrap();
        let one = vec![Complex64::new(1.0, 0.0); 8];
        assert_eq!(basis.seminorm(&one), 0.0);
        let mut v = one.clone();
        v[0] = Complex64::new(2.0, 0.0);
        // leaves 0 and 1 share two symbols
        assert!((basis.seminorm(&v) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn hull_diameter_matches_brute_force() {
        let pts: Vec<Complex64> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                Complex64::new(t.sin() * (1.0 + 0.3 * (3.0 * t).cos()), (1.7 * t).cos())
            })
            .collect();
        let mut brute = 0.0f64;
        for a in &pts {
            for b in &pts {
                brute = brute.max((a - b).norm());
            }
        }
        assert!((diameter(pts.iter().copied()) - brute).abs() < 1e-14);
        assert_eq!(diameter(std::iter::once(Complex64::new(1.0, 2.0))), 0.0);
        let line = [0.0, 1.0, 3.0].map(|x| Complex64::new(x, 2.0 * x));
        assert!((diameter(line.into_iter()) - 45f64.sqrt()).abs() < 1e-14);
    }
}
