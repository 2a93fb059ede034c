//! Migration kernels on finite site spaces.
//!
//! A [`Kernel`] stores the matrix `a(k, l)` of migration weights. Columns of
//! `a` sum to one (`a` is the transpose of a stochastic matrix), so the
//! generator `a - I` conserves total mass when applied to a field.
//!
//! Heat flows `exp(t (a - I))` are evaluated matrix-free in [`flow`], and
//! the time-integrated potentials live in [`green`].

pub mod flow;
pub mod green;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flow::{Direction, FlowPlan, FlowScratch};
pub use green::{GreenEstimate, GreenKind, PairKind, TailFlag};

/// Maximum tolerated deviation of a column sum from one.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-12;

/// Step distribution of a lattice kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLaw {
    /// Jump to one of the `2d` nearest neighbours with equal probability.
    #[default]
    NearestNeighborUniform,
}

/// Descriptor of a kernel built on the discrete torus `(Z / L Z)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub dim: usize,
    pub side: usize,
    #[serde(default)]
    pub step_law: StepLaw,
}

impl Geometry {
    pub fn n_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Linear index of a lattice coordinate; coordinates are reduced mod `side`.
    pub fn index(&self, coords: &[i64]) -> usize {
        let side = self.side as i64;
        coords.iter().rev().fold(0usize, |acc, &c| {
            acc * self.side + c.rem_euclid(side) as usize
        })
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push(index % self.side);
            index /= self.side;
        }
        out
    }

    /// Distance between two sites on the torus.
    pub fn torus_distance(&self, k: usize, l: usize) -> f64 {
        let (ck, cl) = (self.coords(k), self.coords(l));
        ck.iter()
            .zip(&cl)
            .map(|(&a, &b)| {
                let d = a.abs_diff(b);
                let d = d.min(self.side - d) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Compressed sparse row storage; row `k` holds the entries `m(k, ·)`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(k, _, _) in triples {
            counts[k + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut fill = counts;
        let mut cols = vec![0; triples.len()];
        let mut vals = vec![0.0; triples.len()];
        for &(k, l, w) in triples {
            let slot = fill[k];
            cols[slot] = l;
            vals[slot] = w;
            fill[k] += 1;
        }
        // Keep rows sorted by column so that matvec order is canonical.
        let mut csr = Csr {
            row_ptr,
            cols,
            vals,
        };
        for k in 0..n {
            let (lo, hi) = (csr.row_ptr[k], csr.row_ptr[k + 1]);
            let mut row: Vec<(usize, f64)> = csr.cols[lo..hi]
                .iter()
                .copied()
                .zip(csr.vals[lo..hi].iter().copied())
                .collect();
            row.sort_by_key(|e| e.0);
            for (i, (c, v)) in row.into_iter().enumerate() {
                csr.cols[lo + i] = c;
                csr.vals[lo + i] = v;
            }
        }
        csr
    }

    pub(crate) fn row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[k], self.row_ptr[k + 1]);
        self.cols[lo..hi]
            .iter()
            .copied()
            .zip(self.vals[lo..hi].iter().copied())
    }

    /// `out = M x`.
    pub(crate) fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[k], self.row_ptr[k + 1]);
            let mut acc = 0.0;
            for i in lo..hi {
                acc += self.vals[i] * x[self.cols[i]];
            }
            *o = acc;
        }
    }

    /// `(M x)(k)` for a single row.
    pub(crate) fn row_dot(&self, k: usize, x: &[f64]) -> f64 {
        self.row(k).map(|(l, w)| w * x[l]).sum()
    }

    fn get(&self, k: usize, l: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[k], self.row_ptr[k + 1]);
        match self.cols[lo..hi].binary_search(&l) {
            Ok(i) => self.vals[lo + i],
            Err(_) => 0.0,
        }
    }
}

/// A migration kernel `a` on `n_sites` sites.
///
/// Immutable after construction; cheap to share between worker threads.
#[derive(Clone, Debug)]
pub struct Kernel {
    n_sites: usize,
    forward: Csr,
    transpose: Csr,
    geometry: Option<Geometry>,
    symmetric: bool,
}

impl Kernel {
    /// Nearest-neighbour random walk kernel on the torus `(Z / L Z)^d`.
    pub fn lattice(dim: usize, side: usize, step_law: StepLaw) -> Result<Self> {
        if !(1..=4).contains(&dim) {
            return Err(Error::arg(format!(
                "lattice dimension must be in 1..=4, got {dim}"
            )));
        }
        if side < 3 {
            return Err(Error::arg(format!(
                "lattice side must be at least 3 (got {side}); smaller tori merge neighbours"
            )));
        }
        let geometry = Geometry {
            dim,
            side,
            step_law,
        };
        let n = geometry.n_sites();
        let w = 1.0 / (2 * dim) as f64;
        let mut triples = Vec::with_capacity(n * 2 * dim);
        for k in 0..n {
            let c: Vec<i64> = geometry.coords(k).into_iter().map(|x| x as i64).collect();
            for axis in 0..dim {
                for step in [-1i64, 1] {
                    let mut nb = c.clone();
                    nb[axis] += step;
                    triples.push((k, geometry.index(&nb), w));
                }
            }
        }
        let mut kernel = Self::assemble(n, triples)?;
        kernel.geometry = Some(geometry);
        Ok(kernel)
    }

    /// Kernel with exactly the given `(k, l, a(k, l))` entries.
    ///
    /// Every column must sum to one within [`COLUMN_SUM_TOLERANCE`].
    pub fn from_triples(n_sites: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidKernel(
                "kernel needs at least one site".into(),
            ));
        }
        let mut seen = std::collections::HashSet::with_capacity(triples.len());
        let mut entries = Vec::with_capacity(triples.len());
        for (i, &(k, l, w)) in triples.iter().enumerate() {
            if k >= n_sites || l >= n_sites {
                return Err(Error::InvalidKernel(format!(
                    "entry {i}: index ({k}, {l}) out of range for {n_sites} sites"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "entry {i}: weight {w} must be finite and nonnegative"
                )));
            }
            if !seen.insert((k, l)) {
                return Err(Error::InvalidKernel(format!(
                    "entry {i}: duplicate entry ({k}, {l})"
                )));
            }
            if w > 0.0 {
                entries.push((k, l, w));
            }
        }
        Self::assemble(n_sites, entries)
    }

    fn assemble(n: usize, triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut col_sums = vec![0.0; n];
        for &(_, l, w) in &triples {
            col_sums[l] += w;
        }
        if let Some((column, &sum)) = col_sums
            .iter()
            .enumerate()
            .find(|(_, s)| (*s - 1.0).abs() > COLUMN_SUM_TOLERANCE)
        {
            return Err(Error::ColumnSum { column, sum });
        }
        let transposed: Vec<_> = triples.iter().map(|&(k, l, w)| (l, k, w)).collect();
        let forward = Csr::from_triples(n, &triples);
        let transpose = Csr::from_triples(n, &transposed);
        let symmetric = forward == transpose;
        Ok(Kernel {
            n_sites: n,
            forward,
            transpose,
            geometry: None,
            symmetric,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `a(k, l)`.
    pub fn entry(&self, k: usize, l: usize) -> f64 {
        self.forward.get(k, l)
    }

    /// Entries of `a` in row-major order.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_sites)
            .flat_map(|k| self.forward.row(k).map(move |(l, w)| (k, l, w)))
            .collect()
    }

    /// Column sums of `a`; all equal to one for a valid kernel.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n_sites)
            .map(|l| self.transpose.row(l).map(|(_, w)| w).sum())
            .collect()
    }

    /// `1 - a(k, k)`, the rate at which the chain leaves `k`.
    pub fn escape_rate(&self, k: usize) -> f64 {
        1.0 - self.entry(k, k)
    }

    /// `inf_k (1 - a(k, k))`.
    pub fn min_escape_rate(&self) -> f64 {
        (0..self.n_sites)
            .map(|k| self.escape_rate(k))
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn matrix(&self, direction: Direction) -> &Csr {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Transpose => &self.transpose,
        }
    }

    /// `out = a x` (or `aᵀ x`).
    pub fn apply_jump(&self, direction: Direction, x: &[f64], out: &mut [f64]) {
        self.matrix(direction).matvec(x, out);
    }

    /// `out = (a - I) x`.
    pub fn apply_generator(&self, direction: Direction, x: &[f64], out: &mut [f64]) {
        self.apply_jump(direction, x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= xi;
        }
    }

    /// `out = ½(a + aᵀ) x`.
    pub fn apply_symmetrised(&self, x: &[f64], out: &mut [f64]) {
        self.forward.matvec(x, out);
        for (k, o) in out.iter_mut().enumerate() {
            *o = 0.5 * (*o + self.transpose.row_dot(k, x));
        }
    }

    /// Convenience wrapper around [`FlowPlan`]: returns `a_t x`.
    pub fn heat_flow(&self, t: f64, field: &[f64]) -> Result<Vec<f64>> {
        self.heat_flow_directed(Direction::Forward, t, field)
    }

    /// Returns `a_t x` or `aᵀ_t x`.
    pub fn heat_flow_directed(
        &self,
        direction: Direction,
        t: f64,
        field: &[f64],
    ) -> Result<Vec<f64>> {
        if field.len() != self.n_sites {
            return Err(Error::arg(format!(
                "field has {} entries, kernel has {} sites",
                field.len(),
                self.n_sites
            )));
        }
        if let Some(i) = field.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("field entry {i} is not finite")));
        }
        let plan = FlowPlan::new(self, t, direction)?;
        let mut out = vec![0.0; self.n_sites];
        plan.apply(field, &mut out, &mut FlowScratch::default());
        Ok(out)
    }

    pub fn to_file_format(&self) -> KernelFile {
        KernelFile {
            n_sites: self.n_sites,
            triples: self.triples(),
            geometry: self.geometry,
        }
    }
}

/// On-disk kernel description.
///
/// Either `triples` or `geometry` must be given. With only a geometry the
/// lattice kernel is built; with both, the triples must match the lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub n_sites: usize,
    #[serde(default)]
    pub triples: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
}

impl KernelFile {
    pub fn build(&self) -> Result<Kernel> {
        match (&self.geometry, self.triples.is_empty()) {
            (Some(g), only_geometry) => {
                let kernel = Kernel::lattice(g.dim, g.side, g.step_law)?;
                if kernel.n_sites != self.n_sites {
                    return Err(Error::InvalidKernel(format!(
                        "n_sites = {} does not match geometry with {} sites",
                        self.n_sites, kernel.n_sites
                    )));
                }
                if !only_geometry {
                    let explicit = Kernel::from_triples(self.n_sites, &self.triples)?;
                    if explicit.forward != kernel.forward {
                        return Err(Error::InvalidKernel(
                            "triples do not match the declared lattice geometry".into(),
                        ));
                    }
                }
                Ok(kernel)
            }
            (None, _) => Kernel::from_triples(self.n_sites, &self.triples),
        }
    }
}

/// How a configuration names its kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Lattice(Geometry),
    Explicit(KernelFile),
    /// Path to a kernel file, relative to the config file.
    File(PathBuf),
    /// `a = I` on `n_sites` sites.
    Identity {
        n_sites: usize,
    },
}

impl KernelSpec {
    pub fn build(&self, base_dir: &Path) -> Result<Kernel> {
        match self {
            KernelSpec::Lattice(g) => Kernel::lattice(g.dim, g.side, g.step_law),
            KernelSpec::Explicit(f) => f.build(),
            KernelSpec::File(p) => {
                let path = base_dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let file: KernelFile = serde_json::from_str(&text)
                    .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
                file.build()
            }
            KernelSpec::Identity { n_sites } => {
                let triples: Vec<_> = (0..*n_sites).map(|k| (k, k, 1.0)).collect();
                Kernel::from_triples(*n_sites, &triples)
            }
        }
    }
}
