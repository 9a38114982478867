//! Cross-network fusion model: anchor-pair inter-propagation, the
//! anchor-emphasizing hierarchy propagation stack, and the plain stacked-GCN
//! variant used as its ablation.

use serde::{Deserialize, Serialize};
use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::Real;

use super::adjacency::{AnchorMask, NormalizedAdjacency};

/// Output nonlinearity selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative evaluated at the pre-activation value.
    #[inline]
    fn grad_at<T: Scalar>(self, pre: T) -> T {
        match self {
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }

    fn map<T: Scalar>(self, x: &Array2<T>) -> Array2<T> {
        x.mapv(|v| self.apply(v))
    }

    /// Elementwise `grad ⊙ σ'(pre)`.
    fn backprop<T: Scalar>(self, grad: &Array2<T>, pre: &Array2<T>) -> Array2<T> {
        ndarray::Zip::from(grad).and(pre).map_collect(|&g, &p| g * self.grad_at(p))
    }
}

fn init_uniform<T: Scalar>(shape: (usize, usize), rng: &mut impl Rng) -> Array2<T> {
    let bound = 1.0 / (shape.0 as f64).sqrt();
    let mut w = Array2::zeros(shape);
    for v in w.iter_mut() {
        *v = c::<T>(rng.gen_range(-bound..bound));
    }
    w
}

/// Trainable fusion parameters. Cross-space maps apply in row convention,
/// `row_out = row_in · W`; `w12` carries network-1 vectors into network-2
/// space and `w21` the reverse. `wu1`/`wu2` map each network's stacked
/// `(k+1)·d` features to the output dimension.
#[derive(Debug, Clone)]
pub struct FusionParams<T: Scalar = Real> {
    pub w12: Array2<T>,
    pub w21: Array2<T>,
    pub wu1: Array2<T>,
    pub wu2: Array2<T>,
    pub alpha: f64,
    pub k: usize,
    pub activation: Activation,
}

impl<T: Scalar> FusionParams<T> {
    pub fn zeros(d: usize, d_out: usize, k: usize, alpha: f64, activation: Activation) -> Self {
        FusionParams {
            w12: Array2::zeros((d, d)),
            w21: Array2::zeros((d, d)),
            wu1: Array2::zeros(((k + 1) * d, d_out)),
            wu2: Array2::zeros(((k + 1) * d, d_out)),
            alpha,
            k,
            activation,
        }
    }

    pub fn init(
        d: usize,
        d_out: usize,
        k: usize,
        alpha: f64,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        FusionParams {
            w12: init_uniform((d, d), rng),
            w21: init_uniform((d, d), rng),
            wu1: init_uniform(((k + 1) * d, d_out), rng),
            wu2: init_uniform(((k + 1) * d, d_out), rng),
            alpha,
            k,
            activation,
        }
    }

    pub fn dim(&self) -> usize {
        self.w12.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.wu1.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.k == 0 {
            return Err(Error::InvalidArgument("hop depth k must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "anchor emphasis alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        let want = (self.k + 1) * d;
        for (name, w, rows, cols) in [
            ("w12", &self.w12, d, d),
            ("w21", &self.w21, d, d),
            ("wu1", &self.wu1, want, self.out_dim()),
            ("wu2", &self.wu2, want, self.out_dim()),
        ] {
            if w.nrows() != rows || w.ncols() != cols {
                return Err(Error::DimMismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    w.nrows(),
                    w.ncols(),
                    rows,
                    cols
                )));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Array2<T>; 4] {
        [&self.w12, &self.w21, &self.wu1, &self.wu2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<T>; 4] {
        [&mut self.w12, &mut self.w21, &mut self.wu1, &mut self.wu2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|w| w.iter().all(|v| v.is_finite()))
    }
}

/// One anchor pair through the inter-propagation layer:
/// z1′ = σ(z1 + z2·W21), z2′ = σ(z2 + z1·W12), both from the originals.
pub fn inter_propagate<T: Scalar>(
    z1: &Array1<T>,
    z2: &Array1<T>,
    p: &FusionParams<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    let d = p.dim();
    if z1.len() != d || z2.len() != d {
        return Err(Error::DimMismatch(format!(
            "inter-propagation expects {d}-d vectors, got {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    let pre1 = z1 + &z2.dot(&p.w21);
    let pre2 = z2 + &z1.dot(&p.w12);
    Ok((pre1.mapv(|v| p.activation.apply(v)), pre2.mapv(|v| p.activation.apply(v))))
}

/// Inter-propagation over whole tables. Non-anchor rows pass through
/// untouched (not even the activation sees them).
pub(crate) struct InterCache<T: Scalar> {
    pub z1p: Array2<T>,
    pub z2p: Array2<T>,
    /// Pre-activation values, meaningful at anchor rows only.
    pre1: Array2<T>,
    pre2: Array2<T>,
}

pub(crate) fn inter_forward<T: Scalar>(
    z1: &Array2<T>,
    z2: &Array2<T>,
    apairs: &[(usize, usize)],
    p: &FusionParams<T>,
) -> InterCache<T> {
    let mut z1p = z1.clone();
    let mut z2p = z2.clone();
    let mut pre1 = z1.clone();
    let mut pre2 = z2.clone();
    for &(i, j) in apairs {
        let row1 = &z1.row(i).to_owned() + &z2.row(j).dot(&p.w21);
        let row2 = &z2.row(j).to_owned() + &z1.row(i).dot(&p.w12);
        pre1.row_mut(i).assign(&row1);
        pre2.row_mut(j).assign(&row2);
        z1p.row_mut(i).assign(&row1.mapv(|v| p.activation.apply(v)));
        z2p.row_mut(j).assign(&row2.mapv(|v| p.activation.apply(v)));
    }
    InterCache { z1p, z2p, pre1, pre2 }
}

/// Gradients of the cross-space maps given upstream gradients on the
/// inter-propagated tables.
pub(crate) fn inter_backward<T: Scalar>(
    z1: &Array2<T>,
    z2: &Array2<T>,
    cache: &InterCache<T>,
    d_z1p: &Array2<T>,
    d_z2p: &Array2<T>,
    apairs: &[(usize, usize)],
    p: &FusionParams<T>,
) -> (Array2<T>, Array2<T>) {
    let d = p.dim();
    let mut d_w12 = Array2::zeros((d, d));
    let mut d_w21 = Array2::zeros((d, d));
    for &(i, j) in apairs {
        for col in 0..d {
            let g1 = d_z1p[(i, col)] * p.activation.grad_at(cache.pre1[(i, col)]);
            let g2 = d_z2p[(j, col)] * p.activation.grad_at(cache.pre2[(j, col)]);
            if g1 != T::zero() {
                for r in 0..d {
                    d_w21[(r, col)] += z2[(j, r)] * g1;
                }
            }
            if g2 != T::zero() {
                for r in 0..d {
                    d_w12[(r, col)] += z1[(i, r)] * g2;
                }
            }
        }
    }
    (d_w12, d_w21)
}

/// Forward state of the hierarchy stack for one network.
pub(crate) struct HierarchyCache<T: Scalar> {
    /// Stacked features (Z′, H¹, …, H^k), n × (k+1)d.
    stack: Array2<T>,
    pre: Array2<T>,
    pub out: Array2<T>,
}

/// Hierarchy propagation: P_0 = Z′, P_l = Â·P_{l−1},
/// H^l = α·D_anchor·Z′ + P_l, output σ(stack(Z′, H¹…H^k)·W_u).
/// Â^l is never materialized; each level is one sparse product.
pub(crate) fn hierarchy_forward<T: Scalar>(
    adj: &NormalizedAdjacency,
    mask: &AnchorMask,
    zp: &Array2<T>,
    wu: &Array2<T>,
    p: &FusionParams<T>,
) -> Result<HierarchyCache<T>> {
    let (n, d) = (zp.nrows(), zp.ncols());
    if adj.n() != n || mask.n() != n {
        return Err(Error::DimMismatch(format!(
            "adjacency covers {} users, mask {}, features {}",
            adj.n(),
            mask.n(),
            n
        )));
    }
    let emphasized = mask.keep_rows(zp)?.mapv(|v| v * c::<T>(p.alpha));
    let mut stack = Array2::zeros((n, (p.k + 1) * d));
    stack.slice_mut(ndarray::s![.., ..d]).assign(zp);
    let mut prop = zp.clone();
    for l in 1..=p.k {
        prop = adj.matvec(&prop)?;
        let h = &prop + &emphasized;
        stack.slice_mut(ndarray::s![.., l * d..(l + 1) * d]).assign(&h);
    }
    let pre = stack.dot(wu);
    let out = p.activation.map(&pre);
    Ok(HierarchyCache { stack, pre, out })
}

/// Backward pass of the hierarchy stack. Returns the gradient on W_u and on
/// the inter-propagated input Z′.
pub(crate) fn hierarchy_backward<T: Scalar>(
    adj: &NormalizedAdjacency,
    mask: &AnchorMask,
    cache: &HierarchyCache<T>,
    d_out: &Array2<T>,
    wu: &Array2<T>,
    p: &FusionParams<T>,
) -> Result<(Array2<T>, Array2<T>)> {
    let d = wu.nrows() / (p.k + 1);
    let d_pre = p.activation.backprop(d_out, &cache.pre);
    let d_wu = cache.stack.t().dot(&d_pre);
    let d_stack = d_pre.dot(&wu.t());
    let alpha = c::<T>(p.alpha);

    let mut d_zp = d_stack.slice(ndarray::s![.., ..d]).to_owned();
    // Emphasis term: every level adds α·D_anchor·(its block gradient).
    for l in 1..=p.k {
        let block = d_stack.slice(ndarray::s![.., l * d..(l + 1) * d]).to_owned();
        d_zp.scaled_add(alpha, &mask.keep_rows(&block)?);
    }
    // Propagation chain, folded from the deepest level down: the adjoint of
    // P_l = Â·P_{l−1} is one symmetric sparse product per level.
    let mut acc: Array2<T> = Array2::zeros(d_zp.raw_dim());
    for l in (1..=p.k).rev() {
        acc += &d_stack.slice(ndarray::s![.., l * d..(l + 1) * d]);
        acc = adj.matvec(&acc)?;
    }
    d_zp += &acc;
    Ok((d_wu, d_zp))
}

/// Per-network weights of the stacked-GCN ablation: k layers, the last one
/// mapping to the output dimension.
#[derive(Debug, Clone)]
pub struct IterativeParams<T: Scalar = Real> {
    pub w12: Array2<T>,
    pub w21: Array2<T>,
    pub layers1: Vec<Array2<T>>,
    pub layers2: Vec<Array2<T>>,
    pub k: usize,
    pub activation: Activation,
}

impl<T: Scalar> IterativeParams<T> {
    pub fn init(
        d: usize,
        d_out: usize,
        k: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let dims = |m: usize| if m + 1 == k { (d, d_out) } else { (d, d) };
        IterativeParams {
            w12: init_uniform((d, d), rng),
            w21: init_uniform((d, d), rng),
            layers1: (0..k).map(|m| init_uniform(dims(m), rng)).collect(),
            layers2: (0..k).map(|m| init_uniform(dims(m), rng)).collect(),
            k,
            activation,
        }
    }

    pub fn dim(&self) -> usize {
        self.w12.nrows()
    }

    pub fn tensors(&self) -> Vec<&Array2<T>> {
        let mut out = vec![&self.w12, &self.w21];
        out.extend(self.layers1.iter());
        out.extend(self.layers2.iter());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = vec![&mut self.w12, &mut self.w21];
        out.extend(self.layers1.iter_mut());
        out.extend(self.layers2.iter_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|w| w.iter().all(|v| v.is_finite()))
    }

    /// View used by the shared inter-propagation kernels.
    pub(crate) fn as_inter(&self) -> FusionParams<T> {
        FusionParams {
            w12: self.w12.clone(),
            w21: self.w21.clone(),
            wu1: Array2::zeros((0, 0)),
            wu2: Array2::zeros((0, 0)),
            alpha: 0.0,
            k: self.k,
            activation: self.activation,
        }
    }
}

pub(crate) struct IterativeCache<T: Scalar> {
    /// Â·x_m for each layer, the left factor of that layer's product.
    ax: Vec<Array2<T>>,
    pre: Vec<Array2<T>>,
    pub out: Array2<T>,
}

/// Stacked-GCN forward: x_{m+1} = σ(Â·x_m·W^m), k layers.
pub(crate) fn iterative_forward<T: Scalar>(
    adj: &NormalizedAdjacency,
    zp: &Array2<T>,
    layers: &[Array2<T>],
    activation: Activation,
) -> Result<IterativeCache<T>> {
    let mut x = zp.clone();
    let mut ax = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    for w in layers {
        let a = adj.matvec(&x)?;
        if a.ncols() != w.nrows() {
            return Err(Error::DimMismatch(format!(
                "layer expects {} input columns, got {}",
                w.nrows(),
                a.ncols()
            )));
        }
        let p = a.dot(w);
        x = activation.map(&p);
        ax.push(a);
        pre.push(p);
    }
    Ok(IterativeCache { ax, pre, out: x })
}

/// Backward pass of the stacked GCN. Returns per-layer weight gradients and
/// the gradient on the input.
pub(crate) fn iterative_backward<T: Scalar>(
    adj: &NormalizedAdjacency,
    cache: &IterativeCache<T>,
    d_out: &Array2<T>,
    layers: &[Array2<T>],
    activation: Activation,
) -> Result<(Vec<Array2<T>>, Array2<T>)> {
    let mut d_x = d_out.clone();
    let mut d_layers: Vec<Array2<T>> = layers.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    for m in (0..layers.len()).rev() {
        let d_pre = activation.backprop(&d_x, &cache.pre[m]);
        d_layers[m] = cache.ax[m].t().dot(&d_pre);
        let d_ax = d_pre.dot(&layers[m].t());
        d_x = adj.matvec(&d_ax)?;
    }
    Ok((d_layers, d_x))
}
