//! The transport space: non-decreasing self-maps of the support interval that
//! fix both endpoints, with the group operation ⊕ (reverse composition), the
//! geodesic scalar multiplication ⊙, the pointwise-coefficient variant ⊛ and
//! the partial derivatives needed by the order-p fitter.

use crate::distribution::Distribution;
use crate::error::{AtmError, Result};
use crate::grid::{Grid, MonotoneFn};
use rand::Rng;

/// An optimal transport map on the support interval: non-decreasing and
/// pinning both endpoints exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    inner: MonotoneFn,
}

impl TransportMap {
    /// Wrap a monotone function, re-asserting the endpoint pins.
    pub fn from_fn(f: MonotoneFn) -> Self {
        let grid = f.grid();
        let mut values = f.into_values();
        let m = values.len();
        values[0] = grid.s1();
        values[m - 1] = grid.s2();
        for v in values.iter_mut() {
            *v = v.clamp(grid.s1(), grid.s2());
        }
        TransportMap { inner: MonotoneFn::projected(grid, values).expect("projected values are valid") }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Ok(TransportMap::from_fn(MonotoneFn::projected(grid, values)?))
    }

    pub fn identity(grid: Grid) -> Self {
        TransportMap { inner: MonotoneFn::identity(grid) }
    }

    pub fn as_fn(&self) -> &MonotoneFn {
        &self.inner
    }

    pub fn grid(&self) -> Grid {
        self.inner.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.inner.values()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.inner.eval(x)
    }

    pub fn eval_clamped(&self, x: f64) -> f64 {
        self.inner.eval_clamped(x)
    }

    /// ⊕: T1 ⊕ T2 = T2 ∘ T1, tabulated on the shared grid.
    pub fn oplus(&self, other: &TransportMap) -> Result<TransportMap> {
        Ok(TransportMap::from_fn(other.inner.compose(&self.inner)?))
    }

    /// Tabulation of the left-continuous inverse transport.
    pub fn inverse(&self) -> TransportMap {
        let f = self
            .inner
            .invert_tabulated()
            .expect("transport range spans the support, inverse is total");
        TransportMap::from_fn(f)
    }

    /// ⊙: geodesic scalar multiplication, defined for every real α.
    pub fn odot(&self, alpha: f64) -> TransportMap {
        let grid = self.grid();
        if alpha == 0.0 {
            return TransportMap::identity(grid);
        }
        let base = if alpha > 0.0 { self.clone() } else { self.inverse() };
        let b = alpha.abs().floor() as usize;
        let a = alpha.abs() - b as f64;
        // fractional step x + a (C(x) - x)
        let frac_values: Vec<f64> = (0..grid.len())
            .map(|j| {
                let x = grid.node(j);
                x + a * (base.values()[j] - x)
            })
            .collect();
        let mut result = MonotoneFn::projected(grid, frac_values).expect("grid-sized values");
        for _ in 0..b {
            result = result.compose(base.as_fn()).expect("shared grid");
        }
        TransportMap::from_fn(result)
    }

    /// ⊛: pointwise coefficient β(x) in [-1,1] applied node by node.
    ///
    /// Output monotonicity is restored by running-max projection; the returned
    /// flag reports whether the projection changed any value beyond rounding.
    pub fn circledcirc(&self, beta: &[f64]) -> Result<(TransportMap, bool)> {
        let grid = self.grid();
        if beta.len() != grid.len() {
            return Err(AtmError::GridMismatch(format!(
                "beta has {} values, grid has {} nodes",
                beta.len(),
                grid.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite() || b.abs() > 1.0 + 1e-12) {
            return Err(AtmError::Parameter("beta values must lie in [-1, 1]".into()));
        }
        let inv = self.inverse();
        let raw: Vec<f64> = (0..grid.len())
            .map(|j| {
                let x = grid.node(j);
                let b = beta[j];
                if b > 0.0 {
                    x + b * (self.values()[j] - x)
                } else if b < 0.0 {
                    x + b * (x - inv.values()[j])
                } else {
                    x
                }
            })
            .collect();
        let projected = TransportMap::from_values(grid, raw.clone())?;
        let changed = raw
            .iter()
            .zip(projected.values())
            .skip(1)
            .take(grid.len() - 2)
            .any(|(r, p)| (r - p).abs() > 1e-10);
        Ok((projected, changed))
    }

    /// L1 distance between transports on the support.
    pub fn d1(&self, other: &TransportMap) -> f64 {
        let diffs: Vec<f64> = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .collect();
        self.grid().integrate(&diffs)
    }

    /// L2 distance between transports; equals the Wasserstein distance of the
    /// pushforwards of a uniform measure when transports are read as quantile
    /// functions.
    pub fn d2(&self, other: &TransportMap) -> f64 {
        let sq: Vec<f64> = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .collect();
        self.grid().integrate(&sq).max(0.0).sqrt()
    }

    pub fn sup_distance(&self, other: &TransportMap) -> f64 {
        self.inner.sup_distance(&other.inner)
    }

    /// Node values of T(x) - x.
    pub fn deviation(&self) -> Vec<f64> {
        let grid = self.grid();
        (0..grid.len()).map(|j| self.values()[j] - grid.node(j)).collect()
    }
}

/// μ2 ⊖ μ1: the optimal transport Q2 ∘ F1 pushing μ1 forward to μ2.
pub fn ominus(mu2: &Distribution, mu1: &Distribution) -> Result<TransportMap> {
    if mu2.support() != mu1.support() {
        return Err(AtmError::GridMismatch("⊖ requires a shared support interval".into()));
    }
    let grid = mu1.support();
    let values: Vec<f64> = (0..grid.len())
        .map(|j| {
            let u = mu1.cdf_clamped(grid.node(j));
            mu2.quantile_at(u)
        })
        .collect();
    TransportMap::from_values(grid, values)
}

/// T#μ: pushforward along a monotone map; the result's quantile is T ∘ Q_μ.
pub fn pushforward(t: &TransportMap, mu: &Distribution) -> Result<Distribution> {
    if t.grid() != mu.support() {
        return Err(AtmError::GridMismatch("pushforward requires a shared support interval".into()));
    }
    let quantile = mu.quantile_values().iter().map(|&q| t.eval_clamped(q)).collect();
    Distribution::new(mu.support(), mu.prob().clone(), quantile)
}

/// Precomputed state for the partial derivatives of α ⊙ T.
///
/// Tabulates the b-fold self-compositions of the base map once so that
/// per-point derivative queries are O(b) interpolations.
pub struct OdotGrad {
    alpha: f64,
    a: f64,
    b: usize,
    base: TransportMap,
    base_at: Vec<MonotoneFn>, // base^∘l for l = 0..=b
    t: TransportMap,
    t_inv: TransportMap,
}

impl OdotGrad {
    pub fn new(alpha: f64, t: &TransportMap) -> Self {
        let t_inv = t.inverse();
        let base = if alpha >= 0.0 { t.clone() } else { t_inv.clone() };
        let b = alpha.abs().floor() as usize;
        let a = alpha.abs() - b as f64;
        let mut base_at = Vec::with_capacity(b + 1);
        base_at.push(MonotoneFn::identity(t.grid()));
        for l in 1..=b {
            let prev = &base_at[l - 1];
            base_at.push(base.as_fn().compose(prev).expect("shared grid"));
        }
        OdotGrad { alpha, a, b, base, base_at, t: t.clone(), t_inv }
    }

    /// ∂/∂x of α ⊙ T at x.
    pub fn d_dx(&self, x: f64) -> Result<f64> {
        if self.alpha == 0.0 {
            return Ok(1.0);
        }
        let mut prod = 1.0;
        for l in 0..self.b {
            let y = self.base_at[l].eval(x)?;
            prod *= self.base.as_fn().derivative(y)?;
        }
        let y_b = self.base_at[self.b].eval(x)?;
        let g_b = self.base.as_fn().derivative(y_b)?;
        Ok((1.0 + self.a * (g_b - 1.0)) * prod)
    }

    /// ∂/∂α of α ⊙ T at x; subgradient at integer α.
    ///
    /// At α = 0 a value is drawn uniformly from the two-point subdifferential
    /// {T(x)-x, x-T⁻¹(x)} using the caller-supplied random source. At a
    /// nonzero integer the one-sided derivative from the side of larger |α|
    /// is returned.
    pub fn d_dalpha<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        if self.alpha == 0.0 {
            let up = self.t.eval(x)? - x;
            let down = x - self.t_inv.eval(x)?;
            return Ok(if rng.gen::<bool>() { up } else { down });
        }
        let h = self.base_at[self.b].eval(x)?;
        let step = self.base.eval(h)? - h;
        Ok(if self.alpha > 0.0 { step } else { -step })
    }
}

/// ∂/∂x of α ⊙ T at x. Prefer [`OdotGrad`] when querying many points.
pub fn d_dx_odot(alpha: f64, t: &TransportMap, x: f64) -> Result<f64> {
    OdotGrad::new(alpha, t).d_dx(x)
}

/// ∂/∂α of α ⊙ T at x; see [`OdotGrad::d_dalpha`] for the subgradient rules.
pub fn d_dalpha_odot<R: Rng + ?Sized>(alpha: f64, t: &TransportMap, x: f64, rng: &mut R) -> Result<f64> {
    OdotGrad::new(alpha, t).d_dalpha(x, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::unit(201).unwrap()
    }

    fn square(g: Grid) -> TransportMap {
        let v = g.nodes().iter().map(|x| x * x).collect();
        TransportMap::from_values(g, v).unwrap()
    }

    fn tol(g: Grid) -> f64 {
        10.0 * g.spacing()
    }

    #[test]
    fn oplus_group_laws() {
        let g = grid();
        let id = TransportMap::identity(g);
        let t = square(g);
        assert!(t.oplus(&id).unwrap().sup_distance(&t) < 1e-12);
        assert!(id.oplus(&t).unwrap().sup_distance(&t) < 1e-12);
        assert!(t.oplus(&t.inverse()).unwrap().sup_distance(&id) < tol(g));
    }

    #[test]
    fn oplus_is_reverse_composition() {
        let g = grid();
        let t = square(g);
        let quartic = t.oplus(&t).unwrap();
        for (j, v) in quartic.values().iter().enumerate() {
            let x = g.node(j);
            assert!((v - x.powi(4)).abs() < tol(g));
        }
    }

    #[test]
    fn oplus_not_commutative() {
        let g = grid();
        let t1 = square(g);
        let t2 =
            TransportMap::from_values(g, g.nodes().iter().map(|x| (x + x * x) / 2.0).collect()).unwrap();
        let ab = t1.oplus(&t2).unwrap();
        let ba = t2.oplus(&t1).unwrap();
        // analytic gap x²(1-x)²/4 peaks at 1/64 ≈ 0.0156
        assert!(ab.sup_distance(&ba) > 1e-2);
    }

    #[test]
    fn inverse_examples() {
        let g = grid();
        let id = TransportMap::identity(g);
        assert!(id.inverse().sup_distance(&id) < 1e-12);
        let t = square(g);
        let inv = t.inverse();
        for (j, v) in inv.values().iter().enumerate() {
            assert!((v - g.node(j).sqrt()).abs() < tol(g));
        }
        assert!(t.inverse().inverse().sup_distance(&t) < tol(g));
    }

    #[test]
    fn odot_boundary_cases() {
        let g = grid();
        let t = square(g);
        let id = TransportMap::identity(g);
        assert!(t.odot(0.0).sup_distance(&id) < 1e-12);
        assert!(t.odot(1.0).sup_distance(&t) < 1e-12);
        assert!(t.odot(-1.0).sup_distance(&t.inverse()) < 1e-12);
    }

    #[test]
    fn odot_fractional_positive() {
        // 0.6 ⊙ x² = 0.4x + 0.6x²
        let g = grid();
        let t = square(g);
        let s = t.odot(0.6);
        for (j, v) in s.values().iter().enumerate() {
            let x = g.node(j);
            assert!((v - (0.4 * x + 0.6 * x * x)).abs() < 1e-10);
        }
    }

    #[test]
    fn odot_above_one() {
        // 1.5 ⊙ x² = (0.5 ⊙ x²) ∘ x² = 0.5x² + 0.5x⁴
        let g = grid();
        let t = square(g);
        let s = t.odot(1.5);
        for (j, v) in s.values().iter().enumerate() {
            let x = g.node(j);
            assert!((v - (0.5 * x * x + 0.5 * x.powi(4))).abs() < tol(g));
        }
    }

    #[test]
    fn odot_negative_fraction() {
        // -0.5 ⊙ x² = 0.5x + 0.5√x
        let g = grid();
        let t = square(g);
        let s = t.odot(-0.5);
        for (j, v) in s.values().iter().enumerate() {
            let x = g.node(j);
            assert!((v - (0.5 * x + 0.5 * x.sqrt())).abs() < tol(g));
        }
    }

    #[test]
    fn non_distributivity_counterexample() {
        // (0.6+0.7) ⊙ x² = 0.7x² + 0.3x⁴ differs from
        // (0.6 ⊙ x²) ⊕ (0.7 ⊙ x²) = 0.3(0.4x+0.6x²) + 0.7(0.4x+0.6x²)²
        let g = grid();
        let t = square(g);
        let lhs = t.odot(1.3);
        let rhs = t.odot(0.6).oplus(&t.odot(0.7)).unwrap();
        // analytic gap exceeds 0.008 near x = 0.6
        assert!(lhs.sup_distance(&rhs) > 5e-3);
    }

    #[test]
    fn circledcirc_examples() {
        let g = grid();
        let t = square(g);
        let id = TransportMap::identity(g);
        let (zero, _) = t.circledcirc(&vec![0.0; g.len()]).unwrap();
        assert!(zero.sup_distance(&id) < 1e-12);

        let (constant, _) = t.circledcirc(&vec![0.6; g.len()]).unwrap();
        assert!(constant.sup_distance(&t.odot(0.6)) < 1e-12);

        // β(x) = x: x + x(x² - x)
        let (varying, _) = t.circledcirc(&g.nodes()).unwrap();
        for (j, v) in varying.values().iter().enumerate() {
            let x = g.node(j);
            assert!((v - (x + x * (x * x - x))).abs() < 1e-10);
        }

        assert!(t.circledcirc(&vec![1.5; g.len()]).is_err());
    }

    #[test]
    fn d1_scaling() {
        let g = grid();
        let s = square(g);
        let t =
            TransportMap::from_values(g, g.nodes().iter().map(|x| (x + x * x) / 2.0).collect()).unwrap();
        for alpha in [0.25, 0.5, 1.0] {
            let lhs = s.odot(alpha).d1(&t.odot(alpha));
            let rhs = alpha * s.d1(&t);
            assert!((lhs - rhs).abs() < tol(g));
        }
    }

    #[test]
    fn sign_agreement_and_dominance() {
        // for strictly increasing T: sign(T(x)-x) == sign(x-T⁻¹(x)) and
        // |T(x)-T⁻¹(x)| >= |T(x)-x| at every node
        let g = grid();
        let t = square(g);
        let inv = t.inverse();
        for j in 1..g.len() - 1 {
            let x = g.node(j);
            let up = t.values()[j] - x;
            let down = x - inv.values()[j];
            assert!(up * down >= -1e-10);
            assert!((t.values()[j] - inv.values()[j]).abs() + 1e-10 >= up.abs());
        }
    }

    #[test]
    fn d_dx_odot_examples() {
        let g = Grid::unit(2001).unwrap();
        let t = square(g);
        assert!((d_dx_odot(0.0, &t, 0.3).unwrap() - 1.0).abs() < 1e-12);
        // α=0.5, T=x², x=0.5: 1 + 0.5(T'(0.5)-1) = 1
        assert!((d_dx_odot(0.5, &t, 0.5).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn d_dalpha_odot_examples() {
        let g = Grid::unit(2001).unwrap();
        let t = square(g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!((d_dalpha_odot(0.5, &t, 0.5, &mut rng).unwrap() + 0.25).abs() < 1e-9);
        assert!((d_dalpha_odot(1.5, &t, 0.5, &mut rng).unwrap() + 0.1875).abs() < 1e-6);
        let id = TransportMap::identity(g);
        assert!(d_dalpha_odot(0.0, &id, 0.5, &mut rng).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = Grid::unit(2001).unwrap();
        let t = square(g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &alpha in &[0.35, 0.8, 1.4, 2.7, -0.45, -1.6] {
            let grad = OdotGrad::new(alpha, &t);
            for &x in &[0.21, 0.5, 0.83] {
                // α direction
                let da = 1e-6;
                let plus = t.odot(alpha + da).eval(x).unwrap();
                let minus = t.odot(alpha - da).eval(x).unwrap();
                let fd_a = (plus - minus) / (2.0 * da);
                let an_a = grad.d_dalpha(x, &mut rng).unwrap();
                assert!(
                    (an_a - fd_a).abs() <= 1e-3 * fd_a.abs().max(1e-3),
                    "alpha {alpha} x {x}: {an_a} vs {fd_a}"
                );
                // x direction, one grid step
                let h = g.spacing();
                let s = t.odot(alpha);
                let fd_x = (s.eval(x + h).unwrap() - s.eval(x - h).unwrap()) / (2.0 * h);
                let an_x = grad.d_dx(x).unwrap();
                assert!(
                    (an_x - fd_x).abs() <= 1e-3 * fd_x.abs().max(1e-3),
                    "alpha {alpha} x {x}: {an_x} vs {fd_x}"
                );
            }
        }
    }
}
