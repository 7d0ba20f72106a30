//! Gauss–Hermite and Gauss–Legendre rules.

use std::f64::consts::PI;

/// Gauss–Hermite rule stored in the form used for Hermite-function products.
///
/// `scaled_weights[i]` is wᵢ·exp(tᵢ²), so that
/// `∫ f(t) dt ≈ Σ scaled_weights[i]·f(nodes[i])` for `f` decaying like a
/// Gaussian. Products ψₙψₘ of normalized Hermite functions times a
/// polynomial of degree ≤ 2N−1−n−m are integrated exactly.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let nodes = hermite_roots(n);
        // Christoffel function: wᵢ e^{tᵢ²} = 1 / Σ_{k<N} ψ_k(tᵢ)².
        let scaled_weights = nodes
            .iter()
            .map(|&t| {
                let psi = hermite_functions(n - 1, t);
                1.0 / psi.iter().map(|p| p * p).sum::<f64>()
            })
            .collect();
        Self { nodes, scaled_weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Normalized Hermite functions ψ₀(t)..ψₙ(t), ∫ψₖ² dt = 1.
pub fn hermite_functions(n_max: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let psi0 = PI.powf(-0.25) * (-0.5 * t * t).exp();
    out.push(psi0);
    if n_max >= 1 {
        out.push(std::f64::consts::SQRT_2 * t * psi0);
    }
    for k in 1..n_max {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * t * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

fn hermite_roots(n: usize) -> Vec<f64> {
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        for _ in 0..100 {
            let (p, dp) = orthonormal_hermite(n, z, pim4);
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    x.sort_by(|a, b| a.total_cmp(b));
    x
}

/// Orthonormal Hermite polynomial of degree n (weight e^{-t²}) and its derivative.
fn orthonormal_hermite(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let step = p / d;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            dp = if d != 0.0 { d } else { dp };
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Composite rule on [a, b] with `panels` equal sub-intervals.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut xs = Vec::with_capacity(panels * self.nodes.len());
        let mut ws = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (t, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(lo + 0.5 * h * (t + 1.0));
                ws.push(0.5 * h * w);
            }
        }
        (xs, ws)
    }
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p2) / (z * z - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_gaussian_moments() {
        let gh = GaussHermite::new(20);
        // ∫ t^{2k} e^{-t²} dt = Γ(k+½)
        let moments = [PI.sqrt(), PI.sqrt() / 2.0, 3.0 * PI.sqrt() / 4.0];
        for (k, want) in moments.iter().enumerate() {
            let got: f64 = gh
                .nodes
                .iter()
                .zip(&gh.scaled_weights)
                .map(|(&t, &w)| w * (-t * t).exp() * t.powi(2 * k as i32))
                .sum();
            assert!((got - want).abs() < 1e-13, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn hermite_functions_orthonormal_under_rule() {
        let n = 12;
        let gh = GaussHermite::new(n + 4);
        let table: Vec<Vec<f64>> = gh.nodes.iter().map(|&t| hermite_functions(n, t)).collect();
        for a in 0..=n {
            for b in 0..=n {
                let s: f64 = table
                    .iter()
                    .zip(&gh.scaled_weights)
                    .map(|(psi, w)| w * psi[a] * psi[b])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "<{a}|{b}> = {s}");
            }
        }
    }

    #[test]
    fn large_hermite_rule_is_symmetric_and_sorted() {
        let gh = GaussHermite::new(150);
        for i in 0..150 {
            assert!((gh.nodes[i] + gh.nodes[149 - i]).abs() < 1e-10);
            assert!(gh.scaled_weights[i].is_finite() && gh.scaled_weights[i] > 0.0);
        }
        assert!(gh.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn legendre_rule_exact_for_polynomials() {
        let gl = GaussLegendre::new(24);
        let s: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(46)).sum();
        assert!((s - 2.0 / 47.0).abs() < 1e-14);
        let (xs, ws) = gl.composite(0.0, 3.0, 4);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.exp()).sum();
        assert!((s - (3.0_f64.exp() - 1.0)).abs() < 1e-12);
    }
}
