//! Composite Gauss–Legendre rules.
//!
//! The basis stores sine products with up to `3 * n_modes` half-waves per
//! dimension (triple products of stored modes). Panels are sized so the
//! per-panel rule resolves that frequency to machine precision, with total
//! node count at least `4 * n_modes` per dimension.

/// Nodes and weights of a one-dimensional rule on `[0, length]`.
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const PANEL_ORDER: usize = 24;

/// Gauss–Legendre nodes/weights on `[-1, 1]` by Newton iteration on P_q.
fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..(q + 1) / 2 {
        // Chebyshev-based initial guess, then Newton on the Legendre recurrence.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=q {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    (nodes, weights)
}

impl Rule1d {
    /// Composite rule on `[0, length]` sized for products of the first
    /// `n_modes` Dirichlet sine modes (triple products included).
    pub fn for_modes(length: f64, n_modes: usize) -> Rule1d {
        // 24-point panels resolve about five full waves each; a triple
        // product has 1.5 * n_modes waves across the domain.
        let by_freq = (3.0 * n_modes as f64 / 8.0).ceil() as usize;
        let by_count = (4 * n_modes).div_ceil(PANEL_ORDER);
        let panels = by_freq.max(by_count).max(2);
        Rule1d::composite(length, panels, PANEL_ORDER)
    }

    pub fn composite(length: f64, panels: usize, order: usize) -> Rule1d {
        let (gx, gw) = gauss_legendre(order);
        let h = length / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(a + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        Rule1d { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
