//! Internal numeric helpers: adaptive Gauss-Kronrod quadrature, bisection,
//! linear interpolation on sorted grids, medians, and a sparse-table range
//! minimum structure used by the dynamic programming sweep.

/// Kronrod-15 abscissae on [-1, 1], positive half (index 7 is the origin).
/// Odd indices are the embedded Gauss-7 nodes.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];

/// Kronrod-15 weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// Gauss-7 weights for nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Gauss-Kronrod 7-15 pass over [a, b]; returns (kronrod, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let fsum = f(mid - x) + f(mid + x);
        k += WGK[j] * fsum;
        if j % 2 == 1 {
            g += WG[j / 2] * fsum;
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Adaptive quadrature of `f` over the bounded interval [a, b] to absolute
/// tolerance `abs_tol`. Interval halving recurses where the embedded Gauss
/// estimate disagrees with the Kronrod one; depth is capped so the routine
/// always terminates (worst case it returns the best available estimate).
pub(crate) fn quad<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (k, err) = gk15(f, a, b);
        if err <= tol || depth >= 48 {
            return k;
        }
        let mid = 0.5 * (a + b);
        rec(f, a, mid, 0.5 * tol, depth + 1) + rec(f, mid, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, abs_tol.max(f64::MIN_POSITIVE), 0)
}

/// Bisection for a monotone predicate: `pred` must hold at `lo` and fail at
/// `hi`. Shrinks the bracket until `hi - lo <= tol` and returns (lo, hi).
pub(crate) fn bisect<P: Fn(f64) -> bool>(pred: P, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    debug_assert!(lo <= hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // float resolution reached
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Linear interpolation of (xs, ys) at `x`, clamping outside the grid.
/// `xs` must be sorted ascending.
pub(crate) fn lerp_sorted(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // partition_point returns the first index with xs[i] > x, so hi >= 1.
    let hi = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[hi - 1], xs[hi]);
    let t = (x - x0) / (x1 - x0);
    ys[hi - 1] + t * (ys[hi] - ys[hi - 1])
}

/// Median of a slice (average of the two central order statistics for even
/// lengths). Returns None for an empty slice.
pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median: non-finite value"));
    let n = v.len();
    if n % 2 == 1 {
        Some(v[n / 2])
    } else {
        Some(0.5 * (v[n / 2 - 1] + v[n / 2]))
    }
}

/// Sparse table answering "index of the minimum over [l, r]" in O(1) after
/// O(n log n) build. Ties resolve to the leftmost index.
pub(crate) struct RangeMin {
    // table[k][i] = argmin over the window of length 2^k starting at i
    table: Vec<Vec<u32>>,
    values: Vec<f64>,
}

impl RangeMin {
    pub(crate) fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        let levels = if n <= 1 { 1 } else { 64 - (n as u64).leading_zeros() as usize };
        let mut table: Vec<Vec<u32>> = Vec::with_capacity(levels);
        table.push((0..n as u32).collect());
        let mut k = 1;
        while (1 << k) <= n {
            let prev = &table[k - 1];
            let width = 1 << (k - 1);
            let mut row = Vec::with_capacity(n - (1 << k) + 1);
            for i in 0..=(n - (1 << k)) {
                let a = prev[i];
                let b = prev[i + width];
                // strict < keeps the leftmost index on ties
                row.push(if values[b as usize] < values[a as usize] { b } else { a });
            }
            table.push(row);
            k += 1;
        }
        RangeMin { table, values }
    }

    /// Leftmost argmin over the inclusive index range [l, r].
    pub(crate) fn query(&self, l: usize, r: usize) -> usize {
        debug_assert!(l <= r && r < self.values.len());
        if l == r {
            return l;
        }
        let k = (64 - ((r - l + 1) as u64).leading_zeros() - 1) as usize;
        let a = self.table[k][l];
        let b = self.table[k][r + 1 - (1 << k)];
        // compare right block second so ties keep the left block's index
        if self.values[b as usize] < self.values[a as usize] {
            b as usize
        } else {
            a as usize
        }
    }

    pub(crate) fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_integrates_polynomials_exactly() {
        // K15 is exact for degree <= 22, G7 for degree <= 13; any transcription
        // error in the embedded constants breaks one of these.
        for deg in (0..=22).step_by(2) {
            let exact = 2.0 / (deg as f64 + 1.0);
            let (k, _) = gk15(&|x: f64| x.powi(deg), -1.0, 1.0);
            assert!((k - exact).abs() < 5e-13, "degree {deg}: {k} vs {exact}");
        }
        let (_, err) = gk15(&|x: f64| x.powi(12), -1.0, 1.0);
        assert!(err < 1e-13, "gauss-7 should also be exact at degree 12");
    }

    #[test]
    fn adaptive_quad_handles_kinks_and_exponentials() {
        let v = quad(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
        // |x| has a kink at 0; adaptive refinement must still converge
        let v = quad(&|x: f64| x.abs(), -1.0, 2.0, 1e-11);
        assert!((v - 2.5).abs() < 1e-9, "{v}");
        let v = quad(&|x: f64| (-x.abs()).exp(), -30.0, 30.0, 1e-12);
        assert!((v - 2.0 * (1.0 - (-30f64).exp())).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bisect_brackets_a_root() {
        let (lo, hi) = bisect(|x| x * x <= 2.0, 0.0, 2.0, 1e-12);
        assert!(lo <= 2f64.sqrt() && 2f64.sqrt() <= hi);
        assert!(hi - lo <= 1e-12);
    }

    #[test]
    fn lerp_clamps_and_interpolates() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 10.0, 30.0];
        assert_eq!(lerp_sorted(&xs, &ys, -1.0), 0.0);
        assert_eq!(lerp_sorted(&xs, &ys, 4.0), 30.0);
        assert!((lerp_sorted(&xs, &ys, 2.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn range_min_prefers_leftmost_on_ties() {
        let rm = RangeMin::new(vec![3.0, 1.0, 2.0, 1.0, 5.0]);
        assert_eq!(rm.query(0, 4), 1);
        assert_eq!(rm.query(2, 4), 3);
        assert_eq!(rm.query(2, 2), 2);
        assert_eq!(rm.query(1, 3), 1);
    }

    #[test]
    fn median_both_parities() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
