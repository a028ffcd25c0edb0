//! Integrators, quadrature and root finding shared by the solvers.

pub mod ode;
pub mod quad;
pub mod root;
pub mod stiff;

/// Format with 17 significant digits, the precision every export uses.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

/// `n` points geometrically spaced on `[a, b]`, both ends included.
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` points uniformly spaced on `[a, b]`, both ends included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }

    #[test]
    fn grids_hit_endpoints() {
        let g = geomspace(1.0, 1e3, 2048);
        assert_eq!((g[0], g[2047]), (1.0, 1e3));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let l = linspace(0.0, 6.0, 7);
        assert_eq!(l[3], 3.0);
    }
}
