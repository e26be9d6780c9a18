//! One-dimensional minimizers on a bracket.

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const CGOLD: f64 = 0.381_966_011_250_105_1;

/// Golden-section search on `[a, b]` until the bracket is narrower than
/// `width`. Returns the best point seen and its value.
pub fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    width: f64,
) -> (f64, f64) {
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    // 200 iterations shrink any finite bracket below one ulp
    for _ in 0..200 {
        if b - a <= width {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

/// Brent's method: golden-section steps safeguarding parabolic interpolation.
/// Stops when the bracket half-width falls under `tol` (absolute).
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let x = lo + CGOLD * (hi - lo);
    let fx = f(x);
    brent_from(f, lo, hi, (x, fx), tol, max_iter)
}

/// [`brent`] started from a known interior point `start = (x, f(x))`, such
/// as the best point of a preceding grid scan.
pub fn brent_from<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    start: (f64, f64),
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let (mut x, mut fx) = start;
    let (mut w, mut v) = (x, x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol + 1e-15 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_from_grid_point() {
        let (x, fx) = brent_from(|x| (x - 0.3).powi(2), 0.0, 0.8, (0.4, 0.01), 1e-10, 100);
        assert!((x - 0.3).abs() < 1e-8 && fx < 1e-15);
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_handles_flat_bottom() {
        let f = |x: f64| (x - 0.5).max(0.0) + (0.4 - x).max(0.0);
        let (x, fx) = golden_section(f, 0.0, 1.0, 1e-12);
        assert_eq!(fx, 0.0);
        assert!((0.4..=0.5).contains(&x));
    }

    #[test]
    fn brent_matches_known_minimum() {
        let (x, _) = brent(|x| x.cos(), 2.0, 4.5, 1e-10, 100);
        assert!((x - std::f64::consts::PI).abs() < 1e-8);
        let (x, _) = brent(|x| (x - 1.0).abs(), 0.0, 3.0, 1e-10, 200);
        assert!((x - 1.0).abs() < 1e-8);
    }
}
