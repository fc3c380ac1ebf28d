//! Bounded scalar maximization: uniform grid scan followed by golden-section
//! refinement inside the bracket around the best grid point.

use crate::error::Result;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_section_max<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<Maximum>
where
    F: Fn(f64) -> Result<f64>,
{
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { Maximum { x: c, value: fc } } else { Maximum { x: d, value: fd } })
}

/// Scans `points` uniform grid points on `[lo, hi]`, then refines with
/// golden-section search between the neighbours of the best point.
///
/// Exact ties on the grid go to the larger `x`. The refined point replaces
/// the grid point only if it is strictly better, so a maximum sitting on a
/// grid node (in particular an endpoint) is returned exactly. Infeasible
/// points should evaluate to `-inf`.
pub fn grid_then_golden<F>(f: F, lo: f64, hi: f64, points: usize, tol: f64) -> Result<Maximum>
where
    F: Fn(f64) -> Result<f64>,
{
    assert!(points >= 2, "grid needs at least two points");
    if hi <= lo {
        return Ok(Maximum { x: lo, value: f(lo)? });
    }
    let step = (hi - lo) / (points - 1) as f64;
    let node = |i: usize| if i == points - 1 { hi } else { lo + step * i as f64 };

    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..points {
        let v = f(node(i))?;
        if v >= best {
            best = v;
            best_i = i;
        }
    }
    let grid_best = Maximum { x: node(best_i), value: best };
    if !best.is_finite() {
        return Ok(grid_best);
    }

    let a = node(best_i.saturating_sub(1));
    let b = node((best_i + 1).min(points - 1));
    let refined = golden_section_max(&f, a, b, tol)?;
    Ok(if refined.value > grid_best.value { refined } else { grid_best })
}
