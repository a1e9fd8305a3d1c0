//! Deterministic low-discrepancy point sets (the R₂ additive recurrence).

/// Plastic number, the real root of x³ = x + 1.
const PLASTIC: f64 = 1.324_717_957_244_746;

/// i-th point of the R₂ sequence in [0,1)².
pub fn r2(i: usize) -> (f64, f64) {
    let a1 = 1.0 / PLASTIC;
    let a2 = a1 * a1;
    let t = i as f64 + 1.0;
    ((0.5 + a1 * t).fract(), (0.5 + a2 * t).fract())
}

pub fn r2_points(count: usize) -> Vec<(f64, f64)> {
    (0..count).map(r2).collect()
}

/// R₂ points mapped affinely onto [lo, hi)².
pub fn r2_box(count: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let w = hi - lo;
    (0..count)
        .map(|i| {
            let (a, b) = r2(i);
            (lo + w * a, lo + w * b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_fill_the_square() {
        let pts = r2_points(400);
        for cell in 0..16 {
            let (cx, cy) = ((cell % 4) as f64 / 4.0, (cell / 4) as f64 / 4.0);
            let hits = pts
                .iter()
                .filter(|(x, y)| *x >= cx && *x < cx + 0.25 && *y >= cy && *y < cy + 0.25)
                .count();
            assert!((15..=35).contains(&hits), "cell {cell}: {hits}");
        }
    }
}
