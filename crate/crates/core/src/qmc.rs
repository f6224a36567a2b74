//! Randomised Halton point sets in the cube and the unit ball.

use rand::Rng;

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Radical inverse of `i` in base `base`.
pub fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton sequence in `[0,1)^dim` with a Cranley–Patterson random shift.
#[derive(Clone, Debug)]
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize) -> Self {
        assert!(dim <= PRIMES.len(), "Halton supports at most {} dims", PRIMES.len());
        Halton { dim, shift: vec![0.0; dim], index: 1 }
    }

    pub fn randomized<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut h = Halton::new(dim);
        h.shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        h
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        (0..self.dim)
            .map(|k| {
                let u = radical_inverse(i, PRIMES[k]) + self.shift[k];
                u - u.floor()
            })
            .collect()
    }
}

/// `count` points inside the closed unit ball of ℝ^dim, obtained by mapping
/// randomised Halton points to `[-1,1]^dim` and rejecting those outside.
pub fn ball_points<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut h = Halton::randomized(dim, rng);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p: Vec<f64> = h.next_point().into_iter().map(|u| 2.0 * u - 1.0).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            out.push(p);
        }
    }
    out
}

/// Regular grid of the unit ball of ℝ^dim (dim ≤ 2) with `per_dim` nodes per
/// axis spanning [-1, 1]; nodes outside the ball are dropped.
pub fn ball_grid(dim: usize, per_dim: usize) -> Vec<Vec<f64>> {
    assert!(per_dim >= 2);
    let ticks: Vec<f64> = (0..per_dim)
        .map(|i| -1.0 + 2.0 * i as f64 / (per_dim - 1) as f64)
        .collect();
    match dim {
        1 => ticks.iter().map(|&t| vec![t]).collect(),
        2 => {
            let mut pts = Vec::new();
            for &u in &ticks {
                for &v in &ticks {
                    if u * u + v * v <= 1.0 + 1e-12 {
                        pts.push(vec![u, v]);
                    }
                }
            }
            pts
        }
        _ => panic!("ball_grid supports dim 1 or 2"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn van_der_corput_prefix() {
        let v: Vec<f64> = (1..5).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn ball_points_lie_in_ball() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts = ball_points(3, 500, &mut rng);
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0));
    }

    #[test]
    fn disk_grid_size() {
        let g = ball_grid(2, 5);
        // (0,±1), (±1,0), the 3x3 interior block
        assert_eq!(g.len(), 13);
    }
}
